#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace jrffp {

using cdouble = std::complex<double>;

// Error hierarchy. The CLI maps each family onto an exit code.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameters or an inconsistent scenario / run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data that an operation cannot process (too short, degenerate,
/// non-normalized, mismatched lengths).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Archive or checkpoint bytes that do not follow the documented layout.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::uint64_t byte_offset)
      : Error(what + " (at byte offset " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset) {}
  std::uint64_t byte_offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

/// API misuse: backward without a forward cache, mismatched parameter sets.
class UsageError : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  TrainingDiverged(std::size_t epoch, double learning_rate)
      : Error("training diverged at epoch " + std::to_string(epoch) +
              " (learning rate " + std::to_string(learning_rate) + ")"),
        epoch_(epoch) {}
  std::size_t epoch() const noexcept { return epoch_; }

 private:
  std::size_t epoch_;
};

// Seeded randomness.
//
// Only the raw 64-bit engine output is used; uniform and normal variates are
// derived with explicit formulas so that streams are identical across
// standard library implementations.

std::uint64_t splitmix64(std::uint64_t x) noexcept;
std::uint64_t fnv1a64(std::string_view text) noexcept;

/// seed XOR hash(tag), then mixed. Used to key independent per-purpose streams.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) noexcept;
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                          std::uint64_t index) noexcept;

class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept;
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n) noexcept;
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept;
  /// Circularly-symmetric complex Gaussian with E|z|^2 = variance.
  cdouble complex_normal(double variance) noexcept;

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Runs fn(i) for i in [0, n) on up to `workers` threads (0 = hardware
/// concurrency). Each index is visited exactly once; fn must only write to
/// per-index state.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                  unsigned workers = 0);

}  // namespace jrffp
