#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "jrffp/common.hpp"
#include "jrffp/signal_sim.hpp"

namespace jrffp {

enum class WindowKind { hann, rectangular };

struct StftConfig {
  WindowKind window = WindowKind::hann;
  std::size_t window_len = 64;
  std::size_t hop = 32;
  std::size_t fft_size = 64;
  /// Dynamic range kept below the spectrogram peak, in dB. Unset keeps the
  /// full range. Clipping hides the noise floor, whose level moves with SNR.
  std::optional<double> top_db;

  void validate() const;
  /// floor((len - window_len) / hop) + 1; 0 when len < window_len.
  std::size_t frame_count(std::size_t signal_len) const;
};

struct ComplexMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<cdouble> data;  // row-major

  cdouble& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  const cdouble& at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

/// dB-scaled magnitude image; rows are frequency bins (-fs/2 .. +fs/2),
/// columns are time frames.
struct Spectrogram {
  std::size_t freq_bins = 0;
  std::size_t time_frames = 0;
  std::vector<double> values;  // row-major

  double& at(std::size_t f, std::size_t t) { return values[f * time_frames + t]; }
  double at(std::size_t f, std::size_t t) const { return values[f * time_frames + t]; }
  bool same_shape(const Spectrogram& o) const {
    return freq_bins == o.freq_bins && time_frames == o.time_frames;
  }
  friend bool operator==(const Spectrogram&, const Spectrogram&) = default;
};

/// Additive floor inside the log: 10 log10(0 + floor) = -120 dB.
inline constexpr double kDbFloor = 1e-12;

std::vector<double> make_window(WindowKind kind, std::size_t len);

/// In-place iterative radix-2 FFT; size must be a power of two.
void fft_inplace(std::vector<cdouble>& data);

/// Offset of the ideal preamble symbol in `signal`, chosen by maximum
/// |cross-correlation|. When the signal is long enough to hold the whole
/// preamble, only offsets that leave room for all preamble_count symbols are
/// searched, which removes the ambiguity between repeated symbols.
std::size_t synchronize(const ComplexBaseband& signal, const LoRaParams& params);

/// Repetition-based CFO estimate over adjacent preamble symbols.
double estimate_cfo(const ComplexBaseband& signal, const LoRaParams& params);

ComplexBaseband compensate_cfo(const ComplexBaseband& signal, double cfo_hz);

/// Scales to unit RMS power.
ComplexBaseband normalize(const ComplexBaseband& signal);

/// Frequency-centred STFT (fftshifted rows).
ComplexMatrix stft(const ComplexBaseband& signal, const StftConfig& config);

Spectrogram to_db_spectrogram(const ComplexMatrix& stft);

/// Raises every value to at least max(values) - top_db.
void clip_dynamic_range(Spectrogram& s, double top_db);

/// Controls which front-end stages run. Everything on is the production
/// chain; toggles exist for diagnostics and ablations.
struct PreprocessOptions {
  bool compensate_cfo = true;
};

/// synchronize -> slice preamble -> estimate/compensate CFO -> normalize ->
/// STFT -> dB [-> dynamic-range clip when config.top_db is set].
Spectrogram preprocess_packet(const ComplexBaseband& signal, const LoRaParams& params,
                              const StftConfig& config, const PreprocessOptions& options = {});

/// Output shape of preprocess_packet for the given parameters.
std::pair<std::size_t, std::size_t> spectrogram_shape(const LoRaParams& params,
                                                      const StftConfig& config);

}  // namespace jrffp
