#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "jrffp/dsp_frontend.hpp"
#include "jrffp/signal_sim.hpp"

namespace jrffp {

using Label = std::int32_t;
inline constexpr Label kRogue = -1;

struct LabeledSpectrogram {
  Spectrogram spectrogram;
  Label label = 0;
  friend bool operator==(const LabeledSpectrogram&, const LabeledSpectrogram&) = default;
};

struct DatasetSplit {
  std::vector<LabeledSpectrogram> items;
  std::size_t identity_count = 0;
  std::size_t per_identity_count = 0;  // 0 when identities are unbalanced

  bool empty() const { return items.empty(); }
  std::pair<std::size_t, std::size_t> shape() const;
  /// All items share one shape; with `training`, no ROGUE labels and every
  /// label lies in [0, identity_count).
  void validate(bool training) const;
  friend bool operator==(const DatasetSplit&, const DatasetSplit&) = default;
};

struct EnrollmentDb {
  std::map<Label, Spectrogram> entries;
  std::map<Label, std::size_t> source_count;

  const Spectrogram& at(Label identity) const;
  bool contains(Label identity) const { return entries.contains(identity); }
  std::size_t size() const { return entries.size(); }
};

/// Randomized multipath/Doppler draws for training-set augmentation.
struct AugmentationConfig {
  bool enabled = true;
  int max_taps = 3;
  std::size_t max_tap_spacing = 3;  // samples between successive taps
  double decay_samples = 2.0;       // tap power ~ exp(-delay / decay)
  double doppler_min_hz = -50.0;
  double doppler_max_hz = 50.0;
  /// When both are set, each augmented packet gets its own receiver SNR drawn
  /// uniformly in dB from [min, max] instead of the scenario SNR.
  std::optional<double> snr_min_db;
  std::optional<double> snr_max_db;

  void validate() const;
};

struct Scenario {
  LoRaParams lora;
  StftConfig stft;
  std::vector<DeviceProfile> legitimate;
  std::vector<DeviceProfile> rogue;
  /// Rogue transmitters used only for threshold calibration; kept apart from
  /// the test rogues so the test set stays open.
  std::vector<DeviceProfile> calibration_rogue;
  std::size_t train_per_device = 10;
  std::size_t test_per_device = 10;
  std::size_t test_per_rogue = 4;
  std::size_t calibration_per_device = 10;
  std::size_t max_timing_offset = 16;  // leading silence drawn from [0, max]
  std::optional<double> snr_db;        // receiver noise for every split
  AugmentationConfig augmentation;

  void validate() const;
};

enum class SplitKind { train, test, calibration };

const char* split_name(SplitKind kind);

struct BuildOptions {
  /// Overrides Scenario::augmentation.enabled for the train split.
  std::optional<bool> augment;
  /// When set, replaces Scenario::snr_db (nullopt inner value = noiseless).
  std::optional<std::optional<double>> snr_db;
  unsigned workers = 0;
};

/// Channel for one augmented packet. With augmentation disabled this is the
/// identity channel.
ChannelConfig augment_channel(Rng& rng, const AugmentationConfig& config);

/// Receiver SNR for one packet when no override is given: the scenario SNR,
/// or for augmented packets a draw from the augmentation SNR range if set.
std::optional<double> packet_snr_db(const Scenario& scenario, std::uint64_t item_seed, bool augment);

/// One received packet for `profile`, deterministic in (seed, stream index).
ComplexBaseband synth_received_packet(const Scenario& scenario, const DeviceProfile& profile,
                                      std::uint64_t item_seed, bool augment,
                                      const std::optional<double>& snr_db);

DatasetSplit build_synthetic_dataset(const Scenario& scenario, SplitKind split, std::uint64_t seed,
                                     const BuildOptions& options = {});

/// Per-identity elementwise mean of the (dB) spectrograms.
EnrollmentDb enroll(const DatasetSplit& train);

/// Rounds every value to the nearest binary32, the archive precision.
void quantize_to_binary32(Spectrogram& s);
void quantize_to_binary32(EnrollmentDb& db);

void save_archive(const DatasetSplit& split, const std::filesystem::path& path);
/// Throws FormatError (with byte offset) on bad magic, truncation, or, when
/// `expected_shape` is given, a shape mismatch.
DatasetSplit load_archive(const std::filesystem::path& path,
                          std::optional<std::pair<std::size_t, std::size_t>> expected_shape = {});

void save_enrollment(const EnrollmentDb& db, const std::filesystem::path& path);
EnrollmentDb load_enrollment(const std::filesystem::path& path);

/// In-memory forms of the archive containers, used by the file functions.
std::vector<std::uint8_t> encode_container(const char magic[4], const std::vector<LabeledSpectrogram>& items,
                                           std::size_t freq_bins, std::size_t time_frames);
std::vector<LabeledSpectrogram> decode_container(const std::vector<std::uint8_t>& bytes,
                                                 const char magic[4], std::size_t& freq_bins,
                                                 std::size_t& time_frames);

}  // namespace jrffp
