#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "jrffp/dataset_store.hpp"
#include "jrffp/inference.hpp"
#include "jrffp/models.hpp"
#include "jrffp/training.hpp"

namespace jrffp {

enum class TrainMode { joint, sequential };

/// Everything a run needs. Parsed from a JSON document (grammar in the
/// README); every default is echoed back by to_json_text().
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "run";
  unsigned workers = 0;

  Scenario scenario;
  RffpArchitecture rffp;   // input shape and class count derived from the scenario
  SiaArchitecture sia;     // spectrogram input
  SiaArchitecture sia_rff; // fingerprint input for the ablation
  OptimizerConfig optimizer;
  EarlyStopConfig early_stop;
  PairingConfig pairing;
  TrainMode mode = TrainMode::joint;
  ThresholdPolicy threshold;
  std::vector<std::optional<double>> sweep_snr_db{std::nullopt, 30.0, 20.0, 10.0, 5.0, 0.0};

  /// Fills the derived fields (input shapes, class count, fingerprint width,
  /// optimizer seed) and validates the whole configuration.
  void resolve();
  std::string to_json_text() const;
};

/// Throws ConfigError naming the offending field path, e.g.
/// "scenario.devices.legitimate[2].cfo_hz: expected a number".
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Calibration rogues drawn inside the bounding box of the legitimate
/// profiles when the configuration names none.
std::vector<DeviceProfile> draw_calibration_rogues(const std::vector<DeviceProfile>& legitimate, std::size_t count,
                                                   std::uint64_t seed);

}  // namespace jrffp
