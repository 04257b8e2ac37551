#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "jrffp/config.hpp"
#include "jrffp/evaluation.hpp"

namespace jrffp {

/// File names inside a run directory.
namespace artifacts {
inline constexpr const char* kTrainArchive = "train.spga";
inline constexpr const char* kTestArchive = "test.spga";
inline constexpr const char* kCalibrationArchive = "calibration.spga";
inline constexpr const char* kRffpCheckpoint = "rffp.ckpt";
inline constexpr const char* kSiaCheckpoint = "sia.ckpt";
inline constexpr const char* kEnrollment = "enrollment.enrl";
inline constexpr const char* kTrainReport = "train_report.json";
inline constexpr const char* kTrainTiming = "train_timing.json";
inline constexpr const char* kThreshold = "threshold.json";
inline constexpr const char* kMetrics = "metrics.json";
inline constexpr const char* kRocPoints = "roc_points.csv";
inline constexpr const char* kConfusion = "confusion.csv";
inline constexpr const char* kDecisions = "decisions.csv";
inline constexpr const char* kEvalTiming = "timing.json";
inline constexpr const char* kSweep = "sweep_snr.csv";
inline constexpr const char* kAblation = "ablation.json";
inline constexpr const char* kAblationRoc = "ablation_roc_points.csv";
inline constexpr const char* kResolvedConfig = "resolved_config.json";
}  // namespace artifacts

struct CommandContext {
  RunConfig config;
  std::filesystem::path out_dir;
  std::function<void(const std::string&)> log;
};

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

/// Writes manifest_<command>.json listing every output with its SHA-256.
/// Volatile outputs (wall-clock timings) are listed by name only, without a
/// hash, so the manifest itself stays byte-stable across reruns.
void write_manifest(const CommandContext& ctx, const std::string& command, const std::vector<std::string>& outputs,
                    const std::vector<std::string>& volatile_outputs = {});

/// train/test/calibration archives.
void cmd_synth(const CommandContext& ctx);
/// Checkpoints, enrollment database and the training report.
TrainReport cmd_train(const CommandContext& ctx);
/// Calibrates the threshold, scores the test archive, writes the metrics bundle.
EvaluationResult cmd_eval(const CommandContext& ctx);
std::vector<SweepRow> cmd_sweep_snr(const CommandContext& ctx);

struct AblationSummary {
  RocCurve jrffp;
  RocCurve sia_rff;
};
AblationSummary cmd_ablation(const CommandContext& ctx);

/// Classifies one cf32 packet file (interleaved little-endian binary32 I/Q
/// at the scenario sample rate) and prints the Decision as JSON.
Decision cmd_infer(const CommandContext& ctx, const std::filesystem::path& packet, std::ostream& out);

/// Synthesizes one received packet of a scenario device as a cf32 file.
void cmd_packet(const CommandContext& ctx, const std::string& device_id, std::uint64_t index,
                const std::filesystem::path& path);

void write_cf32(const ComplexBaseband& signal, const std::filesystem::path& path);
ComplexBaseband read_cf32(const std::filesystem::path& path, double sample_rate_hz);

std::string train_report_json(const TrainReport& report, const RunConfig& config);

}  // namespace jrffp
