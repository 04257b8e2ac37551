#pragma once

#include <limits>
#include <optional>
#include <ostream>
#include <vector>

#include "jrffp/dataset_store.hpp"
#include "jrffp/inference.hpp"
#include "jrffp/training.hpp"

namespace jrffp {

/// rows = true identity, columns = predicted identity.
struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::size_t> counts;

  explicit ConfusionMatrix(std::size_t n = 0) : classes(n), counts(n * n, 0) {}
  std::size_t& at(std::size_t truth, std::size_t predicted) { return counts[truth * classes + predicted]; }
  std::size_t at(std::size_t truth, std::size_t predicted) const { return counts[truth * classes + predicted]; }
  std::size_t row_sum(std::size_t truth) const;
  std::size_t trace() const;
  std::size_t total() const;
};

struct ClosedSetResult {
  double accuracy = 0.0;
  ConfusionMatrix confusion;
};

/// Accuracy = trace / total over legitimate samples. Labels and predictions
/// must lie in [0, classes).
ClosedSetResult closed_set_accuracy(const std::vector<Label>& truth, const std::vector<std::size_t>& predicted,
                                    std::size_t classes);

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

/// Rogue is the positive class and a sample is flagged when D > threshold.
/// Points run from threshold = max score (0, 0) down through every unique
/// score to threshold = -inf (1, 1).
struct RocCurve {
  std::vector<RocPoint> points;
  double auc = 0.0;
  double eer = 0.0;
};

struct Score {
  double distance = 0.0;
  bool is_rogue = false;
};

RocCurve roc(const std::vector<Score>& scores);

/// Fraction of (rogue, legitimate) pairs ordered correctly, ties counted 1/2.
double mann_whitney_auc(const std::vector<Score>& scores);

/// Rogue is the positive class; metrics whose denominator is zero are nullopt.
struct DetectionMetrics {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

DetectionMetrics detection_prf(const std::vector<bool>& is_rogue, const std::vector<bool>& flagged_rogue);

struct EvaluationResult {
  ClosedSetResult closed_set;
  RocCurve roc;
  DetectionMetrics detection;
  double threshold = 0.0;
  std::optional<double> rogue_detection_rate;  // TPR at the threshold, rogue samples only
  double seconds_per_1000 = 0.0;
  std::optional<double> mean_legit_distance;
  std::optional<double> mean_rogue_distance;
  std::vector<Decision> decisions;
};

/// Runs infer_batch over `test` (legitimate and rogue items) and computes
/// every metric. The closed-set figures use the legitimate items only.
EvaluationResult evaluate(const DatasetSplit& test, const RffpModel& rffp, const SiaModel& sia,
                          const EnrollmentDb& enrollment, double threshold, unsigned workers = 0);

struct SweepRow {
  std::optional<double> snr_db;  // nullopt = the scenario's default test channel
  double closed_set_accuracy = 0.0;
  std::optional<double> rogue_accuracy;
  double auc = 0.0;
  double eer = 0.0;
};

/// Regenerates the test split at each SNR (training data untouched) and
/// evaluates it at the fixed threshold.
std::vector<SweepRow> snr_sweep(const Scenario& scenario, std::uint64_t seed,
                                const std::vector<std::optional<double>>& snr_list, const RffpModel& rffp,
                                const SiaModel& sia, const EnrollmentDb& enrollment, double threshold,
                                unsigned workers = 0);

struct AblationResult {
  RocCurve roc;
  SiaTrainResult training;
};

/// SIA-RFF: a siamese network on RFFP fingerprints with fingerprint-space
/// enrollment, evaluated for rogue detection on `test`.
AblationResult ablation_sia_rff(const DatasetSplit& train, const DatasetSplit& test, const RffpModel& rffp,
                                const SiaArchitecture& arch, const PairingConfig& pairing,
                                const OptimizerConfig& opt, const TrainingOptions& options = {});

void write_roc_csv(std::ostream& os, const RocCurve& curve);
void write_confusion_csv(std::ostream& os, const ConfusionMatrix& m);
void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows);
std::vector<SweepRow> read_sweep_csv(std::istream& is);

}  // namespace jrffp
