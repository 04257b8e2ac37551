#pragma once

#include <optional>
#include <ostream>
#include <vector>

#include "jrffp/dataset_store.hpp"
#include "jrffp/models.hpp"

namespace jrffp {

enum class Verdict { legitimate, rogue };

const char* verdict_name(Verdict v);

/// Rogue iff threshold < distance; the boundary D == threshold is Legitimate.
/// `predicted` is kept for rogues too, for audit only.
struct Decision {
  Verdict verdict = Verdict::legitimate;
  std::size_t predicted = 0;
  double distance = 0.0;
  double threshold = 0.0;
  double max_probability = 0.0;

  bool is_rogue() const { return verdict == Verdict::rogue; }
  friend bool operator==(const Decision&, const Decision&) = default;
};

inline Verdict threshold_verdict(double distance, double threshold) {
  return threshold < distance ? Verdict::rogue : Verdict::legitimate;
}

/// Classify, look up the predicted identity's enrollment entry, measure the
/// siamese distance and threshold it.
Decision infer(const Spectrogram& observed, const RffpModel& rffp, const SiaModel& sia,
               const EnrollmentDb& enrollment, double threshold);

struct BatchResult {
  std::vector<Decision> decisions;
  double wall_seconds = 0.0;
  double seconds_per_1000 = 0.0;
};

/// Decisions in input order. A failing item aborts the batch with an error
/// naming its index.
BatchResult infer_batch(const std::vector<Spectrogram>& observations, const RffpModel& rffp, const SiaModel& sia,
                        const EnrollmentDb& enrollment, double threshold, unsigned workers = 0);
BatchResult infer_batch(const DatasetSplit& split, const RffpModel& rffp, const SiaModel& sia,
                        const EnrollmentDb& enrollment, double threshold, unsigned workers = 0);

enum class ThresholdMethod { fixed, eer_on_validation, target_fpr };

struct ThresholdPolicy {
  ThresholdMethod method = ThresholdMethod::eer_on_validation;
  double fixed_value = 1.0;  // fixed
  double target_rate = 0.05; // target_fpr

  void validate() const;
};

const char* threshold_method_name(ThresholdMethod m);
ThresholdMethod parse_threshold_method(const std::string& name);

/// Resolves lambda from validation distances. "Positive" means rogue, and a
/// legitimate sample is a false positive when its distance exceeds lambda.
///
/// eer_on_validation: the lambda where FPR = 1 - TPR. When that equality
/// holds over a whole interval between adjacent sorted scores, the interval
/// midpoint is returned; otherwise the grid threshold minimizing
/// |FPR - (1 - TPR)|, the lowest on ties.
/// target_fpr: the smallest candidate lambda with FPR <= rate.
/// The result is clamped to be >= 0.
double calibrate_threshold(const std::vector<double>& scores_legit, const std::vector<double>& scores_rogue,
                           const ThresholdPolicy& policy);

/// Distances of the calibration items (legitimate and rogue separated).
struct CalibrationScores {
  std::vector<double> legit;
  std::vector<double> rogue;
};
CalibrationScores score_split(const DatasetSplit& split, const RffpModel& rffp, const SiaModel& sia,
                              const EnrollmentDb& enrollment, unsigned workers = 0);

/// CSV columns: index,true_label,predicted,distance,threshold,verdict.
/// true_label is empty when unknown and "rogue" for unenrolled transmitters.
void write_decisions_csv(std::ostream& os, const std::vector<Decision>& decisions,
                         const std::vector<std::optional<Label>>& truth = {});

}  // namespace jrffp
