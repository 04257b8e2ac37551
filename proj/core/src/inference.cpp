#include "jrffp/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <iomanip>
#include <thread>

namespace jrffp {

const char* verdict_name(Verdict v) { return v == Verdict::rogue ? "rogue" : "legitimate"; }

Decision infer(const Spectrogram& observed, const RffpModel& rffp, const SiaModel& sia,
               const EnrollmentDb& enrollment, double threshold) {
  const Prediction p = rffp_predict(rffp, observed);
  const Label id = static_cast<Label>(p.predicted);
  if (!enrollment.contains(id))
    throw ConfigError("enrollment has no entry for predicted identity " + std::to_string(id));
  const EmbeddingPair pair = sia_distance(sia, enrollment.at(id), observed);
  Decision d;
  d.predicted = p.predicted;
  d.distance = pair.distance;
  d.threshold = threshold;
  d.max_probability = p.probabilities[p.predicted];
  d.verdict = threshold_verdict(d.distance, threshold);
  return d;
}

BatchResult infer_batch(const std::vector<Spectrogram>& observations, const RffpModel& rffp, const SiaModel& sia,
                        const EnrollmentDb& enrollment, double threshold, unsigned workers) {
  BatchResult r;
  if (observations.empty()) return r;
  r.decisions.resize(observations.size());
  std::vector<std::exception_ptr> failures(observations.size());
  const auto t0 = std::chrono::steady_clock::now();
  parallel_for(
      observations.size(),
      [&](std::size_t i) {
        try {
          r.decisions[i] = infer(observations[i], rffp, sia, enrollment, threshold);
        } catch (...) {
          failures[i] = std::current_exception();
        }
      },
      workers);
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  r.seconds_per_1000 = r.wall_seconds * 1000.0 / static_cast<double>(observations.size());
  for (std::size_t i = 0; i < failures.size(); ++i) {
    if (!failures[i]) continue;
    const std::string where = "batch item " + std::to_string(i) + ": ";
    try {
      std::rethrow_exception(failures[i]);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    } catch (const Error& e) {
      throw InputError(where + e.what());
    }
  }
  return r;
}

BatchResult infer_batch(const DatasetSplit& split, const RffpModel& rffp, const SiaModel& sia,
                        const EnrollmentDb& enrollment, double threshold, unsigned workers) {
  std::vector<Spectrogram> obs;
  obs.reserve(split.items.size());
  for (const auto& item : split.items) obs.push_back(item.spectrogram);
  return infer_batch(obs, rffp, sia, enrollment, threshold, workers);
}

const char* threshold_method_name(ThresholdMethod m) {
  switch (m) {
    case ThresholdMethod::fixed: return "fixed";
    case ThresholdMethod::eer_on_validation: return "eer_on_validation";
    case ThresholdMethod::target_fpr: return "target_fpr";
  }
  return "?";
}

ThresholdMethod parse_threshold_method(const std::string& name) {
  if (name == "fixed") return ThresholdMethod::fixed;
  if (name == "eer_on_validation") return ThresholdMethod::eer_on_validation;
  if (name == "target_fpr") return ThresholdMethod::target_fpr;
  throw ConfigError("unknown threshold method '" + name + "' (expected fixed, eer_on_validation or target_fpr)");
}

void ThresholdPolicy::validate() const {
  if (method == ThresholdMethod::fixed && !(std::isfinite(fixed_value) && fixed_value >= 0.0))
    throw ConfigError("threshold.value must be finite and >= 0");
  if (method == ThresholdMethod::target_fpr && !(target_rate >= 0.0 && target_rate <= 1.0))
    throw ConfigError("threshold.target_fpr must lie in [0, 1]");
}

namespace {

std::size_t count_above(const std::vector<double>& sorted, double lambda) {
  return static_cast<std::size_t>(sorted.end() - std::upper_bound(sorted.begin(), sorted.end(), lambda));
}

}  // namespace

double calibrate_threshold(const std::vector<double>& scores_legit, const std::vector<double>& scores_rogue,
                           const ThresholdPolicy& policy) {
  policy.validate();
  if (policy.method == ThresholdMethod::fixed) return policy.fixed_value;
  if (scores_legit.empty()) throw InputError("calibrate_threshold: no legitimate validation scores");
  if (policy.method == ThresholdMethod::eer_on_validation && scores_rogue.empty())
    throw InputError("calibrate_threshold: no rogue validation scores");
  for (const auto* list : {&scores_legit, &scores_rogue})
    for (double s : *list)
      if (!std::isfinite(s)) throw InputError("calibrate_threshold: non-finite score");

  std::vector<double> legit = scores_legit, rogue = scores_rogue;
  std::sort(legit.begin(), legit.end());
  std::sort(rogue.begin(), rogue.end());
  const double nl = static_cast<double>(legit.size());

  if (policy.method == ThresholdMethod::target_fpr) {
    // FPR only changes at legitimate scores.
    std::vector<double> candidates{0.0};
    for (double s : legit)
      if (s > 0.0) candidates.push_back(s);
    for (double c : candidates)
      if (static_cast<double>(count_above(legit, c)) / nl <= policy.target_rate) return c;
    return candidates.back();
  }

  const double nr = static_cast<double>(rogue.size());
  std::vector<double> grid;
  grid.reserve(legit.size() + rogue.size());
  grid.insert(grid.end(), legit.begin(), legit.end());
  grid.insert(grid.end(), rogue.begin(), rogue.end());
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());

  // gap(lambda) = FPR - (1 - TPR), constant on [grid[k], grid[k+1]) and nonincreasing.
  auto gap = [&](double lambda) {
    const double fpr = static_cast<double>(count_above(legit, lambda)) / nl;
    const double tpr = static_cast<double>(count_above(rogue, lambda)) / nr;
    return fpr - (1.0 - tpr);
  };
  std::size_t best = 0;
  double best_abs = std::abs(gap(grid[0]));
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double g = gap(grid[k]);
    if (g == 0.0) {
      std::size_t end = k;
      while (end + 1 < grid.size() && gap(grid[end + 1]) == 0.0) ++end;
      // The last grid region has TPR = 0 and never a zero gap, so end + 1 exists.
      const double hi = end + 1 < grid.size() ? grid[end + 1] : grid[end];
      return std::max(0.0, 0.5 * (grid[k] + hi));
    }
    if (std::abs(g) < best_abs) {
      best_abs = std::abs(g);
      best = k;
    }
  }
  return std::max(0.0, grid[best]);
}

CalibrationScores score_split(const DatasetSplit& split, const RffpModel& rffp, const SiaModel& sia,
                              const EnrollmentDb& enrollment, unsigned workers) {
  const BatchResult r = infer_batch(split, rffp, sia, enrollment, 0.0, workers);
  CalibrationScores out;
  for (std::size_t i = 0; i < split.items.size(); ++i)
    (split.items[i].label == kRogue ? out.rogue : out.legit).push_back(r.decisions[i].distance);
  return out;
}

void write_decisions_csv(std::ostream& os, const std::vector<Decision>& decisions,
                         const std::vector<std::optional<Label>>& truth) {
  os << "index,true_label,predicted,distance,threshold,verdict\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < decisions.size(); ++i) {
    const Decision& d = decisions[i];
    os << i << ',';
    if (i < truth.size() && truth[i]) {
      if (*truth[i] == kRogue) os << "rogue";
      else os << *truth[i];
    }
    os << ',' << d.predicted << ',' << d.distance << ',' << d.threshold << ',' << verdict_name(d.verdict) << '\n';
  }
}

}  // namespace jrffp
