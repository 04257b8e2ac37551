#include "jrffp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <sstream>

namespace jrffp {

std::size_t ConfusionMatrix::row_sum(std::size_t truth) const {
  std::size_t s = 0;
  for (std::size_t c = 0; c < classes; ++c) s += at(truth, c);
  return s;
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t s = 0;
  for (std::size_t c = 0; c < classes; ++c) s += at(c, c);
  return s;
}

std::size_t ConfusionMatrix::total() const {
  std::size_t s = 0;
  for (std::size_t v : counts) s += v;
  return s;
}

ClosedSetResult closed_set_accuracy(const std::vector<Label>& truth, const std::vector<std::size_t>& predicted,
                                    std::size_t classes) {
  if (truth.empty()) throw InputError("closed_set_accuracy: no samples");
  if (truth.size() != predicted.size()) throw InputError("closed_set_accuracy: length mismatch");
  ClosedSetResult r{0.0, ConfusionMatrix(classes)};
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || static_cast<std::size_t>(truth[i]) >= classes)
      throw InputError("closed_set_accuracy: label " + std::to_string(truth[i]) + " outside [0, " +
                       std::to_string(classes) + ")");
    if (predicted[i] >= classes) throw InputError("closed_set_accuracy: prediction out of range");
    ++r.confusion.at(static_cast<std::size_t>(truth[i]), predicted[i]);
  }
  r.accuracy = static_cast<double>(r.confusion.trace()) / static_cast<double>(r.confusion.total());
  return r;
}

namespace {

void check_two_classes(const std::vector<Score>& scores, std::size_t& n_rogue, std::size_t& n_legit) {
  n_rogue = 0;
  n_legit = 0;
  for (const Score& s : scores) {
    if (!std::isfinite(s.distance)) throw InputError("roc: non-finite score");
    (s.is_rogue ? n_rogue : n_legit)++;
  }
  if (n_rogue == 0 || n_legit == 0) throw InputError("roc: scores must contain both rogue and legitimate samples");
}

}  // namespace

RocCurve roc(const std::vector<Score>& scores) {
  std::size_t nr = 0, nl = 0;
  check_two_classes(scores, nr, nl);
  std::vector<Score> sorted = scores;
  std::sort(sorted.begin(), sorted.end(), [](const Score& a, const Score& b) { return a.distance > b.distance; });

  RocCurve c;
  // Descending sweep: at threshold sorted[k].distance, everything strictly above is flagged.
  std::size_t tp = 0, fp = 0;
  std::size_t k = 0;
  while (k < sorted.size()) {
    const double t = sorted[k].distance;
    c.points.push_back({t, static_cast<double>(fp) / nl, static_cast<double>(tp) / nr});
    while (k < sorted.size() && sorted[k].distance == t) {
      (sorted[k].is_rogue ? tp : fp)++;
      ++k;
    }
  }
  c.points.push_back({-std::numeric_limits<double>::infinity(), 1.0, 1.0});

  for (std::size_t i = 1; i < c.points.size(); ++i) {
    const RocPoint& a = c.points[i - 1];
    const RocPoint& b = c.points[i];
    c.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }

  // g = FPR - (1 - TPR) rises from -1 to +1 along the sweep.
  auto g = [](const RocPoint& p) { return p.fpr - (1.0 - p.tpr); };
  for (std::size_t i = 0; i < c.points.size(); ++i) {
    const double gi = g(c.points[i]);
    if (gi < 0.0) continue;
    if (gi == 0.0 || i == 0) {
      c.eer = c.points[i].fpr;
    } else {
      const RocPoint& a = c.points[i - 1];
      const RocPoint& b = c.points[i];
      const double ga = g(a);
      const double s = -ga / (gi - ga);
      c.eer = a.fpr + s * (b.fpr - a.fpr);
    }
    break;
  }
  return c;
}

double mann_whitney_auc(const std::vector<Score>& scores) {
  std::size_t nr = 0, nl = 0;
  check_two_classes(scores, nr, nl);
  double wins = 0.0;
  for (const Score& r : scores) {
    if (!r.is_rogue) continue;
    for (const Score& l : scores) {
      if (l.is_rogue) continue;
      if (r.distance > l.distance) wins += 1.0;
      else if (r.distance == l.distance) wins += 0.5;
    }
  }
  return wins / (static_cast<double>(nr) * static_cast<double>(nl));
}

DetectionMetrics detection_prf(const std::vector<bool>& is_rogue, const std::vector<bool>& flagged_rogue) {
  if (is_rogue.size() != flagged_rogue.size()) throw InputError("detection_prf: length mismatch");
  DetectionMetrics m;
  for (std::size_t i = 0; i < is_rogue.size(); ++i) {
    if (is_rogue[i]) (flagged_rogue[i] ? m.tp : m.fn)++;
    else (flagged_rogue[i] ? m.fp : m.tn)++;
  }
  const double n = static_cast<double>(is_rogue.size());
  if (n > 0) m.accuracy = static_cast<double>(m.tp + m.tn) / n;
  if (m.tp + m.fp > 0) m.precision = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp);
  if (m.tp + m.fn > 0) m.recall = static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn);
  if (m.precision && m.recall && *m.precision + *m.recall > 0.0)
    m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  return m;
}

EvaluationResult evaluate(const DatasetSplit& test, const RffpModel& rffp, const SiaModel& sia,
                          const EnrollmentDb& enrollment, double threshold, unsigned workers) {
  if (test.empty()) throw InputError("evaluate: empty test split");
  BatchResult batch = infer_batch(test, rffp, sia, enrollment, threshold, workers);
  EvaluationResult r;
  r.threshold = threshold;
  r.seconds_per_1000 = batch.seconds_per_1000;

  std::vector<Label> truth;
  std::vector<std::size_t> predicted;
  std::vector<Score> scores;
  std::vector<bool> is_rogue, flagged;
  double legit_sum = 0.0, rogue_sum = 0.0;
  std::size_t rogue_caught = 0;
  for (std::size_t i = 0; i < test.items.size(); ++i) {
    const Decision& d = batch.decisions[i];
    const bool rogue = test.items[i].label == kRogue;
    if (!rogue) {
      truth.push_back(test.items[i].label);
      predicted.push_back(d.predicted);
      legit_sum += d.distance;
    } else {
      rogue_sum += d.distance;
      rogue_caught += d.is_rogue() ? 1 : 0;
    }
    scores.push_back({d.distance, rogue});
    is_rogue.push_back(rogue);
    flagged.push_back(d.is_rogue());
  }
  const std::size_t n_rogue = test.items.size() - truth.size();
  if (!truth.empty()) {
    r.closed_set = closed_set_accuracy(truth, predicted, rffp.arch.class_count);
    r.mean_legit_distance = legit_sum / static_cast<double>(truth.size());
  }
  if (n_rogue > 0) {
    r.rogue_detection_rate = static_cast<double>(rogue_caught) / static_cast<double>(n_rogue);
    r.mean_rogue_distance = rogue_sum / static_cast<double>(n_rogue);
  }
  if (!truth.empty() && n_rogue > 0) r.roc = roc(scores);
  r.detection = detection_prf(is_rogue, flagged);
  r.decisions = std::move(batch.decisions);
  return r;
}

std::vector<SweepRow> snr_sweep(const Scenario& scenario, std::uint64_t seed,
                                const std::vector<std::optional<double>>& snr_list, const RffpModel& rffp,
                                const SiaModel& sia, const EnrollmentDb& enrollment, double threshold,
                                unsigned workers) {
  std::vector<SweepRow> rows;
  for (const auto& snr : snr_list) {
    BuildOptions opts;
    opts.workers = workers;
    if (snr) opts.snr_db = std::optional<double>(*snr);
    const DatasetSplit test = build_synthetic_dataset(scenario, SplitKind::test, seed, opts);
    const EvaluationResult e = evaluate(test, rffp, sia, enrollment, threshold, workers);
    rows.push_back({snr, e.closed_set.accuracy, e.rogue_detection_rate, e.roc.auc, e.roc.eer});
  }
  return rows;
}

AblationResult ablation_sia_rff(const DatasetSplit& train, const DatasetSplit& test, const RffpModel& rffp,
                                const SiaArchitecture& arch, const PairingConfig& pairing,
                                const OptimizerConfig& opt, const TrainingOptions& options) {
  const FingerprintEnrollment fp_enroll = enroll_fingerprints(train, rffp);
  AblationResult out;
  out.training = train_sia_on_fingerprints(train, fp_enroll, rffp, arch, pairing, opt, options);
  std::vector<Score> scores(test.items.size());
  parallel_for(
      test.items.size(),
      [&](std::size_t i) {
        const Spectrogram& s = test.items[i].spectrogram;
        const Prediction p = rffp_predict(rffp, s);
        const Label id = static_cast<Label>(p.predicted);
        if (!fp_enroll.entries.contains(id))
          throw ConfigError("fingerprint enrollment has no entry for identity " + std::to_string(id));
        const auto enrolled = sia_embed(out.training.model, fp_enroll.entries.at(id));
        const auto observed = sia_embed(out.training.model, flat_fingerprint(rffp, s));
        scores[i] = {l2_distance(enrolled, observed), test.items[i].label == kRogue};
      },
      options.workers);
  out.roc = roc(scores);
  return out;
}

void write_roc_csv(std::ostream& os, const RocCurve& curve) {
  os << "threshold,fpr,tpr\n" << std::setprecision(17);
  for (const RocPoint& p : curve.points) {
    if (std::isinf(p.threshold)) os << (p.threshold < 0 ? "-inf" : "inf");
    else os << p.threshold;
    os << ',' << p.fpr << ',' << p.tpr << '\n';
  }
}

void write_confusion_csv(std::ostream& os, const ConfusionMatrix& m) {
  os << "true\\predicted";
  for (std::size_t c = 0; c < m.classes; ++c) os << ',' << c;
  os << '\n';
  for (std::size_t r = 0; r < m.classes; ++r) {
    os << r;
    for (std::size_t c = 0; c < m.classes; ++c) os << ',' << m.at(r, c);
    os << '\n';
  }
}

void write_sweep_csv(std::ostream& os, const std::vector<SweepRow>& rows) {
  os << "snr_db,closed_set_accuracy,rogue_accuracy,auc,eer\n" << std::setprecision(17);
  for (const SweepRow& r : rows) {
    if (r.snr_db) os << *r.snr_db;
    else os << "none";
    os << ',' << r.closed_set_accuracy << ',';
    if (r.rogue_accuracy) os << *r.rogue_accuracy;
    os << ',' << r.auc << ',' << r.eer << '\n';
  }
}

std::vector<SweepRow> read_sweep_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "snr_db,closed_set_accuracy,rogue_accuracy,auc,eer")
    throw FormatError("sweep CSV: unexpected header", 0);
  std::vector<SweepRow> rows;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 5) throw FormatError("sweep CSV: line " + std::to_string(line_no) + " needs 5 fields", 0);
    try {
      SweepRow r;
      if (f[0] != "none") r.snr_db = std::stod(f[0]);
      r.closed_set_accuracy = std::stod(f[1]);
      if (!f[2].empty()) r.rogue_accuracy = std::stod(f[2]);
      r.auc = std::stod(f[3]);
      r.eer = std::stod(f[4]);
      rows.push_back(r);
    } catch (const std::logic_error&) {
      throw FormatError("sweep CSV: line " + std::to_string(line_no) + " has a non-numeric field", 0);
    }
  }
  return rows;
}

}  // namespace jrffp
