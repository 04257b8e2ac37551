#include <cmath>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "jrffp/evaluation.hpp"

using namespace jrffp;

namespace {

std::vector<Score> scores_of(const std::vector<double>& legit, const std::vector<double>& rogue) {
  std::vector<Score> s;
  for (double v : legit) s.push_back({v, false});
  for (double v : rogue) s.push_back({v, true});
  return s;
}

struct TinyWorld {
  Scenario scenario = fixtures::tiny_scenario(2, 1);
  DatasetSplit train, test;
  EnrollmentDb enrollment;
  RffpModel rffp;
  SiaModel sia;
  SiaArchitecture fp_arch;

  TinyWorld() {
    train = build_synthetic_dataset(scenario, SplitKind::train, 9);
    test = build_synthetic_dataset(scenario, SplitKind::test, 9);
    enrollment = enroll(train);
    const auto [f, t] = train.shape();
    Rng rng(4);
    RffpArchitecture ra;
    ra.input_rows = f;
    ra.input_cols = t;
    ra.class_count = 2;
    ra.hidden_units = 8;
    rffp = RffpModel::create(ra, rng);
    SiaArchitecture sa;
    sa.input_rows = f;
    sa.input_cols = t;
    sa.hidden_units = 8;
    sa.embedding_dim = 4;
    sia = SiaModel::create(sa, rng);
    fp_arch.input = SiaInput::fingerprint;
    fp_arch.fingerprint_units = 32;
    fp_arch.hidden_units = 8;
    fp_arch.embedding_dim = 4;
  }
};

}  // namespace

TEST_CASE("closed-set accuracy and confusion matrix") {
  const auto r = closed_set_accuracy({0, 0, 1, 2, 2, 2}, {0, 1, 1, 2, 0, 2}, 3);
  CHECK(r.accuracy == doctest::Approx(4.0 / 6.0));
  CHECK(r.confusion.at(0, 1) == 1);
  CHECK(r.confusion.at(2, 0) == 1);
  CHECK(r.confusion.trace() == 4);
  CHECK(r.confusion.total() == 6);
  CHECK(r.confusion.row_sum(2) == 3);
  CHECK(closed_set_accuracy({0, 1}, {0, 1}, 2).accuracy == 1.0);
  CHECK(closed_set_accuracy({0, 1}, {1, 0}, 2).accuracy == 0.0);
  CHECK_THROWS_AS(closed_set_accuracy({}, {}, 2), InputError);
  CHECK_THROWS_AS(closed_set_accuracy({0, 5}, {0, 1}, 2), InputError);
  CHECK_THROWS_AS(closed_set_accuracy({0}, {0, 1}, 2), InputError);
  std::ostringstream os;
  write_confusion_csv(os, r.confusion);
  CHECK(os.str() == "true\\predicted,0,1,2\n0,1,1,0\n1,0,1,0\n2,1,0,2\n");
}

TEST_CASE("ROC of perfectly separated and identical scores") {
  const auto perfect = roc(scores_of({0.1, 0.2}, {0.8, 0.9}));
  CHECK(perfect.auc == doctest::Approx(1.0));
  CHECK(perfect.eer == doctest::Approx(0.0));
  CHECK(perfect.points.front().fpr == 0.0);
  CHECK(perfect.points.front().tpr == 0.0);
  CHECK(perfect.points.back().fpr == 1.0);
  CHECK(perfect.points.back().tpr == 1.0);
  CHECK(std::isinf(perfect.points.back().threshold));

  const auto same = roc(scores_of({0.5, 0.5, 0.5}, {0.5, 0.5}));
  CHECK(same.auc == doctest::Approx(0.5));
  CHECK(same.eer == doctest::Approx(0.5));

  const auto inverted = roc(scores_of({0.8, 0.9}, {0.1, 0.2}));
  CHECK(inverted.auc == doctest::Approx(0.0));
  CHECK(inverted.eer == doctest::Approx(1.0));
}

TEST_CASE("trapezoid AUC equals the Mann-Whitney statistic, ties included") {
  Rng rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> legit, rogue;
    for (std::uint64_t i = 0, n = 1 + rng.uniform_index(30); i < n; ++i) legit.push_back(double(rng.uniform_index(8)));
    for (std::uint64_t i = 0, n = 1 + rng.uniform_index(30); i < n; ++i) rogue.push_back(double(2 + rng.uniform_index(8)));
    const auto s = scores_of(legit, rogue);
    // Independent pair count.
    double wins = 0;
    for (double r : rogue)
      for (double l : legit) wins += r > l ? 1.0 : (r == l ? 0.5 : 0.0);
    const double oracle = wins / double(legit.size() * rogue.size());
    CHECK(std::abs(roc(s).auc - oracle) < 1e-12);
    CHECK(std::abs(mann_whitney_auc(s) - oracle) < 1e-12);

    const auto c = roc(s);
    for (std::size_t k = 1; k < c.points.size(); ++k) {
      CHECK(c.points[k].fpr >= c.points[k - 1].fpr);
      CHECK(c.points[k].tpr >= c.points[k - 1].tpr);
    }
    CHECK(c.eer >= 0.0);
    CHECK(c.eer <= 1.0);
  }
}

TEST_CASE("ROC input errors") {
  CHECK_THROWS_AS(roc(scores_of({0.1, 0.2}, {})), InputError);
  CHECK_THROWS_AS(roc(scores_of({}, {0.3})), InputError);
  CHECK_THROWS_AS(roc(scores_of({NAN}, {0.3})), InputError);
  CHECK_THROWS_AS(mann_whitney_auc(scores_of({0.1}, {})), InputError);
}

TEST_CASE("detection metrics over every 4-sample pattern") {
  for (unsigned truth_bits = 0; truth_bits < 16; ++truth_bits) {
    for (unsigned flag_bits = 0; flag_bits < 16; ++flag_bits) {
      std::vector<bool> truth(4), flags(4);
      std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
      for (int i = 0; i < 4; ++i) {
        truth[i] = (truth_bits >> i) & 1;
        flags[i] = (flag_bits >> i) & 1;
        if (truth[i] && flags[i]) ++tp;
        if (!truth[i] && flags[i]) ++fp;
        if (!truth[i] && !flags[i]) ++tn;
        if (truth[i] && !flags[i]) ++fn;
      }
      const auto m = detection_prf(truth, flags);
      CHECK(m.tp == tp);
      CHECK(m.fp == fp);
      CHECK(m.tn == tn);
      CHECK(m.fn == fn);
      REQUIRE(m.accuracy);
      CHECK(*m.accuracy == doctest::Approx((tp + tn) / 4.0));
      CHECK(m.precision.has_value() == (tp + fp > 0));
      CHECK(m.recall.has_value() == (tp + fn > 0));
      if (m.precision && m.recall) {
        const double p = *m.precision, r = *m.recall;
        CHECK(p == doctest::Approx(double(tp) / double(tp + fp)));
        CHECK(r == doctest::Approx(double(tp) / double(tp + fn)));
        if (tp > 0) {
          REQUIRE(m.f1);
          CHECK(*m.f1 == doctest::Approx(2.0 * tp / double(2 * tp + fp + fn)));
        } else {
          CHECK_FALSE(m.f1);
        }
      } else {
        CHECK_FALSE(m.f1);
      }
    }
  }
  CHECK_THROWS_AS(detection_prf({true}, {}), InputError);
}

TEST_CASE("sweep CSV round-trip") {
  std::vector<SweepRow> rows{{std::nullopt, 0.9, 0.8, 0.95, 0.1}, {30.0, 1.0, std::nullopt, 0.5, 0.5},
                             {-5.5, 0.125, 0.0, 1.0 / 3.0, 0.0}};
  std::stringstream ss;
  write_sweep_csv(ss, rows);
  const auto back = read_sweep_csv(ss);
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back[i].snr_db == rows[i].snr_db);
    CHECK(back[i].closed_set_accuracy == rows[i].closed_set_accuracy);
    CHECK(back[i].rogue_accuracy == rows[i].rogue_accuracy);
    CHECK(back[i].auc == rows[i].auc);
    CHECK(back[i].eer == rows[i].eer);
  }
  std::stringstream bad("snr,acc\n");
  CHECK_THROWS_AS(read_sweep_csv(bad), FormatError);
  std::stringstream short_row("snr_db,closed_set_accuracy,rogue_accuracy,auc,eer\n1,2\n");
  CHECK_THROWS_AS(read_sweep_csv(short_row), FormatError);
}

TEST_CASE("evaluate aggregates the batch decisions") {
  TinyWorld w;
  const double lambda = 0.05;
  const auto e = evaluate(w.test, w.rffp, w.sia, w.enrollment, lambda);
  REQUIRE(e.decisions.size() == w.test.items.size());
  std::size_t legit = 0, ok = 0, rogues = 0, caught = 0;
  for (std::size_t i = 0; i < e.decisions.size(); ++i) {
    const auto& d = e.decisions[i];
    CHECK(d == infer(w.test.items[i].spectrogram, w.rffp, w.sia, w.enrollment, lambda));
    if (w.test.items[i].label == kRogue) {
      ++rogues;
      caught += d.is_rogue();
    } else {
      ++legit;
      ok += d.predicted == static_cast<std::size_t>(w.test.items[i].label);
    }
  }
  CHECK(e.closed_set.accuracy == doctest::Approx(double(ok) / double(legit)));
  REQUIRE(e.rogue_detection_rate);
  CHECK(*e.rogue_detection_rate == doctest::Approx(double(caught) / double(rogues)));
  CHECK(e.detection.tp + e.detection.fp + e.detection.tn + e.detection.fn == w.test.items.size());
  CHECK(e.roc.auc >= 0.0);
  CHECK(e.roc.auc <= 1.0);
}

TEST_CASE("sweep row at the default channel equals a plain evaluation") {
  TinyWorld w;
  const auto rows = snr_sweep(w.scenario, 9, {std::nullopt, 5.0}, w.rffp, w.sia, w.enrollment, 0.05);
  REQUIRE(rows.size() == 2);
  const auto e = evaluate(w.test, w.rffp, w.sia, w.enrollment, 0.05);
  CHECK_FALSE(rows[0].snr_db);
  CHECK(rows[0].closed_set_accuracy == e.closed_set.accuracy);
  CHECK(rows[0].auc == e.roc.auc);
  CHECK(rows[0].eer == e.roc.eer);
  CHECK(rows[0].rogue_accuracy == e.rogue_detection_rate);
  CHECK(rows[1].snr_db == 5.0);
}

TEST_CASE("fingerprint enrollment of identical items is that item's fingerprint") {
  TinyWorld w;
  DatasetSplit same = w.train;
  for (auto& it : same.items) it.spectrogram = w.train.items[it.label == 0 ? 0 : w.train.items.size() - 1].spectrogram;
  const auto fe = enroll_fingerprints(same, w.rffp);
  REQUIRE(fe.entries.size() == 2);
  const auto direct = flat_fingerprint(w.rffp, same.items[0].spectrogram);
  const auto& got = fe.entries.at(same.items[0].label);
  REQUIRE(got.size() == direct.size());
  for (std::size_t k = 0; k < got.size(); ++k) CHECK(got.values[k] == doctest::Approx(direct.values[k]));
}

TEST_CASE("fingerprint-fed ablation yields a valid ROC") {
  TinyWorld w;
  OptimizerConfig opt;
  opt.learning_rate = 0.01;
  opt.epochs = 2;
  opt.batch_size = 4;
  opt.seed = 3;
  TrainingOptions options;
  options.early_stop.enabled = false;
  const auto a = ablation_sia_rff(w.train, w.test, w.rffp, w.fp_arch, PairingConfig{}, opt, options);
  CHECK(a.training.updates == 2 * 5);
  CHECK(a.roc.auc >= 0.0);
  CHECK(a.roc.auc <= 1.0);
  CHECK(a.roc.points.front().fpr == 0.0);
  CHECK(a.roc.points.back().tpr == 1.0);
}
