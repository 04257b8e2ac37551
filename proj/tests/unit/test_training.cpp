#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "jrffp/training.hpp"

using namespace jrffp;

namespace {

struct Setup {
  Scenario scenario = fixtures::tiny_scenario(2, 1);
  DatasetSplit train;
  EnrollmentDb enrollment;
  RffpArchitecture rffp;
  SiaArchitecture sia;
  OptimizerConfig opt;
  TrainingOptions options;

  Setup() {
    // Widely separated, noiseless, unaugmented: a sanity set the network must fit.
    scenario.train_per_device = 10;
    scenario.augmentation.enabled = false;
    scenario.legitimate[0].iq_gain_db = 6.0;
    scenario.legitimate[0].iq_phase_rad = 0.4;
    scenario.legitimate[0].dc_offset = {0.5, 0.0};
    scenario.legitimate[1].iq_gain_db = 0.0;
    scenario.legitimate[1].iq_phase_rad = 0.0;
    scenario.legitimate[1].dc_offset = {0.0, 0.0};
    train = build_synthetic_dataset(scenario, SplitKind::train, 101);
    enrollment = enroll(train);
    quantize_to_binary32(enrollment);
    const auto [f, t] = train.shape();
    rffp.input_rows = sia.input_rows = f;
    rffp.input_cols = sia.input_cols = t;
    rffp.class_count = 2;
    rffp.hidden_units = 16;
    sia.hidden_units = 16;
    sia.embedding_dim = 8;
    opt.learning_rate = 0.01;
    opt.epochs = 30;
    opt.batch_size = 1;
    opt.seed = 5;
    options.early_stop.enabled = false;
  }
};

double accuracy(const RffpModel& m, const DatasetSplit& s) {
  std::size_t ok = 0;
  for (const auto& it : s.items) ok += rffp_predict(m, it.spectrogram).predicted == static_cast<std::size_t>(it.label);
  return double(ok) / double(s.items.size());
}

}  // namespace

TEST_CASE("pair identity draws follow the configured mixture") {
  Prediction p{{0.1, 0.7, 0.2}, 1};
  PairingConfig cfg;
  cfg.random_branch_prob = 0.5;
  Rng rng(12);
  const int n = 60000;
  int random = 0;
  std::vector<int> random_hits(3, 0);
  for (int i = 0; i < n; ++i) {
    const auto d = draw_pair_identity(p, 3, cfg, rng);
    if (d.random_branch) {
      ++random;
      ++random_hits[d.identity];
    } else {
      CHECK(d.identity == 1);
    }
  }
  const double sigma = std::sqrt(0.25 / n);
  CHECK(std::abs(random / double(n) - 0.5) < 4 * sigma);
  for (int h : random_hits) CHECK(std::abs(h / double(random) - 1.0 / 3) < 4 * std::sqrt((2.0 / 9) / random));

  cfg.random_branch_prob = 0.0;
  for (int i = 0; i < 100; ++i) CHECK(sample_pair_identity(p, 3, cfg, rng) == 1);
  cfg.random_branch_prob = 1.0;
  for (int i = 0; i < 100; ++i) CHECK(draw_pair_identity(p, 3, cfg, rng).random_branch);
  cfg.random_branch_prob = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("pair draws: always-random is uniform, the mixture favours the argmax") {
  Prediction p{{0.1, 0.5, 0.2, 0.1, 0.1}, 1};
  PairingConfig cfg;
  cfg.random_branch_prob = 1.0;
  Rng rng(99);
  std::vector<int> hits(5, 0);
  for (int i = 0; i < 10000; ++i) ++hits[sample_pair_identity(p, 5, cfg, rng)];
  for (int h : hits) CHECK(std::abs(h / 10000.0 - 0.2) <= 0.015);
  cfg.random_branch_prob = 0.5;
  int argmax_hits = 0;
  for (int i = 0; i < 10000; ++i) argmax_hits += sample_pair_identity(p, 5, cfg, rng) == 1;
  const double expect = 0.5 + 0.5 / 5;
  CHECK(std::abs(argmax_hits / 10000.0 - expect) <= 3 * std::sqrt(expect * (1 - expect) / 10000));
}

TEST_CASE("legitimacy label") {
  CHECK(legitimacy_label(3, 3) == 0);
  CHECK(legitimacy_label(3, 7) == 1);
  CHECK(legitimacy_label(7, 3) == legitimacy_label(3, 7));
  CHECK(legitimacy_label(2, 2) == 0);
  CHECK(legitimacy_label(2, 0) == 1);
  CHECK(legitimacy_label(kRogue, 0) == 1);
}

TEST_CASE("prediction network fits a separable two-device set") {
  Setup s;
  const auto r = train_rffp(s.train, s.rffp, s.opt, s.options);
  CHECK(std::abs(r.initial_loss - std::log(2.0)) < 0.2);
  CHECK(r.epochs_run == 30);
  CHECK(r.updates == 30 * 20);
  CHECK(r.loss_curve.back() < r.loss_curve.front());
  CHECK(accuracy(r.model, s.train) == 1.0);
  // Final params are stored at checkpoint precision.
  auto q = r.model.params;
  q.quantize_to_binary32();
  CHECK(q == r.model.params);

  const auto dir = fixtures::scratch_dir("training_ckpt");
  save_model(r.model, dir / "r.ckpt");
  const auto back = load_rffp(dir / "r.ckpt");
  CHECK(mean_cross_entropy(back, s.train) == mean_cross_entropy(r.model, s.train));
}

TEST_CASE("training is deterministic and independent of worker count") {
  Setup s;
  s.opt.epochs = 3;
  s.opt.batch_size = 4;
  auto opts1 = s.options;
  opts1.workers = 1;
  auto opts3 = s.options;
  opts3.workers = 3;
  const auto a = train_joint(s.train, s.enrollment, s.rffp, s.sia, PairingConfig{}, s.opt, opts1);
  const auto b = train_joint(s.train, s.enrollment, s.rffp, s.sia, PairingConfig{}, s.opt, opts3);
  CHECK(a.rffp.params == b.rffp.params);
  CHECK(a.sia.params == b.sia.params);
  CHECK(a.ce_curve == b.ce_curve);
  CHECK(a.con_curve == b.con_curve);
  CHECK(a.rffp_updates == 3 * 5);
  CHECK(a.sia_updates == 3 * 5);
  CHECK(a.similar_pairs + a.dissimilar_pairs == 3 * 20);
  for (double l : a.ce_curve) CHECK(std::isfinite(l));
  for (double l : a.con_curve) {
    CHECK(std::isfinite(l));
    CHECK(l >= 0.0);
  }

  s.opt.seed = 6;
  const auto c = train_joint(s.train, s.enrollment, s.rffp, s.sia, PairingConfig{}, s.opt, opts1);
  CHECK_FALSE(c.rffp.params == a.rffp.params);
}

TEST_CASE("the siamese branch never perturbs the prediction network trajectory") {
  Setup s;
  s.opt.epochs = 2;
  s.opt.batch_size = 3;
  const auto on = train_joint(s.train, s.enrollment, s.rffp, s.sia, PairingConfig{}, s.opt, s.options, true, true);
  const auto off = train_joint(s.train, s.enrollment, s.rffp, s.sia, PairingConfig{}, s.opt, s.options, false, true);
  const auto alone = train_rffp(s.train, s.rffp, s.opt, s.options, true);
  REQUIRE(on.rffp_trajectory.size() == on.rffp_updates);
  CHECK(on.rffp_trajectory == off.rffp_trajectory);
  CHECK(alone.trajectory == off.rffp_trajectory);
  CHECK(off.sia_updates == 0);
  CHECK(off.con_curve.empty());
}

TEST_CASE("siamese loss with oracle pairing equals the mean squared enrolled distance") {
  Setup s;
  const auto rffp = train_rffp(s.train, s.rffp, s.opt, s.options).model;
  REQUIRE(accuracy(rffp, s.train) == 1.0);

  PairingConfig pairing;
  pairing.random_branch_prob = 0.0;
  OptimizerConfig opt = s.opt;
  opt.epochs = 1;
  opt.batch_size = s.train.items.size();
  const auto r = train_sia(s.train, s.enrollment, rffp, s.sia, pairing, opt, s.options);
  CHECK(r.dissimilar_pairs == 0);
  CHECK(r.similar_pairs == s.train.items.size());
  CHECK(r.random_branch_draws == 0);
  CHECK(r.updates == 1);

  Rng init(derive_seed(opt.seed, "init/sia"));
  const auto fresh = SiaModel::create(s.sia, init);
  double expect = 0.0;
  for (const auto& it : s.train.items) {
    const double d = sia_distance(fresh, s.enrollment.at(it.label), it.spectrogram).distance;
    expect += d * d;
  }
  expect /= double(s.train.items.size());
  REQUIRE(r.loss_curve.size() == 1);
  CHECK(r.loss_curve[0] == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("always-random pairing produces both pair kinds") {
  Setup s;
  s.opt.epochs = 2;
  PairingConfig pairing;
  pairing.random_branch_prob = 1.0;
  const auto rffp = train_rffp(s.train, s.rffp, s.opt, s.options).model;
  const auto r = train_sia(s.train, s.enrollment, rffp, s.sia, pairing, s.opt, s.options);
  CHECK(r.random_branch_draws == 2 * 20);
  CHECK(r.similar_pairs > 5);
  CHECK(r.dissimilar_pairs > 5);
}

TEST_CASE("one epoch of 30 samples makes 30 updates of each network") {
  Setup s;
  s.scenario.train_per_device = 15;
  s.train = build_synthetic_dataset(s.scenario, SplitKind::train, 3);
  s.enrollment = enroll(s.train);
  s.opt.epochs = 1;
  const auto r = train_joint(s.train, s.enrollment, s.rffp, s.sia, PairingConfig{}, s.opt, s.options);
  CHECK(r.rffp_updates == 30);
  CHECK(r.sia_updates == 30);
}

TEST_CASE("early stopping halts a stalled run") {
  Setup s;
  s.opt.epochs = 60;
  s.opt.learning_rate = 1e-12;
  s.options.early_stop = {true, 1e-4, 5};
  const auto r = train_rffp(s.train, s.rffp, s.opt, s.options);
  CHECK(r.early_stopped);
  CHECK(r.epochs_run == 6);  // first epoch sets the baseline
}

TEST_CASE("training errors") {
  Setup s;
  s.opt.epochs = 1;
  CHECK_THROWS_AS(train_joint(s.train, EnrollmentDb{}, s.rffp, s.sia, PairingConfig{}, s.opt, s.options),
                  ConfigError);
  DatasetSplit with_rogue = s.train;
  with_rogue.items[0].label = kRogue;
  CHECK_THROWS_AS(train_rffp(with_rogue, s.rffp, s.opt, s.options), InputError);
  auto wrong = s.rffp;
  wrong.class_count = 1;
  CHECK_THROWS_AS(train_rffp(s.train, wrong, s.opt, s.options), ConfigError);

  s.opt.epochs = 5;
  // Moderate overshoot (1e8..1e20) kills every ReLU and freezes the net with a
  // finite clamped loss; only a step that overflows binary64 is divergence.
  s.opt.learning_rate = 1e100;
  CHECK_THROWS_AS(train_rffp(s.train, s.rffp, s.opt, s.options), TrainingDiverged);
}
