// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.
// Usage: acceptance <work_dir>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <iterator>
#include <set>
#include <sstream>
#include <string>

#include "jrffp/pipeline.hpp"
#include "json.hpp"

using namespace jrffp;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

void log_progress(const std::string& line) { std::cerr << "  [run] " << line << '\n'; }

// ---------------------------------------------------------------------------

Outcome c1_readme() {
  const std::string text = read_bytes(JRFFP_README);
  for (const char* needle : {"98.47", "0.979", "0.061", "45", "not reproducible"})
    if (text.find(needle) == std::string::npos) return {false, std::string("README lacks \"") + needle + "\""};
  return {true, "reference values and non-reproducibility statement present"};
}

struct EndToEnd {
  CommandContext ctx;
  std::optional<EvaluationResult> eval;
  double seconds = 0.0;
  std::string error;
};

EndToEnd run_end_to_end(const fs::path& dir) {
  EndToEnd r{CommandContext{load_run_config(JRFFP_ACCEPTANCE_CONFIG), dir, log_progress}, std::nullopt, 0.0, {}};
  const auto t0 = std::chrono::steady_clock::now();
  try {
    cmd_synth(r.ctx);
    cmd_train(r.ctx);
    r.eval = cmd_eval(r.ctx);
  } catch (const std::exception& e) {
    r.error = e.what();
  }
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

Outcome c2_end_to_end(const EndToEnd& run) {
  const Scenario& s = run.ctx.config.scenario;
  auto spread = [&](auto field) {
    double lo = 1e300, hi = -1e300;
    for (const auto& d : s.legitimate) {
      lo = std::min(lo, field(d));
      hi = std::max(hi, field(d));
    }
    return hi - lo;
  };
  std::set<double> pa;
  for (const auto& d : s.legitimate) pa.insert(d.pa_cubic_coeff);
  const bool scenario_ok = s.legitimate.size() == 6 && s.rogue.size() == 3 && s.train_per_device == 200 &&
                           s.test_per_device == 50 && s.test_per_rogue == 50 && s.snr_db == 30.0 &&
                           spread([](const DeviceProfile& d) { return d.cfo_hz; }) >= 100.0 &&
                           spread([](const DeviceProfile& d) { return d.iq_gain_db; }) >= 0.5 && pa.size() == 6 &&
                           run.ctx.config.rffp.preset == RffpPreset::desk_small;
  if (!scenario_ok) return {false, "acceptance scenario does not match the required composition"};
  if (!run.eval) return {false, "run failed: " + run.error};
  const auto& e = *run.eval;
  const bool ok = e.closed_set.accuracy >= 0.90 && e.roc.auc >= 0.90 && e.roc.eer <= 0.15 && run.seconds <= 900.0;
  return {ok, "accuracy " + fmt(e.closed_set.accuracy) + ", AUC " + fmt(e.roc.auc) + ", EER " + fmt(e.roc.eer) +
                  ", " + fmt(run.seconds) + " s"};
}

Outcome c3_gradients() {
  auto random_tensor = [](std::vector<std::size_t> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (auto& v : t.values) v = rng.normal();
    return t;
  };
  const std::vector<std::pair<std::vector<LayerSpec>, std::vector<std::size_t>>> chains{
      {{LayerSpec::conv(2, 3)}, {2, 5, 4}},
      {{LayerSpec::conv(1, 2), LayerSpec::maxpool(), LayerSpec::dense(12, 3)}, {1, 5, 7}},
      {{LayerSpec::conv(1, 2), LayerSpec::relu(), LayerSpec::avgpool(1), LayerSpec::dense(2, 3)}, {1, 4, 6}},
      {{LayerSpec::conv(1, 3), LayerSpec::avgpool(3), LayerSpec::dense(9, 2)}, {1, 4, 6}},
      {{LayerSpec::standardize(), LayerSpec::dense(9, 4), LayerSpec::softmax()}, {1, 3, 3}},
  };
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (const auto& [layers, shape] : chains) {
      Rng rng(derive_seed(seed, "grad"));
      const Network net(layers, shape);
      const auto params = net.init_params(rng);
      const Tensor x = random_tensor(shape, rng);
      const Tensor w = random_tensor(net.output_shape(), rng);
      worst = std::max(worst, grad_check(net, params, x, [&](const Tensor& out) {
        double l = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) l += w.values[i] * out.values[i];
        return std::pair{l, w};
      }));
    }
    // Cross-entropy through a fused softmax.
    {
      Rng rng(derive_seed(seed, "ce"));
      const Network net({LayerSpec::dense(6, 4), LayerSpec::softmax()}, {1, 2, 3});
      const auto params = net.init_params(rng);
      GradCheckOptions o;
      o.from_logits = true;
      worst = std::max(worst, grad_check(net, params, random_tensor({1, 2, 3}, rng), [&](const Tensor& out) {
        const auto r = cross_entropy(out.values, seed % 4);
        return std::pair{r.loss, Tensor({4}, r.grad)};
      }, o));
    }
    // Contrastive, both forms and both labels, margin far from the kink.
    for (auto form : {ContrastiveForm::literal, ContrastiveForm::squared_hinge})
      for (int a : {0, 1}) {
        Rng rng(derive_seed(seed, "con", static_cast<std::uint64_t>(a)));
        const Network net({LayerSpec::dense(6, 3)}, {1, 2, 3});
        const auto params = net.init_params(rng);
        const std::vector<double> other{0.05, -0.02, 0.01};
        worst = std::max(worst, grad_check(net, params, random_tensor({1, 2, 3}, rng), [&](const Tensor& out) {
          const auto r = contrastive_loss(out.values, other, a, 25.0, form);
          return std::pair{r.loss, Tensor({3}, r.grad_first)};
        }));
      }
  }
  return {worst < 1e-4, "max relative error " + fmt(worst)};
}

Outcome c4_auc_oracle() {
  Rng rng(404);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Score> s;
    const auto n = 2 + rng.uniform_index(99);
    for (std::uint64_t i = 0; i < n; ++i) s.push_back({double(rng.uniform_index(20)), rng.uniform() < 0.5});
    s[0].is_rogue = true;
    s[1].is_rogue = false;
    double wins = 0, pairs = 0;
    for (const auto& r : s)
      for (const auto& l : s)
        if (r.is_rogue && !l.is_rogue) {
          pairs += 1;
          wins += r.distance > l.distance ? 1.0 : (r.distance == l.distance ? 0.5 : 0.0);
        }
    worst = std::max(worst, std::abs(roc(s).auc - wins / pairs));
  }
  return {worst <= 1e-9, "max |trapezoid - pairwise| " + fmt(worst)};
}

Outcome c5_unit_values() {
  bool ok = true;
  for (std::size_t i : {2u, 6u, 45u}) {
    const std::vector<double> u(i, 1.0 / double(i));
    ok &= std::abs(cross_entropy(u, 0).loss - std::log(double(i))) <= 1e-12;
  }
  const std::vector<double> z{0.0};
  ok &= std::abs(contrastive_loss(z, std::vector<double>{0.5}, 0, 1.0).loss - 0.25) < 1e-15;
  ok &= std::abs(contrastive_loss(z, std::vector<double>{0.5}, 1, 1.0).loss - 0.75) < 1e-15;
  ok &= contrastive_loss(z, std::vector<double>{2.0}, 1, 1.0).loss == 0.0;
  ParamSet p, g;
  p.add("w", Tensor({1}, std::vector<double>{1.0}));
  g.add("w", Tensor({1}, std::vector<double>{0.5}));
  sgd_step(p, g, 0.1);
  ok &= std::abs(p.at("w").values[0] - 0.95) < 1e-15;
  DatasetSplit s;
  s.identity_count = 1;
  s.items = {{Spectrogram{1, 1, {0.0}}, 0}, {Spectrogram{1, 1, {10.0}}, 0}};
  ok &= enroll(s).at(0).values[0] == 5.0;
  return {ok, ok ? "cross-entropy, contrastive, SGD and enrollment values exact" : "a unit value differs"};
}

Outcome c6_dsp() {
  const LoRaParams lora = load_run_config(JRFFP_ACCEPTANCE_CONFIG).scenario.lora;
  Rng rng(6);
  const auto pkt = synth_packet(lora, rng);
  double worst_cfo = 0.0;
  for (double frac : {-0.24, -0.12, 0.05, 0.2, 0.245}) {
    DeviceProfile p;
    p.cfo_hz = frac * lora.symbol_rate();
    const double est = estimate_cfo(apply_impairment(pkt, p, rng), lora);
    worst_cfo = std::max(worst_cfo, std::abs(est - p.cfo_hz) / std::abs(p.cfo_hz));
  }
  bool sync_ok = true;
  for (std::size_t lead : {0u, 3u, 16u, 257u}) {
    ComplexBaseband s = pkt;
    s.samples.insert(s.samples.begin(), lead, cdouble{});
    sync_ok &= synchronize(s, lora) == lead;
  }
  const auto c = synth_preamble(lora);
  auto inst = [&](std::size_t n) {
    return std::arg(c.samples[n + 1] * std::conj(c.samples[n])) * lora.sample_rate_hz / (2 * std::acos(-1.0));
  };
  const double f0 = std::abs(inst(0) + lora.bandwidth_hz / 2) / lora.bandwidth_hz;
  const double f1 = std::abs(inst(c.size() - 2) - lora.bandwidth_hz / 2) / lora.bandwidth_hz;
  const bool ok = worst_cfo < 0.01 && sync_ok && f0 < 0.01 && f1 < 0.01;
  return {ok, "CFO rel. error " + fmt(worst_cfo) + ", sync " + (sync_ok ? "exact" : "wrong") +
                  ", chirp endpoint errors " + fmt(f0) + "/" + fmt(f1) + " of BW"};
}

Outcome c7_pairing() {
  const std::size_t classes = 6;
  Prediction p{std::vector<double>(classes, 1.0 / classes), 2};
  PairingConfig cfg;
  Rng rng(derive_seed(7, "pairing"));
  const int n = 10000;
  int random = 0;
  std::vector<int> hits(classes, 0);
  for (int i = 0; i < n; ++i) {
    const auto d = draw_pair_identity(p, classes, cfg, rng);
    if (d.random_branch) {
      ++random;
      ++hits[d.identity];
    }
  }
  const double rate = double(random) / n;
  bool uniform = true;
  const double q = 1.0 / classes;
  for (int h : hits) uniform &= std::abs(h - random * q) <= 3.0 * std::sqrt(random * q * (1 - q));
  return {std::abs(rate - 0.5) <= 0.015 && uniform,
          "random branch rate " + fmt(rate) + (uniform ? ", uniform" : ", not uniform")};
}

Outcome c8_determinism(const fs::path& root) {
  std::string mismatch;
  std::vector<fs::path> dirs{root / "det_a", root / "det_b"};
  for (const auto& d : dirs) {
    fs::remove_all(d);
    const CommandContext ctx{load_run_config(JRFFP_SMOKE_CONFIG), d, {}};
    cmd_synth(ctx);
    cmd_train(ctx);
    cmd_eval(ctx);
  }
  std::size_t compared = 0;
  for (const char* cmd : {"synth", "train", "eval"}) {
    const std::string m = std::string("manifest_") + cmd + ".json";
    if (read_bytes(dirs[0] / m) != read_bytes(dirs[1] / m)) mismatch += m + " ";
    // Named: a range-for over a subscript of a temporary dangles.
    const json manifest = json::parse(read_bytes(dirs[0] / m));
    for (const auto& e : manifest.at("outputs")) {
      const std::string f = e["file"];
      ++compared;
      if (read_bytes(dirs[0] / f) != read_bytes(dirs[1] / f)) mismatch += f + " ";
    }
  }
  if (!mismatch.empty()) return {false, "differs: " + mismatch};
  if (compared == 0) return {false, "manifests list no outputs"};
  return {true, std::to_string(compared) + " outputs byte-identical"};
}

Outcome c9_decisions(const EndToEnd& run) {
  bool ok = threshold_verdict(0.0, 0.0) == Verdict::legitimate && threshold_verdict(0.3, 0.0) == Verdict::rogue &&
            threshold_verdict(0.7, 0.7) == Verdict::legitimate;
  if (!run.eval) return {false, "no decisions: " + run.error};
  const auto& ds = run.eval->decisions;
  double hi = 0.0;
  for (const auto& d : ds) hi = std::max(hi, d.distance);
  std::size_t prev = ds.size() + 1, violations = 0;
  for (int k = 0; k < 100; ++k) {
    const double lambda = hi * 1.05 * k / 99.0;
    std::size_t rogue = 0;
    for (const auto& d : ds) rogue += threshold_verdict(d.distance, lambda) == Verdict::rogue;
    if (rogue > prev) ++violations;
    prev = rogue;
  }
  ok &= violations == 0 && prev == 0;
  return {ok, "boundary cases typed as specified; " + std::to_string(violations) + " monotonicity violations"};
}

Outcome c10_snr(const EndToEnd& run) {
  if (!run.eval) return {false, "no trained run: " + run.error};
  const auto rows = cmd_sweep_snr(run.ctx);
  std::vector<SweepRow> numeric;
  for (const auto& r : rows)
    if (r.snr_db) numeric.push_back(r);
  std::sort(numeric.begin(), numeric.end(), [](const SweepRow& a, const SweepRow& b) { return *a.snr_db > *b.snr_db; });
  const SweepRow* at30 = nullptr;
  const SweepRow* at0 = nullptr;
  for (const auto& r : numeric) {
    if (*r.snr_db == 30.0) at30 = &r;
    if (*r.snr_db == 0.0) at0 = &r;
  }
  if (!at30 || !at0) return {false, "sweep lacks 30 dB or 0 dB"};
  std::size_t bad_acc = 0, bad_auc = 0;
  for (std::size_t i = 1; i < numeric.size(); ++i) {
    bad_acc += numeric[i].closed_set_accuracy > numeric[i - 1].closed_set_accuracy;
    bad_auc += numeric[i].auc > numeric[i - 1].auc;
  }
  const bool ok = at30->closed_set_accuracy > at0->closed_set_accuracy && at30->auc > at0->auc && bad_acc <= 1 &&
                  bad_auc <= 1;
  return {ok, "30 dB acc/AUC " + fmt(at30->closed_set_accuracy) + "/" + fmt(at30->auc) + ", 0 dB " +
                  fmt(at0->closed_set_accuracy) + "/" + fmt(at0->auc) + ", non-monotone pairs " +
                  std::to_string(bad_acc) + "/" + std::to_string(bad_auc)};
}

Outcome c11_ablation(const EndToEnd& run) {
  if (!run.eval) return {false, "no trained run: " + run.error};
  const auto a = cmd_ablation(run.ctx);
  return {a.jrffp.auc >= a.sia_rff.auc - 0.02, "JRFFP-SC AUC " + fmt(a.jrffp.auc) + ", SIA-RFF AUC " + fmt(a.sia_rff.auc)};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "jrffp_acceptance";
  fs::create_directories(root);

  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << name << "): " << o.detail << std::endl;
  };

  report(1, "full-scale reference values documented", c1_readme);
  std::cerr << "running the synthetic end-to-end scenario...\n";
  fs::remove_all(root / "end_to_end");
  const EndToEnd run = run_end_to_end(root / "end_to_end");
  report(2, "synthetic end-to-end", [&] { return c2_end_to_end(run); });
  report(3, "gradient correctness", c3_gradients);
  report(4, "AUC oracle equivalence", c4_auc_oracle);
  report(5, "unit values", c5_unit_values);
  report(6, "DSP round trips", c6_dsp);
  report(7, "pair sampling statistics", c7_pairing);
  report(8, "determinism", [&] { return c8_determinism(root); });
  report(9, "decision semantics", [&] { return c9_decisions(run); });
  report(10, "SNR robustness shape", [&] { return c10_snr(run); });
  report(11, "ablation ordering", [&] { return c11_ablation(run); });
  return failures == 0 ? 0 : 1;
}
