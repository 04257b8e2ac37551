#include "jrffp/training.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

namespace jrffp {

void PairingConfig::validate() const {
  if (!(random_branch_prob >= 0.0 && random_branch_prob <= 1.0))
    throw ConfigError("pairing.random_branch_prob must lie in [0, 1]");
  if (!(margin > 0.0) || !std::isfinite(margin)) throw ConfigError("pairing.margin must be positive");
}

PairDraw draw_pair_identity(const Prediction& prediction, std::size_t class_count, const PairingConfig& config,
                            Rng& rng) {
  if (class_count == 0) throw ConfigError("draw_pair_identity: class_count must be positive");
  PairDraw d;
  if (rng.uniform() < config.random_branch_prob) {
    d.identity = static_cast<std::size_t>(rng.uniform_index(class_count));
    d.random_branch = true;
  } else {
    d.identity = prediction.predicted;
  }
  return d;
}

std::size_t sample_pair_identity(const Prediction& prediction, std::size_t class_count,
                                 const PairingConfig& config, Rng& rng) {
  return draw_pair_identity(prediction, class_count, config, rng).identity;
}

namespace {

unsigned resolve_workers(unsigned workers) {
  if (workers != 0) return workers;
  return std::max(1u, std::thread::hardware_concurrency());
}

void zero(ParamSet& p) {
  for (auto& e : p) std::fill(e.tensor.values.begin(), e.tensor.values.end(), 0.0);
}

/// Sums per-task gradients in task order. Tasks run in waves of `workers`;
/// the sum is bit-identical for any worker count.
ParamSet ordered_gradient_sum(const ParamSet& layout, std::size_t tasks, unsigned workers,
                              const std::function<void(std::size_t, ParamSet&)>& task) {
  const unsigned w = resolve_workers(workers);
  ParamSet total = layout.zeros_like();
  std::vector<ParamSet> buffers(std::min<std::size_t>(w, std::max<std::size_t>(tasks, 1)), total);
  for (std::size_t start = 0; start < tasks; start += buffers.size()) {
    const std::size_t wave = std::min(buffers.size(), tasks - start);
    parallel_for(
        wave,
        [&](std::size_t k) {
          zero(buffers[k]);
          task(start + k, buffers[k]);
        },
        w);
    for (std::size_t k = 0; k < wave; ++k) total.add_scaled(buffers[k], 1.0);
  }
  return total;
}

void check_split_shape(const DatasetSplit& train, std::size_t rows, std::size_t cols, const char* who) {
  const auto [f, t] = train.shape();
  if (f != rows || t != cols)
    throw ConfigError(std::string(who) + ": training spectrograms are " + std::to_string(f) + "x" +
                      std::to_string(t) + ", architecture expects " + std::to_string(rows) + "x" +
                      std::to_string(cols));
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "shuffle", epoch));
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
  return order;
}

struct StopTracker {
  EarlyStopConfig config;
  std::optional<double> previous;
  std::size_t stalled = 0;

  /// Returns true once training should stop.
  bool observe(double epoch_loss) {
    if (previous && *previous - epoch_loss < config.min_improvement) ++stalled;
    else stalled = 0;
    previous = epoch_loss;
    return config.enabled && stalled >= config.patience;
  }
};

/// A step that overflows a parameter counts as divergence even if the batch
/// loss that produced it was finite.
void check_params_finite(const ParamSet& params, std::size_t epoch, double lr) {
  for (const auto& e : params)
    if (!e.tensor.all_finite()) throw TrainingDiverged(epoch, lr);
}

void log_line(const TrainingOptions& options, const std::string& line) {
  if (options.log) options.log(line);
}

// ---------------------------------------------------------------------------
// RFFP mini-batch step

struct RffpBatchOutcome {
  std::vector<Prediction> predictions;  // from parameters before the update
  double loss_sum = 0.0;
};

RffpBatchOutcome rffp_step(RffpModel& model, const DatasetSplit& train, std::span<const std::size_t> batch,
                           double lr, unsigned workers, std::size_t epoch) {
  RffpBatchOutcome out;
  out.predictions.resize(batch.size());
  std::vector<double> losses(batch.size(), 0.0);
  ParamSet grads = ordered_gradient_sum(model.params, batch.size(), workers, [&](std::size_t k, ParamSet& buf) {
    const auto& item = train.items[batch[k]];
    ForwardCache cache;
    Tensor prob = model.net.forward(model.params, to_input(item.spectrogram), &cache);
    if (!prob.all_finite()) {
      losses[k] = std::numeric_limits<double>::quiet_NaN();
      return;
    }
    const LossResult ce = cross_entropy(prob.values, static_cast<std::size_t>(item.label));
    losses[k] = ce.loss;
    out.predictions[k].predicted = argmax(prob.values);
    out.predictions[k].probabilities = std::move(prob.values);
    model.net.backward_accumulate(model.params, cache, Tensor({ce.grad.size()}, ce.grad), buf, true);
  });
  for (double l : losses) {
    if (!std::isfinite(l)) throw TrainingDiverged(epoch, lr);
    out.loss_sum += l;
  }
  grads.scale(1.0 / static_cast<double>(batch.size()));
  sgd_step(model.params, grads, lr);
  check_params_finite(model.params, epoch, lr);
  return out;
}

// ---------------------------------------------------------------------------
// SIA mini-batch step

struct SiaInputs {
  std::function<Tensor(std::size_t item)> observed;
  std::function<Tensor(Label identity)> enrolled;
};

struct SiaBatchStats {
  double loss_sum = 0.0;
  std::size_t similar = 0;
  std::size_t dissimilar = 0;
};

/// One update of Theta on the pairs (enrolled[pair_ids[k]], observed[batch[k]]).
SiaBatchStats sia_step(SiaModel& model, const SiaInputs& inputs, std::span<const std::size_t> batch,
                       std::span<const Label> true_labels, std::span<const Label> pair_ids,
                       const PairingConfig& pairing, double lr, unsigned workers, std::size_t epoch) {
  const std::size_t b = batch.size();
  const unsigned w = resolve_workers(workers);

  // Identities appearing in the batch, each embedded once.
  std::vector<Label> unique(pair_ids.begin(), pair_ids.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  auto slot_of = [&](Label id) {
    return static_cast<std::size_t>(std::lower_bound(unique.begin(), unique.end(), id) - unique.begin());
  };

  std::vector<ForwardCache> enr_cache(unique.size());
  std::vector<Tensor> enr_emb(unique.size());
  parallel_for(
      unique.size(),
      [&](std::size_t u) { enr_emb[u] = model.net.forward(model.params, inputs.enrolled(unique[u]), &enr_cache[u]); },
      w);
  std::vector<ForwardCache> obs_cache(b);
  std::vector<Tensor> obs_emb(b);
  parallel_for(
      b, [&](std::size_t k) { obs_emb[k] = model.net.forward(model.params, inputs.observed(batch[k]), &obs_cache[k]); },
      w);

  SiaBatchStats stats;
  std::vector<Tensor> enr_up(unique.size());
  for (std::size_t u = 0; u < unique.size(); ++u) enr_up[u] = Tensor(enr_emb[u].shape, 0.0);
  std::vector<Tensor> obs_up(b);
  for (std::size_t k = 0; k < b; ++k) {
    const std::size_t u = slot_of(pair_ids[k]);
    const int a = legitimacy_label(true_labels[k], pair_ids[k]);
    (a == 0 ? stats.similar : stats.dissimilar)++;
    const ContrastiveResult c = contrastive_loss(enr_emb[u].values, obs_emb[k].values, a, pairing.margin, pairing.form);
    if (!std::isfinite(c.loss)) throw TrainingDiverged(epoch, lr);
    stats.loss_sum += c.loss;
    for (std::size_t j = 0; j < c.grad_first.size(); ++j) enr_up[u].values[j] += c.grad_first[j];
    obs_up[k] = Tensor(obs_emb[k].shape, c.grad_second);
  }

  // Tasks: enrolled branches first, then observed branches.
  ParamSet grads =
      ordered_gradient_sum(model.params, unique.size() + b, workers, [&](std::size_t t, ParamSet& buf) {
        if (t < unique.size()) model.net.backward_accumulate(model.params, enr_cache[t], enr_up[t], buf);
        else model.net.backward_accumulate(model.params, obs_cache[t - unique.size()], obs_up[t - unique.size()], buf);
      });
  grads.scale(1.0 / static_cast<double>(b));
  sgd_step(model.params, grads, lr);
  check_params_finite(model.params, epoch, lr);
  return stats;
}

std::vector<Prediction> predict_all(const RffpModel& rffp, const DatasetSplit& split, unsigned workers) {
  std::vector<Prediction> out(split.items.size());
  parallel_for(
      split.items.size(), [&](std::size_t i) { out[i] = rffp_predict(rffp, split.items[i].spectrogram); },
      resolve_workers(workers));
  return out;
}

void check_enrollment_covers(std::size_t class_count, const std::function<bool(Label)>& has) {
  for (std::size_t k = 0; k < class_count; ++k)
    if (!has(static_cast<Label>(k)))
      throw ConfigError("enrollment has no entry for identity " + std::to_string(k));
}

/// Theta training with a frozen prediction network whose outputs are given.
SiaTrainResult train_sia_frozen(const DatasetSplit& train, const std::vector<Prediction>& predictions,
                                std::size_t class_count, const SiaInputs& inputs, const SiaArchitecture& arch,
                                const PairingConfig& pairing, const OptimizerConfig& opt,
                                const TrainingOptions& options) {
  Rng init(derive_seed(opt.seed, "init/sia"));
  SiaTrainResult r{SiaModel::create(arch, init), {}, 0, 0, false, 0, 0, 0};
  Rng pair_rng(derive_seed(opt.seed, "pairing"));
  StopTracker stop{options.early_stop, std::nullopt, 0};
  const std::size_t n = train.items.size();
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    const auto order = epoch_order(n, opt.seed, epoch);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += opt.batch_size) {
      std::span<const std::size_t> batch(order.data() + start, std::min(opt.batch_size, n - start));
      std::vector<Label> truth, ids;
      for (std::size_t i : batch) {
        const PairDraw d = draw_pair_identity(predictions[i], class_count, pairing, pair_rng);
        r.random_branch_draws += d.random_branch ? 1 : 0;
        truth.push_back(train.items[i].label);
        ids.push_back(static_cast<Label>(d.identity));
      }
      const SiaBatchStats s =
          sia_step(r.model, inputs, batch, truth, ids, pairing, opt.learning_rate, options.workers, epoch + 1);
      epoch_loss += s.loss_sum;
      r.similar_pairs += s.similar;
      r.dissimilar_pairs += s.dissimilar;
      ++r.updates;
    }
    epoch_loss /= static_cast<double>(n);
    r.loss_curve.push_back(epoch_loss);
    r.epochs_run = epoch + 1;
    std::ostringstream line;
    line << "sia epoch " << epoch + 1 << " L_con " << epoch_loss;
    log_line(options, line.str());
    if (stop.observe(epoch_loss)) {
      r.early_stopped = epoch + 1 < opt.epochs;
      break;
    }
  }
  r.model.params.quantize_to_binary32();
  return r;
}

}  // namespace

double mean_cross_entropy(const RffpModel& model, const DatasetSplit& split, unsigned workers) {
  if (split.items.empty()) throw InputError("mean_cross_entropy: empty split");
  std::vector<double> losses(split.items.size(), 0.0);
  parallel_for(
      split.items.size(),
      [&](std::size_t i) {
        const auto& item = split.items[i];
        if (item.label < 0) return;
        const Prediction p = rffp_predict(model, item.spectrogram);
        losses[i] = cross_entropy(p.probabilities, static_cast<std::size_t>(item.label)).loss;
      },
      resolve_workers(workers));
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < losses.size(); ++i)
    if (split.items[i].label >= 0) {
      sum += losses[i];
      ++count;
    }
  if (count == 0) throw InputError("mean_cross_entropy: split has no legitimate items");
  return sum / static_cast<double>(count);
}

RffpTrainResult train_rffp(const DatasetSplit& train, const RffpArchitecture& arch, const OptimizerConfig& opt,
                           const TrainingOptions& options, bool record_trajectory) {
  TrainReport joint = train_joint(train, EnrollmentDb{}, arch, SiaArchitecture{}, PairingConfig{}, opt, options,
                                  false, record_trajectory);
  RffpTrainResult r{std::move(joint.rffp), std::move(joint.ce_curve), joint.initial_ce, joint.rffp_updates,
                    joint.epochs_run, joint.early_stopped, std::move(joint.rffp_trajectory)};
  return r;
}

SiaTrainResult train_sia(const DatasetSplit& train, const EnrollmentDb& enrollment, const RffpModel& rffp,
                         const SiaArchitecture& arch, const PairingConfig& pairing, const OptimizerConfig& opt,
                         const TrainingOptions& options) {
  opt.validate();
  pairing.validate();
  if (train.empty()) throw InputError("train_sia: empty training split");
  train.validate(true);
  if (arch.input != SiaInput::spectrogram) throw ConfigError("train_sia: architecture must consume spectrograms");
  check_split_shape(train, arch.input_rows, arch.input_cols, "train_sia");
  const std::size_t classes = rffp.arch.class_count;
  check_enrollment_covers(classes, [&](Label k) { return enrollment.contains(k); });
  SiaInputs inputs{[&](std::size_t i) { return to_input(train.items[i].spectrogram); },
                   [&](Label id) { return to_input(enrollment.at(id)); }};
  return train_sia_frozen(train, predict_all(rffp, train, options.workers), classes, inputs, arch, pairing, opt,
                          options);
}

Tensor flat_fingerprint(const RffpModel& rffp, const Spectrogram& s) {
  Tensor t = rffp_fingerprint(rffp, s);
  t.shape = {t.size()};
  return t;
}

FingerprintEnrollment enroll_fingerprints(const DatasetSplit& train, const RffpModel& rffp) {
  std::vector<Tensor> fp(train.items.size());
  parallel_for(train.items.size(), [&](std::size_t i) { fp[i] = flat_fingerprint(rffp, train.items[i].spectrogram); });
  FingerprintEnrollment out;
  std::map<Label, std::size_t> counts;
  for (std::size_t i = 0; i < fp.size(); ++i) {
    const Label id = train.items[i].label;
    if (id < 0) continue;
    auto [it, fresh] = out.entries.try_emplace(id, Tensor(fp[i].shape, 0.0));
    for (std::size_t j = 0; j < fp[i].size(); ++j) it->second.values[j] += fp[i].values[j];
    ++counts[id];
  }
  for (auto& [id, t] : out.entries)
    for (double& v : t.values) v /= static_cast<double>(counts[id]);
  return out;
}

SiaTrainResult train_sia_on_fingerprints(const DatasetSplit& train, const FingerprintEnrollment& enrollment,
                                         const RffpModel& rffp, const SiaArchitecture& arch,
                                         const PairingConfig& pairing, const OptimizerConfig& opt,
                                         const TrainingOptions& options) {
  opt.validate();
  pairing.validate();
  if (train.empty()) throw InputError("train_sia_on_fingerprints: empty training split");
  train.validate(true);
  if (arch.input != SiaInput::fingerprint)
    throw ConfigError("train_sia_on_fingerprints: architecture must consume fingerprints");
  const std::size_t classes = rffp.arch.class_count;
  check_enrollment_covers(classes, [&](Label k) { return enrollment.entries.contains(k); });
  std::vector<Tensor> fp(train.items.size());
  parallel_for(
      train.items.size(), [&](std::size_t i) { fp[i] = flat_fingerprint(rffp, train.items[i].spectrogram); },
      resolve_workers(options.workers));
  if (!fp.empty() && fp[0].size() != arch.fingerprint_units)
    throw ConfigError("train_sia_on_fingerprints: fingerprint has " + std::to_string(fp[0].size()) +
                      " units, architecture expects " + std::to_string(arch.fingerprint_units));
  SiaInputs inputs{[&](std::size_t i) { return fp[i]; }, [&](Label id) { return enrollment.entries.at(id); }};
  return train_sia_frozen(train, predict_all(rffp, train, options.workers), classes, inputs, arch, pairing, opt,
                          options);
}

TrainReport train_joint(const DatasetSplit& train, const EnrollmentDb& enrollment, const RffpArchitecture& rffp_arch,
                        const SiaArchitecture& sia_arch, const PairingConfig& pairing, const OptimizerConfig& opt,
                        const TrainingOptions& options, bool train_sia_branch, bool record_trajectory) {
  const auto t0 = std::chrono::steady_clock::now();
  opt.validate();
  pairing.validate();
  if (train.empty()) throw InputError("training split is empty");
  train.validate(true);
  check_split_shape(train, rffp_arch.input_rows, rffp_arch.input_cols, "train_rffp");
  if (train.identity_count > rffp_arch.class_count)
    throw ConfigError("training split has " + std::to_string(train.identity_count) + " identities but the RFFP head has " +
                      std::to_string(rffp_arch.class_count) + " classes");
  if (train_sia_branch) {
    if (sia_arch.input != SiaInput::spectrogram) throw ConfigError("train_joint: SIA must consume spectrograms");
    check_split_shape(train, sia_arch.input_rows, sia_arch.input_cols, "train_sia");
    check_enrollment_covers(rffp_arch.class_count, [&](Label k) { return enrollment.contains(k); });
  }

  TrainReport rep;
  rep.seed = opt.seed;
  Rng rffp_init(derive_seed(opt.seed, "init/rffp"));
  rep.rffp = RffpModel::create(rffp_arch, rffp_init);
  Rng sia_init(derive_seed(opt.seed, "init/sia"));
  if (train_sia_branch) rep.sia = SiaModel::create(sia_arch, sia_init);
  Rng pair_rng(derive_seed(opt.seed, "pairing"));
  SiaInputs inputs{[&](std::size_t i) { return to_input(train.items[i].spectrogram); },
                   [&](Label id) { return to_input(enrollment.at(id)); }};

  rep.initial_ce = mean_cross_entropy(rep.rffp, train, options.workers);
  log_line(options, "initial L_ce " + std::to_string(rep.initial_ce));

  StopTracker stop{options.early_stop, std::nullopt, 0};
  const std::size_t n = train.items.size();
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    const auto order = epoch_order(n, opt.seed, epoch);
    double ce_sum = 0.0, con_sum = 0.0;
    for (std::size_t start = 0; start < n; start += opt.batch_size) {
      std::span<const std::size_t> batch(order.data() + start, std::min(opt.batch_size, n - start));
      RffpBatchOutcome o = rffp_step(rep.rffp, train, batch, opt.learning_rate, options.workers, epoch + 1);
      ce_sum += o.loss_sum;
      ++rep.rffp_updates;
      if (record_trajectory) rep.rffp_trajectory.push_back(rep.rffp.params);
      if (!train_sia_branch) continue;
      // Pair identities come from the predictions computed before this Omega update.
      std::vector<Label> truth, ids;
      for (std::size_t k = 0; k < batch.size(); ++k) {
        truth.push_back(train.items[batch[k]].label);
        ids.push_back(static_cast<Label>(sample_pair_identity(o.predictions[k], rffp_arch.class_count, pairing, pair_rng)));
      }
      const SiaBatchStats s =
          sia_step(rep.sia, inputs, batch, truth, ids, pairing, opt.learning_rate, options.workers, epoch + 1);
      con_sum += s.loss_sum;
      rep.similar_pairs += s.similar;
      rep.dissimilar_pairs += s.dissimilar;
      ++rep.sia_updates;
    }
    const double ce = ce_sum / static_cast<double>(n);
    rep.ce_curve.push_back(ce);
    if (train_sia_branch) rep.con_curve.push_back(con_sum / static_cast<double>(n));
    rep.epochs_run = epoch + 1;
    std::ostringstream line;
    line << "epoch " << epoch + 1 << " L_ce " << ce;
    if (train_sia_branch) line << " L_con " << rep.con_curve.back();
    log_line(options, line.str());
    if (stop.observe(ce + (train_sia_branch ? rep.con_curve.back() : 0.0))) {
      rep.early_stopped = epoch + 1 < opt.epochs;
      break;
    }
  }
  rep.rffp.params.quantize_to_binary32();
  if (train_sia_branch) rep.sia.params.quantize_to_binary32();
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

}  // namespace jrffp
