#include "jrffp/pipeline.hpp"

#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <cmath>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"

namespace jrffp {

namespace {

using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

void say(const CommandContext& ctx, const std::string& line) {
  if (ctx.log) ctx.log(line);
}

fs::path in_run(const CommandContext& ctx, const char* name) { return ctx.out_dir / name; }

void ensure_out_dir(const CommandContext& ctx) {
  std::error_code ec;
  fs::create_directories(ctx.out_dir, ec);
  if (ec || !fs::is_directory(ctx.out_dir))
    throw std::filesystem::filesystem_error("cannot create output directory", ctx.out_dir, ec);
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::filesystem::filesystem_error("cannot open for writing", path, std::make_error_code(std::errc::io_error));
  out << text;
  if (!out) throw std::filesystem::filesystem_error("write failed", path, std::make_error_code(std::errc::io_error));
}

template <class F>
void write_stream(const fs::path& path, F&& fill) {
  std::ostringstream ss;
  fill(ss);
  write_text(path, ss.str());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ojson optional_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

void require_artifact(const fs::path& path, const char* produced_by) {
  if (!fs::exists(path))
    throw InputError("missing " + path.string() + " (run '" + std::string(produced_by) + "' first)");
}

DatasetSplit load_split(const CommandContext& ctx, const char* name) {
  const fs::path p = in_run(ctx, name);
  require_artifact(p, "synth");
  const auto shape = spectrogram_shape(ctx.config.scenario.lora, ctx.config.scenario.stft);
  return load_archive(p, shape);
}

struct TrainedModels {
  RffpModel rffp;
  SiaModel sia;
  EnrollmentDb enrollment;
};

TrainedModels load_models(const CommandContext& ctx) {
  for (const char* n : {artifacts::kRffpCheckpoint, artifacts::kSiaCheckpoint, artifacts::kEnrollment})
    require_artifact(in_run(ctx, n), "train");
  TrainedModels m{load_rffp(in_run(ctx, artifacts::kRffpCheckpoint)), load_sia(in_run(ctx, artifacts::kSiaCheckpoint)),
                  load_enrollment(in_run(ctx, artifacts::kEnrollment))};
  const auto [rows, cols] = spectrogram_shape(ctx.config.scenario.lora, ctx.config.scenario.stft);
  if (m.rffp.arch.input_rows != rows || m.rffp.arch.input_cols != cols)
    throw ConfigError("RFFP checkpoint input shape does not match the configured spectrogram shape");
  if (m.rffp.arch.class_count != ctx.config.scenario.legitimate.size())
    throw ConfigError("RFFP checkpoint has " + std::to_string(m.rffp.arch.class_count) +
                      " classes, the scenario lists " + std::to_string(ctx.config.scenario.legitimate.size()) +
                      " legitimate devices");
  return m;
}

double resolve_threshold(const CommandContext& ctx, const TrainedModels& m, std::optional<CalibrationScores>* scores_out) {
  const ThresholdPolicy& policy = ctx.config.threshold;
  if (policy.method == ThresholdMethod::fixed) return policy.fixed_value;
  const DatasetSplit cal = load_split(ctx, artifacts::kCalibrationArchive);
  CalibrationScores s = score_split(cal, m.rffp, m.sia, m.enrollment, ctx.config.workers);
  const double lambda = calibrate_threshold(s.legit, s.rogue, policy);
  if (scores_out) *scores_out = std::move(s);
  return lambda;
}

double stored_or_resolved_threshold(const CommandContext& ctx, const TrainedModels& m) {
  const fs::path p = in_run(ctx, artifacts::kThreshold);
  if (fs::exists(p)) {
    try {
      const auto j = nlohmann::json::parse(read_text(p));
      return j.at("threshold").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(p.string() + ": " + e.what(), 0);
    }
  }
  return resolve_threshold(ctx, m, nullptr);
}

ojson metrics_json(const EvaluationResult& e, const RunConfig& c) {
  ojson j;
  j["threshold"] = e.threshold;
  j["threshold_method"] = threshold_method_name(c.threshold.method);
  j["closed_set_accuracy"] = e.closed_set.accuracy;
  j["accuracy"] = optional_json(e.detection.accuracy);
  j["precision"] = optional_json(e.detection.precision);
  j["recall"] = optional_json(e.detection.recall);
  j["f1"] = optional_json(e.detection.f1);
  j["auc"] = e.roc.auc;
  j["eer"] = e.roc.eer;
  j["rogue_detection_rate"] = optional_json(e.rogue_detection_rate);
  j["mean_legit_distance"] = optional_json(e.mean_legit_distance);
  j["mean_rogue_distance"] = optional_json(e.mean_rogue_distance);
  j["counts"] = {{"tp", e.detection.tp}, {"fp", e.detection.fp}, {"tn", e.detection.tn}, {"fn", e.detection.fn},
                 {"test_items", e.decisions.size()}};
  return j;
}

}  // namespace

std::string sha256_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string() + " for hashing");
  EVP_MD_CTX* md = EVP_MD_CTX_new();
  if (md == nullptr || EVP_DigestInit_ex(md, EVP_sha256(), nullptr) != 1) {
    EVP_MD_CTX_free(md);
    throw Error("SHA-256 initialisation failed");
  }
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(md, buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(md, digest.data(), &len);
  EVP_MD_CTX_free(md);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return hex.str();
}

void write_manifest(const CommandContext& ctx, const std::string& command, const std::vector<std::string>& outputs,
                    const std::vector<std::string>& volatile_outputs) {
  // Volatile files are named without a hash so reruns yield the same manifest.
  auto entries = [&](const std::vector<std::string>& names, bool hashed) {
    ojson arr = ojson::array();
    for (const auto& n : names) {
      const fs::path p = ctx.out_dir / n;
      if (!fs::exists(p)) throw InputError("manifest: expected output " + p.string() + " is missing");
      if (hashed) arr.push_back({{"file", n}, {"bytes", fs::file_size(p)}, {"sha256", sha256_file(p)}});
      else arr.push_back({{"file", n}});
    }
    return arr;
  };
  ojson j;
  j["command"] = command;
  j["seed"] = ctx.config.seed;
  j["config"] = ojson::parse(ctx.config.to_json_text());
  j["outputs"] = entries(outputs, true);
  j["volatile_outputs"] = entries(volatile_outputs, false);
  write_text(ctx.out_dir / ("manifest_" + command + ".json"), j.dump(2) + "\n");
}

void cmd_synth(const CommandContext& ctx) {
  ensure_out_dir(ctx);
  const RunConfig& c = ctx.config;
  BuildOptions opts;
  opts.workers = c.workers;
  const std::pair<SplitKind, const char*> splits[] = {{SplitKind::train, artifacts::kTrainArchive},
                                                      {SplitKind::test, artifacts::kTestArchive},
                                                      {SplitKind::calibration, artifacts::kCalibrationArchive}};
  std::vector<std::string> outputs;
  ojson counts;
  for (const auto& [kind, name] : splits) {
    say(ctx, std::string("synthesizing ") + split_name(kind) + " split");
    const DatasetSplit split = build_synthetic_dataset(c.scenario, kind, c.seed, opts);
    save_archive(split, in_run(ctx, name));
    counts[split_name(kind)] = split.items.size();
    outputs.emplace_back(name);
  }
  write_text(in_run(ctx, artifacts::kResolvedConfig), c.to_json_text());
  outputs.emplace_back(artifacts::kResolvedConfig);
  write_manifest(ctx, "synth", outputs);
  say(ctx, "item counts: " + counts.dump());
}

std::string train_report_json(const TrainReport& r, const RunConfig& c) {
  ojson j;
  j["seed"] = r.seed;
  j["mode"] = c.mode == TrainMode::joint ? "joint" : "sequential";
  j["epochs_configured"] = c.optimizer.epochs;
  j["epochs_run"] = r.epochs_run;
  j["early_stopped"] = r.early_stopped;
  j["batch_size"] = c.optimizer.batch_size;
  j["learning_rate"] = c.optimizer.learning_rate;
  j["initial_ce"] = r.initial_ce;
  j["ce_curve"] = r.ce_curve;
  j["con_curve"] = r.con_curve;
  j["rffp_updates"] = r.rffp_updates;
  j["sia_updates"] = r.sia_updates;
  j["similar_pairs"] = r.similar_pairs;
  j["dissimilar_pairs"] = r.dissimilar_pairs;
  j["checkpoints"] = {{"rffp", artifacts::kRffpCheckpoint},
                      {"sia", artifacts::kSiaCheckpoint},
                      {"enrollment", artifacts::kEnrollment}};
  j["config"] = ojson::parse(c.to_json_text());
  return j.dump(2) + "\n";
}

TrainReport cmd_train(const CommandContext& ctx) {
  ensure_out_dir(ctx);
  const RunConfig& c = ctx.config;
  const DatasetSplit train = load_split(ctx, artifacts::kTrainArchive);
  if (train.identity_count != c.scenario.legitimate.size())
    throw ConfigError("train archive holds " + std::to_string(train.identity_count) +
                      " identities, the scenario lists " + std::to_string(c.scenario.legitimate.size()));
  EnrollmentDb enrollment = enroll(train);
  quantize_to_binary32(enrollment);

  TrainingOptions options{c.early_stop, c.workers, ctx.log};
  TrainReport report;
  if (c.mode == TrainMode::joint) {
    report = train_joint(train, enrollment, c.rffp, c.sia, c.pairing, c.optimizer, options);
  } else {
    const auto t0 = std::chrono::steady_clock::now();
    RffpTrainResult r = train_rffp(train, c.rffp, c.optimizer, options);
    SiaTrainResult s = train_sia(train, enrollment, r.model, c.sia, c.pairing, c.optimizer, options);
    report.rffp = std::move(r.model);
    report.sia = std::move(s.model);
    report.ce_curve = std::move(r.loss_curve);
    report.con_curve = std::move(s.loss_curve);
    report.initial_ce = r.initial_loss;
    report.rffp_updates = r.updates;
    report.sia_updates = s.updates;
    report.epochs_run = std::max(r.epochs_run, s.epochs_run);
    report.early_stopped = r.early_stopped || s.early_stopped;
    report.similar_pairs = s.similar_pairs;
    report.dissimilar_pairs = s.dissimilar_pairs;
    report.seed = c.seed;
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

  save_model(report.rffp, in_run(ctx, artifacts::kRffpCheckpoint));
  save_model(report.sia, in_run(ctx, artifacts::kSiaCheckpoint));
  save_enrollment(enrollment, in_run(ctx, artifacts::kEnrollment));
  write_text(in_run(ctx, artifacts::kTrainReport), train_report_json(report, c));
  ojson timing{{"wall_seconds", report.wall_seconds}};
  write_text(in_run(ctx, artifacts::kTrainTiming), timing.dump(2) + "\n");
  write_manifest(ctx, "train",
                 {artifacts::kRffpCheckpoint, artifacts::kSiaCheckpoint, artifacts::kEnrollment, artifacts::kTrainReport},
                 {artifacts::kTrainTiming});
  return report;
}

EvaluationResult cmd_eval(const CommandContext& ctx) {
  ensure_out_dir(ctx);
  const RunConfig& c = ctx.config;
  const TrainedModels m = load_models(ctx);
  const DatasetSplit test = load_split(ctx, artifacts::kTestArchive);

  std::optional<CalibrationScores> cal;
  const double lambda = resolve_threshold(ctx, m, &cal);
  ojson th{{"threshold", lambda}, {"method", threshold_method_name(c.threshold.method)}};
  if (cal) th["calibration_items"] = {{"legitimate", cal->legit.size()}, {"rogue", cal->rogue.size()}};
  write_text(in_run(ctx, artifacts::kThreshold), th.dump(2) + "\n");
  say(ctx, "threshold " + std::to_string(lambda));

  EvaluationResult e = evaluate(test, m.rffp, m.sia, m.enrollment, lambda, c.workers);
  write_text(in_run(ctx, artifacts::kMetrics), metrics_json(e, c).dump(2) + "\n");
  write_stream(in_run(ctx, artifacts::kRocPoints), [&](std::ostream& os) { write_roc_csv(os, e.roc); });
  write_stream(in_run(ctx, artifacts::kConfusion),
               [&](std::ostream& os) { write_confusion_csv(os, e.closed_set.confusion); });
  std::vector<std::optional<Label>> truth;
  for (const auto& item : test.items) truth.emplace_back(item.label);
  write_stream(in_run(ctx, artifacts::kDecisions),
               [&](std::ostream& os) { write_decisions_csv(os, e.decisions, truth); });
  ojson timing{{"time_per_1000", e.seconds_per_1000}, {"records", e.decisions.size()}};
  write_text(in_run(ctx, artifacts::kEvalTiming), timing.dump(2) + "\n");
  write_manifest(ctx, "eval",
                 {artifacts::kThreshold, artifacts::kMetrics, artifacts::kRocPoints, artifacts::kConfusion,
                  artifacts::kDecisions},
                 {artifacts::kEvalTiming});
  return e;
}

std::vector<SweepRow> cmd_sweep_snr(const CommandContext& ctx) {
  ensure_out_dir(ctx);
  const RunConfig& c = ctx.config;
  const TrainedModels m = load_models(ctx);
  const double lambda = stored_or_resolved_threshold(ctx, m);
  const auto rows = snr_sweep(c.scenario, c.seed, c.sweep_snr_db, m.rffp, m.sia, m.enrollment, lambda, c.workers);
  write_stream(in_run(ctx, artifacts::kSweep), [&](std::ostream& os) { write_sweep_csv(os, rows); });
  write_manifest(ctx, "sweep-snr", {artifacts::kSweep});
  return rows;
}

AblationSummary cmd_ablation(const CommandContext& ctx) {
  ensure_out_dir(ctx);
  const RunConfig& c = ctx.config;
  const TrainedModels m = load_models(ctx);
  const DatasetSplit train = load_split(ctx, artifacts::kTrainArchive);
  const DatasetSplit test = load_split(ctx, artifacts::kTestArchive);

  AblationSummary out;
  const BatchResult batch = infer_batch(test, m.rffp, m.sia, m.enrollment, 0.0, c.workers);
  std::vector<Score> scores;
  for (std::size_t i = 0; i < test.items.size(); ++i)
    scores.push_back({batch.decisions[i].distance, test.items[i].label == kRogue});
  out.jrffp = roc(scores);

  TrainingOptions options{c.early_stop, c.workers, ctx.log};
  say(ctx, "training SIA-RFF ablation");
  AblationResult ab = ablation_sia_rff(train, test, m.rffp, c.sia_rff, c.pairing, c.optimizer, options);
  out.sia_rff = ab.roc;

  ojson j;
  j["jrffp_sc"] = {{"auc", out.jrffp.auc}, {"eer", out.jrffp.eer}};
  j["sia_rff"] = {{"auc", out.sia_rff.auc}, {"eer", out.sia_rff.eer}, {"epochs_run", ab.training.epochs_run},
                  {"loss_curve", ab.training.loss_curve}};
  write_text(in_run(ctx, artifacts::kAblation), j.dump(2) + "\n");
  write_stream(in_run(ctx, artifacts::kAblationRoc), [&](std::ostream& os) { write_roc_csv(os, out.sia_rff); });
  write_manifest(ctx, "ablation", {artifacts::kAblation, artifacts::kAblationRoc});
  return out;
}

void write_cf32(const ComplexBaseband& signal, const fs::path& path) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(signal.size() * 8);
  auto put = [&](double v) {
    const std::uint32_t u = std::bit_cast<std::uint32_t>(static_cast<float>(v));
    for (int k = 0; k < 4; ++k) bytes.push_back(static_cast<std::uint8_t>(u >> (8 * k)));
  };
  for (const cdouble& s : signal.samples) {
    put(s.real());
    put(s.imag());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::filesystem::filesystem_error("cannot open for writing", path, std::make_error_code(std::errc::io_error));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ComplexBaseband read_cf32(const fs::path& path, double sample_rate_hz) {
  const std::string raw = read_text(path);
  if (raw.empty()) throw FormatError("packet file " + path.string() + " is empty", 0);
  if (raw.size() % 8 != 0)
    throw FormatError("packet file " + path.string() + " is not a whole number of cf32 samples",
                      raw.size() - raw.size() % 8);
  ComplexBaseband b;
  b.sample_rate_hz = sample_rate_hz;
  b.samples.resize(raw.size() / 8);
  auto get = [&](std::size_t off) {
    std::uint32_t u = 0;
    for (int k = 0; k < 4; ++k) u |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(raw[off + k])) << (8 * k);
    return static_cast<double>(std::bit_cast<float>(u));
  };
  for (std::size_t i = 0; i < b.samples.size(); ++i) {
    b.samples[i] = {get(8 * i), get(8 * i + 4)};
    if (!std::isfinite(b.samples[i].real()) || !std::isfinite(b.samples[i].imag()))
      throw FormatError("packet file holds a non-finite sample", 8 * i);
  }
  return b;
}

Decision cmd_infer(const CommandContext& ctx, const fs::path& packet, std::ostream& out) {
  const RunConfig& c = ctx.config;
  const TrainedModels m = load_models(ctx);
  const double lambda = stored_or_resolved_threshold(ctx, m);
  const ComplexBaseband rx = read_cf32(packet, c.scenario.lora.sample_rate_hz);
  const Spectrogram s = [&] {
    try {
      Spectrogram sp = preprocess_packet(rx, c.scenario.lora, c.scenario.stft);
      quantize_to_binary32(sp);
      return sp;
    } catch (const InputError& e) {
      throw FormatError(std::string("packet cannot be preprocessed: ") + e.what(), 0);
    }
  }();
  const Decision d = infer(s, m.rffp, m.sia, m.enrollment, lambda);
  ojson j;
  j["verdict"] = verdict_name(d.verdict);
  j["predicted"] = d.predicted;
  j["predicted_device_id"] = c.scenario.legitimate.at(d.predicted).device_id;
  j["distance"] = d.distance;
  j["threshold"] = d.threshold;
  j["max_probability"] = d.max_probability;
  out << j.dump(2) << "\n";
  return d;
}

void cmd_packet(const CommandContext& ctx, const std::string& device_id, std::uint64_t index, const fs::path& path) {
  const Scenario& sc = ctx.config.scenario;
  const DeviceProfile* profile = nullptr;
  for (const auto* list : {&sc.legitimate, &sc.rogue, &sc.calibration_rogue})
    for (const auto& p : *list)
      if (p.device_id == device_id) profile = &p;
  if (profile == nullptr) throw ConfigError("no device '" + device_id + "' in the scenario");
  const ComplexBaseband rx =
      synth_received_packet(sc, *profile, derive_seed(ctx.config.seed, "packet/" + device_id, index), false, sc.snr_db);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_cf32(rx, path);
}

}  // namespace jrffp
