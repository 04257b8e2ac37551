#include "jrffp/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace jrffp {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

/// Typed access to one JSON object, tracking its path for error messages and
/// rejecting keys nobody asked for.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_, "expected an object");
  }

  ~Section() = default;

  [[noreturn]] static void fail(const std::string& path, const std::string& what) {
    throw ConfigError((path.empty() ? std::string("<root>") : path) + ": " + what);
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool has(const std::string& key) const {
    seen_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }
  bool present(const std::string& key) const {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& raw(const std::string& key) const {
    seen_.insert(key);
    if (!j_.contains(key)) fail(child(key), "is required");
    return j_.at(key);
  }

  double number(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number()) fail(child(key), "expected a number");
    return v.get<double>();
  }
  template <class Int>
  Int integer(const std::string& key, Int fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) fail(child(key), "expected an integer");
    if constexpr (std::is_unsigned_v<Int>) {
      if (v.is_number_unsigned()) return static_cast<Int>(v.get<std::uint64_t>());
      if (v.get<std::int64_t>() < 0) fail(child(key), "must be nonnegative");
      return static_cast<Int>(v.get<std::int64_t>());
    } else {
      return static_cast<Int>(v.get<std::int64_t>());
    }
  }
  bool boolean(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_boolean()) fail(child(key), "expected true or false");
    return v.get<bool>();
  }
  std::string text(const std::string& key, const std::string& fallback) const {
    if (!has(key)) return fallback;
    const json& v = j_.at(key);
    if (!v.is_string()) fail(child(key), "expected a string");
    return v.get<std::string>();
  }
  Section section(const std::string& key) const {
    static const json empty = json::object();
    if (!has(key)) return Section(empty, child(key));
    return Section(j_.at(key), child(key));
  }

  /// Call after reading every field.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.contains(it.key())) fail(child(it.key()), "unknown field");
  }

 private:
  const json& j_;
  std::string path_;
  mutable std::set<std::string> seen_;
};

/// Re-raises ConfigErrors from a validate() call with the section path attached.
template <class F>
void validated(const std::string& path, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

DeviceProfile parse_profile(const json& j, const std::string& path) {
  Section s(j, path);
  DeviceProfile p;
  p.device_id = s.text("device_id", "");
  if (p.device_id.empty()) Section::fail(s.child("device_id"), "is required");
  p.cfo_hz = s.number("cfo_hz", 0.0);
  p.iq_gain_db = s.number("iq_gain_db", 0.0);
  p.iq_phase_rad = s.number("iq_phase_rad", 0.0);
  p.pa_cubic_coeff = s.number("pa_cubic_coeff", 0.0);
  if (s.has("dc_offset")) {
    const json& d = s.raw("dc_offset");
    if (!d.is_array() || d.size() != 2 || !d[0].is_number() || !d[1].is_number())
      Section::fail(s.child("dc_offset"), "expected [real, imag]");
    p.dc_offset = {d[0].get<double>(), d[1].get<double>()};
  }
  p.phase_noise_std_rad = s.number("phase_noise_std_rad", 0.0);
  s.finish();
  validated(path, [&] { p.validate(); });
  return p;
}

std::vector<DeviceProfile> parse_profiles(const Section& parent, const std::string& key) {
  std::vector<DeviceProfile> out;
  if (!parent.has(key)) return out;
  const json& arr = parent.raw(key);
  if (!arr.is_array()) Section::fail(parent.child(key), "expected an array of device profiles");
  for (std::size_t i = 0; i < arr.size(); ++i)
    out.push_back(parse_profile(arr[i], parent.child(key) + "[" + std::to_string(i) + "]"));
  return out;
}

std::optional<double> optional_number(const Section& s, const std::string& key, std::optional<double> fallback) {
  if (!s.present(key)) return fallback;
  const json& v = s.raw(key);
  if (v.is_null()) return std::nullopt;
  if (!v.is_number()) Section::fail(s.child(key), "expected a number or null");
  return v.get<double>();
}

ojson profile_json(const DeviceProfile& p) {
  ojson j;
  j["device_id"] = p.device_id;
  j["cfo_hz"] = p.cfo_hz;
  j["iq_gain_db"] = p.iq_gain_db;
  j["iq_phase_rad"] = p.iq_phase_rad;
  j["pa_cubic_coeff"] = p.pa_cubic_coeff;
  j["dc_offset"] = {p.dc_offset.real(), p.dc_offset.imag()};
  j["phase_noise_std_rad"] = p.phase_noise_std_rad;
  return j;
}

ojson optional_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

}  // namespace

std::vector<DeviceProfile> draw_calibration_rogues(const std::vector<DeviceProfile>& legitimate, std::size_t count,
                                                   std::uint64_t seed) {
  std::vector<DeviceProfile> out;
  if (legitimate.empty()) return out;
  auto range = [&](auto field) {
    double lo = field(legitimate[0]), hi = lo;
    for (const auto& p : legitimate) {
      lo = std::min(lo, field(p));
      hi = std::max(hi, field(p));
    }
    return std::pair{lo, hi};
  };
  const auto cfo = range([](const DeviceProfile& p) { return p.cfo_hz; });
  const auto gain = range([](const DeviceProfile& p) { return p.iq_gain_db; });
  const auto phase = range([](const DeviceProfile& p) { return p.iq_phase_rad; });
  const auto pa = range([](const DeviceProfile& p) { return p.pa_cubic_coeff; });
  const auto dcr = range([](const DeviceProfile& p) { return p.dc_offset.real(); });
  const auto dci = range([](const DeviceProfile& p) { return p.dc_offset.imag(); });
  const auto pn = range([](const DeviceProfile& p) { return p.phase_noise_std_rad; });
  Rng rng(derive_seed(seed, "calibration-rogue"));
  for (std::size_t k = 0; k < count; ++k) {
    DeviceProfile p;
    p.device_id = "calibration-rogue-" + std::to_string(k);
    p.cfo_hz = rng.uniform(cfo.first, cfo.second);
    p.iq_gain_db = rng.uniform(gain.first, gain.second);
    p.iq_phase_rad = rng.uniform(phase.first, phase.second);
    p.pa_cubic_coeff = rng.uniform(pa.first, pa.second);
    p.dc_offset = {rng.uniform(dcr.first, dcr.second), rng.uniform(dci.first, dci.second)};
    p.phase_noise_std_rad = rng.uniform(pn.first, pn.second);
    out.push_back(p);
  }
  return out;
}

void RunConfig::resolve() {
  validated("scenario", [&] { scenario.validate(); });
  if (scenario.legitimate.empty()) throw ConfigError("scenario.devices.legitimate: at least one device is required");
  const auto [rows, cols] = spectrogram_shape(scenario.lora, scenario.stft);
  rffp.input_rows = rows;
  rffp.input_cols = cols;
  rffp.class_count = scenario.legitimate.size();
  sia.input = SiaInput::spectrogram;
  sia.input_rows = rows;
  sia.input_cols = cols;
  sia_rff.input = SiaInput::fingerprint;
  sia_rff.input_rows = rows;
  sia_rff.input_cols = cols;
  validated("rffp", [&] {
    const Network net = rffp.build();
    const auto& fp = net.output_shape(rffp.fingerprint_layer_count() - 1);
    sia_rff.fingerprint_units = Tensor::element_count(fp);
  });
  validated("sia", [&] { sia.build(); });
  validated("sia", [&] { sia_rff.build(); });
  optimizer.seed = seed;
  validated("optimizer", [&] { optimizer.validate(); });
  validated("pairing", [&] { pairing.validate(); });
  validated("threshold", [&] { threshold.validate(); });
  if (early_stop.enabled && early_stop.patience == 0) throw ConfigError("early_stop.patience must be positive");
}

RunConfig parse_run_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  Section top(root, "");
  RunConfig c;
  if (!top.has("seed")) Section::fail("seed", "is required");
  c.seed = top.integer<std::uint64_t>("seed", 0);
  c.output_dir = top.text("output_dir", c.output_dir.string());
  c.workers = top.integer<unsigned>("workers", 0);

  {
    Section sc = top.section("scenario");
    Scenario& s = c.scenario;
    {
      Section l = sc.section("lora");
      s.lora.bandwidth_hz = l.number("bandwidth_hz", s.lora.bandwidth_hz);
      s.lora.spreading_factor = l.integer<int>("spreading_factor", s.lora.spreading_factor);
      s.lora.sample_rate_hz = l.number("sample_rate_hz", s.lora.sample_rate_hz);
      s.lora.amplitude = l.number("amplitude", s.lora.amplitude);
      s.lora.preamble_count = l.integer<int>("preamble_count", s.lora.preamble_count);
      l.finish();
      validated("scenario.lora", [&] { s.lora.validate(); });
    }
    {
      Section st = sc.section("stft");
      const std::string w = st.text("window", "hann");
      if (w == "hann") s.stft.window = WindowKind::hann;
      else if (w == "rectangular") s.stft.window = WindowKind::rectangular;
      else Section::fail(st.child("window"), "expected \"hann\" or \"rectangular\"");
      s.stft.window_len = st.integer<std::size_t>("window_length", s.stft.window_len);
      s.stft.hop = st.integer<std::size_t>("hop", s.stft.hop);
      s.stft.fft_size = st.integer<std::size_t>("fft_size", s.stft.fft_size);
      s.stft.top_db = optional_number(st, "top_db", s.stft.top_db);
      st.finish();
      validated("scenario.stft", [&] { s.stft.validate(); });
    }
    {
      Section d = sc.section("devices");
      s.legitimate = parse_profiles(d, "legitimate");
      s.rogue = parse_profiles(d, "rogue");
      s.calibration_rogue = parse_profiles(d, "calibration_rogue");
      d.finish();
    }
    {
      Section n = sc.section("counts");
      s.train_per_device = n.integer<std::size_t>("train_per_device", s.train_per_device);
      s.test_per_device = n.integer<std::size_t>("test_per_device", s.test_per_device);
      s.test_per_rogue = n.integer<std::size_t>("test_per_rogue", s.test_per_rogue);
      s.calibration_per_device = n.integer<std::size_t>("calibration_per_device", s.calibration_per_device);
      n.finish();
    }
    s.max_timing_offset = sc.integer<std::size_t>("max_timing_offset", s.max_timing_offset);
    s.snr_db = optional_number(sc, "snr_db", s.snr_db);
    {
      Section a = sc.section("augmentation");
      AugmentationConfig& g = s.augmentation;
      g.enabled = a.boolean("enabled", g.enabled);
      g.max_taps = a.integer<int>("max_taps", g.max_taps);
      g.max_tap_spacing = a.integer<std::size_t>("max_tap_spacing", g.max_tap_spacing);
      g.decay_samples = a.number("decay_samples", g.decay_samples);
      g.doppler_min_hz = a.number("doppler_min_hz", g.doppler_min_hz);
      g.doppler_max_hz = a.number("doppler_max_hz", g.doppler_max_hz);
      g.snr_min_db = optional_number(a, "snr_min_db", g.snr_min_db);
      g.snr_max_db = optional_number(a, "snr_max_db", g.snr_max_db);
      a.finish();
      validated("scenario.augmentation", [&] { g.validate(); });
    }
    sc.finish();
  }
  {
    Section r = top.section("rffp");
    try {
      c.rffp.preset = parse_preset(r.text("preset", preset_name(c.rffp.preset)));
    } catch (const ConfigError& e) {
      Section::fail(r.child("preset"), e.what());
    }
    c.rffp.hidden_units = r.integer<std::size_t>("hidden_units", c.rffp.hidden_units);
    r.finish();
  }
  {
    Section s = top.section("sia");
    c.sia.hidden_units = s.integer<std::size_t>("hidden_units", c.sia.hidden_units);
    c.sia.embedding_dim = s.integer<std::size_t>("embedding_dim", c.sia.embedding_dim);
    c.sia_rff.hidden_units = c.sia.hidden_units;
    c.sia_rff.embedding_dim = c.sia.embedding_dim;
    s.finish();
  }
  {
    Section o = top.section("optimizer");
    c.optimizer.learning_rate = o.number("learning_rate", c.optimizer.learning_rate);
    c.optimizer.epochs = o.integer<std::size_t>("epochs", c.optimizer.epochs);
    c.optimizer.batch_size = o.integer<std::size_t>("batch_size", c.optimizer.batch_size);
    o.finish();
  }
  {
    Section e = top.section("early_stop");
    c.early_stop.enabled = e.boolean("enabled", c.early_stop.enabled);
    c.early_stop.min_improvement = e.number("min_improvement", c.early_stop.min_improvement);
    c.early_stop.patience = e.integer<std::size_t>("patience", c.early_stop.patience);
    e.finish();
  }
  {
    Section t = top.section("training");
    const std::string mode = t.text("mode", "joint");
    if (mode == "joint") c.mode = TrainMode::joint;
    else if (mode == "sequential") c.mode = TrainMode::sequential;
    else Section::fail(t.child("mode"), "expected \"joint\" or \"sequential\"");
    t.finish();
  }
  {
    Section p = top.section("pairing");
    c.pairing.random_branch_prob = p.number("random_branch_prob", c.pairing.random_branch_prob);
    c.pairing.margin = p.number("margin", c.pairing.margin);
    const std::string form = p.text("loss_form", "literal");
    if (form == "literal") c.pairing.form = ContrastiveForm::literal;
    else if (form == "squared_hinge") c.pairing.form = ContrastiveForm::squared_hinge;
    else Section::fail(p.child("loss_form"), "expected \"literal\" or \"squared_hinge\"");
    p.finish();
  }
  {
    Section t = top.section("threshold");
    try {
      c.threshold.method = parse_threshold_method(t.text("method", threshold_method_name(c.threshold.method)));
    } catch (const ConfigError& e) {
      Section::fail(t.child("method"), e.what());
    }
    c.threshold.fixed_value = t.number("value", c.threshold.fixed_value);
    c.threshold.target_rate = t.number("target_fpr", c.threshold.target_rate);
    t.finish();
  }
  {
    Section s = top.section("sweep");
    if (s.has("snr_db")) {
      const json& arr = s.raw("snr_db");
      if (!arr.is_array()) Section::fail(s.child("snr_db"), "expected an array of numbers or null");
      c.sweep_snr_db.clear();
      for (std::size_t i = 0; i < arr.size(); ++i) {
        if (arr[i].is_null()) c.sweep_snr_db.push_back(std::nullopt);
        else if (arr[i].is_number()) c.sweep_snr_db.push_back(arr[i].get<double>());
        else Section::fail(s.child("snr_db") + "[" + std::to_string(i) + "]", "expected a number or null");
      }
    }
    s.finish();
  }
  top.present("derived");
  top.finish();

  if (c.scenario.calibration_rogue.empty() && c.threshold.method == ThresholdMethod::eer_on_validation)
    c.scenario.calibration_rogue =
        draw_calibration_rogues(c.scenario.legitimate, std::max<std::size_t>(1, c.scenario.rogue.size()), c.seed);
  c.resolve();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string RunConfig::to_json_text() const {
  ojson j;
  j["seed"] = seed;
  j["output_dir"] = output_dir.string();
  j["workers"] = workers;
  ojson& sc = j["scenario"];
  sc["lora"] = {{"bandwidth_hz", scenario.lora.bandwidth_hz},
                {"spreading_factor", scenario.lora.spreading_factor},
                {"sample_rate_hz", scenario.lora.sample_rate_hz},
                {"amplitude", scenario.lora.amplitude},
                {"preamble_count", scenario.lora.preamble_count}};
  sc["stft"] = {{"window", scenario.stft.window == WindowKind::hann ? "hann" : "rectangular"},
                {"window_length", scenario.stft.window_len},
                {"hop", scenario.stft.hop},
                {"fft_size", scenario.stft.fft_size},
                {"top_db", optional_json(scenario.stft.top_db)}};
  ojson devices;
  for (const char* key : {"legitimate", "rogue", "calibration_rogue"}) {
    const auto& list = std::string(key) == "legitimate" ? scenario.legitimate
                       : std::string(key) == "rogue"    ? scenario.rogue
                                                        : scenario.calibration_rogue;
    ojson arr = ojson::array();
    for (const auto& p : list) arr.push_back(profile_json(p));
    devices[key] = arr;
  }
  sc["devices"] = devices;
  sc["counts"] = {{"train_per_device", scenario.train_per_device},
                  {"test_per_device", scenario.test_per_device},
                  {"test_per_rogue", scenario.test_per_rogue},
                  {"calibration_per_device", scenario.calibration_per_device}};
  sc["max_timing_offset"] = scenario.max_timing_offset;
  sc["snr_db"] = optional_json(scenario.snr_db);
  const AugmentationConfig& g = scenario.augmentation;
  sc["augmentation"] = {{"enabled", g.enabled},
                        {"max_taps", g.max_taps},
                        {"max_tap_spacing", g.max_tap_spacing},
                        {"decay_samples", g.decay_samples},
                        {"doppler_min_hz", g.doppler_min_hz},
                        {"doppler_max_hz", g.doppler_max_hz},
                        {"snr_min_db", optional_json(g.snr_min_db)},
                        {"snr_max_db", optional_json(g.snr_max_db)}};
  j["rffp"] = {{"preset", preset_name(rffp.preset)}, {"hidden_units", rffp.hidden_units}};
  j["sia"] = {{"hidden_units", sia.hidden_units}, {"embedding_dim", sia.embedding_dim}};
  j["optimizer"] = {{"learning_rate", optimizer.learning_rate},
                    {"epochs", optimizer.epochs},
                    {"batch_size", optimizer.batch_size}};
  j["early_stop"] = {{"enabled", early_stop.enabled},
                     {"min_improvement", early_stop.min_improvement},
                     {"patience", early_stop.patience}};
  j["training"] = {{"mode", mode == TrainMode::joint ? "joint" : "sequential"}};
  j["pairing"] = {{"random_branch_prob", pairing.random_branch_prob},
                  {"margin", pairing.margin},
                  {"loss_form", pairing.form == ContrastiveForm::literal ? "literal" : "squared_hinge"}};
  j["threshold"] = {{"method", threshold_method_name(threshold.method)},
                    {"value", threshold.fixed_value},
                    {"target_fpr", threshold.target_rate}};
  ojson sweep = ojson::array();
  for (const auto& s : sweep_snr_db) sweep.push_back(optional_json(s));
  j["sweep"] = {{"snr_db", sweep}};
  // Informational; ignored when parsed back.
  j["derived"] = {{"input_rows", rffp.input_rows},
                  {"input_cols", rffp.input_cols},
                  {"class_count", rffp.class_count},
                  {"ablation_fingerprint_units", sia_rff.fingerprint_units}};
  return j.dump(2) + "\n";
}

}  // namespace jrffp
