#include "jrffp/models.hpp"

#include <algorithm>
#include <cmath>

namespace jrffp {

const char* preset_name(RffpPreset preset) {
  return preset == RffpPreset::vgg11 ? "vgg11" : "desk_small";
}

RffpPreset parse_preset(const std::string& name) {
  if (name == "vgg11") return RffpPreset::vgg11;
  if (name == "desk_small") return RffpPreset::desk_small;
  throw ConfigError("unknown RFFP preset '" + name + "' (expected vgg11 or desk_small)");
}

std::vector<LayerSpec> RffpArchitecture::layers() const {
  std::vector<LayerSpec> l{LayerSpec::standardize()};
  std::size_t features = 0;
  if (preset == RffpPreset::desk_small) {
    const std::size_t widths[] = {8, 16, 32, 32};
    std::size_t in = 1;
    for (std::size_t k = 0; k < 4; ++k) {
      l.push_back(LayerSpec::conv(in, widths[k]));
      l.push_back(LayerSpec::relu());
      if (k < 3) l.push_back(LayerSpec::maxpool());
      in = widths[k];
    }
    l.push_back(LayerSpec::avgpool(1));
    features = 32;
  } else {
    // 0 marks a max pool.
    const std::size_t cfg[] = {64, 0, 128, 0, 256, 256, 0, 512, 512, 0, 512, 512, 0};
    std::size_t in = 1;
    for (std::size_t c : cfg) {
      if (c == 0) {
        l.push_back(LayerSpec::maxpool());
      } else {
        l.push_back(LayerSpec::conv(in, c));
        l.push_back(LayerSpec::relu());
        in = c;
      }
    }
    l.push_back(LayerSpec::avgpool(3));
    features = 512 * 3;
  }
  l.push_back(LayerSpec::dense(features, hidden_units));
  l.push_back(LayerSpec::relu());
  l.push_back(LayerSpec::dense(hidden_units, class_count));
  l.push_back(LayerSpec::softmax());
  return l;
}

std::size_t RffpArchitecture::fingerprint_layer_count() const {
  const auto l = layers();
  for (std::size_t k = 0; k < l.size(); ++k)
    if (l[k].kind == LayerKind::global_avgpool) return k + 1;
  return l.size();
}

Network RffpArchitecture::build() const {
  if (class_count == 0) throw ConfigError("rffp.class_count must be positive");
  return Network(layers(), {1, input_rows, input_cols});
}

std::vector<LayerSpec> SiaArchitecture::layers() const {
  std::vector<LayerSpec> l;
  std::size_t features = fingerprint_units;
  if (input == SiaInput::spectrogram) {
    l.push_back(LayerSpec::standardize());
    const std::size_t widths[] = {8, 16, 16, 32};
    std::size_t in = 1;
    for (std::size_t k = 0; k < 4; ++k) {
      l.push_back(LayerSpec::conv(in, widths[k]));
      l.push_back(LayerSpec::relu());
      if (k < 3) l.push_back(LayerSpec::maxpool());
      in = widths[k];
    }
    l.push_back(LayerSpec::avgpool(1));
    features = 32;
  }
  l.push_back(LayerSpec::dense(features, hidden_units));
  l.push_back(LayerSpec::relu());
  l.push_back(LayerSpec::dense(hidden_units, hidden_units));
  l.push_back(LayerSpec::relu());
  l.push_back(LayerSpec::dense(hidden_units, embedding_dim));
  return l;
}

std::vector<std::size_t> SiaArchitecture::input_shape() const {
  if (input == SiaInput::spectrogram) return {1, input_rows, input_cols};
  return {fingerprint_units};
}

Network SiaArchitecture::build() const {
  if (embedding_dim == 0) throw ConfigError("sia.embedding_dim must be positive");
  return Network(layers(), input_shape());
}

RffpModel RffpModel::create(const RffpArchitecture& arch, Rng& rng) {
  RffpModel m{arch, arch.build(), {}};
  m.params = m.net.init_params(rng);
  return m;
}

RffpModel RffpModel::with_params(const RffpArchitecture& arch, ParamSet params) {
  RffpModel m{arch, arch.build(), std::move(params)};
  try {
    m.net.check_params(m.params);
  } catch (const UsageError& e) {
    throw ConfigError(std::string("RFFP checkpoint: ") + e.what());
  }
  return m;
}

SiaModel SiaModel::create(const SiaArchitecture& arch, Rng& rng) {
  SiaModel m{arch, arch.build(), {}};
  m.params = m.net.init_params(rng);
  return m;
}

SiaModel SiaModel::with_params(const SiaArchitecture& arch, ParamSet params) {
  SiaModel m{arch, arch.build(), std::move(params)};
  try {
    m.net.check_params(m.params);
  } catch (const UsageError& e) {
    throw ConfigError(std::string("SIA checkpoint: ") + e.what());
  }
  return m;
}

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InputError("l2_distance: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(acc);
}

Tensor to_input(const Spectrogram& s) {
  return Tensor({1, s.freq_bins, s.time_frames}, s.values);
}

namespace {

void check_shape(const std::vector<std::size_t>& expected, const Spectrogram& s, const char* who) {
  if (expected.size() != 3 || expected[1] != s.freq_bins || expected[2] != s.time_frames)
    throw ConfigError(std::string(who) + ": spectrogram is " + std::to_string(s.freq_bins) + "x" +
                      std::to_string(s.time_frames) + ", network expects " + shape_string(expected));
}

}  // namespace

Prediction rffp_predict(const RffpModel& model, const Spectrogram& spectrogram) {
  check_shape(model.net.input_shape(), spectrogram, "rffp_predict");
  Prediction p;
  p.probabilities = model.net.forward(model.params, to_input(spectrogram)).values;
  p.predicted = argmax(p.probabilities);
  return p;
}

Tensor rffp_fingerprint(const RffpModel& model, const Spectrogram& spectrogram) {
  check_shape(model.net.input_shape(), spectrogram, "rffp_fingerprint");
  Tensor t = model.net.forward(model.params, to_input(spectrogram), nullptr,
                               model.arch.fingerprint_layer_count());
  // {C, 1, bands} -> {C, bands}
  t.shape = {t.shape[0], t.shape[2]};
  return t;
}

std::vector<double> sia_embed(const SiaModel& model, const Tensor& input) {
  return model.net.forward(model.params, input).values;
}

std::vector<double> sia_embed(const SiaModel& model, const Spectrogram& spectrogram) {
  if (model.arch.input != SiaInput::spectrogram)
    throw ConfigError("sia_embed: this SIA model consumes fingerprints, not spectrograms");
  check_shape(model.net.input_shape(), spectrogram, "sia_embed");
  return sia_embed(model, to_input(spectrogram));
}

EmbeddingPair sia_distance(const SiaModel& model, const Spectrogram& enrolled, const Spectrogram& observed) {
  EmbeddingPair p;
  p.enrolled = sia_embed(model, enrolled);
  p.observed = sia_embed(model, observed);
  p.distance = l2_distance(p.enrolled, p.observed);
  return p;
}

// ---------------------------------------------------------------------------
// Checkpoint metadata

namespace {

constexpr const char* kRffpMetaPrefix = "meta.rffp.";
constexpr const char* kSiaMetaPrefix = "meta.sia.";

std::size_t as_size(double v) { return static_cast<std::size_t>(std::llround(v)); }

}  // namespace

ParamSet with_metadata(const RffpModel& model) {
  ParamSet out;
  const auto& a = model.arch;
  out.add(std::string(kRffpMetaPrefix) + preset_name(a.preset),
          Tensor({4}, {static_cast<double>(a.class_count), static_cast<double>(a.input_rows),
                       static_cast<double>(a.input_cols), static_cast<double>(a.hidden_units)}));
  for (const auto& e : model.params) out.add(e.name, e.tensor);
  return out;
}

ParamSet with_metadata(const SiaModel& model) {
  ParamSet out;
  const auto& a = model.arch;
  const char* kind = a.input == SiaInput::spectrogram ? "spectrogram" : "fingerprint";
  out.add(std::string(kSiaMetaPrefix) + kind,
          Tensor({5}, {static_cast<double>(a.embedding_dim), static_cast<double>(a.input_rows),
                       static_cast<double>(a.input_cols), static_cast<double>(a.hidden_units),
                       static_cast<double>(a.fingerprint_units)}));
  for (const auto& e : model.params) out.add(e.name, e.tensor);
  return out;
}

RffpModel rffp_from_checkpoint(const ParamSet& tensors) {
  std::optional<RffpArchitecture> arch;
  ParamSet params;
  for (const auto& e : tensors) {
    if (e.name.rfind(kRffpMetaPrefix, 0) == 0) {
      if (e.tensor.size() != 4) throw FormatError("malformed RFFP metadata tensor", 0);
      RffpArchitecture a;
      a.preset = parse_preset(e.name.substr(std::string(kRffpMetaPrefix).size()));
      a.class_count = as_size(e.tensor.values[0]);
      a.input_rows = as_size(e.tensor.values[1]);
      a.input_cols = as_size(e.tensor.values[2]);
      a.hidden_units = as_size(e.tensor.values[3]);
      arch = a;
    } else {
      params.add(e.name, e.tensor);
    }
  }
  if (!arch) throw FormatError("checkpoint has no RFFP metadata tensor", 0);
  return RffpModel::with_params(*arch, std::move(params));
}

SiaModel sia_from_checkpoint(const ParamSet& tensors) {
  std::optional<SiaArchitecture> arch;
  ParamSet params;
  for (const auto& e : tensors) {
    if (e.name.rfind(kSiaMetaPrefix, 0) == 0) {
      if (e.tensor.size() != 5) throw FormatError("malformed SIA metadata tensor", 0);
      SiaArchitecture a;
      const std::string kind = e.name.substr(std::string(kSiaMetaPrefix).size());
      if (kind == "spectrogram") a.input = SiaInput::spectrogram;
      else if (kind == "fingerprint") a.input = SiaInput::fingerprint;
      else throw FormatError("unknown SIA input kind '" + kind + "'", 0);
      a.embedding_dim = as_size(e.tensor.values[0]);
      a.input_rows = as_size(e.tensor.values[1]);
      a.input_cols = as_size(e.tensor.values[2]);
      a.hidden_units = as_size(e.tensor.values[3]);
      a.fingerprint_units = as_size(e.tensor.values[4]);
      arch = a;
    } else {
      params.add(e.name, e.tensor);
    }
  }
  if (!arch) throw FormatError("checkpoint has no SIA metadata tensor", 0);
  return SiaModel::with_params(*arch, std::move(params));
}

void save_model(const RffpModel& model, const std::filesystem::path& path) {
  save_checkpoint(with_metadata(model), path);
}

void save_model(const SiaModel& model, const std::filesystem::path& path) {
  save_checkpoint(with_metadata(model), path);
}

RffpModel load_rffp(const std::filesystem::path& path) { return rffp_from_checkpoint(load_checkpoint(path)); }

SiaModel load_sia(const std::filesystem::path& path) { return sia_from_checkpoint(load_checkpoint(path)); }

}  // namespace jrffp
