#include "jrffp/nn_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace jrffp {

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor(std::vector<std::size_t> s, double fill)
    : shape(std::move(s)), values(element_count(shape), fill) {}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<double> v) : shape(std::move(s)), values(std::move(v)) {
  if (values.size() != element_count(shape))
    throw UsageError("tensor of shape " + shape_string(shape) + " given " + std::to_string(values.size()) +
                     " values");
}

std::size_t Tensor::element_count(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

bool Tensor::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

std::string shape_string(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv3x3: return "conv3x3";
    case LayerKind::maxpool2x2: return "maxpool2x2";
    case LayerKind::global_avgpool: return "global_avgpool";
    case LayerKind::dense: return "dense";
    case LayerKind::relu: return "relu";
    case LayerKind::softmax: return "softmax";
    case LayerKind::input_standardize: return "input_standardize";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// ParamSet

void ParamSet::add(std::string name, Tensor t) {
  if (contains(name)) throw UsageError("duplicate parameter name '" + name + "'");
  entries_.push_back({std::move(name), std::move(t)});
}

bool ParamSet::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const NamedTensor& e) { return e.name == name; });
}

const Tensor& ParamSet::at(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.tensor;
  throw UsageError("missing parameter '" + std::string(name) + "'");
}

Tensor& ParamSet::at(std::string_view name) {
  return const_cast<Tensor&>(static_cast<const ParamSet&>(*this).at(name));
}

void ParamSet::assign(std::string_view name, const Tensor& t) {
  Tensor& dst = at(name);
  if (dst.shape != t.shape)
    throw UsageError("parameter '" + std::string(name) + "' has shape " + shape_string(dst.shape) +
                     ", cannot assign " + shape_string(t.shape));
  dst.values = t.values;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.tensor.size();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& e : entries_) out.entries_.push_back({e.name, Tensor(e.tensor.shape, 0.0)});
  return out;
}

bool ParamSet::same_layout(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name != other.entries_[i].name || entries_[i].tensor.shape != other.entries_[i].tensor.shape)
      return false;
  return true;
}

void ParamSet::add_scaled(const ParamSet& other, double s) {
  if (!same_layout(other)) throw UsageError("parameter sets have different names or shapes");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    auto& dst = entries_[i].tensor.values;
    const auto& src = other.entries_[i].tensor.values;
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += s * src[k];
  }
}

void ParamSet::scale(double s) {
  for (auto& e : entries_)
    for (auto& v : e.tensor.values) v *= s;
}

void ParamSet::quantize_to_binary32() {
  for (auto& e : entries_)
    for (auto& v : e.tensor.values) v = static_cast<double>(static_cast<float>(v));
}

// ---------------------------------------------------------------------------
// Layer kernels

namespace {

using Shape = std::vector<std::size_t>;

void conv3x3_forward(const double* in, std::size_t cin, std::size_t h, std::size_t w, const double* weight,
                     const double* bias, std::size_t cout, double* out) {
  const std::size_t plane = h * w;
  for (std::size_t o = 0; o < cout; ++o) {
    double* op = out + o * plane;
    std::fill(op, op + plane, bias[o]);
    for (std::size_t i = 0; i < cin; ++i) {
      const double* ip = in + i * plane;
      const double* wp = weight + (o * cin + i) * 9;
      for (int ky = 0; ky < 3; ++ky) {
        const long dy = ky - 1;
        const std::size_t y0 = dy < 0 ? 1 : 0;
        const std::size_t y1 = dy > 0 ? h - 1 : h;
        for (int kx = 0; kx < 3; ++kx) {
          const long dx = kx - 1;
          const double wv = wp[ky * 3 + kx];
          const std::size_t x0 = dx < 0 ? 1 : 0;
          const std::size_t x1 = dx > 0 ? w - 1 : w;
          for (std::size_t y = y0; y < y1; ++y) {
            double* orow = op + y * w;
            const double* irow = ip + static_cast<long>((y + dy) * w) + dx;
            for (std::size_t x = x0; x < x1; ++x) orow[x] += wv * irow[x];
          }
        }
      }
    }
  }
}

// grad_in may be null when the input gradient is not needed.
void conv3x3_backward(const double* in, std::size_t cin, std::size_t h, std::size_t w, const double* weight,
                      std::size_t cout, const double* g, double* grad_w, double* grad_b, double* grad_in) {
  const std::size_t plane = h * w;
  for (std::size_t o = 0; o < cout; ++o) {
    const double* gp = g + o * plane;
    double bsum = 0.0;
    for (std::size_t k = 0; k < plane; ++k) bsum += gp[k];
    grad_b[o] += bsum;
    for (std::size_t i = 0; i < cin; ++i) {
      const double* ip = in + i * plane;
      const double* wp = weight + (o * cin + i) * 9;
      double* gwp = grad_w + (o * cin + i) * 9;
      double* gip = grad_in ? grad_in + i * plane : nullptr;
      for (int ky = 0; ky < 3; ++ky) {
        const long dy = ky - 1;
        const std::size_t y0 = dy < 0 ? 1 : 0;
        const std::size_t y1 = dy > 0 ? h - 1 : h;
        for (int kx = 0; kx < 3; ++kx) {
          const long dx = kx - 1;
          const double wv = wp[ky * 3 + kx];
          const std::size_t x0 = dx < 0 ? 1 : 0;
          const std::size_t x1 = dx > 0 ? w - 1 : w;
          double acc = 0.0;
          for (std::size_t y = y0; y < y1; ++y) {
            const double* grow = gp + y * w;
            const long shift = static_cast<long>((y + dy) * w) + dx;
            const double* irow = ip + shift;
            for (std::size_t x = x0; x < x1; ++x) acc += grow[x] * irow[x];
            if (gip) {
              double* girow = gip + shift;
              for (std::size_t x = x0; x < x1; ++x) girow[x] += wv * grow[x];
            }
          }
          gwp[ky * 3 + kx] += acc;
        }
      }
    }
  }
}

std::pair<std::size_t, std::size_t> band(std::size_t j, std::size_t cols, std::size_t w) {
  return {j * w / cols, (j + 1) * w / cols};
}

}  // namespace

// ---------------------------------------------------------------------------
// Network

Network::Network(std::vector<LayerSpec> layers, std::vector<std::size_t> input_shape)
    : layers_(std::move(layers)), input_shape_(std::move(input_shape)) {
  shapes_.push_back(input_shape_);
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const LayerSpec& l = layers_[k];
    const Shape& s = shapes_.back();
    auto fail = [&](const std::string& why) {
      throw ConfigError("layer " + std::to_string(k) + " (" + layer_kind_name(l.kind) + "): " + why +
                        "; input shape " + shape_string(s));
    };
    Shape next;
    switch (l.kind) {
      case LayerKind::conv3x3:
        if (s.size() != 3) fail("expects a rank-3 {C,H,W} input");
        if (s[0] != l.in_channels) fail("expects " + std::to_string(l.in_channels) + " input channels");
        if (l.out_channels == 0) fail("needs at least one output channel");
        next = {l.out_channels, s[1], s[2]};
        break;
      case LayerKind::maxpool2x2:
        if (s.size() != 3) fail("expects a rank-3 {C,H,W} input");
        if (s[1] < 2 || s[2] < 2) fail("input smaller than 2x2");
        next = {s[0], s[1] / 2, s[2] / 2};
        break;
      case LayerKind::global_avgpool:
        if (s.size() != 3) fail("expects a rank-3 {C,H,W} input");
        if (l.pool_cols == 0 || s[2] < l.pool_cols) fail("fewer columns than pooling bands");
        next = {s[0], 1, l.pool_cols};
        break;
      case LayerKind::dense:
        if (Tensor::element_count(s) != l.in_units)
          fail("expects " + std::to_string(l.in_units) + " input units");
        if (l.out_units == 0) fail("needs at least one output unit");
        next = {l.out_units};
        break;
      case LayerKind::relu:
      case LayerKind::softmax:
      case LayerKind::input_standardize:
        next = s;
        break;
    }
    shapes_.push_back(std::move(next));
  }
}

std::string Network::weight_name(std::size_t layer) { return std::to_string(layer) + ".weight"; }
std::string Network::bias_name(std::size_t layer) { return std::to_string(layer) + ".bias"; }

std::size_t Network::count(LayerKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(layers_.begin(), layers_.end(), [&](const LayerSpec& l) { return l.kind == kind; }));
}

ParamSet Network::init_params(Rng& rng) const {
  ParamSet p;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const LayerSpec& l = layers_[k];
    if (!l.has_params()) continue;
    Shape ws, bs;
    double fan_in, fan_out;
    if (l.kind == LayerKind::conv3x3) {
      ws = {l.out_channels, l.in_channels, 3, 3};
      bs = {l.out_channels};
      fan_in = static_cast<double>(l.in_channels * 9);
      fan_out = static_cast<double>(l.out_channels * 9);
    } else {
      ws = {l.out_units, l.in_units};
      bs = {l.out_units};
      fan_in = static_cast<double>(l.in_units);
      fan_out = static_cast<double>(l.out_units);
    }
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    Tensor wt(ws);
    for (auto& v : wt.values) v = rng.uniform(-limit, limit);
    p.add(weight_name(k), std::move(wt));
    p.add(bias_name(k), Tensor(bs, 0.0));
  }
  return p;
}

void Network::check_params(const ParamSet& params) const {
  std::size_t expected = 0;
  for (std::size_t k = 0; k < layers_.size(); ++k) {
    const LayerSpec& l = layers_[k];
    if (!l.has_params()) continue;
    const Shape ws = l.kind == LayerKind::conv3x3 ? Shape{l.out_channels, l.in_channels, 3, 3}
                                                  : Shape{l.out_units, l.in_units};
    const Shape bs = l.kind == LayerKind::conv3x3 ? Shape{l.out_channels} : Shape{l.out_units};
    if (!params.contains(weight_name(k)) || !params.contains(bias_name(k)))
      throw UsageError("parameter set lacks tensors for layer " + std::to_string(k));
    if (params.at(weight_name(k)).shape != ws || params.at(bias_name(k)).shape != bs)
      throw UsageError("parameter shapes for layer " + std::to_string(k) + " do not match the architecture");
    expected += 2;
  }
  if (params.size() != expected) throw UsageError("parameter set holds tensors the architecture does not use");
}

Tensor Network::forward(const ParamSet& params, const Tensor& input, ForwardCache* cache,
                        std::size_t layer_count) const {
  if (input.shape != input_shape_)
    throw ConfigError("network input must have shape " + shape_string(input_shape_) + ", got " +
                      shape_string(input.shape));
  check_params(params);
  layer_count = std::min(layer_count, layers_.size());

  if (cache) {
    cache->activations.clear();
    cache->activations.reserve(layer_count + 1);
    cache->argmax.assign(layer_count, {});
    cache->inv_std.assign(layer_count, 0.0);
    cache->activations.push_back(input);
    cache->layers_run = layer_count;
  }

  Tensor cur = input;
  for (std::size_t k = 0; k < layer_count; ++k) {
    const LayerSpec& l = layers_[k];
    const Shape& s = shapes_[k];
    Tensor next(shapes_[k + 1]);
    switch (l.kind) {
      case LayerKind::conv3x3: {
        conv3x3_forward(cur.values.data(), s[0], s[1], s[2], params.at(weight_name(k)).values.data(),
                        params.at(bias_name(k)).values.data(), l.out_channels, next.values.data());
        break;
      }
      case LayerKind::maxpool2x2: {
        const std::size_t c = s[0], h = s[1], w = s[2], oh = h / 2, ow = w / 2;
        std::vector<std::uint32_t> idx(next.size());
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
              std::size_t best = (ch * h + 2 * y) * w + 2 * x;
              for (std::size_t dy = 0; dy < 2; ++dy)
                for (std::size_t dx = 0; dx < 2; ++dx) {
                  const std::size_t j = (ch * h + 2 * y + dy) * w + 2 * x + dx;
                  if (cur.values[j] > cur.values[best]) best = j;
                }
              const std::size_t o = (ch * oh + y) * ow + x;
              next.values[o] = cur.values[best];
              idx[o] = static_cast<std::uint32_t>(best);
            }
        if (cache) cache->argmax[k] = std::move(idx);
        break;
      }
      case LayerKind::global_avgpool: {
        const std::size_t c = s[0], h = s[1], w = s[2], cols = l.pool_cols;
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t j = 0; j < cols; ++j) {
            const auto [x0, x1] = band(j, cols, w);
            double acc = 0.0;
            for (std::size_t y = 0; y < h; ++y)
              for (std::size_t x = x0; x < x1; ++x) acc += cur.values[(ch * h + y) * w + x];
            next.values[ch * cols + j] = acc / static_cast<double>(h * (x1 - x0));
          }
        break;
      }
      case LayerKind::dense: {
        const auto& wt = params.at(weight_name(k)).values;
        const auto& b = params.at(bias_name(k)).values;
        const std::size_t in = l.in_units;
        for (std::size_t o = 0; o < l.out_units; ++o) {
          const double* row = wt.data() + o * in;
          double acc = b[o];
          for (std::size_t i = 0; i < in; ++i) acc += row[i] * cur.values[i];
          next.values[o] = acc;
        }
        break;
      }
      case LayerKind::relu:
        for (std::size_t i = 0; i < cur.size(); ++i) next.values[i] = cur.values[i] > 0.0 ? cur.values[i] : 0.0;
        break;
      case LayerKind::softmax:
        next.values = softmax(cur.values);
        break;
      case LayerKind::input_standardize: {
        const double n = static_cast<double>(cur.size());
        double mean = 0.0;
        for (double v : cur.values) mean += v;
        mean /= n;
        double var = 0.0;
        for (double v : cur.values) var += (v - mean) * (v - mean);
        var /= n;
        const double inv = 1.0 / std::sqrt(var + 1e-10);
        for (std::size_t i = 0; i < cur.size(); ++i) next.values[i] = (cur.values[i] - mean) * inv;
        if (cache) cache->inv_std[k] = inv;
        break;
      }
    }
    if (cache) cache->activations.push_back(next);
    cur = std::move(next);
  }
  return cur;
}

Gradients Network::backward(const ParamSet& params, const ForwardCache& cache, const Tensor& upstream,
                            bool from_logits) const {
  Gradients g;
  g.params = params.zeros_like();
  g.input = backward_accumulate(params, cache, upstream, g.params, from_logits);
  return g;
}

Tensor Network::backward_accumulate(const ParamSet& params, const ForwardCache& cache, const Tensor& upstream,
                                    ParamSet& grads, bool from_logits) const {
  if (!cache.valid()) throw UsageError("backward called without a forward cache");
  const std::size_t n = cache.layers_run;
  if (upstream.shape != shapes_[n])
    throw UsageError("upstream gradient shape " + shape_string(upstream.shape) + " does not match output " +
                     shape_string(shapes_[n]));

  std::size_t top = n;
  if (from_logits) {
    if (n == 0 || layers_[n - 1].kind != LayerKind::softmax)
      throw UsageError("from_logits requires a trailing softmax layer");
    top = n - 1;
  }

  Tensor g = upstream;
  g.shape = shapes_[top];
  for (std::size_t kk = top; kk-- > 0;) {
    const LayerSpec& l = layers_[kk];
    const Shape& s = shapes_[kk];
    const Tensor& in = cache.activations[kk];
    const Tensor& out = cache.activations[kk + 1];
    Tensor gin(s, 0.0);
    switch (l.kind) {
      case LayerKind::conv3x3:
        conv3x3_backward(in.values.data(), s[0], s[1], s[2], params.at(weight_name(kk)).values.data(),
                         l.out_channels, g.values.data(), grads.at(weight_name(kk)).values.data(),
                         grads.at(bias_name(kk)).values.data(), gin.values.data());
        break;
      case LayerKind::maxpool2x2: {
        const auto& idx = cache.argmax[kk];
        for (std::size_t o = 0; o < idx.size(); ++o) gin.values[idx[o]] += g.values[o];
        break;
      }
      case LayerKind::global_avgpool: {
        const std::size_t c = s[0], h = s[1], w = s[2], cols = l.pool_cols;
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t j = 0; j < cols; ++j) {
            const auto [x0, x1] = band(j, cols, w);
            const double v = g.values[ch * cols + j] / static_cast<double>(h * (x1 - x0));
            for (std::size_t y = 0; y < h; ++y)
              for (std::size_t x = x0; x < x1; ++x) gin.values[(ch * h + y) * w + x] = v;
          }
        break;
      }
      case LayerKind::dense: {
        const auto& wt = params.at(weight_name(kk)).values;
        auto& gw = grads.at(weight_name(kk)).values;
        auto& gb = grads.at(bias_name(kk)).values;
        const std::size_t ni = l.in_units;
        for (std::size_t o = 0; o < l.out_units; ++o) {
          const double go = g.values[o];
          gb[o] += go;
          if (go == 0.0) continue;
          double* gwr = gw.data() + o * ni;
          const double* wr = wt.data() + o * ni;
          for (std::size_t i = 0; i < ni; ++i) {
            gwr[i] += go * in.values[i];
            gin.values[i] += wr[i] * go;
          }
        }
        break;
      }
      case LayerKind::relu:
        for (std::size_t i = 0; i < gin.size(); ++i) gin.values[i] = in.values[i] > 0.0 ? g.values[i] : 0.0;
        break;
      case LayerKind::softmax: {
        double dot = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) dot += g.values[i] * out.values[i];
        for (std::size_t i = 0; i < g.size(); ++i) gin.values[i] = out.values[i] * (g.values[i] - dot);
        break;
      }
      case LayerKind::input_standardize: {
        const double m = static_cast<double>(g.size());
        double mg = 0.0, mgy = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) {
          mg += g.values[i];
          mgy += g.values[i] * out.values[i];
        }
        mg /= m;
        mgy /= m;
        const double inv = cache.inv_std[kk];
        for (std::size_t i = 0; i < g.size(); ++i)
          gin.values[i] = inv * (g.values[i] - mg - out.values[i] * mgy);
        break;
      }
    }
    g = std::move(gin);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Losses

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (auto& v : out) v /= sum;
  return out;
}

LossResult cross_entropy(std::span<const double> predicted, std::span<const double> target) {
  if (predicted.size() != target.size() || predicted.empty())
    throw InputError("cross_entropy: predicted and target lengths differ");
  double sum = 0.0;
  for (double p : predicted) {
    if (!(p >= 0.0 && p <= 1.0)) throw InputError("cross_entropy: probabilities must lie in [0, 1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw InputError("cross_entropy: probabilities do not sum to 1");

  LossResult r;
  r.grad.resize(predicted.size());
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (target[i] != 0.0) r.loss -= target[i] * std::log(std::max(predicted[i], 1e-300));
    r.grad[i] = predicted[i] - target[i];
  }
  return r;
}

LossResult cross_entropy(std::span<const double> predicted, std::size_t target_class) {
  if (target_class >= predicted.size()) throw InputError("cross_entropy: target class out of range");
  std::vector<double> onehot(predicted.size(), 0.0);
  onehot[target_class] = 1.0;
  return cross_entropy(predicted, onehot);
}

ContrastiveResult contrastive_loss(std::span<const double> v1, std::span<const double> v2, int a, double margin,
                                   ContrastiveForm form) {
  if (v1.size() != v2.size()) throw InputError("contrastive_loss: embedding lengths differ");
  if (a != 0 && a != 1) throw InputError("contrastive_loss: label must be 0 or 1");
  if (!(margin > 0.0)) throw InputError("contrastive_loss: margin must be positive");

  ContrastiveResult r;
  const std::size_t n = v1.size();
  std::vector<double> diff(n);
  double d2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    diff[i] = v1[i] - v2[i];
    d2 += diff[i] * diff[i];
  }
  r.distance = std::sqrt(d2);
  r.grad_first.assign(n, 0.0);
  r.grad_second.assign(n, 0.0);

  // dLoss/d(D^2) times 2 * diff gives the gradient w.r.t. v1.
  double coef = 0.0;
  if (a == 0) {
    r.loss = d2;
    coef = 1.0;
  } else if (form == ContrastiveForm::literal) {
    if (margin - d2 > 0.0) {
      r.loss = margin - d2;
      coef = -1.0;
    }
  } else {
    const double gap = margin - r.distance;
    if (gap > 0.0) {
      r.loss = gap * gap;
      // d/dD (m - D)^2 = -2 (m - D); dD/d(D^2) = 1 / (2D).
      coef = r.distance > 0.0 ? -gap / r.distance : 0.0;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    r.grad_first[i] = 2.0 * coef * diff[i];
    r.grad_second[i] = -r.grad_first[i];
  }
  return r;
}

// ---------------------------------------------------------------------------
// Optimisation

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate))
    throw ConfigError("optimizer.learning_rate must be positive");
  if (epochs == 0) throw ConfigError("optimizer.epochs must be positive");
  if (batch_size == 0) throw ConfigError("optimizer.batch_size must be positive");
}

void sgd_step(ParamSet& params, const ParamSet& grads, double learning_rate) {
  if (!params.same_layout(grads)) throw UsageError("sgd_step: gradient names/shapes do not match parameters");
  params.add_scaled(grads, -learning_rate);
}

ParamSet sgd_step(const ParamSet& params, const ParamSet& grads, const OptimizerConfig& config) {
  config.validate();
  ParamSet out = params;
  sgd_step(out, grads, config.learning_rate);
  return out;
}

double grad_check(const Network& net, const ParamSet& params, const Tensor& input, const LossFn& loss_fn,
                  const GradCheckOptions& options) {
  ForwardCache cache;
  const Tensor out = net.forward(params, input, &cache);
  const auto [loss0, upstream] = loss_fn(out);
  (void)loss0;
  const Gradients analytic = net.backward(params, cache, upstream, options.from_logits);

  ParamSet probe = params;
  double worst = 0.0;
  for (auto& entry : probe) {
    const Tensor& ga = analytic.params.at(entry.name);
    for (std::size_t k = 0; k < entry.tensor.size(); ++k) {
      if (options.skip && options.skip(entry.name, k)) continue;
      const double orig = entry.tensor.values[k];
      entry.tensor.values[k] = orig + options.step;
      const double lp = loss_fn(net.forward(probe, input)).first;
      entry.tensor.values[k] = orig - options.step;
      const double lm = loss_fn(net.forward(probe, input)).first;
      entry.tensor.values[k] = orig;
      const double numeric = (lp - lm) / (2.0 * options.step);
      const double a = ga.values[k];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      worst = std::max(worst, std::abs(a - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace jrffp
