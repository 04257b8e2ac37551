#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jrffp/common.hpp"

namespace jrffp {

// ---------------------------------------------------------------------------
// Tensor

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> values;  // row-major

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0);
  Tensor(std::vector<std::size_t> s, std::vector<double> v);

  std::size_t size() const { return values.size(); }
  static std::size_t element_count(const std::vector<std::size_t>& shape);
  bool all_finite() const;
  friend bool operator==(const Tensor&, const Tensor&) = default;
};

std::string shape_string(const std::vector<std::size_t>& shape);

// ---------------------------------------------------------------------------
// Layers

enum class LayerKind { conv3x3, maxpool2x2, global_avgpool, dense, relu, softmax, input_standardize };

const char* layer_kind_name(LayerKind kind);

/// conv3x3: stride 1, zero padding 1. maxpool2x2: stride 2, odd trailing
/// rows/columns dropped. global_avgpool: averages over all rows and over
/// `pool_cols` equal column bands (1 = global). dense: flattens its input.
struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t in_units = 0;
  std::size_t out_units = 0;
  std::size_t pool_cols = 1;

  static LayerSpec conv(std::size_t in, std::size_t out) { return {LayerKind::conv3x3, in, out, 0, 0, 1}; }
  static LayerSpec maxpool() { return {LayerKind::maxpool2x2}; }
  static LayerSpec avgpool(std::size_t cols = 1) { return {LayerKind::global_avgpool, 0, 0, 0, 0, cols}; }
  static LayerSpec dense(std::size_t in, std::size_t out) { return {LayerKind::dense, 0, 0, in, out, 1}; }
  static LayerSpec relu() { return {LayerKind::relu}; }
  static LayerSpec softmax() { return {LayerKind::softmax}; }
  static LayerSpec standardize() { return {LayerKind::input_standardize}; }

  bool has_params() const { return kind == LayerKind::conv3x3 || kind == LayerKind::dense; }
};

// ---------------------------------------------------------------------------
// Parameters

struct NamedTensor {
  std::string name;
  Tensor tensor;
  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Ordered collection of uniquely-named tensors. Shapes are fixed once added.
class ParamSet {
 public:
  void add(std::string name, Tensor t);
  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);
  /// Overwrites values; the shape must match the stored tensor.
  void assign(std::string_view name, const Tensor& t);

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Same names and shapes, all values zero.
  ParamSet zeros_like() const;
  /// Same names and shapes in the same order.
  bool same_layout(const ParamSet& other) const;
  /// this += scale * other; layouts must match.
  void add_scaled(const ParamSet& other, double scale);
  void scale(double s);
  /// Rounds every value to the nearest binary32 (checkpoint precision).
  void quantize_to_binary32();

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<NamedTensor> entries_;
};

// ---------------------------------------------------------------------------
// Network

struct ForwardCache {
  std::vector<Tensor> activations;                // [0] = input, [k+1] = output of layer k
  std::vector<std::vector<std::uint32_t>> argmax; // per maxpool layer
  std::vector<double> inv_std;                    // per standardize layer
  std::size_t layers_run = 0;
  bool valid() const { return !activations.empty(); }
};

struct Gradients {
  ParamSet params;
  Tensor input;
};

class Network {
 public:
  Network() = default;
  /// Validates the layer chain against the input shape {C, H, W} and throws
  /// ConfigError naming the first offending layer.
  Network(std::vector<LayerSpec> layers, std::vector<std::size_t> input_shape);

  const std::vector<LayerSpec>& layers() const { return layers_; }
  const std::vector<std::size_t>& input_shape() const { return input_shape_; }
  const std::vector<std::size_t>& output_shape(std::size_t layer) const { return shapes_[layer + 1]; }
  const std::vector<std::size_t>& output_shape() const { return shapes_.back(); }

  static std::string weight_name(std::size_t layer);
  static std::string bias_name(std::size_t layer);

  /// Glorot-uniform weights, zero biases.
  ParamSet init_params(Rng& rng) const;

  /// Runs layers [0, layer_count) (all layers by default). When `cache` is
  /// non-null it receives everything backward needs.
  Tensor forward(const ParamSet& params, const Tensor& input, ForwardCache* cache = nullptr,
                 std::size_t layer_count = SIZE_MAX) const;

  /// Backpropagates `upstream` (gradient w.r.t. the cached output). With
  /// `from_logits`, a trailing softmax layer is skipped and `upstream` is
  /// taken to be the gradient w.r.t. its input (fused softmax + CE).
  Gradients backward(const ParamSet& params, const ForwardCache& cache, const Tensor& upstream,
                     bool from_logits = false) const;

  /// backward, accumulating parameter gradients into `grads` instead of
  /// returning a fresh set. Returns the input gradient.
  Tensor backward_accumulate(const ParamSet& params, const ForwardCache& cache, const Tensor& upstream,
                             ParamSet& grads, bool from_logits = false) const;

  std::size_t count(LayerKind kind) const;

  /// Throws UsageError unless `params` holds exactly this network's tensors.
  void check_params(const ParamSet& params) const;

 private:

  std::vector<LayerSpec> layers_;
  std::vector<std::size_t> input_shape_;
  std::vector<std::vector<std::size_t>> shapes_;
};

// ---------------------------------------------------------------------------
// Losses and optimisation

struct LossResult {
  double loss = 0.0;
  std::vector<double> grad;  // CE: w.r.t. logits (fused); contrastive: unused
};

/// -sum_i target_i log(predicted_i). Returned gradient is predicted - target,
/// the gradient at the softmax input.
LossResult cross_entropy(std::span<const double> predicted, std::span<const double> target);
LossResult cross_entropy(std::span<const double> predicted, std::size_t target_class);

std::vector<double> softmax(std::span<const double> logits);

enum class ContrastiveForm {
  literal,        // (1-a) D^2 + a max(0, m - D^2)
  squared_hinge,  // (1-a) D^2 + a max(0, m - D)^2
};

struct ContrastiveResult {
  double loss = 0.0;
  double distance = 0.0;
  std::vector<double> grad_first;
  std::vector<double> grad_second;
};

/// a = 0 for a similar pair, 1 for a dissimilar pair; margin > 0.
ContrastiveResult contrastive_loss(std::span<const double> v1, std::span<const double> v2, int a,
                                   double margin, ContrastiveForm form = ContrastiveForm::literal);

struct OptimizerConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 40;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// theta <- theta - lr * g for every tensor.
void sgd_step(ParamSet& params, const ParamSet& grads, double learning_rate);
ParamSet sgd_step(const ParamSet& params, const ParamSet& grads, const OptimizerConfig& config);

/// Scalar loss of the network output plus its gradient w.r.t. that output.
using LossFn = std::function<std::pair<double, Tensor>(const Tensor& output)>;

struct GradCheckOptions {
  double step = 1e-4;
  bool from_logits = false;  // loss_fn returns the gradient at the softmax input
  /// Parameters whose numeric derivative should be skipped (e.g. near a
  /// loss kink); receives (name, flat index).
  std::function<bool(const std::string&, std::size_t)> skip;
};

/// Max over all parameters of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8),
/// numeric by central differences.
double grad_check(const Network& net, const ParamSet& params, const Tensor& input, const LossFn& loss_fn,
                  const GradCheckOptions& options = {});

// ---------------------------------------------------------------------------
// Checkpoints
//
// "JRFP" | version u16 | tensor_count u32 | per tensor: name_len u16, name,
// rank u8, dims u32 x rank, binary32 values (all little endian).

std::vector<std::uint8_t> encode_checkpoint(const ParamSet& tensors);
ParamSet decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const ParamSet& tensors, const std::filesystem::path& path);
ParamSet load_checkpoint(const std::filesystem::path& path);

}  // namespace jrffp
