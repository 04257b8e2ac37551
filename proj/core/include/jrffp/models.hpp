#pragma once

#include <filesystem>
#include <vector>

#include "jrffp/dsp_frontend.hpp"
#include "jrffp/nn_core.hpp"

namespace jrffp {

enum class RffpPreset { vgg11, desk_small };

const char* preset_name(RffpPreset preset);
RffpPreset parse_preset(const std::string& name);

/// Prediction network: convolutional backbone producing the RF fingerprint,
/// then two dense layers and softmax.
///
/// desk_small: conv 1->8->16->32->32 with 2x2 max pools after the first
/// three, global average pool (32-dim fingerprint), dense hidden -> I.
/// vgg11: the VGG11 conv stack (64, M, 128, M, 256, 256, M, 512, 512, M,
/// 512, 512, M) followed by an average pool into three column bands, giving a
/// 512x3 fingerprint; needs inputs of at least 32x96.
struct RffpArchitecture {
  RffpPreset preset = RffpPreset::desk_small;
  std::size_t input_rows = 64;
  std::size_t input_cols = 63;
  std::size_t class_count = 2;
  std::size_t hidden_units = 64;

  std::vector<LayerSpec> layers() const;
  /// Number of leading layers that make up the fingerprint extractor.
  std::size_t fingerprint_layer_count() const;
  Network build() const;
};

enum class SiaInput { spectrogram, fingerprint };

/// Siamese encoder. Spectrogram input: four conv3x3 layers (8, 16, 16, 32)
/// with pooling, then three dense layers ending in the embedding. Fingerprint
/// input (the SIA-RFF ablation): the three dense layers only.
struct SiaArchitecture {
  SiaInput input = SiaInput::spectrogram;
  std::size_t input_rows = 64;
  std::size_t input_cols = 63;
  std::size_t fingerprint_units = 32;  // fingerprint input only
  std::size_t hidden_units = 64;
  std::size_t embedding_dim = 32;

  std::vector<LayerSpec> layers() const;
  std::vector<std::size_t> input_shape() const;
  Network build() const;
};

struct RffpModel {
  RffpArchitecture arch;
  Network net;
  ParamSet params;

  static RffpModel create(const RffpArchitecture& arch, Rng& rng);
  static RffpModel with_params(const RffpArchitecture& arch, ParamSet params);
};

struct SiaModel {
  SiaArchitecture arch;
  Network net;
  ParamSet params;

  static SiaModel create(const SiaArchitecture& arch, Rng& rng);
  static SiaModel with_params(const SiaArchitecture& arch, ParamSet params);
};

struct Prediction {
  std::vector<double> probabilities;
  std::size_t predicted = 0;
};

struct EmbeddingPair {
  std::vector<double> enrolled;
  std::vector<double> observed;
  double distance = 0.0;
};

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> values);

double l2_distance(std::span<const double> a, std::span<const double> b);

/// {1, F, T} network input for a spectrogram.
Tensor to_input(const Spectrogram& s);

Prediction rffp_predict(const RffpModel& model, const Spectrogram& spectrogram);
/// Backbone output, shape {channels, bands} ({512, 3} for vgg11).
Tensor rffp_fingerprint(const RffpModel& model, const Spectrogram& spectrogram);

std::vector<double> sia_embed(const SiaModel& model, const Tensor& input);
std::vector<double> sia_embed(const SiaModel& model, const Spectrogram& spectrogram);
EmbeddingPair sia_distance(const SiaModel& model, const Spectrogram& enrolled, const Spectrogram& observed);

// Checkpoints carry an extra "meta.*" tensor recording the architecture.
void save_model(const RffpModel& model, const std::filesystem::path& path);
void save_model(const SiaModel& model, const std::filesystem::path& path);
RffpModel load_rffp(const std::filesystem::path& path);
SiaModel load_sia(const std::filesystem::path& path);

ParamSet with_metadata(const RffpModel& model);
ParamSet with_metadata(const SiaModel& model);
RffpModel rffp_from_checkpoint(const ParamSet& tensors);
SiaModel sia_from_checkpoint(const ParamSet& tensors);

}  // namespace jrffp
