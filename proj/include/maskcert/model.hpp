#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "maskcert/kernels.hpp"
#include "maskcert/tensor.hpp"

namespace maskcert {

// Transformer hyper-geometry plus the input conventions a checkpoint was
// trained with.
struct ModelConfig {
  std::size_t image_width = 0;
  std::size_t image_height = 0;
  std::size_t channels = 3;
  std::size_t patch_size = 0;
  std::size_t embed_dim = 0;
  std::size_t num_layers = 0;
  std::size_t num_heads = 0;
  std::size_t mlp_dim = 0;
  std::size_t num_classes = 0;
  float layer_norm_eps = kLayerNormEps;
  Activation activation = Activation::kGeluErf;
  // Per-channel input normalization, (x - mean) / std. Empty means identity.
  std::vector<float> norm_mean;
  std::vector<float> norm_std;

  std::size_t grid_width() const { return image_width / patch_size; }
  std::size_t grid_height() const { return image_height / patch_size; }
  std::size_t num_patches() const { return grid_width() * grid_height(); }
  std::size_t num_tokens() const { return num_patches() + 1; }
  std::size_t patch_dim() const { return patch_size * patch_size * channels; }
  std::size_t head_dim() const { return embed_dim / num_heads; }

  // Throws GeometryError / DimensionError on an inconsistent config.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Named parameter tensors. Linear weights are stored [in, out].
using WeightStore = std::map<std::string, Tensor>;

// Every parameter name implied by `config`, with its expected shape.
std::map<std::string, Shape> expected_parameters(const ModelConfig& config);

// Throws DimensionError naming the first missing, extra, or misshapen tensor.
void check_weights(const ModelConfig& config, const WeightStore& weights);

// Pixels in [0, 1], shape [H, W, C].
struct Image {
  Tensor pixels;

  std::size_t height() const { return pixels.dim(0); }
  std::size_t width() const { return pixels.dim(1); }
  std::size_t channels() const { return pixels.dim(2); }
  float& at(std::size_t y, std::size_t x, std::size_t c) {
    return pixels[(y * width() + x) * channels() + c];
  }
  float at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width() + x) * channels() + c];
  }

  static Image blank(const ModelConfig& config, float fill = 0.0f);
  friend bool operator==(const Image&, const Image&) = default;
};

using Logits = std::vector<float>;

// Patch vectors [n, P*P*C]. Patches are ordered row-major over the grid, and
// each vector is row-major over (pixel row, pixel column, channel).
Tensor patchify(const Image& image, const ModelConfig& config);
Image unpatchify(const Tensor& patches, const ModelConfig& config);

// Argmax, ties to the lowest index.
std::size_t argmax(const Logits& logits);

// How masked forward passes treat disallowed tokens. Everything except
// kKeyExclusion is fault injection for validating the soundness harness.
enum class MaskingMode {
  kKeyExclusion,  // disallowed tokens removed from every softmax
  kIgnoreMask,    // bias dropped entirely
  kLeakyPenalty,  // disallowed keys kept with a finite additive penalty
};

// Vision Transformer classifier with per-inference key masking. Immutable
// after construction; forward() is safe to call concurrently.
class VitModel {
 public:
  VitModel(ModelConfig config, WeightStore weights);

  const ModelConfig& config() const { return config_; }
  const WeightStore& weights() const { return weights_; }

  // Token sequence [1 + n, d]; token 0 is the [class] embedding.
  Tensor embed(const Tensor& patches) const;

  // Pre-norm encoder with disallowed tokens excluded as attention keys in
  // every layer. `bias == nullptr` means every token is allowed.
  Logits forward(const Image& image, const AttentionBias* bias = nullptr) const;
  Logits forward(const Image& image, const AttentionBias& bias) const {
    return forward(image, &bias);
  }

  // Same function computed by discarding disallowed tokens after the
  // embedding (position embeddings retained).
  Logits forward_token_dropping(const Image& image, const AttentionBias& bias) const;

  std::size_t predict(const Image& image, const AttentionBias* bias = nullptr) const {
    return argmax(forward(image, bias));
  }

  // Fault injection for harness sensitivity tests.
  void set_masking_mode(MaskingMode mode, float leak_penalty = -2.0f) {
    mode_ = mode;
    leak_penalty_ = leak_penalty;
  }
  MaskingMode masking_mode() const { return mode_; }

  std::uint64_t forward_count() const { return forward_count_.load(); }
  void reset_forward_count() const { forward_count_.store(0); }

 private:
  const Tensor& param(const std::string& name) const;
  Tensor normalize(const Image& image) const;
  Tensor encode(Tensor tokens, const std::vector<bool>& allowed) const;
  Logits head(const Tensor& tokens) const;

  struct LayerParams {
    const Tensor *norm1_w, *norm1_b, *qkv_w, *qkv_b, *proj_w, *proj_b;
    const Tensor *norm2_w, *norm2_b, *fc1_w, *fc1_b, *fc2_w, *fc2_b;
  };

  ModelConfig config_;
  WeightStore weights_;
  std::vector<LayerParams> layers_;  // points into weights_
  MaskingMode mode_ = MaskingMode::kKeyExclusion;
  float leak_penalty_ = -2.0f;
  mutable std::atomic<std::uint64_t> forward_count_{0};
};

}  // namespace maskcert
