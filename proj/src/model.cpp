#include <algorithm>
#include <cmath>

#include "maskcert/errors.hpp"
#include "maskcert/model.hpp"

namespace maskcert {

void ModelConfig::validate() const {
  if (image_width == 0 || image_height == 0 || channels == 0 || patch_size == 0 ||
      embed_dim == 0 || num_layers == 0 || num_heads == 0 || mlp_dim == 0 || num_classes == 0) {
    throw DimensionError("model config: every extent must be >= 1");
  }
  if (image_width % patch_size != 0 || image_height % patch_size != 0) {
    throw GeometryError("model config: image " + std::to_string(image_width) + "x" +
                        std::to_string(image_height) + " is not a multiple of patch size " +
                        std::to_string(patch_size));
  }
  if (embed_dim % num_heads != 0) {
    throw DimensionError("model config: embed_dim must be divisible by num_heads");
  }
  if (!(layer_norm_eps > 0.0f)) throw DimensionError("model config: layer_norm_eps must be > 0");
  if (norm_mean.size() != norm_std.size() || (!norm_mean.empty() && norm_mean.size() != channels)) {
    throw DimensionError("model config: normalization constants must have one entry per channel");
  }
  if (std::any_of(norm_std.begin(), norm_std.end(), [](float s) { return !(s > 0.0f); })) {
    throw DimensionError("model config: normalization std must be positive");
  }
}

std::map<std::string, Shape> expected_parameters(const ModelConfig& c) {
  const std::size_t d = c.embed_dim;
  std::map<std::string, Shape> out{
      {"patch_embed.weight", {c.patch_dim(), d}},
      {"patch_embed.bias", {d}},
      {"cls_token", {d}},
      {"pos_embed", {c.num_tokens(), d}},
      {"norm.weight", {d}},
      {"norm.bias", {d}},
      {"head.weight", {d, c.num_classes}},
      {"head.bias", {c.num_classes}},
  };
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    out[p + "norm1.weight"] = {d};
    out[p + "norm1.bias"] = {d};
    out[p + "attn.qkv.weight"] = {d, 3 * d};
    out[p + "attn.qkv.bias"] = {3 * d};
    out[p + "attn.proj.weight"] = {d, d};
    out[p + "attn.proj.bias"] = {d};
    out[p + "norm2.weight"] = {d};
    out[p + "norm2.bias"] = {d};
    out[p + "mlp.fc1.weight"] = {d, c.mlp_dim};
    out[p + "mlp.fc1.bias"] = {c.mlp_dim};
    out[p + "mlp.fc2.weight"] = {c.mlp_dim, d};
    out[p + "mlp.fc2.bias"] = {d};
  }
  return out;
}

void check_weights(const ModelConfig& config, const WeightStore& weights) {
  const auto expected = expected_parameters(config);
  for (const auto& [name, shape] : expected) {
    auto it = weights.find(name);
    if (it == weights.end()) throw DimensionError("weights: missing tensor '" + name + "'");
    if (it->second.shape() != shape) {
      throw DimensionError("weights: tensor '" + name + "' has shape " +
                           shape_to_string(it->second.shape()) + ", expected " +
                           shape_to_string(shape));
    }
  }
  for (const auto& [name, tensor] : weights) {
    if (!expected.contains(name)) throw DimensionError("weights: unexpected tensor '" + name + "'");
  }
}

Image Image::blank(const ModelConfig& config, float fill) {
  return Image{Tensor({config.image_height, config.image_width, config.channels}, fill)};
}

namespace {

void check_image(const Image& image, const ModelConfig& config) {
  const Shape want{config.image_height, config.image_width, config.channels};
  if (image.pixels.shape() != want) {
    throw DimensionError("image shape " + shape_to_string(image.pixels.shape()) +
                         " does not match model input " + shape_to_string(want));
  }
}

}  // namespace

Tensor patchify(const Image& image, const ModelConfig& config) {
  check_image(image, config);
  const std::size_t p = config.patch_size, ch = config.channels, gw = config.grid_width();
  Tensor out({config.num_patches(), config.patch_dim()});
  for (std::size_t idx = 0; idx < config.num_patches(); ++idx) {
    const std::size_t y0 = (idx / gw) * p, x0 = (idx % gw) * p;
    float* dst = out.raw() + idx * config.patch_dim();
    for (std::size_t dy = 0; dy < p; ++dy) {
      for (std::size_t dx = 0; dx < p; ++dx) {
        for (std::size_t c = 0; c < ch; ++c) *dst++ = image.at(y0 + dy, x0 + dx, c);
      }
    }
  }
  return out;
}

Image unpatchify(const Tensor& patches, const ModelConfig& config) {
  if (patches.shape() != Shape{config.num_patches(), config.patch_dim()}) {
    throw DimensionError("unpatchify: patch tensor does not match config");
  }
  Image image = Image::blank(config);
  const std::size_t p = config.patch_size, ch = config.channels, gw = config.grid_width();
  for (std::size_t idx = 0; idx < config.num_patches(); ++idx) {
    const std::size_t y0 = (idx / gw) * p, x0 = (idx % gw) * p;
    const float* src = patches.raw() + idx * config.patch_dim();
    for (std::size_t dy = 0; dy < p; ++dy) {
      for (std::size_t dx = 0; dx < p; ++dx) {
        for (std::size_t c = 0; c < ch; ++c) image.at(y0 + dy, x0 + dx, c) = *src++;
      }
    }
  }
  return image;
}

std::size_t argmax(const Logits& logits) {
  if (logits.empty()) throw DimensionError("argmax of empty logits");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

VitModel::VitModel(ModelConfig config, WeightStore weights)
    : config_(std::move(config)), weights_(std::move(weights)) {
  config_.validate();
  check_weights(config_, weights_);
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    layers_.push_back({&param(p + "norm1.weight"), &param(p + "norm1.bias"),
                       &param(p + "attn.qkv.weight"), &param(p + "attn.qkv.bias"),
                       &param(p + "attn.proj.weight"), &param(p + "attn.proj.bias"),
                       &param(p + "norm2.weight"), &param(p + "norm2.bias"),
                       &param(p + "mlp.fc1.weight"), &param(p + "mlp.fc1.bias"),
                       &param(p + "mlp.fc2.weight"), &param(p + "mlp.fc2.bias")});
  }
}

const Tensor& VitModel::param(const std::string& name) const { return weights_.at(name); }

Tensor VitModel::normalize(const Image& image) const {
  check_image(image, config_);
  if (config_.norm_mean.empty()) return image.pixels;
  Tensor out = image.pixels;
  const std::size_t ch = config_.channels;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::size_t c = i % ch;
    out[i] = (out[i] - config_.norm_mean[c]) / config_.norm_std[c];
  }
  return out;
}

Tensor VitModel::embed(const Tensor& patches) const {
  const std::size_t d = config_.embed_dim;
  const Tensor projected =
      kernels::linear(patches, param("patch_embed.weight"), param("patch_embed.bias").data());
  const Tensor& pos = param("pos_embed");
  const Tensor& cls = param("cls_token");
  Tensor tokens({config_.num_tokens(), d});
  for (std::size_t j = 0; j < d; ++j) tokens.at(0, j) = cls[j] + pos.at(0, j);
  for (std::size_t i = 0; i < projected.dim(0); ++i) {
    for (std::size_t j = 0; j < d; ++j) tokens.at(i + 1, j) = projected.at(i, j) + pos.at(i + 1, j);
  }
  return tokens;
}

Tensor VitModel::encode(Tensor x, const std::vector<bool>& allowed) const {
  const float eps = config_.layer_norm_eps;
  std::optional<float> leak;
  if (mode_ == MaskingMode::kLeakyPenalty) leak = leak_penalty_;
  for (const LayerParams& w : layers_) {
    const Tensor h1 = kernels::layer_norm(x, w.norm1_w->data(), w.norm1_b->data(), eps);
    const Tensor qkv = kernels::linear(h1, *w.qkv_w, w.qkv_b->data());
    const Tensor ctx = kernels::attention({qkv, config_.num_heads, allowed, leak});
    kernels::add_inplace(x, kernels::linear(ctx, *w.proj_w, w.proj_b->data()));

    const Tensor h2 = kernels::layer_norm(x, w.norm2_w->data(), w.norm2_b->data(), eps);
    const Tensor hidden =
        kernels::gelu(kernels::linear(h2, *w.fc1_w, w.fc1_b->data()), config_.activation);
    kernels::add_inplace(x, kernels::linear(hidden, *w.fc2_w, w.fc2_b->data()));
  }
  return x;
}

Logits VitModel::head(const Tensor& tokens) const {
  const std::size_t d = config_.embed_dim;
  Tensor cls({1, d}, std::vector<float>(tokens.raw(), tokens.raw() + d));
  const Tensor normed = kernels::layer_norm(cls, param("norm.weight").data(),
                                            param("norm.bias").data(), config_.layer_norm_eps);
  const Tensor logits = kernels::linear(normed, param("head.weight"), param("head.bias").data());
  return Logits(logits.data().begin(), logits.data().end());
}

Logits VitModel::forward(const Image& image, const AttentionBias* bias) const {
  ++forward_count_;
  if (bias && bias->num_tokens() != config_.num_tokens()) {
    throw DimensionError("attention bias covers " + std::to_string(bias->num_tokens()) +
                         " tokens, model has " + std::to_string(config_.num_tokens()));
  }
  const Image normalized{normalize(image)};
  Tensor tokens = embed(patchify(normalized, config_));
  std::vector<bool> allowed(config_.num_tokens(), true);
  if (bias && mode_ != MaskingMode::kIgnoreMask) allowed = bias->mask();
  return head(encode(std::move(tokens), allowed));
}

Logits VitModel::forward_token_dropping(const Image& image, const AttentionBias& bias) const {
  ++forward_count_;
  if (bias.num_tokens() != config_.num_tokens()) {
    throw DimensionError("attention bias does not match token count");
  }
  const Image normalized{normalize(image)};
  const Tensor tokens = embed(patchify(normalized, config_));
  const std::size_t d = config_.embed_dim;
  std::vector<float> kept;
  kept.reserve(bias.allowed_count() * d);
  for (std::size_t t = 0; t < tokens.dim(0); ++t) {
    if (!bias.allowed(t)) continue;
    const auto row = tokens.row(t);
    kept.insert(kept.end(), row.begin(), row.end());
  }
  Tensor reduced({bias.allowed_count(), d}, std::move(kept));
  return head(encode(std::move(reduced), std::vector<bool>(bias.allowed_count(), true)));
}

}  // namespace maskcert
