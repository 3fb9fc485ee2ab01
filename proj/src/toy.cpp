#include "maskcert/toy.hpp"

#include "maskcert/errors.hpp"
#include "maskcert/random.hpp"

namespace maskcert {

ModelConfig toy_config(std::size_t num_classes) {
  ModelConfig c;
  c.image_width = 24;
  c.image_height = 24;
  c.channels = 3;
  c.patch_size = 4;
  c.embed_dim = 32;
  c.num_layers = 2;
  c.num_heads = 4;
  c.mlp_dim = 64;
  c.num_classes = num_classes;
  return c;
}

WeightStore brightness_vote_weights(const ModelConfig& config) {
  config.validate();
  if (config.embed_dim < 4 || config.num_classes != 2) {
    throw DimensionError("brightness vote model needs embed_dim >= 4 and 2 classes");
  }
  const std::size_t d = config.embed_dim;
  WeightStore w;
  for (const auto& [name, shape] : expected_parameters(config)) w.emplace(name, Tensor(shape));

  // Patch token: [m - 0.5, 0.5 - m, 0, ...] where m is the mean intensity.
  Tensor& proj = w.at("patch_embed.weight");
  const float inv = 1.0f / static_cast<float>(config.patch_dim());
  for (std::size_t i = 0; i < config.patch_dim(); ++i) {
    proj.at(i, 0) = inv;
    proj.at(i, 1) = -inv;
  }
  w.at("patch_embed.bias")[0] = -0.5f;
  w.at("patch_embed.bias")[1] = 0.5f;
  // Patch tokens get a constant [.., 1, -1] pair so layer norm keeps the
  // intensity offset roughly proportional instead of saturating it.
  Tensor& pos = w.at("pos_embed");
  for (std::size_t t = 0; t < config.num_tokens(); ++t) {
    pos.at(t, 2) = 1.0f;
    pos.at(t, 3) = -1.0f;
  }

  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const std::string p = "blocks." + std::to_string(l) + ".";
    for (float& g : w.at(p + "norm1.weight").data()) g = 1.0f;
    for (float& g : w.at(p + "norm2.weight").data()) g = 1.0f;
  }
  // Layer 0, head 0: zero queries/keys give uniform attention over allowed
  // tokens; values and output projection copy dims 0 and 1.
  Tensor& qkv = w.at("blocks.0.attn.qkv.weight");
  Tensor& out = w.at("blocks.0.attn.proj.weight");
  for (std::size_t j = 0; j < 2; ++j) {
    qkv.at(j, 2 * d + j) = 1.0f;
    out.at(j, j) = 1.0f;
  }

  for (float& g : w.at("norm.weight").data()) g = 1.0f;
  Tensor& head = w.at("head.weight");
  head.at(0, 1) = 1.0f;
  head.at(1, 1) = -1.0f;
  head.at(0, 0) = -1.0f;
  head.at(1, 0) = 1.0f;
  return w;
}

std::vector<LabeledImage> brightness_images(const ModelConfig& config, std::size_t count,
                                            std::uint64_t seed, float offset, float noise) {
  std::vector<LabeledImage> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng{seed, i};
    const std::size_t label = rng.below(2);
    const float shift = offset * (1.0f + rng.uniform());
    const float mean = label == 1 ? 0.5f + shift : 0.5f - shift;
    Image img = Image::blank(config);
    for (float& v : img.pixels.data()) v = mean + noise * (2.0f * rng.uniform() - 1.0f);
    out.push_back({"bright-" + std::to_string(i), std::move(img), label});
  }
  return out;
}

std::vector<LabeledImage> noise_images(const ModelConfig& config, std::size_t count,
                                       std::uint64_t seed) {
  std::vector<LabeledImage> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng{seed, i, 0x6e6f6973};
    Image img = Image::blank(config);
    for (float& v : img.pixels.data()) v = rng.uniform();
    out.push_back({"noise-" + std::to_string(i), std::move(img), rng.below(config.num_classes)});
  }
  return out;
}

}  // namespace maskcert
