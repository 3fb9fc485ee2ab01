#include "maskcert/model_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <utility>

#include <json.hpp>

#include "maskcert/random.hpp"

namespace maskcert {
namespace {

using Kind = ModelIoError::Kind;
constexpr char kMagic[4] = {'P', 'V', 'W', 'T'};

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * i)));
  }
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n, const char* what) {
    if (n > bytes_.size() - pos_) {
      throw ModelIoError(Kind::kTruncated, std::string("PVWT file truncated while reading ") + what);
    }
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }

  template <typename T>
  T le(const char* what) {
    auto raw = take(sizeof(T), what);
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= std::uint64_t{raw[i]} << (8 * i);
    return static_cast<T>(v);
  }

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

const char* activation_name(Activation a) {
  return a == Activation::kGeluErf ? "gelu_erf" : "gelu_tanh";
}

struct DirectoryEntry {
  std::string name;
  Shape shape;
  std::uint64_t offset = 0;
  std::uint64_t bytes = 0;
};

}  // namespace

std::string config_to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["image_width"] = c.image_width;
  j["image_height"] = c.image_height;
  j["channels"] = c.channels;
  j["patch_size"] = c.patch_size;
  j["embed_dim"] = c.embed_dim;
  j["num_layers"] = c.num_layers;
  j["num_heads"] = c.num_heads;
  j["mlp_dim"] = c.mlp_dim;
  j["num_classes"] = c.num_classes;
  j["layer_norm_eps"] = c.layer_norm_eps;
  j["activation"] = activation_name(c.activation);
  j["norm_mean"] = c.norm_mean;
  j["norm_std"] = c.norm_std;
  return j.dump();
}

ModelConfig config_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    ModelConfig c;
    c.image_width = j.at("image_width").get<std::size_t>();
    c.image_height = j.at("image_height").get<std::size_t>();
    c.channels = j.at("channels").get<std::size_t>();
    c.patch_size = j.at("patch_size").get<std::size_t>();
    c.embed_dim = j.at("embed_dim").get<std::size_t>();
    c.num_layers = j.at("num_layers").get<std::size_t>();
    c.num_heads = j.at("num_heads").get<std::size_t>();
    c.mlp_dim = j.at("mlp_dim").get<std::size_t>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.layer_norm_eps = j.value("layer_norm_eps", kLayerNormEps);
    const std::string act = j.value("activation", std::string("gelu_erf"));
    if (act == "gelu_erf") {
      c.activation = Activation::kGeluErf;
    } else if (act == "gelu_tanh") {
      c.activation = Activation::kGeluTanh;
    } else {
      throw ModelIoError(Kind::kBadConfig, "unknown activation variant '" + act + "'");
    }
    c.norm_mean = j.value("norm_mean", std::vector<float>{});
    c.norm_std = j.value("norm_std", std::vector<float>{});
    c.validate();
    return c;
  } catch (const ModelIoError&) {
    throw;
  } catch (const std::exception& e) {
    throw ModelIoError(Kind::kBadConfig, std::string("invalid model config: ") + e.what());
  }
}

std::vector<std::uint8_t> serialize_weights(const ModelConfig& config, const WeightStore& weights) {
  config.validate();
  check_weights(config, weights);
  const std::string cfg = config_to_json(config);

  std::uint64_t payload = 0;
  for (const auto& [name, t] : weights) payload += t.size() * sizeof(float);

  std::vector<std::uint8_t> out;
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_le<std::uint32_t>(out, kPvwtVersion);
  put_le<std::uint64_t>(out, cfg.size());
  put_le<std::uint64_t>(out, weights.size());
  put_le<std::uint64_t>(out, payload);
  out.insert(out.end(), cfg.begin(), cfg.end());

  std::uint64_t offset = 0;
  for (const auto& [name, t] : weights) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) put_le<std::uint64_t>(out, e);
    put_le<std::uint64_t>(out, offset);
    offset += t.size() * sizeof(float);
  }
  for (const auto& [name, t] : weights) {
    for (float v : t.data()) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
  }
  return out;
}

LoadedModel deserialize_weights(std::span<const std::uint8_t> bytes) {
  Reader in(bytes);
  const auto magic = in.take(4, "magic");
  if (!std::equal(magic.begin(), magic.end(), std::begin(kMagic))) {
    throw ModelIoError(Kind::kBadMagic, "not a PVWT file (bad magic)");
  }
  const auto version = in.le<std::uint32_t>("version");
  if (version != kPvwtVersion) {
    throw ModelIoError(Kind::kVersionMismatch, "PVWT version " + std::to_string(version) +
                                                   " is not supported (expected " +
                                                   std::to_string(kPvwtVersion) + ")");
  }
  const auto config_len = in.le<std::uint64_t>("config length");
  const auto count = in.le<std::uint64_t>("tensor count");
  const auto payload_len = in.le<std::uint64_t>("payload length");

  const auto cfg_bytes = in.take(config_len, "config");
  LoadedModel model;
  model.config = config_from_json(std::string(cfg_bytes.begin(), cfg_bytes.end()));

  std::vector<DirectoryEntry> dir;
  // Every entry needs at least 16 bytes; reject absurd counts before reserving.
  if (count > in.remaining() / 16) {
    throw ModelIoError(Kind::kTruncated, "PVWT directory larger than the file");
  }
  dir.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    DirectoryEntry e;
    const auto name_len = in.le<std::uint32_t>("tensor name length");
    const auto name = in.take(name_len, "tensor name");
    e.name.assign(name.begin(), name.end());
    const auto rank = in.le<std::uint32_t>("tensor rank");
    if (rank > 8) throw ModelIoError(Kind::kCorruptDirectory, "tensor '" + e.name + "' has rank > 8");
    std::uint64_t elems = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const auto extent = in.le<std::uint64_t>("tensor extent");
      if (extent != 0 && elems > std::numeric_limits<std::uint64_t>::max() / 8 / extent) {
        throw ModelIoError(Kind::kCorruptDirectory, "tensor '" + e.name + "' is impossibly large");
      }
      elems *= extent;
      e.shape.push_back(extent);
    }
    e.offset = in.le<std::uint64_t>("tensor offset");
    e.bytes = elems * sizeof(float);
    if (e.offset > payload_len || e.bytes > payload_len - e.offset) {
      throw ModelIoError(Kind::kCorruptDirectory,
                         "tensor '" + e.name + "' extends past the end of the payload");
    }
    dir.push_back(std::move(e));
  }

  std::uint64_t covered = 0;
  for (const auto& e : dir) covered += e.bytes;
  if (covered != payload_len) {
    throw ModelIoError(Kind::kCorruptDirectory, "PVWT directory does not account for the payload");
  }

  std::vector<const DirectoryEntry*> by_offset;
  for (const auto& e : dir) by_offset.push_back(&e);
  std::sort(by_offset.begin(), by_offset.end(),
            [](auto* a, auto* b) { return a->offset < b->offset; });
  for (std::size_t i = 1; i < by_offset.size(); ++i) {
    if (by_offset[i - 1]->offset + by_offset[i - 1]->bytes > by_offset[i]->offset) {
      throw ModelIoError(Kind::kCorruptDirectory, "tensors '" + by_offset[i - 1]->name + "' and '" +
                                                      by_offset[i]->name + "' overlap");
    }
  }

  const auto payload = in.take(payload_len, "payload");
  if (in.remaining() != 0) {
    throw ModelIoError(Kind::kCorruptDirectory, "trailing bytes after PVWT payload");
  }

  for (const auto& e : dir) {
    std::vector<float> data(e.bytes / sizeof(float));
    const std::uint8_t* src = payload.data() + e.offset;
    for (std::size_t i = 0; i < data.size(); ++i) {
      std::uint32_t bits = 0;
      for (std::size_t b = 0; b < 4; ++b) bits |= std::uint32_t{src[4 * i + b]} << (8 * b);
      data[i] = std::bit_cast<float>(bits);
    }
    if (!model.weights.emplace(e.name, Tensor(e.shape, std::move(data))).second) {
      throw ModelIoError(Kind::kCorruptDirectory, "duplicate tensor '" + e.name + "'");
    }
  }

  try {
    check_weights(model.config, model.weights);
  } catch (const std::exception& e) {
    throw ModelIoError(Kind::kShapeMismatch, e.what());
  }
  return model;
}

void save_weights(const ModelConfig& config, const WeightStore& weights,
                  const std::filesystem::path& path) {
  const auto bytes = serialize_weights(config, weights);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ModelIoError(Kind::kIo, "cannot open '" + path.string() + "' for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw ModelIoError(Kind::kIo, "failed writing '" + path.string() + "'");
}

LoadedModel load_weights(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ModelIoError(Kind::kIo, "cannot open weights file '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return deserialize_weights(bytes);
}

WeightStore random_init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  WeightStore store;
  for (const auto& [name, shape] : expected_parameters(config)) {
    Rng rng{seed, fnv1a(name)};
    Tensor t(shape);
    const bool is_norm = name.find("norm") != std::string::npos;
    const bool is_bias = name.ends_with(".bias");
    if (is_norm && !is_bias) {
      for (float& v : t.data()) v = 1.0f + rng.truncated_normal(0.1f);
    } else if (is_bias) {
      for (float& v : t.data()) v = rng.truncated_normal(0.02f);
    } else if (name == "cls_token" || name == "pos_embed") {
      for (float& v : t.data()) v = rng.truncated_normal(0.5f);
    } else {
      const float scale = 1.0f / std::sqrt(static_cast<float>(shape[0]));
      for (float& v : t.data()) v = rng.truncated_normal(scale);
    }
    store.emplace(name, std::move(t));
  }
  return store;
}

}  // namespace maskcert
