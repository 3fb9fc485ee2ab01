#pragma once

// PVWT weight container. Byte layout (all integers little-endian):
//
//   offset  size  field
//   0       4     magic "PVWT"
//   4       4     u32 format version (kPvwtVersion)
//   8       8     u64 config length in bytes (L)
//   16      8     u64 tensor count (T)
//   24      8     u64 payload length in bytes (B)
//   32      L     config, UTF-8 JSON (see config_to_json)
//   ...           T directory entries:
//                   u32 name length, name bytes,
//                   u32 rank, rank x u64 extents,
//                   u64 byte offset into the payload
//   ...     B     payload, float32 little-endian, row-major
//
// Nothing may follow the payload. docs/pvwt_format.md has the long form.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "maskcert/model.hpp"

namespace maskcert {

inline constexpr std::uint32_t kPvwtVersion = 1;

class ModelIoError : public std::runtime_error {
 public:
  enum class Kind {
    kIo,
    kBadMagic,
    kVersionMismatch,
    kTruncated,
    kCorruptDirectory,
    kBadConfig,
    kShapeMismatch,
  };

  ModelIoError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct LoadedModel {
  ModelConfig config;
  WeightStore weights;
};

std::string config_to_json(const ModelConfig& config);
// Throws ModelIoError(kBadConfig).
ModelConfig config_from_json(const std::string& text);

std::vector<std::uint8_t> serialize_weights(const ModelConfig& config, const WeightStore& weights);
LoadedModel deserialize_weights(std::span<const std::uint8_t> bytes);

void save_weights(const ModelConfig& config, const WeightStore& weights,
                  const std::filesystem::path& path);
LoadedModel load_weights(const std::filesystem::path& path);

// Deterministic initialization. Each tensor draws from its own mt19937_64
// stream seeded with (seed, fnv1a(name)), so streams do not shift when the
// parameter set changes. Linear weights ~ truncated normal with stddev
// 1/sqrt(fan_in); biases stddev 0.02; [class]/position embeddings stddev
// 0.5; norm gains 1 + truncated normal(0.1), norm biases stddev 0.02.
WeightStore random_init(const ModelConfig& config, std::uint64_t seed);

}  // namespace maskcert
