#pragma once

// Small hand-built models and images for tests, benchmarks and demos.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "maskcert/certifier.hpp"
#include "maskcert/model.hpp"

namespace maskcert {

// 24x24x3 images, 4 px patches (6x6 grid), d=32, 2 layers, 4 heads.
ModelConfig toy_config(std::size_t num_classes = 10);

// Two-class "brightness vote": every patch token carries (mean intensity -
// 0.5), the [class] token averages it over the allowed patches through one
// uniform attention head, and the head reports class 1 (bright) iff the
// average is positive. Masking a region removes exactly its cells from the
// vote, so predictions move only when a patch shifts the global mean.
// Needs embed_dim >= 4 and num_classes == 2.
WeightStore brightness_vote_weights(const ModelConfig& config);

// Images whose mean intensity sits `offset` below (label 0) or above
// (label 1) the brightness threshold, with uniform per-pixel noise.
std::vector<LabeledImage> brightness_images(const ModelConfig& config, std::size_t count,
                                            std::uint64_t seed, float offset = 0.006f,
                                            float noise = 0.05f);

// Uniform-noise images with uniformly random labels.
std::vector<LabeledImage> noise_images(const ModelConfig& config, std::size_t count,
                                       std::uint64_t seed);

}  // namespace maskcert
