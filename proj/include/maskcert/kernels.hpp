#pragma once

// Numeric kernels used by the transformer forward pass.
//
// Two implementations share one contract:
//   maskcert::kernels    OpenMP-parallel over independent output rows.
//   maskcert::reference  plain serial loops, kept as the test oracle and
//                        benchmark baseline.
// Every output element is reduced in the same fixed order in both (left to
// right over the contraction axis, ascending key index in attention), so the
// two agree bit-for-bit for any thread count.
//
// No -ffast-math and no FMA contraction (the build pins -ffp-contract=off).

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "maskcert/tensor.hpp"

namespace maskcert {

inline constexpr float kLayerNormEps = 1e-6f;

enum class Activation { kGeluErf, kGeluTanh };

// Multi-head self-attention over a fused [T, 3d] projection laid out as
// [q | k | v], each split into `heads` contiguous slices of d/heads.
struct AttentionInput {
  const Tensor& qkv;
  std::size_t heads;
  const std::vector<bool>& allowed;  // key filter, length T
  // Test-only fault injection: when set, disallowed keys stay in the softmax
  // with this additive logit penalty instead of being excluded.
  std::optional<float> leak_penalty = std::nullopt;
};

namespace kernels {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor linear(const Tensor& x, const Tensor& weight, std::span<const float> bias);
Tensor masked_softmax(const Tensor& logits, const std::vector<bool>& allowed);
Tensor layer_norm(const Tensor& x, std::span<const float> gain, std::span<const float> bias,
                  float eps = kLayerNormEps);
Tensor gelu(const Tensor& x, Activation variant = Activation::kGeluErf);
Tensor attention(const AttentionInput& in);
void add_inplace(Tensor& acc, const Tensor& x);

}  // namespace kernels

namespace reference {

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor linear(const Tensor& x, const Tensor& weight, std::span<const float> bias);
Tensor masked_softmax(const Tensor& logits, const std::vector<bool>& allowed);
Tensor layer_norm(const Tensor& x, std::span<const float> gain, std::span<const float> bias,
                  float eps = kLayerNormEps);
Tensor gelu(const Tensor& x, Activation variant = Activation::kGeluErf);
Tensor attention(const AttentionInput& in);
void add_inplace(Tensor& acc, const Tensor& x);

}  // namespace reference

// Scalar activations shared by both implementations.
float gelu_erf(float x);
float gelu_tanh(float x);

}  // namespace maskcert
