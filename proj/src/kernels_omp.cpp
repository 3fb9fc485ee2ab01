// OpenMP kernels. Parallelism is over independent output rows only; the
// per-element reduction order matches reference:: exactly.

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "maskcert/errors.hpp"
#include "maskcert/kernels.hpp"

namespace maskcert::kernels {
namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::int64_t kParallelWork = 1 << 15;

void softmax_row(std::span<const float> logits, const std::vector<bool>& allowed,
                 std::span<float> out) {
  bool any = false;
  float peak = 0.0f;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (!allowed[j]) continue;
    if (!any || logits[j] > peak) peak = logits[j];
    any = true;
  }
  if (!any) throw InvalidMaskError("masked_softmax: every column is disallowed");
  float total = 0.0f;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (!allowed[j]) {
      out[j] = 0.0f;
      continue;
    }
    out[j] = std::exp(logits[j] - peak);
    total += out[j];
  }
  for (std::size_t j = 0; j < logits.size(); ++j) {
    if (allowed[j]) out[j] /= total;
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_to_string(a.shape()) + " by " +
                         shape_to_string(b.shape()));
  }
  const auto m = static_cast<std::int64_t>(a.dim(0));
  const std::size_t k = a.dim(1), n = b.dim(1);
  Tensor c({a.dim(0), n});
  const float* ap = a.raw();
  const float* bp = b.raw();
  float* cp = c.raw();
  const std::int64_t work = m * static_cast<std::int64_t>(k * n);
#pragma omp parallel for schedule(static) if (work >= kParallelWork)
  for (std::int64_t i = 0; i < m; ++i) {
    float* crow = cp + i * n;
    const float* arow = ap + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const float aip = arow[p];
      const float* brow = bp + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
  return c;
}

Tensor linear(const Tensor& x, const Tensor& weight, std::span<const float> bias) {
  Tensor y = matmul(x, weight);
  const std::size_t cols = y.dim(1);
  if (bias.size() != cols) throw DimensionError("linear: bias length mismatch");
  for (std::size_t i = 0; i < y.dim(0); ++i) {
    float* row = y.raw() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) row[j] += bias[j];
  }
  return y;
}

Tensor masked_softmax(const Tensor& logits, const std::vector<bool>& allowed) {
  if (logits.rank() != 2 || allowed.size() != logits.dim(1)) {
    throw DimensionError("masked_softmax: mask length does not match logits");
  }
  Tensor out(logits.shape());
  for (std::size_t i = 0; i < logits.dim(0); ++i) softmax_row(logits.row(i), allowed, out.row(i));
  return out;
}

Tensor layer_norm(const Tensor& x, std::span<const float> gain, std::span<const float> bias,
                  float eps) {
  const auto rows = static_cast<std::int64_t>(x.dim(0));
  const std::size_t width = x.dim(1);
  if (gain.size() != width || bias.size() != width) {
    throw DimensionError("layer_norm: affine parameters do not match width");
  }
  Tensor out(x.shape());
#pragma omp parallel for schedule(static) if (rows * static_cast<std::int64_t>(width) >= kParallelWork)
  for (std::int64_t i = 0; i < rows; ++i) {
    const float* in = x.raw() + i * width;
    float* o = out.raw() + i * width;
    float sum = 0.0f;
    for (std::size_t j = 0; j < width; ++j) sum += in[j];
    const float mean = sum / static_cast<float>(width);
    float sq = 0.0f;
    for (std::size_t j = 0; j < width; ++j) {
      const float c = in[j] - mean;
      sq += c * c;
    }
    const float inv = 1.0f / std::sqrt(sq / static_cast<float>(width) + eps);
    for (std::size_t j = 0; j < width; ++j) o[j] = (in[j] - mean) * inv * gain[j] + bias[j];
  }
  return out;
}

Tensor gelu(const Tensor& x, Activation variant) {
  Tensor out(x.shape());
  const auto n = static_cast<std::int64_t>(x.size());
  if (variant == Activation::kGeluErf) {
#pragma omp parallel for schedule(static) if (n >= kParallelWork)
    for (std::int64_t i = 0; i < n; ++i) out[i] = gelu_erf(x[i]);
  } else {
#pragma omp parallel for schedule(static) if (n >= kParallelWork)
    for (std::int64_t i = 0; i < n; ++i) out[i] = gelu_tanh(x[i]);
  }
  return out;
}

Tensor attention(const AttentionInput& in) {
  const Tensor& qkv = in.qkv;
  const std::size_t tokens = qkv.dim(0);
  const std::size_t width = qkv.dim(1) / 3;
  if (qkv.dim(1) % 3 != 0 || in.heads == 0 || width % in.heads != 0 ||
      in.allowed.size() != tokens) {
    throw DimensionError("attention: bad qkv/heads/mask geometry");
  }
  const std::size_t hd = width / in.heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));

  std::vector<bool> columns = in.allowed;
  if (in.leak_penalty) columns.assign(tokens, true);
  if (std::find(columns.begin(), columns.end(), true) == columns.end()) {
    throw InvalidMaskError("attention: every key is disallowed");
  }

  Tensor context({tokens, width});
  const std::size_t stride = qkv.dim(1);
  const float* base = qkv.raw();
  const auto rows = static_cast<std::int64_t>(in.heads * tokens);
  const std::int64_t work = rows * static_cast<std::int64_t>(tokens * hd);

#pragma omp parallel if (work >= kParallelWork)
  {
    std::vector<float> scores(tokens), weights(tokens);
#pragma omp for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
      const std::size_t h = static_cast<std::size_t>(r) / tokens;
      const std::size_t i = static_cast<std::size_t>(r) % tokens;
      const float* q = base + i * stride + h * hd;
      for (std::size_t j = 0; j < tokens; ++j) {
        if (!columns[j]) continue;
        const float* key = base + j * stride + width + h * hd;
        float s = 0.0f;
        for (std::size_t c = 0; c < hd; ++c) s += q[c] * key[c];
        s *= scale;
        if (in.leak_penalty && !in.allowed[j]) s += *in.leak_penalty;
        scores[j] = s;
      }
      softmax_row(scores, columns, weights);
      float* out = context.raw() + i * width + h * hd;
      for (std::size_t j = 0; j < tokens; ++j) {
        if (!columns[j]) continue;
        const float w = weights[j];
        const float* value = base + j * stride + 2 * width + h * hd;
        for (std::size_t c = 0; c < hd; ++c) out[c] += w * value[c];
      }
    }
  }
  return context;
}

void add_inplace(Tensor& acc, const Tensor& x) {
  if (acc.shape() != x.shape()) throw DimensionError("add_inplace: shape mismatch");
  const auto n = static_cast<std::int64_t>(acc.size());
#pragma omp parallel for schedule(static) if (n >= kParallelWork)
  for (std::int64_t i = 0; i < n; ++i) acc[i] += x[i];
}

}  // namespace maskcert::kernels
