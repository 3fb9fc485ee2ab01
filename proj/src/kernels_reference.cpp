// Serial reference kernels. Straightforward loops, no blocking, no threads.

#include <cmath>

#include "maskcert/errors.hpp"
#include "maskcert/kernels.hpp"

namespace maskcert {

float gelu_erf(float x) {
  return 0.5f * x * (1.0f + std::erf(x * 0.70710678118654752440f));
}

float gelu_tanh(float x) {
  constexpr float kSqrt2OverPi = 0.79788456080286535588f;
  return 0.5f * x * (1.0f + std::tanh(kSqrt2OverPi * (x + 0.044715f * x * x * x)));
}

namespace reference {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_to_string(a.shape()) + " by " +
                         shape_to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      float acc = 0.0f;
      for (std::size_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
      c.at(i, j) = acc;
    }
  }
  return c;
}

Tensor linear(const Tensor& x, const Tensor& weight, std::span<const float> bias) {
  Tensor y = matmul(x, weight);
  if (bias.size() != y.dim(1)) throw DimensionError("linear: bias length mismatch");
  for (std::size_t i = 0; i < y.dim(0); ++i) {
    for (std::size_t j = 0; j < y.dim(1); ++j) y.at(i, j) += bias[j];
  }
  return y;
}

Tensor masked_softmax(const Tensor& logits, const std::vector<bool>& allowed) {
  if (logits.rank() != 2 || allowed.size() != logits.dim(1)) {
    throw DimensionError("masked_softmax: mask length does not match logits");
  }
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  Tensor out({rows, cols});
  for (std::size_t i = 0; i < rows; ++i) {
    bool any = false;
    float peak = 0.0f;
    for (std::size_t j = 0; j < cols; ++j) {
      if (!allowed[j]) continue;
      if (!any || logits.at(i, j) > peak) peak = logits.at(i, j);
      any = true;
    }
    if (!any) throw InvalidMaskError("masked_softmax: every column is disallowed");
    float total = 0.0f;
    for (std::size_t j = 0; j < cols; ++j) {
      if (!allowed[j]) continue;
      out.at(i, j) = std::exp(logits.at(i, j) - peak);
      total += out.at(i, j);
    }
    for (std::size_t j = 0; j < cols; ++j) {
      if (allowed[j]) out.at(i, j) /= total;
    }
  }
  return out;
}

Tensor layer_norm(const Tensor& x, std::span<const float> gain, std::span<const float> bias,
                  float eps) {
  const std::size_t rows = x.dim(0), width = x.dim(1);
  if (gain.size() != width || bias.size() != width) {
    throw DimensionError("layer_norm: affine parameters do not match width");
  }
  Tensor out({rows, width});
  for (std::size_t i = 0; i < rows; ++i) {
    float sum = 0.0f;
    for (std::size_t j = 0; j < width; ++j) sum += x.at(i, j);
    const float mean = sum / static_cast<float>(width);
    float sq = 0.0f;
    for (std::size_t j = 0; j < width; ++j) {
      const float c = x.at(i, j) - mean;
      sq += c * c;
    }
    const float inv = 1.0f / std::sqrt(sq / static_cast<float>(width) + eps);
    for (std::size_t j = 0; j < width; ++j) {
      out.at(i, j) = (x.at(i, j) - mean) * inv * gain[j] + bias[j];
    }
  }
  return out;
}

Tensor gelu(const Tensor& x, Activation variant) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = variant == Activation::kGeluErf ? gelu_erf(x[i]) : gelu_tanh(x[i]);
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

  Tensor context({tokens, width});
  for (std::size_t h = 0; h < in.heads; ++h) {
    const std::size_t qo = h * hd, ko = width + h * hd, vo = 2 * width + h * hd;
    Tensor scores({tokens, tokens});
    for (std::size_t i = 0; i < tokens; ++i) {
      for (std::size_t j = 0; j < tokens; ++j) {
        if (!columns[j]) continue;
        float s = 0.0f;
        for (std::size_t c = 0; c < hd; ++c) s += qkv.at(i, qo + c) * qkv.at(j, ko + c);
        s *= scale;
        if (in.leak_penalty && !in.allowed[j]) s += *in.leak_penalty;
        scores.at(i, j) = s;
      }
    }
    const Tensor weights = masked_softmax(scores, columns);
    for (std::size_t i = 0; i < tokens; ++i) {
      for (std::size_t c = 0; c < hd; ++c) {
        float acc = 0.0f;
        for (std::size_t j = 0; j < tokens; ++j) {
          if (columns[j]) acc += weights.at(i, j) * qkv.at(j, vo + c);
        }
        context.at(i, qo + c) = acc;
      }
    }
  }
  return context;
}

void add_inplace(Tensor& acc, const Tensor& x) {
  if (acc.shape() != x.shape()) throw DimensionError("add_inplace: shape mismatch");
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += x[i];
}

}  // namespace reference
}  // namespace maskcert
