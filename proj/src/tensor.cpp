#include "maskcert/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>
#include <numeric>

#include "maskcert/errors.hpp"

namespace maskcert {

std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape, float fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (element_count(shape_) != data_.size()) {
    throw DimensionError("tensor shape " + shape_to_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " elements");
  }
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::initializer_list<float> values) {
  return Tensor({rows, cols}, std::vector<float>(values));
}

std::span<float> Tensor::row(std::size_t r) {
  const std::size_t width = shape_.back();
  return std::span<float>(data_).subspan(r * width, width);
}

std::span<const float> Tensor::row(std::size_t r) const {
  const std::size_t width = shape_.back();
  return std::span<const float>(data_).subspan(r * width, width);
}

Tensor Tensor::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

bool operator==(const Tensor& a, const Tensor& b) {
  return a.shape_ == b.shape_ && a.data_ == b.data_;
}

bool bit_identical(std::span<const float> a, std::span<const float> b) {
  return a.size() == b.size() &&
         (a.empty() || std::memcmp(a.data(), b.data(), a.size_bytes()) == 0);
}

float max_abs_diff(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw DimensionError("max_abs_diff: size mismatch");
  float worst = 0.0f;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::fabs(a[i] - b[i]));
  return worst;
}

AttentionBias AttentionBias::all_allowed(std::size_t num_patches) {
  return AttentionBias(std::vector<bool>(num_patches + 1, true));
}

AttentionBias::AttentionBias(std::vector<bool> allowed) : allowed_(std::move(allowed)) {
  if (allowed_.size() < 2) {
    throw InvalidMaskError("attention bias needs the [class] token and at least one patch");
  }
  if (!allowed_[0]) throw InvalidMaskError("the [class] token cannot be masked");
  if (std::none_of(allowed_.begin() + 1, allowed_.end(), [](bool b) { return b; })) {
    throw InvalidMaskError("mask excludes every patch token");
  }
}

std::size_t AttentionBias::allowed_count() const {
  return static_cast<std::size_t>(std::count(allowed_.begin(), allowed_.end(), true));
}

}  // namespace maskcert
