#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace maskcert {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense row-major float32 array.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> data);

  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<float> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  float* raw() { return data_.data(); }
  const float* raw() const { return data_.data(); }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // 2-D accessors; caller guarantees rank 2.
  float& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  float at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<float> row(std::size_t r);
  std::span<const float> row(std::size_t r) const;

  // Same data viewed under a new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b);

 private:
  Shape shape_;
  std::vector<float> data_;
};

// Bitwise equality (distinguishes +0/-0 and compares NaN payloads).
bool bit_identical(std::span<const float> a, std::span<const float> b);
float max_abs_diff(std::span<const float> a, std::span<const float> b);

// Attention key filter over [class] + n patch tokens.
class AttentionBias {
 public:
  // All 1 + num_patches tokens allowed.
  static AttentionBias all_allowed(std::size_t num_patches);

  // Throws InvalidMaskError if index 0 is disallowed or no patch token is allowed.
  explicit AttentionBias(std::vector<bool> allowed);

  std::size_t num_tokens() const { return allowed_.size(); }
  bool allowed(std::size_t token) const { return allowed_[token]; }
  const std::vector<bool>& mask() const { return allowed_; }
  std::size_t allowed_count() const;

 private:
  std::vector<bool> allowed_;
};

}  // namespace maskcert
