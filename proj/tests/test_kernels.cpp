#include <gtest/gtest.h>
#include <omp.h>

#include <cmath>
#include <numeric>

#include "maskcert/errors.hpp"
#include "maskcert/kernels.hpp"
#include "test_support.hpp"

using namespace maskcert;
using maskcert::testing::random_tensor;

namespace {

std::vector<bool> every_other(std::size_t n) {
  std::vector<bool> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = (i % 2 == 0);
  return a;
}

class ThreadCount : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override {
    saved_ = omp_get_max_threads();
    omp_set_num_threads(GetParam());
  }
  void TearDown() override { omp_set_num_threads(saved_); }
  int saved_ = 1;
};

}  // namespace

TEST(Kernels, MatmulHandExample) {
  const Tensor a = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  const Tensor b = Tensor::matrix(3, 2, {7, 8, 9, 10, 11, 12});
  const Tensor c = kernels::matmul(a, b);
  EXPECT_EQ(c, Tensor::matrix(2, 2, {58, 64, 139, 154}));
  EXPECT_EQ(reference::matmul(a, b), c);
}

TEST(Kernels, MatmulShapeMismatchThrows) {
  EXPECT_THROW(kernels::matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
  EXPECT_THROW(reference::matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
}

TEST(Kernels, LinearAddsBias) {
  const Tensor x = Tensor::matrix(1, 2, {1, 2});
  const Tensor w = Tensor::matrix(2, 2, {1, 0, 0, 1});
  const std::vector<float> bias{0.5f, -0.5f};
  EXPECT_EQ(kernels::linear(x, w, bias), Tensor::matrix(1, 2, {1.5f, 1.5f}));
}

TEST(Kernels, SoftmaxMatchesOracle) {
  // exp(i) / (e + e^2 + e^3), high-precision reference values.
  const Tensor logits = Tensor::matrix(1, 3, {1, 2, 3});
  const Tensor p = kernels::masked_softmax(logits, {true, true, true});
  EXPECT_NEAR(p[0], 0.0900305731703804580, 1e-7);
  EXPECT_NEAR(p[1], 0.2447284710547976525, 1e-7);
  EXPECT_NEAR(p[2], 0.6652409557748218895, 1e-7);
}

TEST(Kernels, SoftmaxExcludesDisallowedColumns) {
  const Tensor logits = Tensor::matrix(2, 3, {1, 2, 3, 1, 1000, 3});
  const Tensor p = kernels::masked_softmax(logits, {true, false, true});
  EXPECT_EQ(p.at(0, 1), 0.0f);
  EXPECT_NEAR(p.at(0, 0), 0.1192029220221175559, 1e-7);
  EXPECT_NEAR(p.at(0, 2), 1.0 - 0.1192029220221175559, 1e-7);
  // A huge disallowed logit does not move the allowed weights at all.
  EXPECT_EQ(p.at(1, 0), p.at(0, 0));
  EXPECT_EQ(p.at(1, 2), p.at(0, 2));
}

TEST(Kernels, SoftmaxAllDisallowedThrows) {
  EXPECT_THROW(kernels::masked_softmax(Tensor({1, 2}), {false, false}), InvalidMaskError);
  EXPECT_THROW(reference::masked_softmax(Tensor({1, 2}), {false, false}), InvalidMaskError);
}

TEST(Kernels, LayerNormOracle) {
  // (x - mean) / sqrt(var + 1e-6), high-precision reference values.
  const Tensor x = Tensor::matrix(2, 4, {1, 2, 3, 4, 1, -1, 1, -1});
  const std::vector<float> g(4, 1.0f), b(4, 0.0f);
  const Tensor y = kernels::layer_norm(x, g, b);
  EXPECT_NEAR(y.at(0, 0), -1.34164024984388121, 1e-6);
  EXPECT_NEAR(y.at(0, 1), -0.44721341661462707, 1e-6);
  EXPECT_NEAR(y.at(0, 3), 1.34164024984388121, 1e-6);
  EXPECT_NEAR(y.at(1, 0), 0.99999950000037499969, 1e-6);
  EXPECT_NEAR(y.at(1, 1), -0.99999950000037499969, 1e-6);
}

TEST(Kernels, LayerNormAppliesGainAndBias) {
  const Tensor x = Tensor::matrix(1, 2, {1, -1});
  const std::vector<float> g{2.0f, 3.0f}, b{0.5f, 0.25f};
  const Tensor y = kernels::layer_norm(x, g, b);
  EXPECT_NEAR(y[0], 2.0 * 0.9999995 + 0.5, 1e-6);
  EXPECT_NEAR(y[1], -3.0 * 0.9999995 + 0.25, 1e-6);
}

TEST(Kernels, GeluErfOracle) {
  EXPECT_NEAR(gelu_erf(1.0f), 0.8413447460685429486, 1e-7);
  EXPECT_NEAR(gelu_erf(-1.0f), -0.15865525393145705, 1e-7);
  EXPECT_NEAR(gelu_erf(3.0f), 2.9959503059051097, 1e-6);
  EXPECT_NEAR(gelu_erf(0.5f), 0.34573123063700655, 1e-7);
  EXPECT_NEAR(gelu_erf(-3.0f), -0.0040496940948902836, 1e-7);
  EXPECT_EQ(gelu_erf(0.0f), 0.0f);
}

TEST(Kernels, GeluTanhOracle) {
  EXPECT_NEAR(gelu_tanh(1.0f), 0.8411919906082767048, 1e-7);
  EXPECT_NEAR(gelu_tanh(-1.0f), -0.1588080093917232952, 1e-7);
  EXPECT_NEAR(gelu_tanh(2.0f), 1.9545976940877750188, 1e-6);
}

TEST(Kernels, GeluVariantSelection) {
  const Tensor x = Tensor::matrix(1, 1, {1.0f});
  EXPECT_EQ(kernels::gelu(x, Activation::kGeluErf)[0], gelu_erf(1.0f));
  EXPECT_EQ(kernels::gelu(x, Activation::kGeluTanh)[0], gelu_tanh(1.0f));
}

TEST(Kernels, AttentionZeroQueriesAverageAllowedValues) {
  // One head, d=2: q = k = 0 gives uniform weights, so each output row is
  // the mean of the allowed value rows.
  const Tensor qkv = Tensor::matrix(3, 6, {0, 0, 0, 0, 1, 2,  //
                                           0, 0, 0, 0, 3, 4,  //
                                           0, 0, 0, 0, 100, 100});
  const std::vector<bool> allowed{true, true, false};
  const Tensor out = kernels::attention({qkv, 1, allowed});
  for (std::size_t r = 0; r < 3; ++r) {
    EXPECT_EQ(out.at(r, 0), 2.0f);
    EXPECT_EQ(out.at(r, 1), 3.0f);
  }
}

TEST(Kernels, AttentionIgnoresDisallowedKeyContent) {
  const std::size_t t = 9, d = 8;
  Tensor qkv = random_tensor({t, 3 * d}, 5);
  const std::vector<bool> allowed = every_other(t);
  const Tensor before = kernels::attention({qkv, 2, allowed});
  for (std::size_t r = 1; r < t; r += 2) {
    for (std::size_t c = d; c < 3 * d; ++c) qkv.at(r, c) = 1e3f * static_cast<float>(r + c);
  }
  const Tensor after = kernels::attention({qkv, 2, allowed});
  EXPECT_TRUE(bit_identical(before.data(), after.data()));
}

TEST(Kernels, LeakyAttentionDiffers) {
  const std::size_t t = 9, d = 8;
  const Tensor qkv = random_tensor({t, 3 * d}, 6);
  const std::vector<bool> allowed = every_other(t);
  const Tensor exact = kernels::attention({qkv, 2, allowed});
  const Tensor leaky = kernels::attention({qkv, 2, allowed, -1.0f});
  EXPECT_GT(max_abs_diff(exact.data(), leaky.data()), 1e-4f);
  EXPECT_TRUE(bit_identical(leaky.data(), reference::attention({qkv, 2, allowed, -1.0f}).data()));
}

TEST(Kernels, AttentionRejectsBadShapes) {
  const std::vector<bool> allowed(3, true);
  EXPECT_THROW(kernels::attention({Tensor({3, 7}), 1, allowed}), DimensionError);
  EXPECT_THROW(kernels::attention({Tensor({3, 6}), 4, allowed}), DimensionError);
  const std::vector<bool> short_mask(2, true);
  EXPECT_THROW(kernels::attention({Tensor({3, 6}), 1, short_mask}), DimensionError);
}

TEST_P(ThreadCount, ParallelMatchesReferenceBitForBit) {
  // Sizes straddle the parallel work threshold.
  for (std::size_t n : {3u, 37u, 200u}) {
    const Tensor a = random_tensor({n, 64}, n);
    const Tensor b = random_tensor({64, 96}, n + 1);
    const std::vector<float> bias(96, 0.25f);
    EXPECT_TRUE(bit_identical(kernels::matmul(a, b).data(), reference::matmul(a, b).data()));
    EXPECT_TRUE(bit_identical(kernels::linear(a, b, bias).data(),
                              reference::linear(a, b, bias).data()));

    const std::vector<float> g(64, 1.1f), beta(64, -0.1f);
    EXPECT_TRUE(bit_identical(kernels::layer_norm(a, g, beta).data(),
                              reference::layer_norm(a, g, beta).data()));
    for (auto act : {Activation::kGeluErf, Activation::kGeluTanh}) {
      EXPECT_TRUE(bit_identical(kernels::gelu(a, act).data(), reference::gelu(a, act).data()));
    }
    const std::vector<bool> cols = every_other(64);
    EXPECT_TRUE(bit_identical(kernels::masked_softmax(a, cols).data(),
                              reference::masked_softmax(a, cols).data()));

    const Tensor qkv = random_tensor({n, 96}, n + 2);
    for (const auto& allowed : {std::vector<bool>(n, true), every_other(n)}) {
      EXPECT_TRUE(bit_identical(kernels::attention({qkv, 4, allowed}).data(),
                                reference::attention({qkv, 4, allowed}).data()));
    }

    Tensor x1 = a, x2 = a;
    kernels::add_inplace(x1, a);
    reference::add_inplace(x2, a);
    EXPECT_TRUE(bit_identical(x1.data(), x2.data()));
  }
}

INSTANTIATE_TEST_SUITE_P(Threads, ThreadCount, ::testing::Values(1, 2, 4));
