#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "coboom/error.hpp"
#include "coboom/grad_check.hpp"
#include "coboom/ops.hpp"
#include "test_util.hpp"

using namespace coboom;
using coboom::test::random_tensor;

TEST(Backward, SumGivesOnes) {
  Tensor w({3}, {1.0, 2.0, 3.0});
  w.set_requires_grad(true);
  backward(sum(w));
  ASSERT_TRUE(w.has_grad());
  for (double g : w.grad()) EXPECT_EQ(g, 1.0);
}

TEST(Backward, SquareGivesTwiceValue) {
  Tensor w({2}, {1.0, 2.0});
  w.set_requires_grad(true);
  backward(sum(multiply(w, w)));
  EXPECT_EQ(w.grad()[0], 2.0);
  EXPECT_EQ(w.grad()[1], 4.0);
}

TEST(Backward, RepeatedCallsAccumulateUntilReset) {
  Tensor w({2}, {1.0, -1.0});
  w.set_requires_grad(true);
  const Tensor loss = sum(scale(w, 3.0));
  backward(loss);
  backward(loss);
  EXPECT_EQ(w.grad()[0], 6.0);
  w.zero_grad();
  backward(loss);
  EXPECT_EQ(w.grad()[1], 3.0);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor w({2}, {1.0, 2.0});
  w.set_requires_grad(true);
  EXPECT_THROW(backward(scale(w, 2.0)), ContractError);
}

TEST(Backward, StopGradientBlocksPath) {
  Tensor w({1}, {3.0});
  w.set_requires_grad(true);
  const Tensor s = stop_gradient(w);
  backward(sum(multiply(s, s)));
  EXPECT_EQ(w.grad_or_zero()[0], 0.0);
}

TEST(Backward, SharedSubexpressionCountedOnce) {
  Tensor w({1}, {2.0});
  w.set_requires_grad(true);
  const Tensor a = multiply(w, w);
  backward(sum(add(a, a)));  // 2 w^2
  EXPECT_DOUBLE_EQ(w.grad()[0], 8.0);
}

TEST(StopGradient, IdentityOnValues) {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const Tensor x = random_tensor({4, 5}, rng, 10.0, true);
    const Tensor s = stop_gradient(x);
    ASSERT_EQ(s.shape(), x.shape());
    for (std::size_t j = 0; j < x.numel(); ++j) EXPECT_EQ(s.values()[j], x.values()[j]);
    EXPECT_FALSE(s.requires_grad());
  }
}

TEST(Ops, ShapeMismatchReportsBothShapes) {
  const Tensor a({2, 3}), b({4, 5});
  try {
    matmul(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4x5]"), std::string::npos) << msg;
  }
  EXPECT_THROW(add(Tensor({3}), Tensor({4})), DimensionError);
}

TEST(Ops, NonFiniteResultThrowsNumericError) {
  Tensor big({1}, {1e308});
  EXPECT_THROW(scale(big, 10.0), NumericError);
  EXPECT_THROW(divide(Tensor({1}, 1.0), Tensor({1}, 0.0)), NumericError);
}

TEST(Ops, MatmulMatchesNaiveLoops) {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t m = 1 + rng.below(6), k = 1 + rng.below(6), n = 1 + rng.below(6);
    const Tensor a = random_tensor({m, k}, rng), b = random_tensor({k, n}, rng);
    const Tensor c = matmul(a, b);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t p = 0; p < k; ++p) acc += a.values()[i * k + p] * b.values()[p * n + j];
        EXPECT_NEAR(c.values()[i * n + j], acc, 1e-12);
      }
    }
  }
}

TEST(Ops, Conv2dMatchesNaiveLoops) {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t cin = 1 + rng.below(3), cout = 1 + rng.below(3), h = 4 + rng.below(4);
    const std::size_t stride = 1 + rng.below(2), pad = rng.below(2);
    const Tensor x = random_tensor({cin, h, h}, rng);
    const Tensor w = random_tensor({cout, cin, 3, 3}, rng);
    const Tensor b = random_tensor({cout}, rng);
    const Tensor y = conv2d(x, w, b, stride, pad);
    const std::size_t oh = (h + 2 * pad - 3) / stride + 1;
    ASSERT_EQ(y.shape(), (Shape{cout, oh, oh}));
    for (std::size_t o = 0; o < cout; ++o) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < oh; ++ox) {
          double acc = b.values()[o];
          for (std::size_t c = 0; c < cin; ++c) {
            for (std::size_t ky = 0; ky < 3; ++ky) {
              for (std::size_t kx = 0; kx < 3; ++kx) {
                const long iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(h)) continue;
                acc += w.values()[((o * cin + c) * 3 + ky) * 3 + kx] *
                       x.values()[(c * h + static_cast<std::size_t>(iy)) * h + static_cast<std::size_t>(ix)];
              }
            }
          }
          EXPECT_NEAR(y.values()[(o * oh + oy) * oh + ox], acc, 1e-12);
        }
      }
    }
  }
}

TEST(Ops, SoftmaxRowsAreDistributions) {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor s = softmax_rows(random_tensor({5, 7}, rng, 20.0));
    for (std::size_t r = 0; r < 5; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 7; ++c) {
        const double v = s.values()[r * 7 + c];
        EXPECT_GE(v, 0.0);
        EXPECT_LE(v, 1.0);
        total += v;
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(Ops, UpsampleRepeatsPixels) {
  const Tensor x({1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
  const Tensor y = upsample_nearest2x(x);
  const std::vector<double> want{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  ASSERT_EQ(y.shape(), (Shape{1, 4, 4}));
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_EQ(y.values()[i], want[i]);
}

TEST(GradCheck, ExactPolynomial) {
  Rng rng(1);
  Tensor w = random_tensor({6}, rng, 1.0, true);
  std::vector<NamedTensor> params{{"w", w}};
  const GradReport r = grad_check([&] { return sum(multiply(w, w)); }, params, 1e-4);
  EXPECT_LT(r.max_rel_error, 1e-8);
  EXPECT_EQ(r.coordinates, 6u);
}

TEST(GradCheck, SoftmaxMatmulChain) {
  Rng rng(2);
  Tensor a = random_tensor({3, 4}, rng, 1.0, true);
  Tensor b = random_tensor({4, 5}, rng, 1.0, true);
  const Tensor c = random_tensor({3, 5}, rng);
  std::vector<NamedTensor> params{{"a", a}, {"b", b}};
  const GradReport r = grad_check([&] { return sum(multiply(softmax_rows(matmul(a, b)), c)); }, params, 1e-4);
  EXPECT_LT(r.max_rel_error, 1e-6);
}

TEST(GradCheck, EpsOutsideRangeIsContractError) {
  Tensor w({1}, {1.0});
  w.set_requires_grad(true);
  std::vector<NamedTensor> params{{"w", w}};
  auto f = [&] { return sum(w); };
  EXPECT_THROW(grad_check(f, params, 1e-2), ContractError);
  EXPECT_THROW(grad_check(f, params, 1e-7), ContractError);
}

TEST(GradCheck, NondeterministicLossIsContractError) {
  Tensor w({1}, {1.0});
  w.set_requires_grad(true);
  std::vector<NamedTensor> params{{"w", w}};
  int calls = 0;
  auto f = [&] { return add(sum(w), Tensor::scalar(static_cast<double>(calls++))); };
  EXPECT_THROW(grad_check(f, params, 1e-4), ContractError);
}

TEST(GradCheck, DetectsWrongBackward) {
  Rng rng(4);
  Tensor w = random_tensor({4}, rng, 1.0, true);
  std::vector<NamedTensor> params{{"w", w}};
  const GradReport r = grad_check([&] { return sum(coboom::testing::negate_backward(multiply(w, w))); }, params, 1e-4);
  EXPECT_FALSE(r.passed(1e-4));
  EXPECT_EQ(r.worst_param, "w");
}

TEST(GradCheck, StopGradientValuesHeldDuringPerturbation) {
  Tensor w({2}, {0.5, -1.5});
  w.set_requires_grad(true);
  std::vector<NamedTensor> params{{"w", w}};
  // d/dw of w * sg(w) is sg(w), not 2w.
  const GradReport r = grad_check([&] { return sum(multiply(w, stop_gradient(w))); }, params, 1e-4);
  EXPECT_LT(r.max_rel_error, 1e-8);
}

// Unary and binary elementwise ops over many random inputs.
class ElementwiseGrad : public ::testing::TestWithParam<int> {};

TEST_P(ElementwiseGrad, MatchesCentralDifferences) {
  Rng rng(static_cast<std::uint64_t>(1000 + GetParam()));
  Tensor a = random_tensor({3, 4}, rng, 1.0, true);
  Tensor b = random_tensor({3, 4}, rng, 1.0, true);
  Tensor bias = random_tensor({4}, rng, 1.0, true);
  const Tensor weights = random_tensor({3, 4}, rng);
  // Keep relu inputs away from the kink.
  for (double& v : a.mutable_values()) {
    if (std::abs(v) < 1e-2) v = 0.5;
  }
  std::vector<Tensor> denom_src{random_tensor({3, 4}, rng)};
  Tensor d(Shape{3, 4});
  for (std::size_t i = 0; i < d.numel(); ++i) d.mutable_values()[i] = 1.5 + std::abs(denom_src[0].values()[i]);
  d.set_requires_grad(true);

  const std::vector<std::pair<std::string, std::function<Tensor()>>> cases{
      {"add", [&] { return sum(multiply(add(a, b), weights)); }},
      {"add_bias", [&] { return sum(multiply(add(a, bias), weights)); }},
      {"sub", [&] { return sum(multiply(sub(a, b), weights)); }},
      {"multiply", [&] { return sum(multiply(multiply(a, b), weights)); }},
      {"divide", [&] { return sum(multiply(divide(a, d), weights)); }},
      {"scale", [&] { return sum(multiply(scale(a, -1.7), weights)); }},
      {"relu", [&] { return sum(multiply(relu(a), weights)); }},
      {"mean", [&] { return mean(multiply(a, b)); }},
      {"mean_rows", [&] { return sum(multiply(mean_rows(a), bias)); }},
      {"transpose", [&] { return sum(multiply(transpose(transpose(a)), weights)); }},
      {"reshape", [&] { return sum(multiply(reshape(reshape(a, {12}), {3, 4}), weights)); }},
      {"concat", [&] { return sum(multiply(concat_last({a, b}), concat_last({weights, weights}))); }},
      {"l2_norm", [&] { return l2_norm(a); }},
      {"softmax", [&] { return sum(multiply(softmax_rows(a), weights)); }},
      {"bce", [&] { return bce_with_logits(a, Tensor({3, 4}, 1.0)); }},
  };
  for (const auto& [name, fn] : cases) {
    std::vector<NamedTensor> params{{"a", a}, {"b", b}, {"bias", bias}, {"d", d}};
    const GradReport r = grad_check(fn, params, 1e-4);
    EXPECT_LT(r.max_rel_error, 1e-4) << name << " worst " << r.worst_param << "[" << r.worst_index << "]";
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, ElementwiseGrad, ::testing::Range(0, 100));

class CompositeGrad : public ::testing::TestWithParam<int> {};

TEST_P(CompositeGrad, ConvUpsampleChain) {
  Rng rng(static_cast<std::uint64_t>(2000 + GetParam()));
  const Tensor x = random_tensor({2, 6, 6}, rng);
  Tensor w1 = random_tensor({3, 2, 3, 3}, rng, 0.5, true);
  Tensor b1 = random_tensor({3}, rng, 0.5, true);
  Tensor w2 = random_tensor({1, 3, 3, 3}, rng, 0.5, true);
  const Tensor target = random_tensor({1, 6, 6}, rng);
  std::vector<NamedTensor> params{{"w1", w1}, {"b1", b1}, {"w2", w2}};
  auto f = [&] {
    const Tensor h = relu(conv2d(x, w1, b1, 2, 1));
    const Tensor y = conv2d(upsample_nearest2x(h), w2, 1, 1);
    const Tensor diff = sub(y, target);
    return mean(multiply(diff, diff));
  };
  const GradReport r = grad_check(f, params, 1e-4);
  EXPECT_EQ(r.nonsmooth, 0u);
  EXPECT_LT(r.max_rel_error, 1e-4) << r.worst_param << "[" << r.worst_index << "]";
}

INSTANTIATE_TEST_SUITE_P(Seeds, CompositeGrad, ::testing::Range(0, 10));
