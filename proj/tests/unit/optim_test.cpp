#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "coboom/error.hpp"
#include "coboom/optim.hpp"

using namespace coboom;

TEST(CosineLr, Endpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 0.05), 0.05);
  EXPECT_NEAR(cosine_lr(50, 100, 0.05), 0.025, 1e-15);
  EXPECT_NEAR(cosine_lr(100, 100, 0.05), 0.0, 1e-15);
  EXPECT_NEAR(cosine_lr(25, 100, 1.0), 0.5 * (1.0 + std::cos(std::numbers::pi / 4.0)), 1e-15);
  EXPECT_THROW(cosine_lr(101, 100, 0.05), ContractError);
}

TEST(CosineLr, NonIncreasing) {
  double previous = cosine_lr(0, 300, 0.02);
  for (long long s = 1; s <= 300; ++s) {
    const double lr = cosine_lr(s, 300, 0.02);
    EXPECT_LE(lr, previous);
    previous = lr;
  }
}

TEST(Sgd, PlainStep) {
  std::vector<double> p{1.0, -2.0}, g{0.5, 0.5}, buf{0.0, 0.0};
  sgd_step(p, g, buf, 0.1, 0.0, 0.0);
  EXPECT_DOUBLE_EQ(p[0], 0.95);
  EXPECT_DOUBLE_EQ(p[1], -2.05);
}

TEST(Sgd, MomentumAndWeightDecay) {
  std::vector<double> p{1.0}, g{0.0}, buf{0.0};
  sgd_step(p, g, buf, 0.1, 0.9, 0.5);
  EXPECT_DOUBLE_EQ(buf[0], 0.5);
  EXPECT_DOUBLE_EQ(p[0], 0.95);
  sgd_step(p, g, buf, 0.1, 0.9, 0.5);
  EXPECT_DOUBLE_EQ(buf[0], 0.9 * 0.5 + 0.5 * 0.95);
  EXPECT_THROW(sgd_step(p, std::vector<double>{1.0, 2.0}, buf, 0.1, 0.9, 0.0), ContractError);
}

TEST(Lars, TrustRatio) {
  const std::vector<double> p{3.0, 4.0}, g{0.0, 1.0};
  EXPECT_DOUBLE_EQ(lars_trust_ratio(p, g, 0.0, 0.0), 5.0);
  EXPECT_DOUBLE_EQ(lars_trust_ratio(std::vector<double>{0.0, 0.0}, g, 0.0, 1e-9), 1.0);
  EXPECT_NEAR(lars_trust_ratio(p, g, 0.1, 1e-9), 5.0 / (1.0 + 0.5 + 1e-9), 1e-15);
}

TEST(Lars, StepScalesByTrustRatio) {
  std::vector<double> p{3.0, 4.0}, g{0.0, 1.0}, buf{0.0, 0.0};
  lars_step(p, g, buf, 0.1, 0.0, 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(p[0], 3.0);
  EXPECT_NEAR(p[1], 4.0 - 0.1 * 5.0, 1e-9);
}

TEST(Optimizer, StepsEveryParameter) {
  Tensor w({2}, {1.0, 1.0});
  w.set_requires_grad(true);
  Tensor b({1}, {0.0});
  b.set_requires_grad(true);
  Optimizer opt({OptimizerMode::sgd, 0.0, 0.0, 1e-9}, {{"w", w}, {"b", b}});
  w.mutable_values();
  backward(Tensor::scalar(0.0));
  opt.step(0.1);  // no gradients yet: nothing moves
  EXPECT_EQ(w.values()[0], 1.0);
  Tensor frozen({1}, {0.0});
  EXPECT_THROW(Optimizer({}, {{"frozen", frozen}}), ContractError);
}
