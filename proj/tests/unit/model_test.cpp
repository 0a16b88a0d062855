#include <gtest/gtest.h>

#include <set>

#include "coboom/error.hpp"
#include "coboom/model.hpp"
#include "coboom/ops.hpp"
#include "test_util.hpp"

using namespace coboom;
using coboom::test::random_image;
using coboom::test::random_tensor;

TEST(Encoder, DeskShapes) {
  const ModelConfig cfg;
  const ModelState s = init_model(cfg, 1);
  Rng rng(1);
  const Tensor tokens = encode(s.theta.encoder, random_image(32, rng));
  EXPECT_EQ(tokens.shape(), (Shape{16, 64}));
  EXPECT_EQ(cfg.token_count(), 16u);
}

TEST(Encoder, PaperPresetTokenGrid) {
  ModelConfig cfg;
  cfg.image_size = 224;
  cfg.dim = 512;
  cfg.encoder_strides = {2, 2, 2, 2, 2};
  EXPECT_EQ(cfg.token_grid(), 7u);
  EXPECT_EQ(cfg.token_count(), 49u);
}

TEST(Encoder, ZeroImageZeroBiasGivesZeroTokens) {
  const ModelState s = init_model(ModelConfig{}, 2);
  const Tensor tokens = encode(s.theta.encoder, Tensor({1, 32, 32}, 0.0));
  for (double v : tokens.values()) EXPECT_EQ(v, 0.0);
}

TEST(Pooling, Examples) {
  const Tensor same({3, 2}, {1.5, -2.0, 1.5, -2.0, 1.5, -2.0});
  const Tensor p = global_avg_pool(same);
  EXPECT_EQ(p.values()[0], 1.5);
  EXPECT_EQ(p.values()[1], -2.0);
  const Tensor two({2, 2}, {1.0, 0.0, 0.0, 1.0});
  EXPECT_EQ(global_avg_pool(two).values()[0], 0.5);

  Rng rng(3);
  const Tensor x = random_tensor({49, 512}, rng);
  const Tensor m = global_avg_pool(x);
  for (std::size_t c = 0; c < 512; ++c) {
    double acc = 0.0;
    for (std::size_t r = 0; r < 49; ++r) acc += x.values()[r * 512 + c];
    EXPECT_NEAR(m.values()[c], acc / 49.0, 1e-12);
  }
}

TEST(Projection, MatchesLayerLoop) {
  Rng rng(4);
  const MLPHead head = init_mlp(6, 5, 4, 9);
  const Tensor v = random_tensor({6}, rng);
  std::vector<double> h(v.values().begin(), v.values().end());
  for (std::size_t l = 0; l < 3; ++l) {
    const Linear& layer = head.layers[l];
    const std::size_t in = layer.weight.dim(0), out = layer.weight.dim(1);
    std::vector<double> next(out);
    for (std::size_t j = 0; j < out; ++j) {
      double acc = layer.bias.values()[j];
      for (std::size_t i = 0; i < in; ++i) acc += h[i] * layer.weight.values()[i * out + j];
      next[j] = l < 2 ? std::max(acc, 0.0) : acc;
    }
    h = next;
  }
  const Tensor z = project(head, v);
  ASSERT_EQ(z.numel(), 4u);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(z.values()[j], h[j], 1e-12);
  const Tensor zero = project(head, Tensor({6}, 0.0));
  for (double x : zero.values()) EXPECT_EQ(x, 0.0);
}

TEST(Ema, Examples) {
  ModelConfig cfg;
  cfg.use_decoder = false;
  for (double m : {0.0, 0.5, 0.9, 1.0}) {
    ModelState s = init_model(cfg, 5);
    Rng rng(6);
    for (auto& p : s.theta_parameters()) {
      for (double& v : p.tensor.mutable_values()) v += rng.normal();
    }
    const ModelState before = s.clone();
    s.ema_momentum = m;
    ema_update(s);
    const auto theta = s.theta_parameters();
    const auto phi_old = before.phi_parameters();
    const auto phi = s.phi_parameters();
    for (const auto& p : phi) {
      const std::string mirror = "theta" + p.name.substr(3);
      const auto th = std::find_if(theta.begin(), theta.end(), [&](const NamedTensor& t) { return t.name == mirror; });
      const auto old = std::find_if(phi_old.begin(), phi_old.end(), [&](const NamedTensor& t) { return t.name == p.name; });
      ASSERT_NE(th, theta.end()) << mirror;
      for (std::size_t i = 0; i < p.tensor.numel(); ++i) {
        const double want = m * old->tensor.values()[i] + (1.0 - m) * th->tensor.values()[i];
        EXPECT_NEAR(p.tensor.values()[i], want, 1e-15);
      }
      EXPECT_FALSE(p.tensor.requires_grad());
    }
  }
}

TEST(Ema, ScalarArithmetic) {
  ModelConfig cfg;
  ModelState s = init_model(cfg, 1);
  s.phi.projection.layers[2].bias.mutable_values()[0] = 1.0;
  s.theta.projection.layers[2].bias.mutable_values()[0] = 0.0;
  s.ema_momentum = 0.9;
  ema_update(s);
  EXPECT_DOUBLE_EQ(s.phi.projection.layers[2].bias.values()[0], 0.9);
}

TEST(Model, PhiStartsAsCopyAndNeverTakesGradient) {
  const ModelConfig cfg;
  ModelState s = init_model(cfg, 7);
  EXPECT_EQ(s.phi.encoder.layers[0].weight.values()[3], s.theta.encoder.layers[0].weight.values()[3]);
  Rng rng(8);
  const Tensor x1 = random_image(32, rng), x2 = random_image(32, rng);
  const ForwardOutputs out = forward_pass(x1, x2, s, cfg);
  const Tensor loss = add(add(sum(out.z_theta), sum(out.z_phi)), sum(out.z_theta_prime));
  backward(loss);
  for (const auto& p : s.phi_parameters()) EXPECT_FALSE(p.tensor.has_grad()) << p.name;
  EXPECT_FALSE(out.target_tokens.requires_grad());
}

TEST(Model, ForwardShapesDesk) {
  const ModelConfig cfg;
  const ModelState s = init_model(cfg, 9);
  Rng rng(9);
  const ForwardOutputs out = forward_pass(random_image(32, rng), random_image(32, rng), s, cfg);
  EXPECT_EQ(out.z_theta.numel(), 32u);
  EXPECT_EQ(out.z_phi.numel(), 32u);
  EXPECT_EQ(out.z_theta_prime.numel(), 32u);
  EXPECT_EQ(out.fused_tokens.shape(), (Shape{16, 64}));
  EXPECT_EQ(out.reconstruction.shape(), (Shape{1, 32, 32}));
  EXPECT_EQ(out.quantization.indices.size(), 16u);
}

TEST(Model, ForwardIsDeterministic) {
  const ModelConfig cfg;
  const ModelState s = init_model(cfg, 10);
  Rng rng(10);
  const Tensor x1 = random_image(32, rng), x2 = random_image(32, rng);
  const ForwardOutputs a = forward_pass(x1, x2, s, cfg);
  const ForwardOutputs b = forward_pass(x1, x2, s, cfg);
  for (std::size_t i = 0; i < a.z_theta_prime.numel(); ++i) {
    EXPECT_EQ(a.z_theta_prime.values()[i], b.z_theta_prime.values()[i]);
  }
  for (std::size_t i = 0; i < a.reconstruction.numel(); ++i) {
    EXPECT_EQ(a.reconstruction.values()[i], b.reconstruction.values()[i]);
  }
}

TEST(Model, BranchSymmetryWithoutPredictor) {
  ModelConfig cfg;
  cfg.use_predictor = false;
  const ModelState s = init_model(cfg, 11);
  Rng rng(11);
  const Tensor x = random_image(32, rng);
  const ForwardOutputs out = forward_pass(x, x, s, cfg);
  EXPECT_LT(test::max_abs_diff(out.z_theta.values(), out.z_phi.values()), 1e-12);
  EXPECT_FALSE(s.theta.predictor.has_value());
}

TEST(Model, AblationsDropParameters) {
  ModelConfig cfg;
  cfg.use_diversifuse = false;
  cfg.use_decoder = false;
  const ModelState s = init_model(cfg, 12);
  for (const auto& p : s.named_parameters()) {
    EXPECT_EQ(p.name.find("fusion"), std::string::npos) << p.name;
    EXPECT_EQ(p.name.find("decoder"), std::string::npos) << p.name;
  }
  Rng rng(12);
  const Tensor x1 = random_image(32, rng), x2 = random_image(32, rng);
  const ForwardOutputs out = forward_pass(x1, x2, s, cfg);
  EXPECT_FALSE(out.reconstruction.defined());
  // Without fusion z'_theta is the projection of the pooled codewords.
  const Tensor expected = project(s.theta.fused_projection, global_avg_pool(out.quantization.quantized));
  EXPECT_LT(test::max_abs_diff(out.z_theta_prime.values(), expected.values()), 1e-12);
}

TEST(Model, ParameterNamesUnique) {
  const ModelState s = init_model(ModelConfig{}, 13);
  std::set<std::string> names;
  for (const auto& p : s.named_parameters()) EXPECT_TRUE(names.insert(p.name).second) << p.name;
  EXPECT_TRUE(names.count("theta.codebook.embeddings"));
  EXPECT_TRUE(names.count("phi.encoder.conv0.weight"));
}

TEST(Model, InvalidConfigRejected) {
  ModelConfig cfg;
  cfg.heads = 5;  // 64 not divisible by 5
  EXPECT_THROW(cfg.validate(), ConfigError);
  ModelConfig bad_size;
  bad_size.image_size = 30;
  EXPECT_THROW(bad_size.validate(), ConfigError);
}

TEST(Model, ViewShapeChecked) {
  const ModelConfig cfg;
  const ModelState s = init_model(cfg, 14);
  EXPECT_THROW(forward_pass(Tensor({1, 16, 16}), Tensor({1, 16, 16}), s, cfg), ConfigError);
}
