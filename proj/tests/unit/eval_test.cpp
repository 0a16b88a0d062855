#include <gtest/gtest.h>

#include "coboom/error.hpp"
#include "coboom/eval.hpp"
#include "coboom/ops.hpp"
#include "test_util.hpp"

using namespace coboom;

namespace {

double pairwise_auc(const std::vector<double>& s, const std::vector<std::uint8_t>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!y[i]) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j]) continue;
      pairs += 1.0;
      if (s[i] > s[j]) wins += 1.0;
      else if (s[i] == s[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

}  // namespace

TEST(Auc, Examples) {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<std::uint8_t> y{0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(*roc_auc(s, y), 0.75);
  const std::vector<double> tied{0.5, 0.5};
  const std::vector<std::uint8_t> mixed{0, 1};
  EXPECT_DOUBLE_EQ(*roc_auc(tied, mixed), 0.5);
  const std::vector<std::uint8_t> all{1, 1};
  EXPECT_FALSE(roc_auc(tied, all).has_value());
}

TEST(Auc, MatchesPairwiseOracleExactly) {
  Rng rng(31);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.below(49);
    std::vector<double> s(n);
    std::vector<std::uint8_t> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng.below(8));
      y[i] = static_cast<std::uint8_t>(rng.below(2));
    }
    y[0] = 0;
    y[1] = 1;
    EXPECT_EQ(*roc_auc(s, y), pairwise_auc(s, y));
  }
}

TEST(Subset, StratifiedAndDeterministic) {
  const Dataset ds = generate_synthetic(100, 2, 16, 1);
  const auto pool = ds.indices(Split::train);
  const auto a = stratified_subset(ds, pool, 0.1, 3);
  const auto b = stratified_subset(ds, pool, 0.1, 3);
  const auto c = stratified_subset(ds, pool, 0.1, 4);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  ASSERT_EQ(a.size(), 8u);
  std::size_t positives = 0;
  for (auto r : a) positives += ds.samples[r].labels[0];
  EXPECT_EQ(positives, 4u);
  EXPECT_EQ(stratified_subset(ds, pool, 1.0, 3).size(), pool.size());
  EXPECT_THROW(stratified_subset(ds, pool, 0.0, 3), ConfigError);
  EXPECT_THROW(stratified_subset(ds, pool, 1.5, 3), ConfigError);
}

TEST(Auc, AbsentPositivesMarkClassUndefined) {
  Dataset ds = generate_synthetic(6, 2, 16, 1);
  for (auto& s : ds.samples) s.labels = {1, 0};
  ds.samples[0].labels = {0, 0};
  const std::vector<std::size_t> rows{0, 1, 2, 3};
  const Tensor scores({4, 2}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8});
  const AucSummary s = multilabel_auc(scores, ds, rows);
  ASSERT_TRUE(s.per_class[0].has_value());
  EXPECT_FALSE(s.per_class[1].has_value());
  EXPECT_DOUBLE_EQ(*s.macro, *s.per_class[0]);
}

class ProbeFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    ds = generate_synthetic(60, 2, 32, 2);
    state = init_model(ModelConfig{}, 3);
    rows = stratified_subset(ds, ds.indices(Split::train), 0.5, 1);
    features = extract_features(state.theta.encoder, ds, rows);
    labels = label_matrix(ds, rows);
  }
  Dataset ds;
  ModelState state;
  std::vector<std::size_t> rows;
  Tensor features, labels;
};

TEST_F(ProbeFixture, FeatureShape) {
  EXPECT_EQ(features.shape(), (Shape{rows.size(), 64}));
  EXPECT_EQ(labels.shape(), (Shape{rows.size(), 2}));
}

TEST_F(ProbeFixture, LossNonincreasingAtSmallLr) {
  const ProbeFit fit = train_linear_probe(features, labels, 100, 0.01, 4);
  for (std::size_t i = 1; i < fit.losses.size(); ++i) EXPECT_LE(fit.losses[i], fit.losses[i - 1] + 1e-15);
  EXPECT_LT(fit.losses.back(), fit.losses.front());
}

TEST_F(ProbeFixture, FrozenEncoderUntouched) {
  const std::vector<double> before(state.theta.encoder.layers[0].weight.values().begin(),
                                   state.theta.encoder.layers[0].weight.values().end());
  train_linear_probe(features, labels, 20, 0.1, 4);
  const auto after = state.theta.encoder.layers[0].weight.values();
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(before[i], after[i]);
}

TEST_F(ProbeFixture, FineTuneFitsAtLeastAsWell) {
  const ProbeFit probe = train_linear_probe(features, labels, 30, 0.05, 4);
  const FineTuneResult ft = fine_tune(state, ds, rows, 30, 0.05, 4);
  EXPECT_LE(ft.losses.back(), probe.losses.back());
  // The model's own encoder is left alone.
  EXPECT_EQ(state.theta.encoder.layers[0].weight.values()[0], init_model(ModelConfig{}, 3).theta.encoder.layers[0].weight.values()[0]);
}

TEST_F(ProbeFixture, ZeroLrFineTuneEqualsInitialProbe) {
  const ProbeFit probe = train_linear_probe(features, labels, 5, 0.0, 4);
  const FineTuneResult ft = fine_tune(state, ds, rows, 5, 0.0, 4);
  const Tensor a = probe.model.logits(features);
  const Tensor b = ft.probe.logits(extract_features(ft.encoder, ds, rows));
  EXPECT_LT(test::max_abs_diff(a.values(), b.values()), 1e-12);
}
