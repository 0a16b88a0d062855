#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "coboom/data.hpp"
#include "coboom/model.hpp"

namespace coboom {

// Linear head over pooled encoder features, trained with sigmoid cross-entropy.
// Features are z-scored with statistics frozen from the probe's training rows.
struct ProbeModel {
  Tensor weight;  // [feature_dim, classes]
  Tensor bias;    // [classes]
  Tensor centre;  // [feature_dim]
  Tensor whiten;  // [feature_dim, feature_dim], diagonal 1/sqrt(max(var, 0.01 * mean var))

  Tensor logits(const Tensor& features) const;  // [N, D] -> [N, classes]
};

// Identity standardizer until set_standardizer is called.
ProbeModel init_probe(std::size_t feature_dim, std::size_t classes, std::uint64_t seed);
void set_standardizer(ProbeModel& probe, const Tensor& features);

// Row i = global_avg_pool(encode(enc, image_i)); no augmentation.
Tensor extract_features(const EncoderParams& enc, const Dataset& ds,
                        std::span<const std::size_t> rows);

// [rows, classes] multi-hot targets as doubles.
Tensor label_matrix(const Dataset& ds, std::span<const std::size_t> rows);

struct ProbeFit {
  ProbeModel model;
  std::vector<double> losses;  // training loss before each update, then the final loss
};

// Full-batch gradient descent on the mean sigmoid cross-entropy.
ProbeFit train_linear_probe(const Tensor& features, const Tensor& labels, int epochs, double lr,
                            std::uint64_t seed);

struct FineTuneResult {
  EncoderParams encoder;
  ProbeModel probe;
  std::vector<double> losses;
};

// Same loop as the probe, but gradient also flows into a copy of the context encoder.
// The standardizer is frozen from the initial encoder. Its gains square into the
// encoder's curvature, so the encoder steps at lr * encoder_lr_scale / mean(gain^2).
FineTuneResult fine_tune(const ModelState& state, const Dataset& ds,
                         std::span<const std::size_t> rows, int epochs, double lr,
                         std::uint64_t seed, double encoder_lr_scale = 1.0);

// Mann-Whitney AUC, ties count one half. Empty when either label is absent.
std::optional<double> roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

struct AucSummary {
  std::vector<std::optional<double>> per_class;
  std::optional<double> macro;  // mean over defined classes
};

AucSummary multilabel_auc(const Tensor& scores, const Dataset& ds, std::span<const std::size_t> rows);

// Seeded per-label-pattern sampling of round(fraction * group size) rows.
std::vector<std::size_t> stratified_subset(const Dataset& ds, std::span<const std::size_t> pool,
                                           double fraction, std::uint64_t seed);

}  // namespace coboom
