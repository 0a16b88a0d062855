#include <algorithm>
#include <cmath>
#include <map>

#include "coboom/error.hpp"
#include "coboom/eval.hpp"
#include "coboom/ops.hpp"
#include "coboom/random.hpp"

namespace coboom {

Tensor ProbeModel::logits(const Tensor& features) const {
  return add(matmul(matmul(sub(features, centre), whiten), weight), bias);
}

void set_standardizer(ProbeModel& probe, const Tensor& features) {
  if (features.rank() != 2 || features.dim(0) == 0 || features.dim(1) != probe.weight.dim(0)) {
    throw DimensionError("set_standardizer: features " + shape_str(features.shape()));
  }
  const std::size_t n = features.dim(0), d = features.dim(1);
  const auto x = features.values();
  std::vector<double> mu(d, 0.0), var(d, 0.0), w(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) mu[j] += x[i * d + j];
  }
  for (double& m : mu) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) var[j] += (x[i * d + j] - mu[j]) * (x[i * d + j] - mu[j]);
  }
  double avg = 0.0;
  for (double& v : var) avg += (v /= static_cast<double>(n)) / static_cast<double>(d);
  // near-constant channels would otherwise get huge gains once fine-tuning moves them
  const double floor = 0.01 * avg + 1e-12;
  for (std::size_t j = 0; j < d; ++j) w[j * d + j] = 1.0 / std::sqrt(std::max(var[j], floor));
  probe.centre = Tensor({d}, std::move(mu));
  probe.whiten = Tensor({d, d}, std::move(w));
}

ProbeModel init_probe(std::size_t feature_dim, std::size_t classes, std::uint64_t seed) {
  Rng rng(mix64(seed, hash_name("probe")));
  std::vector<double> w(feature_dim * classes);
  for (double& v : w) v = rng.normal(0.0, 0.01);
  std::vector<double> eye(feature_dim * feature_dim, 0.0);
  for (std::size_t j = 0; j < feature_dim; ++j) eye[j * feature_dim + j] = 1.0;
  ProbeModel p{Tensor({feature_dim, classes}, std::move(w)), Tensor({classes}, 0.0),
               Tensor({feature_dim}, 0.0), Tensor({feature_dim, feature_dim}, std::move(eye))};
  p.weight.set_requires_grad(true);
  p.bias.set_requires_grad(true);
  return p;
}

Tensor extract_features(const EncoderParams& enc, const Dataset& ds,
                        std::span<const std::size_t> rows) {
  if (rows.empty()) throw ContractError("extract_features: no rows");
  std::vector<double> out;
  std::size_t width = 0;
  for (std::size_t r : rows) {
    const Tensor pooled = global_avg_pool(encode(enc, ds.samples.at(r).to_tensor()));
    width = pooled.numel();
    out.insert(out.end(), pooled.values().begin(), pooled.values().end());
  }
  return Tensor({rows.size(), width}, std::move(out));
}

Tensor label_matrix(const Dataset& ds, std::span<const std::size_t> rows) {
  std::vector<double> out;
  out.reserve(rows.size() * ds.classes);
  for (std::size_t r : rows) {
    for (auto f : ds.samples.at(r).labels) out.push_back(f ? 1.0 : 0.0);
  }
  return Tensor({rows.size(), ds.classes}, std::move(out));
}

namespace {

void descend(Tensor& t, double lr) {
  const auto g = t.grad_or_zero();
  auto v = t.mutable_values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= lr * g[i];
  t.zero_grad();
}

}  // namespace

ProbeFit train_linear_probe(const Tensor& features, const Tensor& labels, int epochs, double lr,
                            std::uint64_t seed) {
  if (features.rank() != 2 || labels.rank() != 2 || features.dim(0) != labels.dim(0)) {
    throw DimensionError("train_linear_probe: features " + shape_str(features.shape()) +
                         " vs labels " + shape_str(labels.shape()));
  }
  if (epochs < 0 || lr < 0.0) throw ConfigError("probe epochs and lr must be nonnegative");
  ProbeFit fit{init_probe(features.dim(1), labels.dim(1), seed), {}};
  set_standardizer(fit.model, features);
  const Tensor x = stop_gradient(features);
  for (int e = 0; e < epochs; ++e) {
    const Tensor loss = bce_with_logits(fit.model.logits(x), labels);
    fit.losses.push_back(loss.item());
    backward(loss);
    descend(fit.model.weight, lr);
    descend(fit.model.bias, lr);
  }
  fit.losses.push_back(bce_with_logits(fit.model.logits(x), labels).item());
  return fit;
}

FineTuneResult fine_tune(const ModelState& state, const Dataset& ds,
                         std::span<const std::size_t> rows, int epochs, double lr,
                         std::uint64_t seed, double encoder_lr_scale) {
  if (rows.empty()) throw ContractError("fine_tune: no labelled rows");
  if (epochs < 0 || lr < 0.0) throw ConfigError("fine-tune epochs and lr must be nonnegative");
  FineTuneResult res{clone(state.theta.encoder), init_probe(state.theta.encoder.layers.back().weight.dim(0), ds.classes, seed), {}};
  if (encoder_lr_scale < 0.0) throw ConfigError("encoder lr scale must be nonnegative");
  std::vector<Tensor> encoder_params;
  for (auto& l : res.encoder.layers) {
    l.weight.set_requires_grad(true);
    l.bias.set_requires_grad(true);
    encoder_params.push_back(l.weight);
    encoder_params.push_back(l.bias);
  }
  set_standardizer(res.probe, extract_features(res.encoder, ds, rows));
  const std::size_t d = res.probe.centre.numel();
  double gain2 = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double g = res.probe.whiten.values()[j * d + j];
    gain2 += g * g / static_cast<double>(d);
  }
  const double encoder_lr = lr * encoder_lr_scale / gain2;

  std::vector<Tensor> images, targets;
  for (std::size_t r : rows) {
    images.push_back(ds.samples.at(r).to_tensor());
    std::vector<double> t;
    for (auto f : ds.samples[r].labels) t.push_back(f ? 1.0 : 0.0);
    targets.emplace_back(Shape{1, ds.classes}, std::move(t));
  }
  auto batch_loss = [&] {
    Tensor total;
    for (std::size_t i = 0; i < images.size(); ++i) {
      const Tensor f = global_avg_pool(encode(res.encoder, images[i]));
      const Tensor l = bce_with_logits(res.probe.logits(reshape(f, {1, f.numel()})), targets[i]);
      total = total.defined() ? add(total, l) : l;
    }
    return scale(total, 1.0 / static_cast<double>(images.size()));
  };
  for (int e = 0; e < epochs; ++e) {
    const Tensor loss = batch_loss();
    res.losses.push_back(loss.item());
    backward(loss);
    for (auto& p : encoder_params) descend(p, encoder_lr);
    descend(res.probe.weight, lr);
    descend(res.probe.bias, lr);
  }
  res.losses.push_back(batch_loss().item());
  return res;
}

std::vector<std::size_t> stratified_subset(const Dataset& ds, std::span<const std::size_t> pool,
                                           double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ConfigError("label fraction must lie in (0, 1]");
  }
  std::map<std::vector<std::uint8_t>, std::vector<std::size_t>> groups;
  for (std::size_t r : pool) groups[ds.samples.at(r).labels].push_back(r);
  Rng rng(mix64(seed, hash_name("label-subset")));
  std::vector<std::size_t> out;
  for (auto& [pattern, members] : groups) {
    rng.shuffle(members.begin(), members.end());
    const auto take = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(members.size()) + 0.5));
    out.insert(out.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(std::min(take, members.size())));
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace coboom
