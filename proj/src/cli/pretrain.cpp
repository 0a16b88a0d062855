#include "coboom/pretrain.hpp"

#include <cmath>
#include <deque>

#include "coboom/error.hpp"
#include "coboom/ops.hpp"
#include "coboom/optim.hpp"
#include "coboom/random.hpp"

namespace coboom {

nlohmann::json MetricsRecord::to_json() const {
  return {{"step", step},          {"epoch", epoch},        {"lr", lr},
          {"l1", parts.l1},        {"l2", parts.l2},        {"l_cb", parts.l_cb},
          {"l_ce", parts.l_ce},    {"l_q", parts.l_q},      {"l_r", parts.l_r},
          {"total", parts.total},  {"cos1", parts.cos1},    {"cos2", parts.cos2},
          {"perplexity", perplexity}};
}

std::size_t steps_per_epoch(const RunConfig& cfg, const Dataset& ds) {
  const std::size_t n = ds.indices(Split::train).size();
  if (n == 0) throw ConfigError("dataset has no training samples");
  return (n + cfg.batch_size - 1) / cfg.batch_size;
}

PretrainResult pretrain(const RunConfig& cfg, const Dataset& ds, const PretrainHooks& hooks) {
  cfg.validate();
  return pretrain(cfg, ds, init_model(cfg.model, cfg.seed), hooks);
}

namespace {

void accumulate(LossBreakdown& acc, const LossBreakdown& x, double w) {
  acc.l1 += w * x.l1;
  acc.l2 += w * x.l2;
  acc.l_cb += w * x.l_cb;
  acc.l_ce += w * x.l_ce;
  acc.l_q += w * x.l_q;
  acc.l_r += w * x.l_r;
  acc.total += w * x.total;
  acc.cos1 += w * x.cos1;
  acc.cos2 += w * x.cos2;
}

bool finite(const LossBreakdown& b) {
  for (double v : {b.l1, b.l2, b.l_cb, b.l_ce, b.l_q, b.l_r, b.total}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

PretrainResult pretrain(const RunConfig& cfg, const Dataset& ds, ModelState initial,
                        const PretrainHooks& hooks) {
  cfg.validate();
  if (ds.image_size != cfg.model.image_size) {
    throw ConfigError("dataset images are " + std::to_string(ds.image_size) +
                      " pixels but the configuration expects " + std::to_string(cfg.model.image_size));
  }
  PretrainResult result;
  result.state = std::move(initial);
  result.state.ema_momentum = cfg.model.ema_momentum;
  const std::vector<std::size_t> train = ds.indices(Split::train);
  result.steps_per_epoch = steps_per_epoch(cfg, ds);
  result.total_steps = cfg.max_steps ? cfg.max_steps : cfg.epochs * result.steps_per_epoch;

  std::vector<NamedTensor> params = result.state.theta_parameters();
  Optimizer opt(cfg.optimizer, params);
  std::deque<std::vector<std::size_t>> recent_codes;

  std::vector<std::size_t> order;
  for (std::size_t step = 0; step < result.total_steps; ++step) {
    const std::size_t epoch = step / result.steps_per_epoch;
    const std::size_t batch = step % result.steps_per_epoch;
    if (batch == 0) {
      order = train;
      Rng(mix64(cfg.seed, hash_name("epoch-order"), epoch)).shuffle(order.begin(), order.end());
    }
    const std::size_t begin = batch * cfg.batch_size;
    const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
    const double weight = 1.0 / static_cast<double>(end - begin);

    MetricsRecord rec;
    rec.step = step;
    rec.epoch = epoch;
    rec.lr = cosine_lr(static_cast<long long>(step), static_cast<long long>(result.total_steps), cfg.base_lr);

    Tensor loss;
    std::vector<std::size_t> codes;
    try {
      for (std::size_t b = begin; b < end; ++b) {
        const std::size_t idx = order[b];
        const ViewPair views = augment_pair(ds.samples[idx], cfg.augment, RngStream{cfg.seed, idx, epoch});
        SymmetricLoss sym = symmetric_objective(views.x1, views.x2, result.state, cfg.model, cfg.weights);
        accumulate(rec.parts, sym.parts, weight);
        codes.insert(codes.end(), sym.code_indices.begin(), sym.code_indices.end());
        loss = loss.defined() ? add(loss, sym.total) : sym.total;
      }
      loss = scale(loss, weight);
    } catch (const NumericError& e) {
      throw NumericError("step " + std::to_string(step) + ": " + e.what() +
                         "; partial breakdown " + rec.to_json().dump());
    }
    if (!finite(rec.parts)) {
      throw NumericError("non-finite loss at step " + std::to_string(step) + ": " + rec.to_json().dump());
    }
    rec.perplexity = codebook_perplexity(codes, cfg.model.codebook_size);

    for (auto& p : params) p.tensor.zero_grad();
    backward(loss);
    opt.step(rec.lr);
    ema_update(result.state);

    recent_codes.push_back(std::move(codes));
    if (recent_codes.size() > result.steps_per_epoch) recent_codes.pop_front();
    if (hooks.on_step) hooks.on_step(rec);
    result.metrics.push_back(rec);
    if (hooks.on_epoch_end && (step + 1) % result.steps_per_epoch == 0) {
      hooks.on_epoch_end((step + 1) / result.steps_per_epoch, result.state);
    }
  }
  for (auto& p : params) p.tensor.zero_grad();

  std::vector<std::size_t> all;
  for (const auto& c : recent_codes) all.insert(all.end(), c.begin(), c.end());
  if (!all.empty()) result.final_epoch_perplexity = codebook_perplexity(all, cfg.model.codebook_size);
  return result;
}

}  // namespace coboom
