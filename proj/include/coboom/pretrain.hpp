#pragma once

#include <functional>
#include <vector>

#include <json.hpp>

#include "coboom/config.hpp"
#include "coboom/data.hpp"
#include "coboom/model.hpp"
#include "coboom/objectives.hpp"

namespace coboom {

struct MetricsRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double lr = 0.0;
  LossBreakdown parts;  // batch mean of the symmetric breakdown
  double perplexity = 0.0;

  nlohmann::json to_json() const;
};

struct PretrainResult {
  ModelState state;
  std::vector<MetricsRecord> metrics;
  std::size_t total_steps = 0;
  std::size_t steps_per_epoch = 0;
  // Over every assignment made during the last steps_per_epoch steps.
  double final_epoch_perplexity = 0.0;
};

struct PretrainHooks {
  std::function<void(const MetricsRecord&)> on_step;
  // Called after the last step of each completed epoch (1-based count).
  std::function<void(std::size_t epoch, const ModelState&)> on_epoch_end;
};

// Seeded shuffle per epoch; per batch: two views per sample, both directions,
// symmetric loss, backward, optimizer step at the cosine rate, EMA update.
PretrainResult pretrain(const RunConfig& cfg, const Dataset& ds, const PretrainHooks& hooks = {});
PretrainResult pretrain(const RunConfig& cfg, const Dataset& ds, ModelState initial,
                        const PretrainHooks& hooks = {});

std::size_t steps_per_epoch(const RunConfig& cfg, const Dataset& ds);

}  // namespace coboom
