#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include <json.hpp>

#include "coboom/data.hpp"
#include "coboom/model.hpp"
#include "coboom/objectives.hpp"
#include "coboom/optim.hpp"

namespace coboom {

struct RunConfig {
  std::string preset = "desk";
  ModelConfig model;
  LossWeights weights;
  AugmentConfig augment;
  OptimizerConfig optimizer;
  std::size_t batch_size = 16;
  std::size_t epochs = 30;
  std::size_t max_steps = 0;  // 0: epochs x batches per epoch
  double base_lr = 0.05;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // epochs; 0 disables intermediate checkpoints
  std::string data_path;
  std::string out_path;

  void validate() const;
};

// "desk", "paper" or "tiny" (the gradient-check configuration).
RunConfig preset_config(std::string_view name);

nlohmann::json to_json(const RunConfig& cfg);
// Overlays the keys present in `j` onto `cfg`; unknown keys are rejected.
void apply_json(RunConfig& cfg, const nlohmann::json& j);
// Starts from j["preset"] (default desk) and overlays the rest.
RunConfig config_from_json(const nlohmann::json& j);

}  // namespace coboom
