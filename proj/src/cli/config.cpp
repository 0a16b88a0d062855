#include "coboom/config.hpp"

#include <set>

#include "coboom/error.hpp"

namespace coboom {

void RunConfig::validate() const {
  model.validate();
  weights.validate();
  augment.validate();
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (epochs == 0 && max_steps == 0) throw ConfigError("epochs must be positive");
  if (!(base_lr > 0.0)) throw ConfigError("base_lr must be positive");
  if (optimizer.momentum < 0.0 || optimizer.weight_decay < 0.0) {
    throw ConfigError("momentum and weight_decay must be nonnegative");
  }
}

RunConfig preset_config(std::string_view name) {
  RunConfig c;
  c.preset = std::string(name);
  if (name == "desk") {
    c.optimizer.weight_decay = 5e-3;
    return c;
  }
  if (name == "paper") {
    c.model.image_size = 224;
    c.model.dim = 512;
    c.model.codebook_size = 1024;
    c.model.heads = 8;
    c.model.embed_dim = 256;
    c.model.mlp_hidden = 512;
    c.model.encoder_strides = {2, 2, 2, 2, 2};
    c.batch_size = 64;
    c.epochs = 300;
    c.base_lr = 0.02;
    c.optimizer.mode = OptimizerMode::lars;
    return c;
  }
  if (name == "tiny") {
    c.model.image_size = 8;
    c.model.dim = 8;
    c.model.codebook_size = 4;
    c.model.heads = 2;
    c.model.embed_dim = 8;
    c.model.mlp_hidden = 8;
    c.model.encoder_strides = {2, 2, 1};
    c.batch_size = 2;
    c.epochs = 1;
    return c;
  }
  throw ConfigError("unknown preset '" + std::string(name) + "' (expected desk, paper or tiny)");
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["preset"] = c.preset;
  j["image_size"] = c.model.image_size;
  j["D"] = c.model.dim;
  j["K"] = c.model.codebook_size;
  j["heads"] = c.model.heads;
  j["embed_dim"] = c.model.embed_dim;
  j["mlp_hidden"] = c.model.mlp_hidden;
  j["encoder_strides"] = c.model.encoder_strides;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["steps"] = c.max_steps;
  j["base_lr"] = c.base_lr;
  j["optimizer"] = c.optimizer.mode == OptimizerMode::lars ? "lars" : "sgd";
  j["momentum"] = c.optimizer.momentum;
  j["weight_decay"] = c.optimizer.weight_decay;
  j["ema_momentum"] = c.model.ema_momentum;
  j["alpha"] = c.weights.alpha;
  j["gamma"] = c.weights.gamma;
  j["alpha_commit"] = c.weights.alpha_commit;
  j["use_decoder"] = c.model.use_decoder;
  j["use_diversifuse"] = c.model.use_diversifuse;
  j["use_predictor"] = c.model.use_predictor;
  j["recon_norm"] = c.model.recon_norm == ReconNorm::l2 ? "l2" : "mse";
  j["scale_scores"] = c.model.scale_scores;
  j["codebook_downstream_grad"] = c.model.codebook_downstream_grad;
  j["crop_scale"] = {c.augment.crop_low, c.augment.crop_high};
  j["flip_prob"] = c.augment.flip_prob;
  j["noise_std"] = c.augment.noise_std;
  j["brightness_jitter"] = c.augment.brightness_jitter;
  j["seed"] = c.seed;
  j["checkpoint_every"] = c.checkpoint_every;
  j["paths"] = {{"data", c.data_path}, {"out", c.out_path}};
  return j;
}

void apply_json(RunConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "preset") c.preset = v.get<std::string>();
      else if (key == "image_size") c.model.image_size = v.get<std::size_t>();
      else if (key == "D") c.model.dim = v.get<std::size_t>();
      else if (key == "K") c.model.codebook_size = v.get<std::size_t>();
      else if (key == "heads") c.model.heads = v.get<std::size_t>();
      else if (key == "embed_dim") c.model.embed_dim = v.get<std::size_t>();
      else if (key == "mlp_hidden") c.model.mlp_hidden = v.get<std::size_t>();
      else if (key == "encoder_strides") c.model.encoder_strides = v.get<std::vector<std::size_t>>();
      else if (key == "batch_size") c.batch_size = v.get<std::size_t>();
      else if (key == "epochs") c.epochs = v.get<std::size_t>();
      else if (key == "steps") c.max_steps = v.get<std::size_t>();
      else if (key == "base_lr") c.base_lr = v.get<double>();
      else if (key == "optimizer") {
        const auto mode = v.get<std::string>();
        if (mode != "sgd" && mode != "lars") throw ConfigError("optimizer must be sgd or lars");
        c.optimizer.mode = mode == "lars" ? OptimizerMode::lars : OptimizerMode::sgd;
      } else if (key == "momentum") c.optimizer.momentum = v.get<double>();
      else if (key == "weight_decay") c.optimizer.weight_decay = v.get<double>();
      else if (key == "ema_momentum") c.model.ema_momentum = v.get<double>();
      else if (key == "alpha") c.weights.alpha = v.get<double>();
      else if (key == "gamma") c.weights.gamma = v.get<double>();
      else if (key == "alpha_commit") c.weights.alpha_commit = v.get<double>();
      else if (key == "use_decoder") c.model.use_decoder = v.get<bool>();
      else if (key == "use_diversifuse") c.model.use_diversifuse = v.get<bool>();
      else if (key == "use_predictor") c.model.use_predictor = v.get<bool>();
      else if (key == "recon_norm") {
        const auto norm = v.get<std::string>();
        if (norm != "mse" && norm != "l2") throw ConfigError("recon_norm must be mse or l2");
        c.model.recon_norm = norm == "l2" ? ReconNorm::l2 : ReconNorm::mse;
      } else if (key == "scale_scores") c.model.scale_scores = v.get<bool>();
      else if (key == "codebook_downstream_grad") c.model.codebook_downstream_grad = v.get<bool>();
      else if (key == "crop_scale") {
        const auto range = v.get<std::vector<double>>();
        if (range.size() != 2) throw ConfigError("crop_scale must be [low, high]");
        c.augment.crop_low = range[0];
        c.augment.crop_high = range[1];
      } else if (key == "flip_prob") c.augment.flip_prob = v.get<double>();
      else if (key == "noise_std") c.augment.noise_std = v.get<double>();
      else if (key == "brightness_jitter") c.augment.brightness_jitter = v.get<double>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "checkpoint_every") c.checkpoint_every = v.get<std::size_t>();
      else if (key == "paths") {
        if (v.contains("data")) c.data_path = v.at("data").get<std::string>();
        if (v.contains("out")) c.out_path = v.at("out").get<std::string>();
      } else {
        throw ConfigError("unknown configuration key '" + key + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("configuration: ") + e.what());
  }
}

RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c = preset_config(j.is_object() && j.contains("preset") ? j.at("preset").get<std::string>()
                                                                    : "desk");
  apply_json(c, j);
  return c;
}

}  // namespace coboom
