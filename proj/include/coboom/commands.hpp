#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "coboom/config.hpp"
#include "coboom/data.hpp"
#include "coboom/grad_check.hpp"
#include "coboom/model.hpp"
#include "coboom/pretrain.hpp"

namespace coboom {

// Accepts either a dataset directory or the manifest.json inside it.
Dataset load_dataset_at(const std::filesystem::path& path);

struct SynthOptions {
  long long n = 500;
  long long classes = 2;
  long long size = 32;
  std::uint64_t seed = 7;
  std::filesystem::path out;
};

void run_synth(const SynthOptions& opt);

struct TrainOutputs {
  std::filesystem::path checkpoint;
  std::filesystem::path metrics;
  PretrainResult result;
};

// Reads cfg.data_path, writes checkpoint.bin, metrics.jsonl and config.json
// under cfg.out_path; with checkpoint_every = N also checkpoint_epoch<N>.bin.
TrainOutputs run_train(const RunConfig& cfg);

struct EvalOptions {
  double fraction = 0.1;
  std::uint64_t seed = 0;
  int epochs = 300;
  double lr = 0.1;
  bool with_baseline = false;
};

// Probe / fine-tune on a stratified fraction of the training split, AUC on the
// test split. The baseline re-runs the same protocol on the encoder as
// initialised from the checkpoint's own seed.
nlohmann::json probe_report(const ModelState& state, const RunConfig& cfg, const Dataset& ds,
                            const EvalOptions& opt);
nlohmann::json finetune_report(const ModelState& state, const RunConfig& cfg, const Dataset& ds,
                               const EvalOptions& opt);

struct GradcheckOptions {
  double eps = 1e-4;
  double tolerance = 1e-4;
  std::uint64_t seed = 0;
  std::size_t pairs = 2;
  bool inject_commit_sign_fault = false;
};

// Tiny preset, full symmetric loss over random view pairs. Besides the theta
// parameters, the target tokens entering the quantizer are checked as leaves:
// they are the only inputs through which the commitment term carries gradient.
GradReport run_gradcheck(const GradcheckOptions& opt);
nlohmann::json gradcheck_json(const GradReport& report, const GradcheckOptions& opt);

// Codeword usage of the target encoder's tokens over every sample of `ds`.
nlohmann::json codebook_stats(const ModelState& state, const ModelConfig& cfg, const Dataset& ds);

void write_json(const nlohmann::json& j, const std::filesystem::path& path);

}  // namespace coboom
