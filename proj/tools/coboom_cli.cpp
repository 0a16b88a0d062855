#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "coboom/checkpoint.hpp"
#include "coboom/commands.hpp"
#include "coboom/config.hpp"
#include "coboom/error.hpp"

namespace {

using namespace coboom;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string preset;
  std::string out;
};

RunConfig resolve_config(const Globals& g) {
  nlohmann::json j = nlohmann::json::object();
  if (!g.config.empty()) {
    std::ifstream f(g.config);
    if (!f) throw IoError("cannot open config " + g.config);
    try {
      j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(g.config + ": " + e.what());
    }
  }
  if (!g.preset.empty()) j["preset"] = g.preset;
  RunConfig cfg = config_from_json(j);
  if (g.seed) cfg.seed = *g.seed;
  if (!g.out.empty()) cfg.out_path = g.out;
  return cfg;
}

void emit(const nlohmann::json& j, const std::string& out) {
  if (out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_json(j, out);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"coboom: codebook-guided bootstrapping pre-training and evaluation"};
  app.require_subcommand(1);
  Globals g;
  auto add_globals = [&](CLI::App* cmd) {
    cmd->add_option("--config", g.config, "JSON run configuration");
    cmd->add_option("--seed", g.seed, "global seed");
    cmd->add_option("--preset", g.preset, "desk, paper or tiny")->check(CLI::IsMember({"desk", "paper", "tiny"}));
    cmd->add_option("--out", g.out, "output path");
  };

  SynthOptions synth;
  auto* c_synth = app.add_subcommand("synth", "write a synthetic dataset");
  c_synth->add_option("--n", synth.n, "number of images");
  c_synth->add_option("--classes", synth.classes, "number of classes");
  c_synth->add_option("--size", synth.size, "image side in pixels");
  add_globals(c_synth);

  std::string data;
  std::optional<std::size_t> steps, epochs_override, checkpoint_every;
  bool no_decoder = false, no_diversifuse = false, no_predictor = false;
  auto* c_train = app.add_subcommand("train", "pre-train and write checkpoint + metrics");
  c_train->add_option("--data", data, "dataset directory or manifest");
  c_train->add_option("--steps", steps, "optimizer steps (overrides epochs)");
  c_train->add_option("--epochs", epochs_override, "epochs");
  c_train->add_option("--checkpoint-every", checkpoint_every, "also checkpoint every N epochs");
  c_train->add_flag("--no-decoder", no_decoder, "drop the reconstruction branch");
  c_train->add_flag("--no-diversifuse", no_diversifuse, "drop the cross-attention fusion");
  c_train->add_flag("--no-predictor", no_predictor, "drop the predictor head");
  add_globals(c_train);

  std::string ckpt;
  EvalOptions eval;
  auto add_eval = [&](CLI::App* cmd) {
    cmd->add_option("--ckpt", ckpt, "checkpoint")->required();
    cmd->add_option("--data", data, "dataset directory or manifest")->required();
    cmd->add_option("--fraction", eval.fraction, "fraction of training labels used");
    cmd->add_option("--epochs", eval.epochs, "full-batch gradient steps");
    cmd->add_option("--lr", eval.lr, "learning rate");
    cmd->add_flag("--with-baseline", eval.with_baseline, "also evaluate the randomly initialised encoder");
    add_globals(cmd);
  };
  auto* c_probe = app.add_subcommand("probe", "linear probe on the frozen encoder");
  add_eval(c_probe);
  auto* c_finetune = app.add_subcommand("finetune", "fine-tune encoder and head");
  add_eval(c_finetune);

  GradcheckOptions gc;
  std::string fault;
  auto* c_grad = app.add_subcommand("gradcheck", "finite-difference check of the full loss");
  c_grad->add_option("--eps", gc.eps, "central difference step");
  c_grad->add_option("--pairs", gc.pairs, "random view pairs");
  c_grad->add_option("--inject-fault", fault)->group("")->check(CLI::IsMember({"commit-sign"}));
  add_globals(c_grad);

  auto* c_stats = app.add_subcommand("codebook-stats", "codeword usage histogram and perplexity");
  c_stats->add_option("--ckpt", ckpt, "checkpoint")->required();
  c_stats->add_option("--data", data, "dataset directory or manifest")->required();
  add_globals(c_stats);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*c_synth) {
      if (g.seed) synth.seed = *g.seed;
      synth.out = g.out;
      run_synth(synth);
      return 0;
    }
    if (*c_train) {
      RunConfig cfg = resolve_config(g);
      if (!data.empty()) cfg.data_path = data;
      if (steps) cfg.max_steps = *steps;
      if (epochs_override) cfg.epochs = *epochs_override;
      if (checkpoint_every) cfg.checkpoint_every = *checkpoint_every;
      if (no_decoder) cfg.model.use_decoder = false;
      if (no_diversifuse) cfg.model.use_diversifuse = false;
      if (no_predictor) cfg.model.use_predictor = false;
      const TrainOutputs res = run_train(cfg);
      const auto& m = res.result.metrics;
      nlohmann::json summary{{"checkpoint", res.checkpoint.string()},
                             {"metrics", res.metrics.string()},
                             {"steps", res.result.total_steps},
                             {"final_epoch_perplexity", res.result.final_epoch_perplexity}};
      if (!m.empty()) {
        summary["initial_total"] = m.front().parts.total;
        summary["final_total"] = m.back().parts.total;
      }
      std::cout << summary.dump(2) << '\n';
      return 0;
    }
    if (*c_probe || *c_finetune) {
      const Checkpoint ck = load_checkpoint(ckpt);
      if (g.seed) eval.seed = *g.seed;
      const Dataset ds = load_dataset_at(data);
      const nlohmann::json report = *c_probe ? probe_report(ck.state, ck.config, ds, eval)
                                             : finetune_report(ck.state, ck.config, ds, eval);
      emit(report, g.out);
      return 0;
    }
    if (*c_grad) {
      if (g.seed) gc.seed = *g.seed;
      gc.inject_commit_sign_fault = fault == "commit-sign";
      const GradReport r = run_gradcheck(gc);
      emit(gradcheck_json(r, gc), g.out);
      if (!r.passed(gc.tolerance)) {
        std::cerr << "gradcheck failed: " << r.worst_param << "[" << r.worst_index
                  << "] analytic " << r.worst_analytic << " numeric " << r.worst_numeric
                  << " (relative error " << r.max_rel_error << ")\n";
        return 3;
      }
      return 0;
    }
    if (*c_stats) {
      const Checkpoint ck = load_checkpoint(ckpt);
      emit(codebook_stats(ck.state, ck.config.model, load_dataset_at(data)), g.out);
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
