#include "coboom/commands.hpp"

#include <array>
#include <fstream>

#include "coboom/checkpoint.hpp"
#include "coboom/error.hpp"
#include "coboom/eval.hpp"
#include "coboom/objectives.hpp"
#include "coboom/ops.hpp"
#include "coboom/random.hpp"
#include "coboom/vq.hpp"

namespace coboom {

namespace fs = std::filesystem;

Dataset load_dataset_at(const fs::path& path) {
  if (path.empty()) throw ConfigError("no dataset path given");
  return load_dataset(fs::is_directory(path) ? path / "manifest.json" : path);
}

void write_json(const nlohmann::json& j, const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << j.dump(2) << '\n';
  if (!f) throw IoError("write failed: " + path.string());
}

void run_synth(const SynthOptions& opt) {
  if (opt.out.empty()) throw ConfigError("synth needs --out");
  write_dataset(generate_synthetic(opt.n, opt.classes, opt.size, opt.seed), opt.out);
}

TrainOutputs run_train(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.out_path.empty()) throw ConfigError("train needs an output directory");
  const Dataset ds = load_dataset_at(cfg.data_path);
  const fs::path out(cfg.out_path);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
  write_json(to_json(cfg), out / "config.json");

  TrainOutputs res;
  res.metrics = out / "metrics.jsonl";
  res.checkpoint = out / "checkpoint.bin";
  std::ofstream metrics(res.metrics, std::ios::binary | std::ios::trunc);
  if (!metrics) throw IoError("cannot write " + res.metrics.string());

  PretrainHooks hooks;
  hooks.on_step = [&](const MetricsRecord& r) {
    metrics << r.to_json().dump() << '\n';
    metrics.flush();
    if (!metrics) throw IoError("write failed: " + res.metrics.string());
  };
  if (cfg.checkpoint_every > 0) {
    hooks.on_epoch_end = [&](std::size_t epoch, const ModelState& s) {
      if (epoch % cfg.checkpoint_every == 0) {
        save_checkpoint(s, cfg, out / ("checkpoint_epoch" + std::to_string(epoch) + ".bin"));
      }
    };
  }
  res.result = pretrain(cfg, ds, hooks);
  save_checkpoint(res.result.state, cfg, res.checkpoint);
  return res;
}

namespace {

nlohmann::json auc_json(const AucSummary& s) {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& a : s.per_class) per.push_back(a ? nlohmann::json(*a) : nlohmann::json(nullptr));
  return per;
}

nlohmann::json macro_json(const AucSummary& s) {
  return s.macro ? nlohmann::json(*s.macro) : nlohmann::json(nullptr);
}

struct Rows {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

Rows eval_rows(const Dataset& ds, const EvalOptions& opt) {
  Rows r;
  const auto pool = ds.indices(Split::train);
  r.train = stratified_subset(ds, pool, opt.fraction, opt.seed);
  r.test = ds.indices(Split::test);
  if (r.train.empty()) throw ConfigError("label fraction selects no training samples");
  if (r.test.empty()) throw ConfigError("dataset has no test samples");
  return r;
}

AucSummary probe_auc(const EncoderParams& enc, const Dataset& ds, const Rows& rows,
                     const EvalOptions& opt) {
  const Tensor train_x = extract_features(enc, ds, rows.train);
  const ProbeFit fit = train_linear_probe(train_x, label_matrix(ds, rows.train), opt.epochs, opt.lr, opt.seed);
  const Tensor scores = fit.model.logits(extract_features(enc, ds, rows.test));
  return multilabel_auc(scores, ds, rows.test);
}

AucSummary finetune_auc(const ModelState& state, const Dataset& ds, const Rows& rows,
                        const EvalOptions& opt) {
  const FineTuneResult ft = fine_tune(state, ds, rows.train, opt.epochs, opt.lr, opt.seed);
  const Tensor scores = ft.probe.logits(extract_features(ft.encoder, ds, rows.test));
  return multilabel_auc(scores, ds, rows.test);
}

nlohmann::json base_report(const char* protocol, const AucSummary& s, const Rows& rows,
                           const EvalOptions& opt) {
  return {{"protocol", protocol},
          {"label_fraction", opt.fraction},
          {"per_class_auc", auc_json(s)},
          {"macro_auc", macro_json(s)},
          {"n_train", rows.train.size()},
          {"n_test", rows.test.size()},
          {"seed", opt.seed}};
}

void check_dataset(const RunConfig& cfg, const Dataset& ds) {
  if (ds.image_size != cfg.model.image_size) {
    throw ConfigError("dataset images are " + std::to_string(ds.image_size) +
                      " pixels but the checkpoint expects " + std::to_string(cfg.model.image_size));
  }
}

}  // namespace

nlohmann::json probe_report(const ModelState& state, const RunConfig& cfg, const Dataset& ds,
                            const EvalOptions& opt) {
  check_dataset(cfg, ds);
  const Rows rows = eval_rows(ds, opt);
  nlohmann::json j = base_report("linear_probe", probe_auc(state.theta.encoder, ds, rows, opt), rows, opt);
  if (opt.with_baseline) {
    const ModelState fresh = init_model(cfg.model, cfg.seed);
    j["random_init_macro_auc"] = macro_json(probe_auc(fresh.theta.encoder, ds, rows, opt));
  }
  return j;
}

nlohmann::json finetune_report(const ModelState& state, const RunConfig& cfg, const Dataset& ds,
                               const EvalOptions& opt) {
  check_dataset(cfg, ds);
  const Rows rows = eval_rows(ds, opt);
  nlohmann::json j = base_report("fine_tune", finetune_auc(state, ds, rows, opt), rows, opt);
  if (opt.with_baseline) {
    const ModelState fresh = init_model(cfg.model, cfg.seed);
    j["random_init_macro_auc"] = macro_json(finetune_auc(fresh, ds, rows, opt));
  }
  return j;
}

GradReport run_gradcheck(const GradcheckOptions& opt) {
  if (!(opt.eps >= 1e-6 && opt.eps <= 1e-3)) {
    throw ContractError("gradcheck eps " + std::to_string(opt.eps) + " outside [1e-6, 1e-3]");
  }
  if (opt.pairs == 0) throw ConfigError("gradcheck needs at least one view pair");
  const RunConfig cfg = preset_config("tiny");
  const ModelConfig& mc = cfg.model;
  ModelState state = init_model(mc, opt.seed);

  Rng rng(mix64(opt.seed, hash_name("gradcheck-views")));
  // Zero biases put many ReLU inputs exactly on the kink; check at a generic point.
  for (auto& p : state.named_parameters()) {
    if (p.tensor.rank() != 1) continue;
    for (double& v : p.tensor.mutable_values()) v = rng.uniform(-0.1, 0.1);
  }
  const Shape image{1, mc.image_size, mc.image_size};
  std::vector<std::array<Tensor, 2>> views;
  for (std::size_t p = 0; p < opt.pairs; ++p) {
    std::array<Tensor, 2> v;
    for (auto& x : v) {
      std::vector<double> px(mc.image_size * mc.image_size);
      for (double& q : px) q = rng.uniform();
      x = Tensor(image, std::move(px));
    }
    views.push_back(std::move(v));
  }

  std::vector<NamedTensor> params = state.theta_parameters();
  // targets[p][d]: tokens of the target view for direction d of pair p
  std::vector<std::array<Tensor, 2>> targets(opt.pairs);
  for (std::size_t p = 0; p < opt.pairs; ++p) {
    for (int d = 0; d < 2; ++d) {
      const Tensor y = encode(state.phi.encoder, views[p][d]);
      Tensor leaf(y.shape(), std::vector<double>(y.values().begin(), y.values().end()));
      leaf.set_requires_grad(true);
      targets[p][d] = leaf;
      params.push_back({"quantizer.input[" + std::to_string(p) + "]." + (d == 0 ? "12" : "21"), leaf});
    }
  }

  auto loss_fn = [&]() {
    Tensor total;
    for (std::size_t p = 0; p < opt.pairs; ++p) {
      std::array<Tensor, 2> dir;
      for (int d = 0; d < 2; ++d) {
        const Tensor& xa = views[p][d];
        const Tensor& xb = views[p][1 - d];
        const ForwardOutputs f = forward_pass(xa, xb, state, mc, targets[p][d]);
        dir[d] = directional_loss(f, xa, state.theta.codebook, cfg.weights, mc).total;
      }
      const Tensor pair = symmetric_loss(dir[0], dir[1]);
      total = total.defined() ? add(total, pair) : pair;
    }
    return scale(total, 1.0 / static_cast<double>(opt.pairs));
  };

  if (opt.inject_commit_sign_fault) {
    testing::ScopedCommitmentSignFault fault;
    return grad_check(loss_fn, params, opt.eps);
  }
  return grad_check(loss_fn, params, opt.eps);
}

nlohmann::json gradcheck_json(const GradReport& r, const GradcheckOptions& opt) {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& e : r.per_param) per[e.name] = e.max_rel_error;
  return {{"passed", r.passed(opt.tolerance)},
          {"max_rel_error", r.max_rel_error},
          {"tolerance", opt.tolerance},
          {"eps", opt.eps},
          {"coordinates", r.coordinates},
          {"retried_smaller_eps", r.retried},
          {"nonsmooth", r.nonsmooth},
          {"worst_param", r.worst_param},
          {"worst_index", r.worst_index},
          {"analytic", r.worst_analytic},
          {"numeric", r.worst_numeric},
          {"per_param", per}};
}

nlohmann::json codebook_stats(const ModelState& state, const ModelConfig& cfg, const Dataset& ds) {
  if (ds.image_size != cfg.image_size) throw ConfigError("dataset image size does not match the checkpoint");
  std::vector<std::size_t> codes;
  for (const auto& s : ds.samples) {
    const QuantizationResult q = quantize(encode(state.phi.encoder, s.to_tensor()), state.theta.codebook);
    codes.insert(codes.end(), q.indices.begin(), q.indices.end());
  }
  const auto hist = usage_histogram(codes, cfg.codebook_size);
  std::size_t dead = 0;
  for (auto h : hist) dead += h == 0;
  return {{"K", cfg.codebook_size},
          {"tokens", codes.size()},
          {"histogram", hist},
          {"perplexity", codebook_perplexity(codes, cfg.codebook_size)},
          {"dead_codes", dead}};
}

}  // namespace coboom
