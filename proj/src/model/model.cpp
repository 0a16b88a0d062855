#include "coboom/model.hpp"

#include <string>

#include "coboom/error.hpp"
#include "coboom/ops.hpp"
#include "coboom/random.hpp"

namespace coboom {

void ModelConfig::validate() const {
  if (image_size == 0 || dim == 0 || codebook_size == 0 || embed_dim == 0 || mlp_hidden == 0) {
    throw ConfigError("model sizes must be positive");
  }
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError("heads (" + std::to_string(heads) + ") must divide D (" +
                      std::to_string(dim) + ")");
  }
  if (!(ema_momentum >= 0.0 && ema_momentum <= 1.0)) {
    throw ConfigError("ema_momentum must lie in [0, 1]");
  }
  const std::size_t grid = token_grid();
  if (use_decoder) {
    std::size_t side = grid;
    while (side < image_size) side *= 2;
    if (side != image_size) {
      throw ConfigError("decoder cannot restore image_size " + std::to_string(image_size) +
                        " from a " + std::to_string(grid) + "x" + std::to_string(grid) + " grid");
    }
  }
}

std::size_t ModelConfig::token_grid() const { return encoder_grid(image_size, encoder_strides); }

namespace {

void append_encoder(std::vector<NamedTensor>& out, const std::string& prefix,
                    const EncoderParams& enc) {
  for (std::size_t i = 0; i < enc.layers.size(); ++i) {
    const std::string base = prefix + ".conv" + std::to_string(i);
    out.push_back({base + ".weight", enc.layers[i].weight});
    out.push_back({base + ".bias", enc.layers[i].bias});
  }
}

void append_mlp(std::vector<NamedTensor>& out, const std::string& prefix, const MLPHead& head) {
  for (std::size_t i = 0; i < head.layers.size(); ++i) {
    const std::string base = prefix + ".fc" + std::to_string(i);
    out.push_back({base + ".weight", head.layers[i].weight});
    out.push_back({base + ".bias", head.layers[i].bias});
  }
}

Tensor frozen_copy(const Tensor& t) {
  Tensor c = t.clone();
  c.set_requires_grad(false);
  return c;
}

EncoderParams frozen_copy(const EncoderParams& enc) {
  EncoderParams out = clone(enc);
  for (auto& l : out.layers) {
    l.weight.set_requires_grad(false);
    l.bias.set_requires_grad(false);
  }
  return out;
}

MLPHead frozen_copy(const MLPHead& head) {
  MLPHead out = clone(head);
  for (auto& l : out.layers) {
    l.weight.set_requires_grad(false);
    l.bias.set_requires_grad(false);
  }
  return out;
}

std::uint64_t part_seed(std::uint64_t seed, const char* part) { return mix64(seed, hash_name(part)); }

}  // namespace

std::vector<NamedTensor> ModelState::theta_parameters() const {
  std::vector<NamedTensor> out;
  append_encoder(out, "theta.encoder", theta.encoder);
  append_mlp(out, "theta.projection", theta.projection);
  if (theta.predictor) append_mlp(out, "theta.predictor", *theta.predictor);
  append_mlp(out, "theta.fused_projection", theta.fused_projection);
  if (theta.fusion) {
    for (std::size_t h = 0; h < theta.fusion->heads; ++h) {
      const std::string base = "theta.fusion.head" + std::to_string(h);
      out.push_back({base + ".wq", theta.fusion->wq[h]});
      out.push_back({base + ".wk", theta.fusion->wk[h]});
      out.push_back({base + ".wv", theta.fusion->wv[h]});
    }
  }
  if (theta.decoder) {
    for (std::size_t i = 0; i < theta.decoder->stages.size(); ++i) {
      const std::string base = "theta.decoder.stage" + std::to_string(i);
      out.push_back({base + ".weight", theta.decoder->stages[i].weight});
      out.push_back({base + ".bias", theta.decoder->stages[i].bias});
    }
    out.push_back({"theta.decoder.output.weight", theta.decoder->output.weight});
    out.push_back({"theta.decoder.output.bias", theta.decoder->output.bias});
  }
  out.push_back({"theta.codebook.embeddings", theta.codebook.embeddings});
  return out;
}

std::vector<NamedTensor> ModelState::phi_parameters() const {
  std::vector<NamedTensor> out;
  append_encoder(out, "phi.encoder", phi.encoder);
  append_mlp(out, "phi.projection", phi.projection);
  return out;
}

std::vector<NamedTensor> ModelState::named_parameters() const {
  auto out = theta_parameters();
  auto phi_params = phi_parameters();
  out.insert(out.end(), phi_params.begin(), phi_params.end());
  return out;
}

ModelState ModelState::clone() const {
  ModelState s;
  s.ema_momentum = ema_momentum;
  s.theta.encoder = coboom::clone(theta.encoder);
  s.theta.projection = coboom::clone(theta.projection);
  if (theta.predictor) s.theta.predictor = coboom::clone(*theta.predictor);
  s.theta.fused_projection = coboom::clone(theta.fused_projection);
  if (theta.fusion) {
    FusionParams f = *theta.fusion;
    for (auto* group : {&f.wq, &f.wk, &f.wv}) {
      for (auto& t : *group) t = t.clone();
    }
    s.theta.fusion = std::move(f);
  }
  if (theta.decoder) {
    DecoderParams d = *theta.decoder;
    for (auto& st : d.stages) {
      st.weight = st.weight.clone();
      st.bias = st.bias.clone();
    }
    d.output.weight = d.output.weight.clone();
    d.output.bias = d.output.bias.clone();
    s.theta.decoder = std::move(d);
  }
  s.theta.codebook.embeddings = theta.codebook.embeddings.clone();
  s.phi.encoder = frozen_copy(phi.encoder);
  s.phi.projection = frozen_copy(phi.projection);
  return s;
}

ModelState init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelState s;
  s.ema_momentum = cfg.ema_momentum;
  const std::size_t grid = cfg.token_grid();
  s.theta.encoder =
      init_encoder(cfg.image_size, cfg.dim, cfg.encoder_strides, part_seed(seed, "encoder"));
  s.theta.projection = init_mlp(cfg.dim, cfg.mlp_hidden, cfg.embed_dim, part_seed(seed, "projection"));
  if (cfg.use_predictor) {
    s.theta.predictor =
        init_mlp(cfg.embed_dim, cfg.mlp_hidden, cfg.embed_dim, part_seed(seed, "predictor"));
  }
  s.theta.fused_projection =
      init_mlp(cfg.dim, cfg.mlp_hidden, cfg.embed_dim, part_seed(seed, "fused_projection"));
  if (cfg.use_diversifuse) {
    s.theta.fusion = init_fusion(cfg.dim, cfg.heads, cfg.scale_scores, part_seed(seed, "fusion"));
  }
  if (cfg.use_decoder) {
    s.theta.decoder = init_decoder(grid, cfg.image_size, cfg.dim, part_seed(seed, "decoder"));
  }
  s.theta.codebook = init_codebook(static_cast<long long>(cfg.codebook_size),
                                   static_cast<long long>(cfg.dim), part_seed(seed, "codebook"));
  s.phi.encoder = frozen_copy(s.theta.encoder);
  s.phi.projection = frozen_copy(s.theta.projection);
  return s;
}

void ema_update(ModelState& state) {
  const double m = state.ema_momentum;
  if (!(m >= 0.0 && m <= 1.0)) throw ContractError("ema momentum outside [0, 1]");
  std::vector<NamedTensor> online;
  append_encoder(online, "encoder", state.theta.encoder);
  append_mlp(online, "projection", state.theta.projection);
  std::vector<NamedTensor> target;
  append_encoder(target, "encoder", state.phi.encoder);
  append_mlp(target, "projection", state.phi.projection);
  if (online.size() != target.size()) {
    throw ContractError("ema_update: target bundle does not mirror the online bundle");
  }
  for (std::size_t i = 0; i < online.size(); ++i) {
    if (online[i].tensor.shape() != target[i].tensor.shape()) {
      throw ContractError("ema_update: shape mismatch at " + online[i].name + ": " +
                          shape_str(online[i].tensor.shape()) + " vs " +
                          shape_str(target[i].tensor.shape()));
    }
  }
  for (std::size_t i = 0; i < online.size(); ++i) {
    auto phi = target[i].tensor.mutable_values();
    const auto theta = online[i].tensor.values();
    for (std::size_t j = 0; j < phi.size(); ++j) phi[j] = m * phi[j] + (1.0 - m) * theta[j];
  }
}

ForwardOutputs forward_pass(const Tensor& x1, const Tensor& x2, const ModelState& state,
                            const ModelConfig& cfg, const Tensor& target_tokens) {
  if (cfg.use_diversifuse && !state.theta.fusion) {
    throw ConfigError("forward_pass: DiversiFuse enabled but the state has no fusion parameters");
  }
  if (cfg.use_decoder && !state.theta.decoder) {
    throw ConfigError("forward_pass: decoder enabled but the state has no decoder");
  }
  if (cfg.use_predictor && !state.theta.predictor) {
    throw ConfigError("forward_pass: predictor enabled but the state has no predictor");
  }
  const Shape image{1, cfg.image_size, cfg.image_size};
  if (x1.shape() != image || x2.shape() != image) {
    throw ConfigError("forward_pass: views " + shape_str(x1.shape()) + ", " +
                      shape_str(x2.shape()) + " expected " + shape_str(image));
  }
  if (state.theta.codebook.dim() != cfg.dim) {
    throw ConfigError("forward_pass: codebook dimension does not match D");
  }

  ForwardOutputs out;
  const Tensor y_theta = encode(state.theta.encoder, x2);
  out.target_tokens =
      target_tokens.defined() ? target_tokens : stop_gradient(encode(state.phi.encoder, x1));

  const Tensor g_theta = project(state.theta.projection, global_avg_pool(y_theta));
  out.z_theta = cfg.use_predictor ? project(*state.theta.predictor, g_theta) : g_theta;
  out.z_phi = project(state.phi.projection, global_avg_pool(out.target_tokens));

  out.quantization = quantize(out.target_tokens, state.theta.codebook);
  const Tensor y_d = cfg.codebook_downstream_grad
                         ? select_codewords(out.quantization, state.theta.codebook)
                         : out.quantization.quantized;

  out.fused_tokens = cfg.use_diversifuse ? fuse(y_d, out.target_tokens, *state.theta.fusion) : y_d;
  out.z_theta_prime = project(state.theta.fused_projection, global_avg_pool(out.fused_tokens));
  if (cfg.use_decoder) out.reconstruction = decode(*state.theta.decoder, out.fused_tokens);
  return out;
}

}  // namespace coboom
