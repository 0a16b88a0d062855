#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "coboom/diversifuse.hpp"
#include "coboom/grad_check.hpp"
#include "coboom/layers.hpp"
#include "coboom/vq.hpp"

namespace coboom {

enum class ReconNorm { mse, l2 };

struct ModelConfig {
  std::size_t image_size = 32;
  std::size_t dim = 64;  // token / codeword dimension D
  std::size_t codebook_size = 32;
  std::size_t heads = 4;
  std::size_t embed_dim = 32;
  std::size_t mlp_hidden = 64;
  std::vector<std::size_t> encoder_strides{2, 2, 2};
  double ema_momentum = 0.99;
  bool use_decoder = true;
  bool use_diversifuse = true;
  bool use_predictor = true;
  bool scale_scores = false;
  bool codebook_downstream_grad = false;
  ReconNorm recon_norm = ReconNorm::mse;

  // Throws ConfigError on an inconsistent combination.
  void validate() const;
  std::size_t token_grid() const;
  std::size_t token_count() const { return token_grid() * token_grid(); }
};

// Trainable bundle.
struct ThetaParams {
  EncoderParams encoder;             // context encoder
  MLPHead projection;                // g_theta
  std::optional<MLPHead> predictor;  // q_theta
  MLPHead fused_projection;          // p_theta
  std::optional<FusionParams> fusion;
  std::optional<DecoderParams> decoder;
  Codebook codebook;
};

// EMA bundle; mirrors theta.encoder and theta.projection, never takes gradient.
struct PhiParams {
  EncoderParams encoder;
  MLPHead projection;
};

struct ModelState {
  ThetaParams theta;
  PhiParams phi;
  double ema_momentum = 0.99;

  std::vector<NamedTensor> theta_parameters() const;
  std::vector<NamedTensor> phi_parameters() const;
  // theta then phi
  std::vector<NamedTensor> named_parameters() const;
  ModelState clone() const;
};

// phi starts as an exact copy of theta.
ModelState init_model(const ModelConfig& cfg, std::uint64_t seed);

// phi <- m * phi + (1 - m) * theta for every mirrored pair, values only.
void ema_update(ModelState& state);

struct ForwardOutputs {
  Tensor z_theta;
  Tensor z_phi;
  Tensor z_theta_prime;
  Tensor target_tokens;  // y_phi
  Tensor fused_tokens;   // y'_dc
  Tensor reconstruction;  // undefined when the decoder is disabled
  QuantizationResult quantization;
};

// Directional pass: x1 feeds the target branch and the quantizer, x2 the context
// encoder. `target_tokens` replaces the target encoder output when given; the
// gradient checker uses it to expose y_phi as a leaf.
ForwardOutputs forward_pass(const Tensor& x1, const Tensor& x2, const ModelState& state,
                            const ModelConfig& cfg, const Tensor& target_tokens = Tensor{});

}  // namespace coboom
