#pragma once

#include "coboom/model.hpp"

namespace coboom {

struct LossWeights {
  double alpha = 0.5;         // similarity terms
  double gamma = 0.5;         // reconstruction
  double alpha_commit = 0.5;  // commitment weight inside L_q

  void validate() const;
};

struct LossBreakdown {
  double l1 = 0.0;
  double l2 = 0.0;
  double l_cb = 0.0;
  double l_ce = 0.0;
  double l_q = 0.0;
  double l_r = 0.0;
  double total = 0.0;
  // Raw cosine similarities behind l1 and l2.
  double cos1 = 0.0;
  double cos2 = 0.0;

  // alpha * (l1 + l2) + l_q + gamma * l_r
  double recomposed(const LossWeights& w) const;
  // Elementwise mean of the two breakdowns.
  static LossBreakdown average(const LossBreakdown& a, const LossBreakdown& b);
};

// Throws DegenerateEmbeddingError when either norm is below 1e-12.
Tensor cosine_similarity(const Tensor& a, const Tensor& b);
// 2 - 2 cos(a, b)
Tensor similarity_loss(const Tensor& a, const Tensor& b);
Tensor reconstruction_loss(const Tensor& x, const Tensor& x_prime, ReconNorm norm = ReconNorm::mse);

struct DirectionalLoss {
  Tensor total;
  LossBreakdown parts;
};

// `reconstruction_target` is the view the target branch consumed (x1).
DirectionalLoss directional_loss(const ForwardOutputs& out, const Tensor& reconstruction_target,
                                 const Codebook& codebook, const LossWeights& w,
                                 const ModelConfig& cfg);

double symmetric_loss(const LossBreakdown& forward, const LossBreakdown& swapped);
Tensor symmetric_loss(const Tensor& forward_total, const Tensor& swapped_total);

struct SymmetricLoss {
  Tensor total;
  LossBreakdown parts;  // mean of the two directions
  std::vector<std::size_t> code_indices;  // codeword assignments from both directions
};

// Both directions: (x1 -> target, x2 -> context) and the swap.
SymmetricLoss symmetric_objective(const Tensor& x1, const Tensor& x2, const ModelState& state,
                                  const ModelConfig& cfg, const LossWeights& w);

}  // namespace coboom
