#include "coboom/objectives.hpp"

#include <cmath>

#include "coboom/error.hpp"
#include "coboom/ops.hpp"

namespace coboom {

void LossWeights::validate() const {
  if (alpha < 0.0 || gamma < 0.0 || alpha_commit < 0.0) {
    throw ConfigError("loss weights must be nonnegative");
  }
}

double LossBreakdown::recomposed(const LossWeights& w) const {
  return w.alpha * (l1 + l2) + (l_cb + w.alpha_commit * l_ce) + w.gamma * l_r;
}

LossBreakdown LossBreakdown::average(const LossBreakdown& a, const LossBreakdown& b) {
  auto mid = [](double x, double y) { return 0.5 * (x + y); };
  return {mid(a.l1, b.l1),   mid(a.l2, b.l2),       mid(a.l_cb, b.l_cb), mid(a.l_ce, b.l_ce),
          mid(a.l_q, b.l_q), mid(a.l_r, b.l_r),     mid(a.total, b.total),
          mid(a.cos1, b.cos1), mid(a.cos2, b.cos2)};
}

Tensor cosine_similarity(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("cosine_similarity: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const Tensor na = l2_norm(a);
  const Tensor nb = l2_norm(b);
  if (na.item() < 1e-12 || nb.item() < 1e-12) {
    throw DegenerateEmbeddingError("cosine_similarity: embedding norm below 1e-12 (collapsed or dead)");
  }
  return divide(sum(multiply(a, b)), multiply(na, nb));
}

Tensor similarity_loss(const Tensor& a, const Tensor& b) {
  return add(scale(cosine_similarity(a, b), -2.0), Tensor::scalar(2.0));
}

Tensor reconstruction_loss(const Tensor& x, const Tensor& x_prime, ReconNorm norm) {
  if (x.shape() != x_prime.shape()) {
    throw DimensionError("reconstruction_loss: " + shape_str(x.shape()) + " vs " +
                         shape_str(x_prime.shape()));
  }
  const Tensor diff = sub(x, x_prime);
  if (norm == ReconNorm::l2) return l2_norm(diff);
  return mean(multiply(diff, diff));
}

DirectionalLoss directional_loss(const ForwardOutputs& out, const Tensor& reconstruction_target,
                                 const Codebook& codebook, const LossWeights& w,
                                 const ModelConfig& cfg) {
  w.validate();
  const Tensor cos1 = cosine_similarity(out.z_theta, out.z_phi);
  const Tensor cos2 = cosine_similarity(out.z_theta, out.z_theta_prime);
  const Tensor l1 = add(scale(cos1, -2.0), Tensor::scalar(2.0));
  const Tensor l2 = add(scale(cos2, -2.0), Tensor::scalar(2.0));
  const QuantizationLoss q =
      quantization_loss(out.target_tokens, out.quantization, codebook, w.alpha_commit);

  Tensor total = add(scale(add(l1, l2), w.alpha), q.total);
  DirectionalLoss result;
  result.parts.l_r = 0.0;
  if (cfg.use_decoder) {
    if (!out.reconstruction.defined()) {
      throw ContractError("directional_loss: decoder enabled but no reconstruction was produced");
    }
    const Tensor l_r = reconstruction_loss(reconstruction_target, out.reconstruction, cfg.recon_norm);
    total = add(total, scale(l_r, w.gamma));
    result.parts.l_r = l_r.item();
  }
  result.parts.l1 = l1.item();
  result.parts.l2 = l2.item();
  result.parts.l_cb = q.codebook.item();
  result.parts.l_ce = q.commitment.item();
  result.parts.l_q = q.total.item();
  result.parts.cos1 = cos1.item();
  result.parts.cos2 = cos2.item();
  result.parts.total = total.item();
  result.total = std::move(total);
  return result;
}

double symmetric_loss(const LossBreakdown& forward, const LossBreakdown& swapped) {
  return (forward.total + swapped.total) / 2.0;
}

Tensor symmetric_loss(const Tensor& forward_total, const Tensor& swapped_total) {
  return scale(add(forward_total, swapped_total), 0.5);
}

SymmetricLoss symmetric_objective(const Tensor& x1, const Tensor& x2, const ModelState& state,
                                  const ModelConfig& cfg, const LossWeights& w) {
  const ForwardOutputs f12 = forward_pass(x1, x2, state, cfg);
  const DirectionalLoss d12 = directional_loss(f12, x1, state.theta.codebook, w, cfg);
  const ForwardOutputs f21 = forward_pass(x2, x1, state, cfg);
  const DirectionalLoss d21 = directional_loss(f21, x2, state.theta.codebook, w, cfg);
  SymmetricLoss out{symmetric_loss(d12.total, d21.total), LossBreakdown::average(d12.parts, d21.parts),
                    f12.quantization.indices};
  out.code_indices.insert(out.code_indices.end(), f21.quantization.indices.begin(),
                          f21.quantization.indices.end());
  return out;
}

}  // namespace coboom
