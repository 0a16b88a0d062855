#pragma once

#include <cstdint>
#include <vector>

#include "coboom/tensor.hpp"

namespace coboom {

// Multi-head cross-attention: quantized tokens query, continuous tokens supply
// keys and values. Head i projects through wq[i], wk[i], wv[i], each [D, D/h].
struct FusionParams {
  std::size_t heads = 1;
  std::vector<Tensor> wq, wk, wv;
  bool scale_scores = false;

  std::size_t dim() const { return wq.front().dim(0); }
  std::size_t head_dim() const { return wq.front().dim(1); }
};

// Projections drawn i.i.d. N(0, 1/D).
FusionParams init_fusion(std::size_t dim, std::size_t heads, bool scale_scores, std::uint64_t seed);

// Q K^T, optionally divided by sqrt(d_h).
Tensor attention_scores(const Tensor& queries, const Tensor& keys, bool scale);
Tensor attention_weights(const Tensor& scores);

struct FuseResult {
  Tensor output;                 // [N, D]
  std::vector<Tensor> weights;   // one [N, N] row-stochastic matrix per head
};

FuseResult fuse_with_weights(const Tensor& quantized, const Tensor& continuous,
                             const FusionParams& params);
Tensor fuse(const Tensor& quantized, const Tensor& continuous, const FusionParams& params);

}  // namespace coboom
