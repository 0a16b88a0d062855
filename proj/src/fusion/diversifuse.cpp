#include "coboom/diversifuse.hpp"

#include <cmath>
#include <string>

#include "coboom/error.hpp"
#include "coboom/ops.hpp"
#include "coboom/random.hpp"

namespace coboom {

FusionParams init_fusion(std::size_t dim, std::size_t heads, bool scale_scores, std::uint64_t seed) {
  if (heads == 0 || dim == 0 || dim % heads != 0) {
    throw ConfigError("fusion: " + std::to_string(heads) + " heads do not divide dimension " +
                      std::to_string(dim));
  }
  const std::size_t dh = dim / heads;
  const double stddev = 1.0 / std::sqrt(static_cast<double>(dim));
  FusionParams p;
  p.heads = heads;
  p.scale_scores = scale_scores;
  Rng rng(seed);
  auto draw = [&] {
    std::vector<double> v(dim * dh);
    for (double& x : v) x = rng.normal(0.0, stddev);
    Tensor t({dim, dh}, std::move(v));
    t.set_requires_grad(true);
    return t;
  };
  for (std::size_t h = 0; h < heads; ++h) {
    p.wq.push_back(draw());
    p.wk.push_back(draw());
    p.wv.push_back(draw());
  }
  return p;
}

Tensor attention_scores(const Tensor& queries, const Tensor& keys, bool scale) {
  if (queries.rank() != 2 || keys.rank() != 2 || queries.dim(1) != keys.dim(1)) {
    throw DimensionError("attention_scores: queries " + shape_str(queries.shape()) + " vs keys " +
                         shape_str(keys.shape()));
  }
  Tensor s = matmul(queries, transpose(keys));
  if (scale) s = coboom::scale(s, 1.0 / std::sqrt(static_cast<double>(queries.dim(1))));
  return s;
}

Tensor attention_weights(const Tensor& scores) {
  if (scores.rank() != 2 || scores.dim(0) != scores.dim(1)) {
    throw DimensionError("attention_weights: expected a square matrix, got " +
                         shape_str(scores.shape()));
  }
  return softmax_rows(scores);
}

FuseResult fuse_with_weights(const Tensor& quantized, const Tensor& continuous,
                             const FusionParams& params) {
  if (params.heads == 0 || params.wq.size() != params.heads || params.wk.size() != params.heads ||
      params.wv.size() != params.heads) {
    throw ConfigError("fusion: projection count does not match head count");
  }
  const std::size_t d = params.dim();
  if (d % params.heads != 0 || params.head_dim() * params.heads != d) {
    throw ConfigError("fusion: heads must divide the token dimension");
  }
  if (quantized.rank() != 2 || continuous.shape() != quantized.shape() || quantized.dim(1) != d) {
    throw DimensionError("fusion: inputs " + shape_str(quantized.shape()) + " and " +
                      shape_str(continuous.shape()) + " do not match dimension " +
                      std::to_string(d));
  }
  FuseResult result;
  std::vector<Tensor> heads;
  for (std::size_t h = 0; h < params.heads; ++h) {
    const Tensor q = matmul(quantized, params.wq[h]);
    const Tensor k = matmul(continuous, params.wk[h]);
    const Tensor v = matmul(continuous, params.wv[h]);
    Tensor w = attention_weights(attention_scores(q, k, params.scale_scores));
    heads.push_back(matmul(w, v));
    result.weights.push_back(std::move(w));
  }
  result.output = concat_last(heads);
  return result;
}

Tensor fuse(const Tensor& quantized, const Tensor& continuous, const FusionParams& params) {
  return fuse_with_weights(quantized, continuous, params).output;
}

}  // namespace coboom
