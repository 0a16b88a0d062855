#include <cmath>
#include <string>

#include "coboom/error.hpp"
#include "coboom/ops.hpp"
#include "coboom/random.hpp"
#include "coboom/vq.hpp"

namespace coboom {

namespace {
thread_local bool flip_commitment_grad = false;
}  // namespace

testing::ScopedCommitmentSignFault::ScopedCommitmentSignFault()
    : previous_(flip_commitment_grad) {
  flip_commitment_grad = true;
}
testing::ScopedCommitmentSignFault::~ScopedCommitmentSignFault() {
  flip_commitment_grad = previous_;
}

Codebook init_codebook(long long K, long long D, std::uint64_t seed) {
  if (K < 1 || D < 1) {
    throw ConfigError("codebook needs K >= 1 and D >= 1, got K=" + std::to_string(K) +
                      " D=" + std::to_string(D));
  }
  const auto k = static_cast<std::size_t>(K);
  const auto d = static_cast<std::size_t>(D);
  Rng rng(seed);
  const double bound = 1.0 / static_cast<double>(K);
  std::vector<double> values(k * d);
  for (double& v : values) v = rng.uniform(-bound, bound);
  Codebook cb{Tensor({k, d}, std::move(values))};
  cb.embeddings.set_requires_grad(true);
  return cb;
}

NearestCode nearest_codeword(std::span<const double> v, const Codebook& cb) {
  const std::size_t d = cb.dim();
  if (v.size() != d) {
    throw DimensionError("nearest_codeword: vector of length " + std::to_string(v.size()) +
                         " against codewords of dimension " + std::to_string(d));
  }
  const double* e = cb.embeddings.values().data();
  NearestCode best{0, 0.0};
  for (std::size_t k = 0; k < cb.size(); ++k) {
    double dist = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = v[j] - e[k * d + j];
      dist += diff * diff;
    }
    if (k == 0 || dist < best.sq_distance) best = {k, dist};
  }
  return best;
}

NearestCode nearest_codeword(const Tensor& v, const Codebook& cb) {
  if (v.rank() != 1) throw DimensionError("nearest_codeword: expected a vector, got " + shape_str(v.shape()));
  return nearest_codeword(v.values(), cb);
}

QuantizationResult quantize(const Tensor& tokens, const Codebook& cb) {
  if (tokens.rank() != 2 || tokens.dim(1) != cb.dim()) {
    throw DimensionError("quantize: tokens " + shape_str(tokens.shape()) + " vs codebook " +
                         shape_str(cb.embeddings.shape()));
  }
  const std::size_t n = tokens.dim(0), d = cb.dim();
  QuantizationResult result;
  result.indices.reserve(n);
  result.distances.reserve(n);
  std::vector<double> quantized(n * d);
  // Assignments are made on stop-gradient copies: under a replay tape they stay
  // fixed, like every other stop-gradient value.
  const Codebook frozen{stop_gradient(cb.embeddings)};
  const Tensor t = stop_gradient(tokens);
  const double* e = frozen.embeddings.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    const NearestCode hit = nearest_codeword(t.values().subspan(i * d, d), frozen);
    result.indices.push_back(hit.index);
    result.distances.push_back(hit.sq_distance);
    std::copy_n(e + hit.index * d, d, quantized.data() + i * d);
  }
  result.quantized = Tensor({n, d}, std::move(quantized));
  return result;
}

Tensor select_codewords(const QuantizationResult& result, const Codebook& cb) {
  const std::size_t n = result.indices.size(), k = cb.size();
  std::vector<double> onehot(n * k, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    if (result.indices[i] >= k) {
      throw ContractError("codeword index " + std::to_string(result.indices[i]) +
                          " out of range for K=" + std::to_string(k));
    }
    onehot[i * k + result.indices[i]] = 1.0;
  }
  return matmul(Tensor({n, k}, std::move(onehot)), cb.embeddings);
}

QuantizationLoss quantization_loss(const Tensor& tokens, const QuantizationResult& result,
                                   const Codebook& cb, double alpha_commit) {
  if (alpha_commit < 0.0) throw ConfigError("alpha_commit must be nonnegative");
  if (tokens.rank() != 2 || tokens.dim(0) != result.indices.size() || tokens.dim(1) != cb.dim()) {
    throw ContractError("quantization_loss: tokens " + shape_str(tokens.shape()) +
                        " do not match the quantization result");
  }
  const double n = static_cast<double>(tokens.dim(0));
  const Tensor chosen = select_codewords(result, cb);

  const Tensor cb_diff = sub(stop_gradient(tokens), chosen);
  Tensor l_cb = scale(sum(multiply(cb_diff, cb_diff)), 1.0 / n);

  const Tensor ce_diff = sub(tokens, stop_gradient(chosen));
  Tensor l_ce = scale(sum(multiply(ce_diff, ce_diff)), 1.0 / n);
  if (flip_commitment_grad) {
    l_ce = testing::negate_backward(l_ce);
  }

  Tensor total = add(l_cb, scale(l_ce, alpha_commit));
  return {std::move(l_cb), std::move(l_ce), std::move(total)};
}

std::vector<std::size_t> usage_histogram(std::span<const std::size_t> indices, std::size_t K) {
  std::vector<std::size_t> counts(K, 0);
  for (std::size_t idx : indices) {
    if (idx >= K) {
      throw ContractError("codeword index " + std::to_string(idx) + " out of range for K=" +
                          std::to_string(K));
    }
    ++counts[idx];
  }
  return counts;
}

double codebook_perplexity(std::span<const std::size_t> indices, std::size_t K) {
  if (indices.empty()) throw ContractError("codebook_perplexity: empty index list");
  const auto counts = usage_histogram(indices, K);
  const double n = static_cast<double>(indices.size());
  double entropy = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

}  // namespace coboom
