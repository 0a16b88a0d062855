#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "coboom/tensor.hpp"

namespace coboom {

// K x D table of codewords. The embeddings tensor is a trainable leaf.
struct Codebook {
  Tensor embeddings;

  std::size_t size() const { return embeddings.dim(0); }
  std::size_t dim() const { return embeddings.dim(1); }
};

// Entries i.i.d. uniform on [-1/K, 1/K].
Codebook init_codebook(long long K, long long D, std::uint64_t seed);

struct NearestCode {
  std::size_t index = 0;
  double sq_distance = 0.0;
};

// Exhaustive scan; ties resolve to the lowest index.
NearestCode nearest_codeword(std::span<const double> v, const Codebook& cb);
NearestCode nearest_codeword(const Tensor& v, const Codebook& cb);

struct QuantizationResult {
  std::vector<std::size_t> indices;
  Tensor quantized;  // [N, D] copies of the chosen codewords; not connected to any graph
  std::vector<double> distances;
};

QuantizationResult quantize(const Tensor& tokens, const Codebook& cb);

// Rows of the codebook picked by `result`, as a one-hot [N, K] x [K, D] product so
// that gradient reaches the embeddings.
Tensor select_codewords(const QuantizationResult& result, const Codebook& cb);

struct QuantizationLoss {
  Tensor codebook;    // l_cb: mean ||sg(token) - e||^2, trains the embeddings only
  Tensor commitment;  // l_ce: mean ||token - sg(e)||^2, trains the tokens only
  Tensor total;       // l_cb + alpha_commit * l_ce
};

QuantizationLoss quantization_loss(const Tensor& tokens, const QuantizationResult& result,
                                   const Codebook& cb, double alpha_commit);

double codebook_perplexity(std::span<const std::size_t> indices, std::size_t K);
std::vector<std::size_t> usage_histogram(std::span<const std::size_t> indices, std::size_t K);

namespace testing {

// Fault fixture for the gradient checker: while alive, the commitment term keeps
// its value but back-propagates with the wrong sign on this thread.
class ScopedCommitmentSignFault {
 public:
  ScopedCommitmentSignFault();
  ~ScopedCommitmentSignFault();
  ScopedCommitmentSignFault(const ScopedCommitmentSignFault&) = delete;
  ScopedCommitmentSignFault& operator=(const ScopedCommitmentSignFault&) = delete;

 private:
  bool previous_;
};

}  // namespace testing

}  // namespace coboom
