#pragma once

#include <vector>

#include "coboom/tensor.hpp"

// Differentiable operation set. Every model component is composed from these.
namespace coboom {

Tensor matmul(const Tensor& a, const Tensor& b);

// input [C_in, H, W], kernels [C_out, C_in, kH, kW], bias [C_out] or undefined.
Tensor conv2d(const Tensor& input, const Tensor& kernels, const Tensor& bias, std::size_t stride,
              std::size_t pad);
inline Tensor conv2d(const Tensor& input, const Tensor& kernels, std::size_t stride,
                     std::size_t pad) {
  return conv2d(input, kernels, Tensor{}, stride, pad);
}

// Nearest-neighbour x2 upsampling of a [C, H, W] map.
Tensor upsample_nearest2x(const Tensor& x);

Tensor relu(const Tensor& x);

// Elementwise sum. `b` may also match a trailing suffix of a's shape (bias
// broadcast), including the scalar shape {}.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor multiply(const Tensor& a, const Tensor& b);
// `b` is either the same shape as `a` or a single element.
Tensor divide(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Column mean of an [N, D] matrix, giving [D].
Tensor mean_rows(const Tensor& x);

Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x);
Tensor concat_last(const std::vector<Tensor>& parts);

// Euclidean norm over all elements, as a scalar.
Tensor l2_norm(const Tensor& x);

Tensor softmax_rows(const Tensor& x);

Tensor stop_gradient(const Tensor& x);

// Mean sigmoid cross-entropy between logits and {0,1} targets of the same shape.
Tensor bce_with_logits(const Tensor& logits, const Tensor& targets);

// While alive, stop_gradient outputs are recorded (first evaluation) and then
// replayed in call order, so repeated evaluations under perturbed inputs treat
// every stop-gradient value as the constant backward() assumed. ReLU sign
// patterns are recorded too; a replay that lands on the other side of a kink
// sets kink_crossed().
class ScopedStopGradientTape {
 public:
  ScopedStopGradientTape();
  ~ScopedStopGradientTape();
  ScopedStopGradientTape(const ScopedStopGradientTape&) = delete;
  ScopedStopGradientTape& operator=(const ScopedStopGradientTape&) = delete;

  // Ends recording; each later evaluation replays from the first entry.
  void start_replay();
  void rewind();
  std::size_t size() const { return values_.size(); }
  bool kink_crossed() const { return kink_crossed_; }

 private:
  friend Tensor stop_gradient(const Tensor& x);
  friend Tensor relu(const Tensor& x);
  ScopedStopGradientTape* previous_;
  std::vector<std::vector<double>> values_;
  std::vector<std::vector<bool>> masks_;
  bool replay_ = false;
  std::size_t cursor_ = 0;
  std::size_t mask_cursor_ = 0;
  bool kink_crossed_ = false;
};

namespace testing {
// Identity forward pass whose backward negates the gradient; fault injection only.
Tensor negate_backward(const Tensor& x);
}  // namespace testing

}  // namespace coboom
