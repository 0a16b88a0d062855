#pragma once

#include <span>
#include <vector>

#include "coboom/grad_check.hpp"
#include "coboom/tensor.hpp"

namespace coboom {

// base_lr * 0.5 * (1 + cos(pi * step / total_steps)), no restarts.
double cosine_lr(long long step, long long total_steps, double base_lr);

// g' = grad + wd * param; buf = momentum * buf + g'; param -= lr * buf
void sgd_step(std::span<double> param, std::span<const double> grad, std::span<double> buffer,
              double lr, double momentum, double weight_decay);

// ||p|| / (||g|| + wd ||p|| + eps), or 1 for a zero-norm parameter.
double lars_trust_ratio(std::span<const double> param, std::span<const double> grad,
                        double weight_decay, double eps);

void lars_step(std::span<double> param, std::span<const double> grad, std::span<double> buffer,
               double lr, double momentum, double weight_decay, double eps = 1e-9);

enum class OptimizerMode { sgd, lars };

struct OptimizerConfig {
  OptimizerMode mode = OptimizerMode::sgd;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double lars_eps = 1e-9;
};

// Momentum buffers for a fixed parameter list. Under LARS, rank-1 tensors
// (biases) skip trust scaling.
class Optimizer {
 public:
  Optimizer(OptimizerConfig config, std::vector<NamedTensor> params);

  // Parameters without a gradient are treated as having a zero gradient.
  void step(double lr);

  const OptimizerConfig& config() const { return config_; }

 private:
  OptimizerConfig config_;
  std::vector<NamedTensor> params_;
  std::vector<std::vector<double>> buffers_;
};

}  // namespace coboom
