#include "coboom/optim.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "coboom/error.hpp"

namespace coboom {

namespace {

double norm(std::span<const double> v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

void check_sizes(std::span<const double> param, std::span<const double> grad,
                 std::span<const double> buffer) {
  if (param.size() != grad.size() || param.size() != buffer.size()) {
    throw ContractError("optimizer: parameter/gradient/buffer sizes differ (" +
                        std::to_string(param.size()) + ", " + std::to_string(grad.size()) + ", " +
                        std::to_string(buffer.size()) + ")");
  }
}

}  // namespace

double cosine_lr(long long step, long long total_steps, double base_lr) {
  if (total_steps < 1 || step < 0 || step > total_steps) {
    throw ContractError("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                        std::to_string(total_steps) + "]");
  }
  const double t = static_cast<double>(step) / static_cast<double>(total_steps);
  return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

void sgd_step(std::span<double> param, std::span<const double> grad, std::span<double> buffer,
              double lr, double momentum, double weight_decay) {
  check_sizes(param, grad, buffer);
  if (lr < 0.0) throw ContractError("sgd_step: negative learning rate");
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i] + weight_decay * param[i];
    buffer[i] = momentum * buffer[i] + g;
    param[i] -= lr * buffer[i];
  }
}

double lars_trust_ratio(std::span<const double> param, std::span<const double> grad,
                        double weight_decay, double eps) {
  const double pn = norm(param);
  if (pn <= 0.0) return 1.0;
  return pn / (norm(grad) + weight_decay * pn + eps);
}

void lars_step(std::span<double> param, std::span<const double> grad, std::span<double> buffer,
               double lr, double momentum, double weight_decay, double eps) {
  if (eps <= 0.0) throw ContractError("lars_step: eps must be positive");
  const double trust = lars_trust_ratio(param, grad, weight_decay, eps);
  sgd_step(param, grad, buffer, lr * trust, momentum, weight_decay);
}

Optimizer::Optimizer(OptimizerConfig config, std::vector<NamedTensor> params)
    : config_(config), params_(std::move(params)) {
  for (const auto& p : params_) {
    if (!p.tensor.requires_grad()) {
      throw ContractError("optimizer: parameter '" + p.name + "' does not take gradient");
    }
    buffers_.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Optimizer::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& t = params_[i].tensor;
    const std::vector<double> grad = t.grad_or_zero();
    auto values = t.mutable_values();
    if (config_.mode == OptimizerMode::lars && t.rank() > 1) {
      lars_step(values, grad, buffers_[i], lr, config_.momentum, config_.weight_decay,
                config_.lars_eps);
    } else {
      sgd_step(values, grad, buffers_[i], lr, config_.momentum, config_.weight_decay);
    }
  }
}

}  // namespace coboom
