#pragma once

#include <functional>
#include <string>
#include <vector>

#include "coboom/tensor.hpp"

namespace coboom {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct GradReport {
  struct Entry {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
  };
  std::vector<Entry> per_param;
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t coordinates = 0;
  // Coordinates where every sanctioned step still crossed a ReLU kink; these
  // are listed, not compared.
  std::size_t nonsmooth = 0;
  std::size_t retried = 0;  // coordinates that needed a smaller step

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

// |a - n| / max(|a|, |n|, 1e-6)
double relative_error(double analytic, double numeric);

// Compares backward() against central differences on every coordinate of every
// parameter; stop_gradient values are held at their baseline during the
// perturbed evaluations. When a perturbation moves some ReLU input across zero
// the coordinate is retried with eps / 10 down to 1e-6. `loss_fn` must rebuild
// the graph from the current parameter values on each call. Parameter
// gradients are reset before the analytic pass.
GradReport grad_check(const std::function<Tensor()>& loss_fn, std::vector<NamedTensor>& params,
                      double eps);

}  // namespace coboom
