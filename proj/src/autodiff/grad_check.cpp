#include "coboom/grad_check.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <utility>

#include "coboom/error.hpp"
#include "coboom/ops.hpp"

namespace coboom {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-6});
  return std::abs(analytic - numeric) / denom;
}

GradReport grad_check(const std::function<Tensor()>& loss_fn, std::vector<NamedTensor>& params,
                      double eps) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) {
    throw ContractError("grad_check: eps " + std::to_string(eps) + " outside [1e-6, 1e-3]");
  }
  for (auto& p : params) {
    if (!p.tensor.is_leaf() || !p.tensor.requires_grad()) {
      throw ContractError("grad_check: parameter '" + p.name + "' is not a trainable leaf");
    }
    p.tensor.zero_grad();
  }

  ScopedStopGradientTape tape;
  const Tensor baseline = loss_fn();
  tape.start_replay();
  const double again = loss_fn().item();
  if (std::bit_cast<std::uint64_t>(baseline.item()) != std::bit_cast<std::uint64_t>(again)) {
    throw ContractError("grad_check: loss function is not deterministic");
  }
  backward(baseline);

  GradReport report;
  report.worst_index = 0;
  for (auto& p : params) {
    GradReport::Entry entry;
    entry.name = p.name;
    const std::vector<double> analytic = p.tensor.grad_or_zero();
    auto values = p.tensor.mutable_values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      auto probe = [&](double x) {
        values[i] = x;
        tape.rewind();
        const double f = loss_fn().item();
        return std::pair{f, tape.kink_crossed()};
      };
      double h = eps;
      double numeric = 0.0;
      bool smooth = false;
      for (;;) {
        const auto [up, up_kink] = probe(original + h);
        const auto [down, down_kink] = probe(original - h);
        numeric = (up - down) / (2.0 * h);
        smooth = !up_kink && !down_kink;
        if (smooth || h / 10.0 < 1e-6 * (1.0 - 1e-9)) break;
        h /= 10.0;
      }
      values[i] = original;
      ++report.coordinates;
      if (h != eps) ++report.retried;
      if (!smooth) {
        ++report.nonsmooth;
        continue;
      }
      const double err = relative_error(analytic[i], numeric);
      if (err > entry.max_rel_error || i == 0) {
        entry.max_rel_error = err;
        entry.worst_index = i;
        entry.analytic = analytic[i];
        entry.numeric = numeric;
      }
    }
    if (entry.max_rel_error > report.max_rel_error || report.worst_param.empty()) {
      report.max_rel_error = entry.max_rel_error;
      report.worst_param = entry.name;
      report.worst_index = entry.worst_index;
      report.worst_analytic = entry.analytic;
      report.worst_numeric = entry.numeric;
    }
    report.per_param.push_back(std::move(entry));
  }
  return report;
}

}  // namespace coboom
