#include <algorithm>
#include <numeric>

#include "coboom/error.hpp"
#include "coboom/eval.hpp"

namespace coboom {

std::optional<double> roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError("roc_auc: " + std::to_string(scores.size()) + " scores vs " +
                         std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of positive ranks, tied groups sharing their average rank.
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = static_cast<double>(i + 1 + j) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) {
        positive_rank_sum += avg_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  const double p = static_cast<double>(positives);
  const double u = positive_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

AucSummary multilabel_auc(const Tensor& scores, const Dataset& ds, std::span<const std::size_t> rows) {
  if (scores.rank() != 2 || scores.dim(0) != rows.size() || scores.dim(1) != ds.classes) {
    throw DimensionError("multilabel_auc: scores " + shape_str(scores.shape()) + " for " +
                         std::to_string(rows.size()) + " rows and " + std::to_string(ds.classes) +
                         " classes");
  }
  AucSummary out;
  const std::size_t c = ds.classes;
  double acc = 0.0;
  std::size_t defined = 0;
  for (std::size_t k = 0; k < c; ++k) {
    std::vector<double> col(rows.size());
    std::vector<std::uint8_t> lab(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      col[i] = scores.values()[i * c + k];
      lab[i] = ds.samples[rows[i]].labels[k];
    }
    auto auc = roc_auc(col, lab);
    if (auc) {
      acc += *auc;
      ++defined;
    }
    out.per_class.push_back(auc);
  }
  if (defined > 0) out.macro = acc / static_cast<double>(defined);
  return out;
}

}  // namespace coboom
