#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace biascope {

/// ROC AUC via the Mann-Whitney statistic with mid-rank tie handling.
/// Labels are binary codes; the score convention is higher = more likely
/// class 1.
inline double auc(std::span<const double> scores,
                  std::span<const std::int32_t> labels) {
  if (scores.size() != labels.size())
    throw std::invalid_argument("auc: array length mismatch");
  if (scores.empty()) throw std::invalid_argument("auc: empty input");

  std::size_t n_pos = 0;
  for (std::int32_t lab : labels) {
    if (lab != 0 && lab != 1)
      throw std::invalid_argument("auc: labels must be 0/1");
    n_pos += static_cast<std::size_t>(lab);
  }
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw std::invalid_argument("auc: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&scores](std::size_t i, std::size_t j) {
    return scores[i] < scores[j];
  });

  // Sum of 1-based mid-ranks over the positive class.
  double rank_sum_pos = 0.0;
  std::size_t start = 0;
  while (start < order.size()) {
    std::size_t stop = start;
    while (stop + 1 < order.size() &&
           scores[order[stop + 1]] == scores[order[start]])
      ++stop;
    const double mid_rank =
        0.5 * (static_cast<double>(start + 1) + static_cast<double>(stop + 1));
    for (std::size_t k = start; k <= stop; ++k)
      if (labels[order[k]] == 1) rank_sum_pos += mid_rank;
    start = stop + 1;
  }

  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

struct KendallTau {
  double value = 0.0;
  bool defined = false;  // false when either array is constant
};

/// Kendall's tau-b (tie-corrected) over all pairs. Quadratic in n, which is
/// fine for the sweep sizes this library compares.
inline KendallTau kendall_tau(std::span<const double> x,
                              std::span<const double> y) {
  if (x.size() != y.size())
    throw std::invalid_argument("kendall_tau: array length mismatch");
  const std::size_t n = x.size();
  if (n < 2) throw std::invalid_argument("kendall_tau: need length >= 2");

  std::int64_t concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0 && dy == 0) continue;  // tied in both, excluded from all
      if (dx == 0) {
        ++ties_x;
      } else if (dy == 0) {
        ++ties_y;
      } else if ((dx > 0) == (dy > 0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }

  KendallTau out;
  const double denom_x =
      static_cast<double>(concordant + discordant + ties_x);
  const double denom_y =
      static_cast<double>(concordant + discordant + ties_y);
  if (denom_x == 0 || denom_y == 0) return out;  // constant input
  out.value = static_cast<double>(concordant - discordant) /
              std::sqrt(denom_x * denom_y);
  out.defined = true;
  return out;
}

}  // namespace biascope
