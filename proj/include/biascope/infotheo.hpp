#pragma once

// Plug-in information estimators on contingency tables, the expected value
// of mutual information under random permutations with fixed marginals, and
// the normalized, chance-adjusted statistics built from them.
//
// Everything is in nats. The adjusted statistics are base-invariant.
//
//   entropy:   H = -sum_i (n_i/N) ln(n_i/N),      0 ln 0 := 0
//   MI:        I = sum_ij (n_ij/N) ln(N n_ij / (a_i b_j))
//   CMI:       sum_y (n_y/N) I_y
//   EMI:       expectation of I over tables drawn from the hypergeometric
//              permutation model with the observed marginals
//   adjusted:  (I - EMI) / (norm - EMI), norm an entropy bound
//
// The adjustment makes independent variables score ~0 at every sample size,
// where the raw plug-in MI has a positive baseline that grows as N shrinks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "biascope/contingency.hpp"

namespace biascope {

enum class NormalizerMode { kMax, kMean, kMin };

inline const char* to_string(NormalizerMode mode) {
  switch (mode) {
    case NormalizerMode::kMax: return "max";
    case NormalizerMode::kMean: return "mean";
    case NormalizerMode::kMin: return "min";
  }
  return "max";
}

inline NormalizerMode normalizer_from_string(const std::string& name) {
  if (name == "max") return NormalizerMode::kMax;
  if (name == "mean") return NormalizerMode::kMean;
  if (name == "min") return NormalizerMode::kMin;
  throw std::invalid_argument("unknown normalizer mode: " + name);
}

/// One chance-adjusted statistic. `adjusted` is dimensionless and <= 1 for
/// non-degenerate inputs; degenerate inputs (normalizer equal to the chance
/// expectation, e.g. a constant variable) report adjusted = 0 by convention.
struct AdjustedStatistic {
  double raw = 0.0;                   // nats
  double expected_under_chance = 0.0; // nats
  double normalizer = 0.0;            // nats
  double adjusted = 0.0;
  bool degenerate = false;
};

inline double entropy(std::span<const double> counts) {
  if (counts.empty()) throw std::invalid_argument("entropy: empty input");
  double total = 0.0;
  for (double n : counts) {
    if (!(n >= 0.0) || !std::isfinite(n))
      throw std::invalid_argument("entropy: negative or non-finite count");
    total += n;
  }
  if (total < 1.0) throw std::invalid_argument("entropy: total must be >= 1");
  double h = 0.0;
  for (double n : counts) {
    if (n > 0.0) {
      const double p = n / total;
      h -= p * std::log(p);
    }
  }
  return h < 0.0 ? 0.0 : h;
}

inline double entropy(const std::vector<std::int64_t>& counts) {
  std::vector<double> real(counts.begin(), counts.end());
  return entropy(std::span<const double>(real));
}

namespace detail {

// Core plug-in MI summation, shared by mutual_information and the cached
// fast path of the conditional permutation test so both produce bitwise
// identical values for identical tables.
inline double plugin_mi(std::span<const double> counts,
                        std::span<const double> row_marginals,
                        std::span<const double> col_marginals, double total) {
  const std::size_t n_cols = col_marginals.size();
  double info = 0.0;
  for (std::size_t i = 0; i < row_marginals.size(); ++i) {
    const double a = row_marginals[i];
    if (a <= 0.0) continue;
    for (std::size_t j = 0; j < n_cols; ++j) {
      const double n = counts[i * n_cols + j];
      if (n <= 0.0) continue;
      info += (n / total) * std::log(total * n / (a * col_marginals[j]));
    }
  }
  // Plug-in MI is non-negative; clip the last-bit noise of exact independence.
  return info < 0.0 && info > -1e-13 ? 0.0 : info;
}

}  // namespace detail

inline double mutual_information(const ContingencyTable& t) {
  return detail::plugin_mi(t.counts, t.row_marginals, t.col_marginals,
                           t.total);
}

inline double conditional_mutual_information(const StratifiedTables& strata) {
  if (strata.strata.empty())
    throw std::invalid_argument("cmi: no strata");
  double cmi = 0.0;
  for (const Stratum& s : strata.strata)
    cmi += s.weight * mutual_information(s.table);
  return cmi;
}

namespace detail {

// ln k!, cached per thread. The cache only grows, so references stay valid
// within a call.
inline double log_factorial(std::size_t k) {
  thread_local std::vector<double> cache{0.0, 0.0};
  if (k >= cache.size()) {
    cache.reserve(std::max(cache.size() * 2, k + 1));
    for (std::size_t m = cache.size(); m <= k; ++m)
      cache.push_back(cache[m - 1] + std::log(static_cast<double>(m)));
  }
  return cache[k];
}

inline double log_gamma1p(double x) { return std::lgamma(x + 1.0); }

inline bool nearly_integral(double x) {
  return std::abs(x - std::round(x)) < 1e-9;
}

// Exact hypergeometric-model expectation for integral marginals.
inline double expected_mi_integral(std::span<const double> row_marginals,
                                   std::span<const double> col_marginals,
                                   double total) {
  const auto n_total = static_cast<std::int64_t>(std::llround(total));
  double emi = 0.0;
  for (double a_real : row_marginals) {
    const auto a = static_cast<std::int64_t>(std::llround(a_real));
    if (a == 0) continue;
    for (double b_real : col_marginals) {
      const auto b = static_cast<std::int64_t>(std::llround(b_real));
      if (b == 0) continue;
      const double base = log_factorial(a) + log_factorial(b) +
                          log_factorial(n_total - a) + log_factorial(n_total - b) -
                          log_factorial(n_total);
      const std::int64_t lo = std::max<std::int64_t>(1, a + b - n_total);
      const std::int64_t hi = std::min(a, b);
      for (std::int64_t n = lo; n <= hi; ++n) {
        const double log_weight = base - log_factorial(n) -
                                  log_factorial(a - n) - log_factorial(b - n) -
                                  log_factorial(n_total - a - b + n);
        emi += (static_cast<double>(n) / total) *
               std::log(total * static_cast<double>(n) /
                        (static_cast<double>(a) * static_cast<double>(b))) *
               std::exp(log_weight);
      }
    }
  }
  return emi;
}

// Generalization to real-valued marginals (expected-count tables). The
// hypergeometric weights use the gamma function and are renormalized per
// cell over the integer support, so the result is a proper weighted average
// and reduces to the exact formula when the marginals are integral.
inline double expected_mi_real(std::span<const double> row_marginals,
                               std::span<const double> col_marginals,
                               double total) {
  double emi = 0.0;
  for (double a : row_marginals) {
    if (a <= 0.0) continue;
    for (double b : col_marginals) {
      if (b <= 0.0) continue;
      const double base = log_gamma1p(a) + log_gamma1p(b) +
                          log_gamma1p(total - a) + log_gamma1p(total - b) -
                          log_gamma1p(total);
      const auto lo0 = static_cast<std::int64_t>(
          std::max(0.0, std::ceil(a + b - total - 1e-12)));
      const auto hi = static_cast<std::int64_t>(std::floor(std::min(a, b) + 1e-12));
      double cell = 0.0;
      double mass = 0.0;
      for (std::int64_t n = lo0; n <= hi; ++n) {
        const double nd = static_cast<double>(n);
        const double log_weight = base - log_gamma1p(nd) - log_gamma1p(a - nd) -
                                  log_gamma1p(b - nd) -
                                  log_gamma1p(total - a - b + nd);
        const double weight = std::exp(log_weight);
        mass += weight;
        if (n >= 1) cell += (nd / total) * std::log(total * nd / (a * b)) * weight;
      }
      if (mass > 0.0) emi += cell / mass;
    }
  }
  return emi;
}

inline bool table_is_integral(std::span<const double> row_marginals,
                              std::span<const double> col_marginals,
                              double total) {
  if (!nearly_integral(total)) return false;
  for (double a : row_marginals)
    if (!nearly_integral(a)) return false;
  for (double b : col_marginals)
    if (!nearly_integral(b)) return false;
  return true;
}

inline double pick_normalizer(double h_rows, double h_cols,
                              NormalizerMode mode) {
  switch (mode) {
    case NormalizerMode::kMax: return std::max(h_rows, h_cols);
    case NormalizerMode::kMean: return 0.5 * (h_rows + h_cols);
    case NormalizerMode::kMin: return std::min(h_rows, h_cols);
  }
  throw std::logic_error("unknown normalizer mode");
}

// A constant variable (min marginal entropy 0) admits no dependence: the
// chance distribution is a point mass at I = 0 and the attainable maximum
// is 0, so the adjustment is meaningless regardless of normalizer mode.
inline bool is_degenerate(double h_rows, double h_cols, double normalizer,
                          double emi) {
  return std::abs(normalizer - emi) < 1e-12 ||
         std::min(h_rows, h_cols) < 1e-12;
}

// Shared by adjusted_mi and adjusted_cmi; tolerates single-row strata.
// The plug-in MI never exceeds the normalizing entropy, so the adjusted
// ratio is <= 1 mathematically; the two quantities come from different
// summation orders though, and perfect dependence can land a few ulps past
// the bound. Snap those back onto it.
inline double snap_to_unit(double adjusted) {
  return (adjusted > 1.0 && adjusted < 1.0 + 1e-9) ? 1.0 : adjusted;
}

inline AdjustedStatistic adjust(const ContingencyTable& t, NormalizerMode mode) {
  AdjustedStatistic s;
  s.raw = mutual_information(t);
  const double h_rows = entropy(std::span<const double>(t.row_marginals));
  const double h_cols = entropy(std::span<const double>(t.col_marginals));
  s.normalizer = pick_normalizer(h_rows, h_cols, mode);
  s.expected_under_chance =
      table_is_integral(t.row_marginals, t.col_marginals, t.total)
          ? expected_mi_integral(t.row_marginals, t.col_marginals, t.total)
          : expected_mi_real(t.row_marginals, t.col_marginals, t.total);
  if (is_degenerate(h_rows, h_cols, s.normalizer, s.expected_under_chance)) {
    s.degenerate = true;
    s.adjusted = 0.0;
  } else {
    s.adjusted = snap_to_unit((s.raw - s.expected_under_chance) /
                              (s.normalizer - s.expected_under_chance));
  }
  return s;
}

}  // namespace detail

/// Expected plug-in MI under the fixed-marginal permutation (hypergeometric)
/// model. Marginals must be integral and sum to `total` on both axes.
inline double expected_mi_under_chance(std::span<const double> row_marginals,
                                       std::span<const double> col_marginals,
                                       double total) {
  double row_sum = 0.0, col_sum = 0.0;
  for (double a : row_marginals) row_sum += a;
  for (double b : col_marginals) col_sum += b;
  if (std::abs(row_sum - total) > 1e-6 || std::abs(col_sum - total) > 1e-6)
    throw std::invalid_argument("emi: marginals do not sum to total");
  if (total < 1.0) throw std::invalid_argument("emi: total must be >= 1");
  if (!detail::table_is_integral(row_marginals, col_marginals, total))
    throw std::invalid_argument("emi: marginals must be integral");
  return detail::expected_mi_integral(row_marginals, col_marginals, total);
}

/// Normalized, chance-adjusted MI: (I - EMI) / (norm - EMI).
inline AdjustedStatistic adjusted_mi(const ContingencyTable& t,
                                     NormalizerMode mode = NormalizerMode::kMax) {
  if (t.total < 2.0)
    throw std::invalid_argument("adjusted_mi: needs at least 2 observations");
  return detail::adjust(t, mode);
}

/// Stratum-weighted expectation of adjusted MI over the conditioning
/// variable. Degenerate strata contribute 0 with their weight retained, so
/// the result stays a bona fide expectation. `raw` carries the plain CMI.
inline AdjustedStatistic adjusted_cmi(const StratifiedTables& strata,
                                      NormalizerMode mode = NormalizerMode::kMax) {
  if (strata.strata.empty())
    throw std::invalid_argument("adjusted_cmi: no strata");
  AdjustedStatistic out;
  bool all_degenerate = true;
  double weight_total = 0.0;
  for (const Stratum& s : strata.strata) {
    const AdjustedStatistic part = detail::adjust(s.table, mode);
    weight_total += s.weight;
    out.raw += s.weight * part.raw;
    out.expected_under_chance += s.weight * part.expected_under_chance;
    out.normalizer += s.weight * part.normalizer;
    if (!part.degenerate) {
      out.adjusted += s.weight * part.adjusted;
      all_degenerate = false;
    }
  }
  // True weighted mean: the weights sum to 1 only up to rounding, and the
  // drift would push a perfect score past the <= 1 bound.
  out.raw /= weight_total;
  out.expected_under_chance /= weight_total;
  out.normalizer /= weight_total;
  out.adjusted /= weight_total;
  out.degenerate = all_degenerate;
  return out;
}

}  // namespace biascope
