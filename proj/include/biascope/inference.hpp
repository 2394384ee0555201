#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "biascope/contingency.hpp"
#include "biascope/infotheo.hpp"
#include "biascope/parallel.hpp"
#include "biascope/rng.hpp"

namespace biascope {

struct PermutationTestResult {
  double observed = 0.0;  // adjusted CMI of the unpermuted data
  std::size_t n_permutations = 0;
  double percentile = 0.0;  // mid-rank position of observed among the nulls
  std::vector<double> null_samples;
  std::uint64_t seed = 0;
};

namespace detail {

// Everything about a stratum that within-stratum shuffling of A cannot
// change: both marginals, hence the entropies, the normalizer, the expected
// MI under chance, and the degeneracy flag. Only the joint counts move, so
// each replicate recomputes just the plug-in MI.
struct PermutationStratum {
  std::vector<std::int32_t> a;
  std::vector<std::int32_t> ahat;
  std::vector<double> row_marginals;
  std::vector<double> col_marginals;
  double total = 0.0;
  double weight = 0.0;
  double emi = 0.0;
  double normalizer = 0.0;
  bool degenerate = false;
};

inline double stratum_adjusted(const PermutationStratum& s,
                               std::span<const double> counts) {
  if (s.degenerate) return 0.0;
  const double info =
      plugin_mi(counts, s.row_marginals, s.col_marginals, s.total);
  return snap_to_unit((info - s.emi) / (s.normalizer - s.emi));
}

inline void fill_counts(const PermutationStratum& s, std::size_t k_ahat,
                        std::vector<double>& counts) {
  std::fill(counts.begin(), counts.end(), 0.0);
  for (std::size_t i = 0; i < s.a.size(); ++i)
    counts[static_cast<std::size_t>(s.a[i]) * k_ahat +
           static_cast<std::size_t>(s.ahat[i])] += 1.0;
}

}  // namespace detail

/// Permutation test of conditional independence A ⫫ Â | Y. The null is
/// built by shuffling A uniformly within each stratum of Y, which is exact
/// for categorical Y; the statistic is the adjusted CMI. Ties between the
/// observed value and null samples count half (mid-rank percentile).
/// Deterministic for a given seed, independent of thread count.
inline PermutationTestResult conditional_permutation_test(
    std::span<const std::int32_t> a, std::span<const std::int32_t> ahat,
    std::span<const std::int32_t> y, std::size_t k_a, std::size_t k_ahat,
    std::size_t k_y, std::size_t n_perm, std::uint64_t seed,
    NormalizerMode mode = NormalizerMode::kMax, unsigned n_threads = 0) {
  const std::size_t n = a.size();
  if (ahat.size() != n || y.size() != n)
    throw std::invalid_argument("permutation test: array length mismatch");
  if (n == 0) throw std::invalid_argument("permutation test: empty input");
  if (n_perm < 1)
    throw std::invalid_argument("permutation test: n_perm must be >= 1");

  for (std::size_t i = 0; i < n; ++i)
    if (a[i] < 0 || static_cast<std::size_t>(a[i]) >= k_a || ahat[i] < 0 ||
        static_cast<std::size_t>(ahat[i]) >= k_ahat || y[i] < 0 ||
        static_cast<std::size_t>(y[i]) >= k_y)
      throw std::invalid_argument("permutation test: code out of range");

  // Bucket rows by stratum and freeze the shuffle-invariant quantities.
  std::vector<detail::PermutationStratum> strata(k_y);
  for (std::size_t i = 0; i < n; ++i) {
    auto& s = strata[static_cast<std::size_t>(y[i])];
    s.a.push_back(a[i]);
    s.ahat.push_back(ahat[i]);
  }
  std::erase_if(strata,
                [](const detail::PermutationStratum& s) { return s.a.empty(); });
  for (auto& s : strata) {
    s.total = static_cast<double>(s.a.size());
    s.weight = s.total / static_cast<double>(n);
    s.row_marginals.assign(k_a, 0.0);
    s.col_marginals.assign(k_ahat, 0.0);
    for (std::int32_t v : s.a)
      s.row_marginals[static_cast<std::size_t>(v)] += 1.0;
    for (std::int32_t v : s.ahat)
      s.col_marginals[static_cast<std::size_t>(v)] += 1.0;
    const double h_rows = entropy(std::span<const double>(s.row_marginals));
    const double h_cols = entropy(std::span<const double>(s.col_marginals));
    s.normalizer = detail::pick_normalizer(h_rows, h_cols, mode);
    s.emi = detail::expected_mi_integral(s.row_marginals, s.col_marginals,
                                         s.total);
    s.degenerate = detail::is_degenerate(h_rows, h_cols, s.normalizer, s.emi);
  }

  PermutationTestResult result;
  result.seed = seed;
  result.n_permutations = n_perm;

  // Same weighted-mean convention as adjusted_cmi: divide by the summed
  // weights so the two paths agree bitwise.
  double weight_total = 0.0;
  for (const auto& s : strata) weight_total += s.weight;

  std::vector<double> counts(k_a * k_ahat);
  double observed = 0.0;
  for (const auto& s : strata) {
    detail::fill_counts(s, k_ahat, counts);
    observed += s.weight * detail::stratum_adjusted(s, counts);
  }
  observed /= weight_total;
  result.observed = observed;

  result.null_samples.assign(n_perm, 0.0);
  parallel_for(
      n_perm,
      [&](std::size_t r) {
        Rng rng(derive_seed(seed, r));
        std::vector<double> local_counts(k_a * k_ahat);
        std::vector<std::int32_t> shuffled;
        double value = 0.0;
        for (const auto& s : strata) {
          shuffled.assign(s.a.begin(), s.a.end());
          rng.shuffle(shuffled);
          std::fill(local_counts.begin(), local_counts.end(), 0.0);
          for (std::size_t i = 0; i < shuffled.size(); ++i)
            local_counts[static_cast<std::size_t>(shuffled[i]) * k_ahat +
                         static_cast<std::size_t>(s.ahat[i])] += 1.0;
          value += s.weight * detail::stratum_adjusted(s, local_counts);
        }
        result.null_samples[r] = value / weight_total;
      },
      n_threads);

  std::size_t below = 0, equal = 0;
  for (double v : result.null_samples) {
    if (v < observed)
      ++below;
    else if (v == observed)
      ++equal;
  }
  result.percentile = (static_cast<double>(below) +
                       0.5 * static_cast<double>(equal)) /
                      static_cast<double>(n_perm);
  return result;
}

struct BootstrapCI {
  double lower = 0.0;
  double upper = 0.0;
  double level = 0.95;
  std::size_t n_replicates = 0;
  std::uint64_t seed = 0;
};

/// Percentile bootstrap over i.i.d. row resamples. The statistic may return
/// nullopt for a degenerate resample; such replicates are redrawn from a
/// fresh derived stream, and more than 10% redraws is an error.
inline BootstrapCI bootstrap_ci(
    std::size_t n_rows,
    const std::function<std::optional<double>(std::span<const std::size_t>)>&
        statistic,
    std::size_t n_boot, double level, std::uint64_t seed) {
  if (n_boot < 100)
    throw std::invalid_argument("bootstrap: n_boot must be >= 100");
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("bootstrap: level must be in (0,1)");
  if (n_rows == 0) throw std::invalid_argument("bootstrap: no rows");

  const std::size_t max_redraws = n_boot / 10;
  std::size_t redraws = 0;
  std::vector<double> values(n_boot);
  std::vector<std::size_t> indices(n_rows);
  for (std::size_t b = 0; b < n_boot; ++b) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      Rng rng(derive_seed(seed, b, attempt));
      for (auto& idx : indices) idx = rng.uniform_index(n_rows);
      const auto value = statistic(indices);
      if (value.has_value()) {
        values[b] = *value;
        break;
      }
      if (++redraws > max_redraws)
        throw std::runtime_error(
            "bootstrap: more than 10% of replicates degenerate (" +
            std::to_string(redraws) + " redraws over " +
            std::to_string(n_boot) + " replicates)");
    }
  }

  std::sort(values.begin(), values.end());
  auto quantile = [&values](double p) {
    const double h = p * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(h);
    if (lo + 1 >= values.size()) return values.back();
    return values[lo] + (h - static_cast<double>(lo)) * (values[lo + 1] -
                                                         values[lo]);
  };

  BootstrapCI ci;
  ci.level = level;
  ci.n_replicates = n_boot;
  ci.seed = seed;
  const double tail = (1.0 - level) / 2.0;
  ci.lower = quantile(tail);
  ci.upper = quantile(1.0 - tail);
  return ci;
}

/// Bootstrap CI for adjusted MI(A; Y) under row resampling.
inline BootstrapCI bootstrap_adjusted_mi(std::span<const std::int32_t> a,
                                         std::span<const std::int32_t> y,
                                         std::size_t k_a, std::size_t k_y,
                                         std::size_t n_boot, double level,
                                         std::uint64_t seed,
                                         NormalizerMode mode =
                                             NormalizerMode::kMax) {
  if (a.size() != y.size())
    throw std::invalid_argument("bootstrap: array length mismatch");
  return bootstrap_ci(
      a.size(),
      [&](std::span<const std::size_t> idx) -> std::optional<double> {
        std::vector<std::int32_t> ra(idx.size()), ry(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
          ra[i] = a[idx[i]];
          ry[i] = y[idx[i]];
        }
        const auto stat =
            adjusted_mi(ContingencyTable::from_codes(ra, ry, k_a, k_y), mode);
        if (stat.degenerate) return std::nullopt;
        return stat.adjusted;
      },
      n_boot, level, seed);
}

/// Bootstrap CI for adjusted CMI(A; Â | Y) under row resampling.
inline BootstrapCI bootstrap_adjusted_cmi(
    std::span<const std::int32_t> a, std::span<const std::int32_t> ahat,
    std::span<const std::int32_t> y, std::size_t k_a, std::size_t k_ahat,
    std::size_t k_y, std::size_t n_boot, double level, std::uint64_t seed,
    NormalizerMode mode = NormalizerMode::kMax) {
  if (a.size() != ahat.size() || a.size() != y.size())
    throw std::invalid_argument("bootstrap: array length mismatch");
  return bootstrap_ci(
      a.size(),
      [&](std::span<const std::size_t> idx) -> std::optional<double> {
        std::vector<std::int32_t> ra(idx.size()), rahat(idx.size()),
            ry(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
          ra[i] = a[idx[i]];
          rahat[i] = ahat[idx[i]];
          ry[i] = y[idx[i]];
        }
        const auto stat = adjusted_cmi(
            StratifiedTables::from_codes(ra, rahat, ry, k_a, k_ahat, k_y),
            mode);
        if (stat.degenerate) return std::nullopt;
        return stat.adjusted;
      },
      n_boot, level, seed);
}

/// Inclusive at the boundary: percentile exactly at the cutoff counts as
/// detectable.
inline bool classify_detectable(const PermutationTestResult& result,
                                double cutoff) {
  if (!(cutoff > 0.0 && cutoff < 1.0))
    throw std::invalid_argument("classify: cutoff must be in (0,1)");
  return result.percentile >= cutoff;
}

}  // namespace biascope
