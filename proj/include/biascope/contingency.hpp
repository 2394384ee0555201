#pragma once

// Contingency tables: the substrate of every estimator in the library.
// Counts are stored as doubles so the same machinery serves both empirical
// integer tables and the analytic (expected-count) tables used by the
// synthetic-bias solver; tables built from code arrays are always integral.

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace biascope {

struct ContingencyTable {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<double> counts;  // row-major
  std::vector<double> row_marginals;
  std::vector<double> col_marginals;
  double total = 0.0;

  double at(std::size_t i, std::size_t j) const { return counts[i * n_cols + j]; }

  static ContingencyTable from_counts(std::size_t rows, std::size_t cols,
                                      std::vector<double> values) {
    if (rows == 0 || cols == 0)
      throw std::invalid_argument("contingency: empty table");
    if (values.size() != rows * cols)
      throw std::invalid_argument("contingency: counts size mismatch");
    ContingencyTable t;
    t.n_rows = rows;
    t.n_cols = cols;
    t.counts = std::move(values);
    t.row_marginals.assign(rows, 0.0);
    t.col_marginals.assign(cols, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        const double n = t.counts[i * cols + j];
        if (!(n >= 0.0) || !std::isfinite(n))
          throw std::invalid_argument("contingency: negative or non-finite count");
        t.row_marginals[i] += n;
        t.col_marginals[j] += n;
        t.total += n;
      }
    }
    if (t.total < 1.0)
      throw std::invalid_argument("contingency: total count must be >= 1");
    return t;
  }

  /// Cross-tabulates two code arrays over fixed alphabets [0,Ka) x [0,Kb).
  static ContingencyTable from_codes(std::span<const std::int32_t> a,
                                     std::span<const std::int32_t> b,
                                     std::size_t k_a, std::size_t k_b) {
    if (a.size() != b.size())
      throw std::invalid_argument("contingency: length mismatch");
    if (a.empty()) throw std::invalid_argument("contingency: empty input");
    std::vector<double> values(k_a * k_b, 0.0);
    for (std::size_t r = 0; r < a.size(); ++r) {
      const auto i = static_cast<std::size_t>(a[r]);
      const auto j = static_cast<std::size_t>(b[r]);
      if (a[r] < 0 || i >= k_a || b[r] < 0 || j >= k_b)
        throw std::invalid_argument("contingency: code out of range");
      values[i * k_b + j] += 1.0;
    }
    return from_counts(k_a, k_b, std::move(values));
  }

  ContingencyTable transposed() const {
    std::vector<double> values(n_rows * n_cols);
    for (std::size_t i = 0; i < n_rows; ++i)
      for (std::size_t j = 0; j < n_cols; ++j)
        values[j * n_rows + i] = counts[i * n_cols + j];
    return from_counts(n_cols, n_rows, std::move(values));
  }
};

struct Stratum {
  std::int32_t value = 0;  // code of the conditioning variable
  ContingencyTable table;
  double weight = 0.0;  // n_y / N
};

/// Per-stratum tables of (a, b) for each observed value of the conditioning
/// variable, with weights proportional to stratum size.
struct StratifiedTables {
  std::vector<Stratum> strata;
  double total = 0.0;

  static StratifiedTables from_codes(std::span<const std::int32_t> a,
                                     std::span<const std::int32_t> b,
                                     std::span<const std::int32_t> cond,
                                     std::size_t k_a, std::size_t k_b,
                                     std::size_t k_cond) {
    if (a.size() != b.size() || a.size() != cond.size())
      throw std::invalid_argument("stratified: length mismatch");
    if (a.empty()) throw std::invalid_argument("stratified: empty input");

    std::vector<std::vector<std::size_t>> members(k_cond);
    for (std::size_t r = 0; r < cond.size(); ++r) {
      if (cond[r] < 0 || static_cast<std::size_t>(cond[r]) >= k_cond)
        throw std::invalid_argument("stratified: conditioning code out of range");
      members[static_cast<std::size_t>(cond[r])].push_back(r);
    }

    StratifiedTables result;
    result.total = static_cast<double>(a.size());
    std::vector<std::int32_t> sub_a, sub_b;
    for (std::size_t y = 0; y < k_cond; ++y) {
      if (members[y].empty()) continue;
      sub_a.clear();
      sub_b.clear();
      for (std::size_t r : members[y]) {
        sub_a.push_back(a[r]);
        sub_b.push_back(b[r]);
      }
      Stratum s;
      s.value = static_cast<std::int32_t>(y);
      s.table = ContingencyTable::from_codes(sub_a, sub_b, k_a, k_b);
      s.weight = static_cast<double>(members[y].size()) / result.total;
      result.strata.push_back(std::move(s));
    }
    return result;
  }
};

}  // namespace biascope
