#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "biascope/contingency.hpp"
#include "biascope/infotheo.hpp"
#include "biascope/rng.hpp"

using namespace biascope;

namespace {

// Direct-summation oracle at extended precision, independent of the
// library's summation path.
long double entropy_oracle(const std::vector<double>& counts) {
  long double total = 0.0L;
  for (double c : counts) total += c;
  long double h = 0.0L;
  for (double c : counts)
    if (c > 0) {
      const long double p = static_cast<long double>(c) / total;
      h -= p * std::log(p);
    }
  return h;
}

long double mi_oracle(const ContingencyTable& t) {
  long double info = 0.0L;
  for (std::size_t i = 0; i < t.n_rows; ++i)
    for (std::size_t j = 0; j < t.n_cols; ++j) {
      const long double n = t.at(i, j);
      if (n <= 0) continue;
      info += (n / static_cast<long double>(t.total)) *
              std::log(static_cast<long double>(t.total) * n /
                       (static_cast<long double>(t.row_marginals[i]) *
                        static_cast<long double>(t.col_marginals[j])));
    }
  return info;
}

// Exhaustive permutation-average MI: every permutation of the second code
// array, equally weighted. Only feasible for tiny N.
double emi_exhaustive(std::vector<std::int32_t> a, std::vector<std::int32_t> b,
                      std::size_t k_a, std::size_t k_b) {
  std::sort(b.begin(), b.end());
  double sum = 0.0;
  std::size_t count = 0;
  do {
    sum += mutual_information(ContingencyTable::from_codes(a, b, k_a, k_b));
    ++count;
  } while (std::next_permutation(b.begin(), b.end()));
  // next_permutation over a sorted multiset enumerates each distinct
  // arrangement once, which is the permutation distribution collapsed by
  // multiplicity.
  return sum / static_cast<double>(count);
}

ContingencyTable random_table(Rng& rng, std::size_t max_dim, double total_scale) {
  const std::size_t rows = 1 + rng.uniform_index(max_dim);
  const std::size_t cols = 1 + rng.uniform_index(max_dim);
  std::vector<double> counts(rows * cols, 0.0);
  const std::size_t n = 1 + rng.uniform_index(static_cast<std::uint64_t>(
                                total_scale * static_cast<double>(rows * cols)));
  for (std::size_t s = 0; s < n; ++s)
    counts[rng.uniform_index(counts.size())] += 1.0;
  return ContingencyTable::from_counts(rows, cols, std::move(counts));
}

std::vector<std::int32_t> random_codes(Rng& rng, std::size_t n, std::size_t k) {
  std::vector<std::int32_t> codes(n);
  for (auto& c : codes) c = static_cast<std::int32_t>(rng.uniform_index(k));
  return codes;
}

}  // namespace

TEST_CASE("entropy matches definition") {
  CHECK(entropy(std::vector<std::int64_t>{5, 5}) ==
        Catch::Approx(std::log(2.0)).margin(1e-15));
  CHECK(entropy(std::vector<std::int64_t>{10}) == 0.0);
  // Direct summation: -(0.375 ln 0.375 + ... ) over [30,10,10,30].
  CHECK(entropy(std::vector<std::int64_t>{30, 10, 10, 30}) ==
        Catch::Approx(1.2554823251787535).margin(1e-12));
  CHECK_THROWS_AS(entropy(std::span<const double>{}), std::invalid_argument);
}

TEST_CASE("mutual information on canonical tables") {
  auto independent =
      ContingencyTable::from_counts(2, 2, {25, 25, 25, 25});
  CHECK(mutual_information(independent) == Catch::Approx(0.0).margin(1e-13));

  auto diagonal = ContingencyTable::from_counts(2, 2, {50, 0, 0, 50});
  CHECK(mutual_information(diagonal) ==
        Catch::Approx(std::log(2.0)).margin(1e-13));

  auto mixed = ContingencyTable::from_counts(2, 2, {30, 10, 10, 30});
  CHECK(mutual_information(mixed) ==
        Catch::Approx(0.13081203594113697).margin(1e-12));
  // Cross-check against the entropy identity.
  const double via_h = entropy(std::vector<std::int64_t>{40, 40}) * 2 -
                       entropy(std::vector<std::int64_t>{30, 10, 10, 30});
  CHECK(mutual_information(mixed) == Catch::Approx(via_h).margin(1e-12));
}

TEST_CASE("plug-in identities on random tables") {
  Rng rng(20240811);
  for (int trial = 0; trial < 100; ++trial) {
    const ContingencyTable t = random_table(rng, 6, 10.0);
    const double info = mutual_information(t);

    CHECK(std::abs(info - static_cast<double>(mi_oracle(t))) < 1e-10);

    // Symmetry under transpose.
    CHECK(std::abs(info - mutual_information(t.transposed())) < 1e-12);

    // I = H(rows) + H(cols) - H(joint).
    const double h_rows = entropy(std::span<const double>(t.row_marginals));
    const double h_cols = entropy(std::span<const double>(t.col_marginals));
    const double h_joint = entropy(std::span<const double>(t.counts));
    CHECK(std::abs(info - (h_rows + h_cols - h_joint)) < 1e-10);

    CHECK(info >= -1e-13);
    CHECK(info <= std::min(h_rows, h_cols) + 1e-10);

    CHECK(std::abs(static_cast<double>(entropy_oracle(t.row_marginals)) -
                   h_rows) < 1e-10);
  }
}

TEST_CASE("entropy, MI, EMI, AMI invariant under category relabeling") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k_a = 2 + rng.uniform_index(3);
    const std::size_t k_b = 2 + rng.uniform_index(3);
    const auto a = random_codes(rng, 40, k_a);
    const auto b = random_codes(rng, 40, k_b);

    std::vector<std::int32_t> relabel(k_a);
    std::iota(relabel.begin(), relabel.end(), 0);
    rng.shuffle(relabel);
    std::vector<std::int32_t> a2(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) a2[i] = relabel[a[i]];

    const auto t1 = ContingencyTable::from_codes(a, b, k_a, k_b);
    const auto t2 = ContingencyTable::from_codes(a2, b, k_a, k_b);

    CHECK(mutual_information(t1) ==
          Catch::Approx(mutual_information(t2)).margin(1e-12));
    const auto s1 = adjusted_mi(t1);
    const auto s2 = adjusted_mi(t2);
    CHECK(s1.expected_under_chance ==
          Catch::Approx(s2.expected_under_chance).margin(1e-12));
    CHECK(s1.adjusted == Catch::Approx(s2.adjusted).margin(1e-12));
  }
}

TEST_CASE("conditional MI basics") {
  Rng rng(99);
  const std::size_t n = 120;
  auto y = random_codes(rng, n, 3);
  auto a = random_codes(rng, n, 2);

  SECTION("identity channel: CMI equals conditional entropy of A") {
    const auto strata = StratifiedTables::from_codes(a, a, y, 2, 2, 3);
    double expected = 0.0;
    for (const Stratum& s : strata.strata)
      expected +=
          s.weight * entropy(std::span<const double>(s.table.row_marginals));
    CHECK(conditional_mutual_information(strata) ==
          Catch::Approx(expected).margin(1e-12));
  }

  SECTION("constant prediction gives zero") {
    std::vector<std::int32_t> constant(n, 0);
    const auto strata = StratifiedTables::from_codes(a, constant, y, 2, 1, 3);
    CHECK(conditional_mutual_information(strata) ==
          Catch::Approx(0.0).margin(1e-13));
  }

  SECTION("prediction determined by the conditioning variable gives zero") {
    std::vector<std::int32_t> from_y(n);
    for (std::size_t i = 0; i < n; ++i) from_y[i] = y[i] % 2;
    const auto strata = StratifiedTables::from_codes(a, from_y, y, 2, 2, 3);
    CHECK(conditional_mutual_information(strata) ==
          Catch::Approx(0.0).margin(1e-13));
  }

  SECTION("single stratum collapses to plain MI") {
    std::vector<std::int32_t> ones(n, 0);
    auto b = random_codes(rng, n, 2);
    const auto strata = StratifiedTables::from_codes(a, b, ones, 2, 2, 1);
    const auto table = ContingencyTable::from_codes(a, b, 2, 2);
    CHECK(conditional_mutual_information(strata) ==
          Catch::Approx(mutual_information(table)).margin(1e-13));
  }
}

TEST_CASE("expected MI under chance: closed form vs enumeration") {
  SECTION("single-cell table") {
    const std::vector<double> row{10};
    const std::vector<double> col{10};
    CHECK(expected_mi_under_chance(row, col, 10.0) ==
          Catch::Approx(0.0).margin(1e-15));
  }

  SECTION("2x2 with unit marginals averages the two permutation tables") {
    const std::vector<double> m{1, 1};
    CHECK(expected_mi_under_chance(m, m, 2.0) ==
          Catch::Approx(std::log(2.0)).margin(1e-12));
  }

  SECTION("exhaustive equality for all small tables") {
    Rng rng(314159);
    for (int trial = 0; trial < 60; ++trial) {
      const std::size_t n = 2 + rng.uniform_index(5);  // N <= 6
      const std::size_t k_a = 1 + rng.uniform_index(3);
      const std::size_t k_b = 1 + rng.uniform_index(3);
      const auto a = random_codes(rng, n, k_a);
      const auto b = random_codes(rng, n, k_b);
      const auto t = ContingencyTable::from_codes(a, b, k_a, k_b);
      const double emi = expected_mi_under_chance(t.row_marginals,
                                                  t.col_marginals, t.total);
      const double brute = emi_exhaustive(a, b, k_a, k_b);
      CHECK(std::abs(emi - brute) < 1e-10);
    }
  }

  SECTION("Monte-Carlo agreement for balanced 100-sample marginals") {
    // 10^4 shuffles here; the acceptance suite runs the full 10^5 version.
    std::vector<std::int32_t> a(100), b(100);
    for (int i = 0; i < 100; ++i) {
      a[i] = i < 50 ? 0 : 1;
      b[i] = i % 2;
    }
    Rng rng(2718);
    const std::size_t reps = 10000;
    double sum = 0.0, sum_sq = 0.0;
    std::vector<std::int32_t> shuffled = b;
    for (std::size_t r = 0; r < reps; ++r) {
      rng.shuffle(shuffled);
      const double v =
          mutual_information(ContingencyTable::from_codes(a, shuffled, 2, 2));
      sum += v;
      sum_sq += v * v;
    }
    const double mean = sum / reps;
    const double var = (sum_sq / reps - mean * mean) / (reps - 1);
    const double se = std::sqrt(std::max(var, 0.0));
    const std::vector<double> m{50, 50};
    const double emi = expected_mi_under_chance(m, m, 100.0);
    CHECK(std::abs(emi - mean) < 3.0 * se + 1e-12);
  }
}

TEST_CASE("adjusted MI") {
  SECTION("a variable against itself scores exactly 1") {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      const std::size_t k = 2 + rng.uniform_index(3);
      auto a = random_codes(rng, 30, k);
      a[0] = 0;
      a[1] = 1;  // ensure non-constant
      const auto t = ContingencyTable::from_codes(a, a, k, k);
      const auto s = adjusted_mi(t);
      CHECK_FALSE(s.degenerate);
      CHECK(s.adjusted == Catch::Approx(1.0).margin(1e-12));
    }
  }

  SECTION("constant variable is degenerate and scores 0") {
    std::vector<std::int32_t> constant(20, 0);
    Rng rng(6);
    const auto b = random_codes(rng, 20, 3);
    const auto t = ContingencyTable::from_codes(constant, b, 1, 3);
    const auto s = adjusted_mi(t);
    CHECK(s.degenerate);
    CHECK(s.adjusted == 0.0);
  }

  SECTION("independent variables score near zero on average") {
    // Small version of the chance-correction check; the acceptance suite
    // runs the full 200-seed x three-sample-size version.
    Rng rng(11);
    double mean = 0.0;
    const int seeds = 60;
    for (int s = 0; s < seeds; ++s) {
      const auto a = random_codes(rng, 500, 2);
      const auto b = random_codes(rng, 500, 2);
      mean += adjusted_mi(ContingencyTable::from_codes(a, b, 2, 2)).adjusted;
    }
    mean /= seeds;
    CHECK(std::abs(mean) < 0.02);
  }

  SECTION("normalizer modes order as min <= mean <= max") {
    Rng rng(12);
    const auto a = random_codes(rng, 200, 2);
    const auto b = random_codes(rng, 200, 4);
    const auto t = ContingencyTable::from_codes(a, b, 2, 4);
    const auto lo = adjusted_mi(t, NormalizerMode::kMin);
    const auto mid = adjusted_mi(t, NormalizerMode::kMean);
    const auto hi = adjusted_mi(t, NormalizerMode::kMax);
    CHECK(lo.normalizer <= mid.normalizer);
    CHECK(mid.normalizer <= hi.normalizer);
    CHECK(hi.normalizer ==
          Catch::Approx(std::max(
              entropy(std::span<const double>(t.row_marginals)),
              entropy(std::span<const double>(t.col_marginals)))));
  }

  SECTION("rejects single-observation tables") {
    const auto t = ContingencyTable::from_counts(1, 1, {1});
    CHECK_THROWS_AS(adjusted_mi(t), std::invalid_argument);
  }
}

TEST_CASE("adjusted CMI") {
  Rng rng(21);
  const std::size_t n = 300;
  const auto y = random_codes(rng, n, 2);

  SECTION("perfect prediction scores 1 when A varies within each stratum") {
    auto a = random_codes(rng, n, 2);
    // Force both values of A into both strata.
    a[0] = 0; a[1] = 1; a[2] = 0; a[3] = 1;
    std::vector<std::int32_t> y_fixed(y);
    y_fixed[0] = 0; y_fixed[1] = 0; y_fixed[2] = 1; y_fixed[3] = 1;
    const auto strata = StratifiedTables::from_codes(a, a, y_fixed, 2, 2, 2);
    const auto s = adjusted_cmi(strata);
    CHECK_FALSE(s.degenerate);
    CHECK(s.adjusted == Catch::Approx(1.0).margin(1e-12));
  }

  SECTION("prediction constant within strata scores ~0") {
    auto a = random_codes(rng, n, 2);
    std::vector<std::int32_t> from_y(n);
    for (std::size_t i = 0; i < n; ++i) from_y[i] = y[i];
    const auto strata = StratifiedTables::from_codes(a, from_y, y, 2, 2, 2);
    const auto s = adjusted_cmi(strata);
    CHECK(std::abs(s.adjusted) < 1e-12);
  }

  SECTION("raw field carries the unadjusted CMI") {
    const auto a = random_codes(rng, n, 2);
    const auto b = random_codes(rng, n, 2);
    const auto strata = StratifiedTables::from_codes(a, b, y, 2, 2, 2);
    CHECK(adjusted_cmi(strata).raw ==
          Catch::Approx(conditional_mutual_information(strata)).margin(1e-13));
  }

  SECTION("adjusted stays below 1") {
    for (int trial = 0; trial < 20; ++trial) {
      const auto a = random_codes(rng, 60, 3);
      const auto b = random_codes(rng, 60, 3);
      const auto c = random_codes(rng, 60, 2);
      const auto s = adjusted_cmi(StratifiedTables::from_codes(a, b, c, 3, 3, 2));
      if (!s.degenerate) CHECK(s.adjusted <= 1.0 + 1e-12);
    }
  }
}

TEST_CASE("raw MI baseline grows as N shrinks while adjusted stays centered") {
  Rng rng(31);
  const int seeds = 40;
  double raw_small = 0.0, raw_large = 0.0, adj_small = 0.0, adj_large = 0.0;
  for (int s = 0; s < seeds; ++s) {
    const auto a100 = random_codes(rng, 100, 2);
    const auto b100 = random_codes(rng, 100, 2);
    const auto t100 = ContingencyTable::from_codes(a100, b100, 2, 2);
    raw_small += mutual_information(t100);
    adj_small += adjusted_mi(t100).adjusted;

    const auto a4k = random_codes(rng, 4000, 2);
    const auto b4k = random_codes(rng, 4000, 2);
    const auto t4k = ContingencyTable::from_codes(a4k, b4k, 2, 2);
    raw_large += mutual_information(t4k);
    adj_large += adjusted_mi(t4k).adjusted;
  }
  CHECK(raw_small / seeds > raw_large / seeds);
  CHECK(std::abs(adj_small / seeds) < 0.03);
  CHECK(std::abs(adj_large / seeds) < 0.03);
}
