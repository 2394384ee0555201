#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "biascope/parallel.hpp"
#include "biascope/rng.hpp"

using namespace biascope;

TEST_CASE("identical seeds give identical streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 1000; ++i) {
    CHECK(a.next_u64() == b.next_u64());
  }
  for (int i = 0; i < 100; ++i) {
    CHECK(a.uniform_real() == b.uniform_real());
    CHECK(a.normal() == b.normal());
    CHECK(a.uniform_index(97) == b.uniform_index(97));
  }
}

TEST_CASE("derived seeds differ across streams and from the master") {
  const std::uint64_t master = 1234567;
  std::set<std::uint64_t> seen{master};
  for (std::uint64_t s = 0; s < 64; ++s) {
    const auto d = derive_seed(master, s);
    CHECK(seen.insert(d).second);
    CHECK(derive_seed(master, s) == d);
  }
  CHECK(derive_seed(master, 3, 5) != derive_seed(master, 5, 3));
  CHECK(derive_seed(master, 0, 1) != derive_seed(master, 1));
}

TEST_CASE("uniform_index stays in bounds and covers small ranges") {
  Rng rng(9);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto v = rng.uniform_index(7);
    REQUIRE(v < 7);
    ++hits[v];
  }
  // Expected 10000 per bucket, sd ~ 96; allow 5 sigma.
  for (int h : hits) CHECK(std::abs(h - 10000) < 500);
  CHECK(rng.uniform_index(1) == 0);
}

TEST_CASE("uniform_real lies in [0,1) with correct moments") {
  Rng rng(17);
  double sum = 0.0, sum_sq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform_real();
    REQUIRE(u >= 0.0);
    REQUIRE(u < 1.0);
    sum += u;
    sum_sq += u * u;
  }
  CHECK(std::abs(sum / n - 0.5) < 0.005);
  CHECK(std::abs(sum_sq / n - 1.0 / 3.0) < 0.005);
}

TEST_CASE("normal has standard moments") {
  Rng rng(23);
  double sum = 0.0, sum_sq = 0.0, sum_cube = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sum_sq += z * z;
    sum_cube += z * z * z;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(std::abs(sum_sq / n - 1.0) < 0.02);
  CHECK(std::abs(sum_cube / n) < 0.05);
}

TEST_CASE("bernoulli frequency tracks p") {
  Rng rng(31);
  int ones = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ones += rng.bernoulli(0.157) ? 1 : 0;
  CHECK(std::abs(ones / static_cast<double>(n) - 0.157) < 0.005);
  for (int i = 0; i < 100; ++i) {
    CHECK_FALSE(rng.bernoulli(0.0));
    CHECK(rng.bernoulli(1.0));
  }
}

TEST_CASE("shuffle produces a permutation and is seed-deterministic") {
  std::vector<int> base(50);
  std::iota(base.begin(), base.end(), 0);

  Rng a(77), b(77);
  auto v1 = base, v2 = base;
  a.shuffle(v1);
  b.shuffle(v2);
  CHECK(v1 == v2);

  auto sorted = v1;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == base);

  // All 6 orderings of a 3-element shuffle appear.
  std::set<std::vector<int>> seen;
  Rng c(5);
  for (int i = 0; i < 500; ++i) {
    std::vector<int> t{0, 1, 2};
    c.shuffle(t);
    seen.insert(t);
  }
  CHECK(seen.size() == 6);
}

TEST_CASE("parallel_for matches serial execution for every thread count") {
  const std::size_t n = 1000;
  std::vector<double> serial(n), parallel(n);
  auto body = [](std::size_t i) {
    Rng rng(derive_seed(99, i));
    return rng.uniform_real() + static_cast<double>(i);
  };
  for (std::size_t i = 0; i < n; ++i) serial[i] = body(i);
  for (unsigned threads : {1u, 2u, 4u}) {
    std::fill(parallel.begin(), parallel.end(), 0.0);
    parallel_for(n, [&](std::size_t i) { parallel[i] = body(i); }, threads);
    CHECK(parallel == serial);
  }
}

TEST_CASE("parallel_for propagates exceptions") {
  CHECK_THROWS_AS(parallel_for(
                      100,
                      [](std::size_t i) {
                        if (i == 57) throw std::runtime_error("boom");
                      },
                      4),
                  std::runtime_error);
}
