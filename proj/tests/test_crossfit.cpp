#include <cmath>
#include <set>
#include <sstream>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "biascope/crossfit.hpp"
#include "biascope/folds.hpp"
#include "biascope/logistic.hpp"
#include "biascope/matrix.hpp"
#include "biascope/metrics.hpp"
#include "biascope/rng.hpp"

using namespace biascope;

namespace {

// Two Gaussian blobs separated along both dimensions by `margin`.
struct Blobs {
  Matrix x;
  std::vector<std::int32_t> a;
};

Blobs make_blobs(std::size_t n, double margin, std::uint64_t seed,
                 double noise = 0.3) {
  Blobs out;
  out.x = Matrix(n, 2);
  out.a.resize(n);
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    out.a[i] = static_cast<std::int32_t>(i % 2);
    const double center = out.a[i] == 1 ? margin / 2 : -margin / 2;
    out.x.at(i, 0) = center + noise * rng.normal();
    out.x.at(i, 1) = center + noise * rng.normal();
  }
  return out;
}

double training_accuracy(const PredictorModel& model, const Matrix& x,
                         const std::vector<std::int32_t>& a) {
  std::vector<double> probs(model.n_classes);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    model.predict_proba(x.row(i), probs);
    if (PredictorModel::argmax_class(probs) == a[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(x.rows);
}

}  // namespace

TEST_CASE("baseline trainer separates linear blobs") {
  const Blobs blobs = make_blobs(200, 2.0, 42);
  const Matrix empty(0, 2);
  const std::vector<std::int32_t> no_codes;
  const auto model = train_baseline(blobs.x, blobs.a, empty, no_codes, 2,
                                    TrainConfig{});
  CHECK(training_accuracy(model, blobs.x, blobs.a) == 1.0);
  CHECK(model.epochs_run > 0);
}

TEST_CASE("all-zero features give the class-weighted priors") {
  // 30 rows of class 0, 10 of class 1: inverse-frequency weighting makes
  // the weighted prior uniform, so every prediction is (0.5, 0.5).
  const std::size_t n = 40;
  Matrix x(n, 3);
  std::vector<std::int32_t> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = i < 30 ? 0 : 1;
  const auto model =
      train_baseline(x, a, Matrix(0, 3), std::vector<std::int32_t>{}, 2,
                     TrainConfig{});
  std::vector<double> probs(2);
  model.predict_proba(x.row(0), probs);
  CHECK(probs[0] == Catch::Approx(0.5).margin(1e-9));
  CHECK(probs[1] == Catch::Approx(0.5).margin(1e-9));
}

TEST_CASE("training is bitwise deterministic") {
  const Blobs blobs = make_blobs(120, 1.0, 7);
  const Matrix empty(0, 2);
  const std::vector<std::int32_t> no_codes;
  const auto m1 =
      train_baseline(blobs.x, blobs.a, empty, no_codes, 2, TrainConfig{});
  const auto m2 =
      train_baseline(blobs.x, blobs.a, empty, no_codes, 2, TrainConfig{});
  CHECK(m1.weights.data == m2.weights.data);
  CHECK(m1.bias == m2.bias);
  CHECK(m1.epochs_run == m2.epochs_run);
}

TEST_CASE("single-class training data is rejected") {
  Matrix x(10, 2);
  std::vector<std::int32_t> a(10, 0);
  CHECK_THROWS_AS(train_baseline(x, a, Matrix(0, 2),
                                 std::vector<std::int32_t>{}, 2, TrainConfig{}),
                  std::invalid_argument);
}

TEST_CASE("class weighting equals minority duplication") {
  // 60 class-0 rows, 20 class-1 rows. Weighted loss on the original must
  // match the uniform-weight loss where each class-1 row appears 3 times.
  const std::size_t n0 = 60, n1 = 20;
  Matrix x(n0 + n1, 2);
  std::vector<std::int32_t> a(n0 + n1);
  Rng rng(11);
  for (std::size_t i = 0; i < n0 + n1; ++i) {
    a[i] = i < n0 ? 0 : 1;
    x.at(i, 0) = rng.normal() + a[i];
    x.at(i, 1) = rng.normal();
  }

  PredictorModel model;
  model.n_classes = 2;
  model.n_features = 2;
  model.weights = Matrix(2, 2);
  model.weights.at(0, 0) = 0.3;
  model.weights.at(1, 1) = -0.7;
  model.bias = {0.1, -0.2};
  model.class_present = {true, true};

  const auto weighted = inverse_frequency_weights(a, 2);
  const double weighted_loss = weighted_cross_entropy(model, x, a, weighted);

  Matrix x_dup((n0 + n1) + 2 * n1, 2);
  std::vector<std::int32_t> a_dup;
  std::size_t row = 0;
  for (std::size_t i = 0; i < n0 + n1; ++i) {
    const std::size_t copies = a[i] == 1 ? 3 : 1;
    for (std::size_t c = 0; c < copies; ++c) {
      x_dup.at(row, 0) = x.at(i, 0);
      x_dup.at(row, 1) = x.at(i, 1);
      a_dup.push_back(a[i]);
      ++row;
    }
  }
  const std::vector<double> uniform(a_dup.size(), 1.0);
  const double dup_loss = weighted_cross_entropy(model, x_dup, a_dup, uniform);

  CHECK(std::abs(weighted_loss - dup_loss) / std::abs(dup_loss) < 1e-6);
}

TEST_CASE("crossfit covers every row exactly once, out of fold") {
  const Blobs blobs = make_blobs(90, 1.5, 13);
  const auto folds = assign_folds(blobs.a, blobs.a, 3, 1);
  CrossFitConfig config;
  config.seed = 2;
  const auto fit = crossfit_fit_predict(blobs.x, blobs.a, 2, folds, config);

  REQUIRE(fit.predicted.size() == 90);
  REQUIRE(fit.fold_models.size() == 3);
  for (std::size_t i = 0; i < 90; ++i) {
    CHECK(fit.predicted[i] >= 0);
    CHECK(fit.fold_of_row[i] == folds.fold_of_row[i]);
    double total = 0.0;
    for (std::size_t c = 0; c < 2; ++c) total += fit.scores.at(i, c);
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
}

TEST_CASE("crossfit is deterministic given the seed") {
  const Blobs blobs = make_blobs(90, 0.8, 21);
  const auto folds = assign_folds(blobs.a, blobs.a, 3, 5);
  CrossFitConfig config;
  config.seed = 77;
  const auto f1 = crossfit_fit_predict(blobs.x, blobs.a, 2, folds, config);
  const auto f2 = crossfit_fit_predict(blobs.x, blobs.a, 2, folds, config);
  CHECK(f1.predicted == f2.predicted);
  CHECK(f1.scores.data == f2.scores.data);
}

TEST_CASE("perfectly encoded attribute is recovered out of fold") {
  const std::size_t n = 300;
  Matrix x(n, 2);
  std::vector<std::int32_t> a(n), y(n);
  Rng rng(31);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = static_cast<std::int32_t>(rng.uniform_index(2));
    y[i] = static_cast<std::int32_t>(rng.uniform_index(2));
    x.at(i, 0) = a[i] == 1 ? 4.0 : -4.0;
    x.at(i, 1) = rng.normal();
  }
  const auto folds = assign_folds(a, y, 3, 9);
  CrossFitConfig config;
  config.seed = 10;
  const auto fit = crossfit_fit_predict(x, a, 2, folds, config);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (fit.predicted[i] == a[i]) ++hits;
  CHECK(static_cast<double>(hits) / n > 0.99);
}

TEST_CASE("no-signal features give chance-level AUC") {
  double low = 1.0, high = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t n = 400;
    Matrix x(n, 2);
    std::vector<std::int32_t> a(n), y(n);
    Rng rng(derive_seed(1000, seed));
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = static_cast<std::int32_t>(rng.uniform_index(2));
      y[i] = static_cast<std::int32_t>(rng.uniform_index(2));
      x.at(i, 0) = rng.normal();
      x.at(i, 1) = rng.normal();
    }
    const auto folds = assign_folds(a, y, 3, derive_seed(2000, seed));
    CrossFitConfig config;
    config.seed = derive_seed(3000, seed);
    const auto fit = crossfit_fit_predict(x, a, 2, folds, config);
    std::vector<double> scores(n);
    for (std::size_t i = 0; i < n; ++i) scores[i] = fit.scores.at(i, 1);
    const double roc = auc(scores, a);
    low = std::min(low, roc);
    high = std::max(high, roc);
  }
  CHECK(low >= 0.40);
  CHECK(high <= 0.60);
  // The 20-seed band straddles chance.
  CHECK(low < 0.5);
  CHECK(high > 0.5);
}

TEST_CASE("class missing from a fold draws a warning") {
  // Class 2 has exactly one row; the fold holding it trains on a pool that
  // excludes it and must warn.
  const std::size_t n = 61;
  Matrix x(n, 1);
  std::vector<std::int32_t> a(n), y(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    a[i] = i < 30 ? 0 : (i < 60 ? 1 : 2);
    x.at(i, 0) = static_cast<double>(a[i]);
  }
  const auto folds = assign_folds(a, y, 3, 8);
  REQUIRE_FALSE(folds.small_cell_warnings.empty());

  CrossFitConfig config;
  config.seed = 3;
  const auto fit = crossfit_fit_predict(x, a, 3, folds, config);
  std::size_t warned = 0;
  for (const auto& w : fit.warnings)
    if (w.find("class 2") != std::string::npos) ++warned;
  CHECK(warned == 1);
  // The class-2 row still gets a prediction, just never its own class.
  CHECK(fit.predicted[60] >= 0);
  CHECK(fit.predicted[60] != 2);
}

TEST_CASE("external predictions wrap a prediction column") {
  Schema schema;
  schema.label = "y";
  schema.attributes = {"a"};
  schema.predictions = {{"a_pred", "a"}};
  std::istringstream in(
      "y,a,a_pred\n"
      "1,u,u\n"
      "0,v,u\n"
      "1,u,u\n"
      "0,v,v\n");
  std::ostringstream sink;
  const auto table = ingest_csv(in, schema, sink);

  const auto fit = external_predictions(table, "a", "a_pred");
  CHECK(fit.external);
  CHECK(fit.predicted == std::vector<std::int32_t>{0, 0, 0, 1});
  CHECK(fit.scores.at(1, 0) == 1.0);
  CHECK(fit.scores.at(3, 1) == 1.0);
  CHECK_THROWS(external_predictions(table, "a", "missing"));
}

TEST_CASE("sidecar with hard labels joins on row_id") {
  Schema schema;
  schema.label = "y";
  schema.attributes = {"a"};
  std::istringstream in(
      "y,a\n"
      "1,u\n"
      "0,v\n"
      "1,u\n");
  std::ostringstream sink;
  const auto table = ingest_csv(in, schema, sink);

  SECTION("matching file, shuffled row order") {
    std::istringstream sidecar(
        "row_id,a_pred\n"
        "2,v\n"
        "0,u\n"
        "1,u\n");
    const auto fit = load_sidecar_predictions(table, "a", sidecar);
    CHECK(fit.external);
    CHECK(fit.predicted == std::vector<std::int32_t>{0, 0, 1});
  }
  SECTION("unseen category") {
    std::istringstream sidecar("row_id,a_pred\n0,u\n1,w\n2,u\n");
    CHECK_THROWS_WITH(load_sidecar_predictions(table, "a", sidecar),
                      Catch::Matchers::ContainsSubstring("unseen"));
  }
  SECTION("missing row") {
    std::istringstream sidecar("row_id,a_pred\n0,u\n1,v\n");
    CHECK_THROWS_WITH(load_sidecar_predictions(table, "a", sidecar),
                      Catch::Matchers::ContainsSubstring("row_id 2"));
  }
  SECTION("duplicate row") {
    std::istringstream sidecar("row_id,a_pred\n0,u\n0,v\n1,u\n2,u\n");
    CHECK_THROWS_WITH(load_sidecar_predictions(table, "a", sidecar),
                      Catch::Matchers::ContainsSubstring("duplicate"));
  }
}

TEST_CASE("sidecar with probability columns uses argmax") {
  Schema schema;
  schema.label = "y";
  schema.attributes = {"a"};
  std::istringstream in(
      "y,a\n"
      "1,u\n"
      "0,v\n");
  std::ostringstream sink;
  const auto table = ingest_csv(in, schema, sink);

  SECTION("valid probabilities") {
    std::istringstream sidecar(
        "row_id,a_prob_u,a_prob_v\n"
        "0,0.2,0.8\n"
        "1,0.55,0.45\n");
    const auto fit = load_sidecar_predictions(table, "a", sidecar);
    CHECK(fit.predicted == std::vector<std::int32_t>{1, 0});
    CHECK(fit.scores.at(0, 1) == Catch::Approx(0.8));
    double total = fit.scores.at(0, 0) + fit.scores.at(0, 1);
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
  SECTION("probabilities must cover every class") {
    std::istringstream sidecar("row_id,a_prob_u\n0,1\n1,1\n");
    CHECK_THROWS_WITH(load_sidecar_predictions(table, "a", sidecar),
                      Catch::Matchers::ContainsSubstring("a_prob_v"));
  }
  SECTION("probabilities must sum to 1") {
    std::istringstream sidecar(
        "row_id,a_prob_u,a_prob_v\n"
        "0,0.2,0.9\n"
        "1,0.5,0.5\n");
    CHECK_THROWS_WITH(load_sidecar_predictions(table, "a", sidecar),
                      Catch::Matchers::ContainsSubstring("sum"));
  }
}

TEST_CASE("fold models re-apply to counterfactual features") {
  const Blobs blobs = make_blobs(120, 2.0, 55);
  const auto folds = assign_folds(blobs.a, blobs.a, 3, 6);
  CrossFitConfig config;
  config.seed = 14;
  const auto fit = crossfit_fit_predict(blobs.x, blobs.a, 2, folds, config);

  // Re-applying to the same features reproduces the out-of-fold scores.
  std::vector<std::int32_t> predicted;
  Matrix scores;
  predict_with_fold_models(fit, blobs.x, predicted, scores);
  CHECK(predicted == fit.predicted);
  CHECK(scores.data == fit.scores.data);

  // Mirrored blobs flip the prediction for a well-separated model.
  Matrix mirrored = blobs.x;
  for (auto& v : mirrored.data) v = -v;
  predict_with_fold_models(fit, mirrored, predicted, scores);
  std::size_t flipped = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i)
    if (predicted[i] != fit.predicted[i]) ++flipped;
  CHECK(flipped > 110);
}
