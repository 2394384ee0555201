#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "biascope/contingency.hpp"
#include "biascope/crossfit.hpp"
#include "biascope/csv.hpp"
#include "biascope/folds.hpp"
#include "biascope/inference.hpp"
#include "biascope/infotheo.hpp"
#include "biascope/matrix.hpp"
#include "biascope/metrics.hpp"
#include "biascope/rng.hpp"
#include "biascope/table.hpp"

namespace biascope {

/// Artifact rates conditioned on the label: p1 = P(A=1 | Y=1),
/// p0 = P(A=1 | Y=0).
struct BiasPair {
  double p1 = 0.0;
  double p0 = 0.0;
};

struct SynthConfig {
  std::size_t n = 7387;
  double prevalence = 0.157;
  std::size_t n_artifact = 1000;
  // At most one of these; with neither, the artifact is label-independent
  // (p1 = p0 = n_artifact/n).
  std::optional<BiasPair> bias;
  std::optional<double> target_utility;
  double signal = 3.0;        // artifact strength along feature axis 1
  double label_signal = 1.0;  // label strength along feature axis 0
  std::size_t n_features = 6;
  std::uint64_t seed = 0;
};

/// Generated dataset plus the ground truth needed for counterfactuals.
struct SynthDataset {
  std::vector<std::int32_t> y;
  std::vector<std::int32_t> a;
  std::vector<std::int32_t> a_wc;  // worst case: 1 - Y
  Matrix x;
  SynthConfig config;
  BiasPair resolved_bias;
};

/// Expected 2x2 (A, Y) cell counts for given rates, as real numbers.
inline ContingencyTable expected_bias_table(const BiasPair& bias,
                                            double prevalence, double n) {
  const double pi = prevalence;
  return ContingencyTable::from_counts(
      2, 2,
      {n * (1.0 - pi) * (1.0 - bias.p0), n * pi * (1.0 - bias.p1),
       n * (1.0 - pi) * bias.p0, n * pi * bias.p1});
}

namespace detail {

inline void check_rates(const BiasPair& bias) {
  if (!(bias.p1 >= 0.0 && bias.p1 <= 1.0 && bias.p0 >= 0.0 && bias.p0 <= 1.0))
    throw std::invalid_argument("synth: rates must lie in [0,1]");
}

}  // namespace detail

/// Solve for the (p1, p0) pair that holds the expected artifact count at
/// n_artifact while hitting `target_u` adjusted MI(A;Y), by bisecting a
/// one-parameter tilt that moves artifact mass from Y=0 onto Y=1. Both
/// marginals of the implied table are constant along the tilt, so the
/// adjusted MI is monotone in the tilt parameter.
inline BiasPair solve_bias_for_utility(double target_u, double prevalence,
                                       std::size_t n, std::size_t n_artifact,
                                       NormalizerMode mode =
                                           NormalizerMode::kMax) {
  if (!(prevalence > 0.0 && prevalence < 1.0))
    throw std::invalid_argument("synth: prevalence must be in (0,1)");
  if (n < 2) throw std::invalid_argument("synth: n must be >= 2");
  if (n_artifact > n)
    throw std::invalid_argument("synth: n_artifact cannot exceed n");
  if (!(target_u >= 0.0 && target_u < 1.0))
    throw std::invalid_argument("synth: target utility must be in [0,1)");

  const double q = static_cast<double>(n_artifact) / static_cast<double>(n);
  if (target_u == 0.0) return {q, q};
  if (n_artifact == 0 || n_artifact == n)
    throw std::invalid_argument(
        "synth: target utility > 0 is infeasible when the artifact is "
        "constant; feasible range is [0, 0]");

  const double pi = prevalence;
  const double p1_max = std::min(1.0, q / pi);
  auto pair_at = [&](double t) {
    BiasPair bias;
    bias.p1 = q + t * (p1_max - q);
    bias.p0 = (q - pi * bias.p1) / (1.0 - pi);
    bias.p0 = std::min(1.0, std::max(0.0, bias.p0));
    return bias;
  };
  auto utility_at = [&](double t) {
    const auto table =
        expected_bias_table(pair_at(t), pi, static_cast<double>(n));
    const auto stat = adjusted_mi(table, mode);
    return stat.degenerate ? 0.0 : stat.adjusted;
  };

  const double tolerance = 1e-4;
  const double u_max = utility_at(1.0);
  if (target_u > u_max + tolerance)
    throw std::invalid_argument(
        "synth: target utility " + csv::format_double(target_u) +
        " infeasible; feasible range is [0, " + csv::format_double(u_max) +
        "] for prevalence " + csv::format_double(pi) + " and artifact "
        "fraction " + csv::format_double(q));
  if (target_u >= u_max - tolerance) return pair_at(1.0);

  double lo = 0.0, hi = 1.0;
  for (int iter = 0; iter < 200; ++iter) {
    const double mid = 0.5 * (lo + hi);
    const double u = utility_at(mid);
    if (std::abs(u - target_u) <= tolerance) return pair_at(mid);
    (u < target_u ? lo : hi) = mid;
  }
  throw std::logic_error("synth: utility bisection failed to converge");
}

/// Draw a dataset: Y ~ Bernoulli(prevalence), A | Y per the bias pair,
/// X = label_signal*Y*e0 + signal*A*e1 + standard normal noise. The three
/// sampling streams (labels, artifacts, noise) are derived independently
/// from the seed.
inline SynthDataset generate(const SynthConfig& config) {
  if (config.n < 2) throw std::invalid_argument("synth: n must be >= 2");
  if (!(config.prevalence > 0.0 && config.prevalence < 1.0))
    throw std::invalid_argument("synth: prevalence must be in (0,1)");
  if (config.n_artifact > config.n)
    throw std::invalid_argument("synth: n_artifact cannot exceed n");
  if (!(config.signal >= 0.0) || !std::isfinite(config.signal))
    throw std::invalid_argument("synth: signal must be finite and >= 0");
  if (!std::isfinite(config.label_signal))
    throw std::invalid_argument("synth: label_signal must be finite");
  if (config.n_features < 2)
    throw std::invalid_argument(
        "synth: need >= 2 features (orthogonal label and artifact axes)");
  if (config.bias.has_value() && config.target_utility.has_value())
    throw std::invalid_argument(
        "synth: give a bias pair or a target utility, not both");

  SynthDataset data;
  data.config = config;
  if (config.bias.has_value()) {
    detail::check_rates(*config.bias);
    const double expected =
        static_cast<double>(config.n) *
        (config.prevalence * config.bias->p1 +
         (1.0 - config.prevalence) * config.bias->p0);
    if (std::abs(expected - static_cast<double>(config.n_artifact)) > 1.0)
      throw std::invalid_argument(
          "synth: bias pair implies an expected artifact count of " +
          csv::format_double(expected) + ", config says n_artifact=" +
          std::to_string(config.n_artifact));
    data.resolved_bias = *config.bias;
  } else if (config.target_utility.has_value()) {
    data.resolved_bias =
        solve_bias_for_utility(*config.target_utility, config.prevalence,
                               config.n, config.n_artifact);
  } else {
    const double q = static_cast<double>(config.n_artifact) /
                     static_cast<double>(config.n);
    data.resolved_bias = {q, q};
  }

  Rng rng_y(derive_seed(config.seed, 0));
  Rng rng_a(derive_seed(config.seed, 1));
  Rng rng_x(derive_seed(config.seed, 2));

  const std::size_t n = config.n;
  data.y.resize(n);
  data.a.resize(n);
  data.a_wc.resize(n);
  data.x = Matrix(n, config.n_features);
  for (std::size_t i = 0; i < n; ++i) {
    data.y[i] = rng_y.bernoulli(config.prevalence) ? 1 : 0;
    const double rate =
        data.y[i] == 1 ? data.resolved_bias.p1 : data.resolved_bias.p0;
    data.a[i] = rng_a.bernoulli(rate) ? 1 : 0;
    data.a_wc[i] = 1 - data.y[i];
    auto row = data.x.row(i);
    for (std::size_t j = 0; j < config.n_features; ++j) row[j] = rng_x.normal();
    row[0] += config.label_signal * static_cast<double>(data.y[i]);
    row[1] += config.signal * static_cast<double>(data.a[i]);
  }
  return data;
}

/// Features the generator would have produced for artifact assignment
/// `a_new` with the same seed: only the artifact channel moves, so the
/// counterfactual is exact algebra on the stored noise.
inline Matrix counterfactual_features(const SynthDataset& data,
                                      std::span<const std::int32_t> a_new) {
  if (a_new.size() != data.a.size())
    throw std::invalid_argument("synth: counterfactual length mismatch");
  Matrix x = data.x;
  for (std::size_t i = 0; i < data.a.size(); ++i)
    x.at(i, 1) += data.config.signal *
                  (static_cast<double>(a_new[i]) -
                   static_cast<double>(data.a[i]));
  return x;
}

inline Matrix worst_case_features(const SynthDataset& data) {
  return counterfactual_features(data, data.a_wc);
}

/// View the dataset as an AuditTable: label "y", attribute "artifact",
/// features "x0".."x<d-1>".
inline AuditTable synth_to_table(const SynthDataset& data) {
  AuditTable table;
  table.n_rows = data.y.size();
  table.row_ids.resize(table.n_rows);
  for (std::size_t i = 0; i < table.n_rows; ++i)
    table.row_ids[i] = static_cast<std::int64_t>(i);

  auto encode_binary = [](const std::vector<std::int32_t>& codes,
                          const std::string& name) {
    CategoricalColumn col;
    col.name = name;
    std::vector<std::string> raw;
    for (std::int32_t v : codes) raw.push_back(std::to_string(v));
    col.codec = CategoricalCodec::fit(raw);
    for (const auto& v : raw) col.codes.push_back(col.codec.encode(v));
    return col;
  };
  table.label = encode_binary(data.y, "y");
  table.attributes.push_back(encode_binary(data.a, "artifact"));
  for (std::size_t j = 0; j < data.x.cols; ++j) {
    NumericColumn col;
    col.name = "x" + std::to_string(j);
    col.values.resize(table.n_rows);
    for (std::size_t i = 0; i < table.n_rows; ++i)
      col.values[i] = data.x.at(i, j);
    table.features.push_back(std::move(col));
  }
  return table;
}

inline nlohmann::json synth_config_to_json(const SynthConfig& config) {
  nlohmann::json j{{"n", config.n},
                   {"prevalence", config.prevalence},
                   {"n_artifact", config.n_artifact},
                   {"signal", config.signal},
                   {"label_signal", config.label_signal},
                   {"n_features", config.n_features},
                   {"seed", config.seed}};
  if (config.bias.has_value()) {
    j["p1"] = config.bias->p1;
    j["p0"] = config.bias->p0;
  }
  if (config.target_utility.has_value())
    j["target_utility"] = *config.target_utility;
  return j;
}

/// Overlay JSON keys on `config`; absent keys keep the passed-in values, so
/// callers can start from experiment-specific defaults.
inline SynthConfig synth_config_from_json(const nlohmann::json& j,
                                          SynthConfig config) {
  config.n = j.value("n", config.n);
  config.prevalence = j.value("prevalence", config.prevalence);
  config.signal = j.value("signal", config.signal);
  config.label_signal = j.value("label_signal", config.label_signal);
  config.n_features = j.value("n_features", config.n_features);
  config.seed = j.value("seed", config.seed);
  if (j.contains("p1") != j.contains("p0"))
    throw std::invalid_argument("synth config: p1 and p0 come as a pair");
  if (j.contains("p1")) {
    config.bias = BiasPair{j.at("p1").get<double>(), j.at("p0").get<double>()};
    config.target_utility.reset();
    detail::check_rates(*config.bias);
  }
  if (j.contains("target_utility")) {
    config.target_utility = j.at("target_utility").get<double>();
    if (j.contains("p1"))
      throw std::invalid_argument(
          "synth config: give a bias pair or a target utility, not both");
    config.bias.reset();
  }
  if (j.contains("n_artifact")) {
    config.n_artifact = j.at("n_artifact").get<std::size_t>();
  } else if (j.contains("p1")) {
    // Explicit rates determine the expected count; fill it in so the
    // consistency check in generate() holds by construction.
    config.n_artifact = static_cast<std::size_t>(std::llround(
        static_cast<double>(config.n) *
        (config.prevalence * config.bias->p1 +
         (1.0 - config.prevalence) * config.bias->p0)));
  }
  return config;
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j) {
  return synth_config_from_json(j, SynthConfig{});
}

/// Write data.csv plus manifest.json (config, resolved rates, realized
/// counts) into `dir`, creating it if needed.
inline void emit_dataset(const SynthDataset& data, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::string csv_path = dir + "/data.csv";
  std::ofstream out(csv_path, std::ios::binary);
  if (!out)
    throw std::runtime_error("synth: cannot open '" + csv_path +
                             "' for writing");
  csv::Row header{"row_id", "y", "artifact", "artifact_wc"};
  for (std::size_t j = 0; j < data.x.cols; ++j)
    header.push_back("x" + std::to_string(j));
  csv::write_row(out, header);
  for (std::size_t i = 0; i < data.y.size(); ++i) {
    csv::Row row{std::to_string(i), std::to_string(data.y[i]),
                 std::to_string(data.a[i]), std::to_string(data.a_wc[i])};
    for (std::size_t j = 0; j < data.x.cols; ++j)
      row.push_back(csv::format_double(data.x.at(i, j)));
    csv::write_row(out, row);
  }
  if (!out) throw std::runtime_error("synth: write to '" + csv_path +
                                     "' failed");
  out.close();

  std::size_t n_y1 = 0, n_a1 = 0;
  for (std::int32_t v : data.y) n_y1 += static_cast<std::size_t>(v);
  for (std::int32_t v : data.a) n_a1 += static_cast<std::size_t>(v);
  nlohmann::json manifest{
      {"config", synth_config_to_json(data.config)},
      {"resolved_bias",
       {{"p1", data.resolved_bias.p1}, {"p0", data.resolved_bias.p0}}},
      {"realized", {{"n_label_1", n_y1}, {"n_artifact", n_a1}}},
      {"schema",
       {{"label", "y"},
        {"attributes", {"artifact"}},
        {"features", [&] {
           std::vector<std::string> names;
           for (std::size_t j = 0; j < data.x.cols; ++j)
             names.push_back("x" + std::to_string(j));
           return names;
         }()}}}};
  const std::string manifest_path = dir + "/manifest.json";
  std::ofstream mout(manifest_path, std::ios::binary);
  if (!mout)
    throw std::runtime_error("synth: cannot open '" + manifest_path +
                             "' for writing");
  mout << manifest.dump(2) << '\n';
  if (!mout)
    throw std::runtime_error("synth: write to '" + manifest_path + "' failed");
}

// ---------------------------------------------------------------------------
// Experiment analogs. Shared per-run plumbing first.

namespace detail {

// Stream labels for the seeds derived from one dataset seed.
enum : std::uint64_t {
  kStreamFoldsAttr = 101,
  kStreamCrossfitAttr = 102,
  kStreamPermutation = 103,
  kStreamBootstrap = 104,
  kStreamFoldsTask = 105,
  kStreamCrossfitTask = 106,
};

struct AttributeAuditOutcome {
  double naive_auc = 0.0;
  AdjustedStatistic cmi;
  double percentile = 0.0;
  BootstrapCI ci;
  bool have_ci = false;
};

// Cross-fit Ahat from the features, then score detectability of A.
inline AttributeAuditOutcome audit_artifact(const SynthDataset& data,
                                            std::size_t folds_k,
                                            std::size_t n_perm,
                                            std::size_t n_boot,
                                            std::uint64_t run_seed) {
  AttributeAuditOutcome out;
  const auto folds = assign_folds(data.a, data.y, folds_k,
                                  derive_seed(run_seed, kStreamFoldsAttr));
  CrossFitConfig config;
  config.folds = folds_k;
  config.seed = derive_seed(run_seed, kStreamCrossfitAttr);
  const auto fit = crossfit_fit_predict(data.x, data.a, 2, folds, config);

  std::vector<double> scores(data.a.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    scores[i] = fit.scores.at(i, 1);
  out.naive_auc = auc(scores, data.a);

  out.cmi = adjusted_cmi(
      StratifiedTables::from_codes(data.a, fit.predicted, data.y, 2, 2, 2));
  out.percentile =
      conditional_permutation_test(data.a, fit.predicted, data.y, 2, 2, 2,
                                   n_perm,
                                   derive_seed(run_seed, kStreamPermutation))
          .percentile;
  if (n_boot > 0) {
    out.ci = bootstrap_adjusted_cmi(data.a, fit.predicted, data.y, 2, 2, 2,
                                    n_boot, 0.95,
                                    derive_seed(run_seed, kStreamBootstrap));
    out.have_ci = true;
  }
  return out;
}

struct TaskAucPair {
  double iid = 0.0;
  double worst_case = 0.0;
};

// Cross-fit the task model Y ~ X, then evaluate out-of-fold on the original
// features and on the worst-case counterfactual features.
inline TaskAucPair task_auc_pair(const SynthDataset& data, std::size_t folds_k,
                                 std::uint64_t run_seed) {
  const auto folds = assign_folds(data.a, data.y, folds_k,
                                  derive_seed(run_seed, kStreamFoldsTask));
  CrossFitConfig config;
  config.folds = folds_k;
  config.seed = derive_seed(run_seed, kStreamCrossfitTask);
  const auto fit = crossfit_fit_predict(data.x, data.y, 2, folds, config);

  TaskAucPair out;
  std::vector<double> scores(data.y.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    scores[i] = fit.scores.at(i, 1);
  out.iid = auc(scores, data.y);

  std::vector<std::int32_t> predicted;
  Matrix wc_scores;
  predict_with_fold_models(fit, worst_case_features(data), predicted,
                           wc_scores);
  for (std::size_t i = 0; i < scores.size(); ++i)
    scores[i] = wc_scores.at(i, 1);
  out.worst_case = auc(scores, data.y);
  return out;
}

}  // namespace detail

// Experiment 1: utility sweep of a visible artifact; the worst-case
// counterfactual AUC should fall with utility and drop below chance.
struct Exp1Params {
  SynthConfig base;  // signal stays as configured (default 3.0)
  std::vector<double> utility_levels{0.0, 0.06, 0.12, 0.18, 0.24, 0.30};
  std::size_t n_seeds = 5;
  std::size_t folds = 3;
};

struct Exp1Record {
  double utility_target = 0.0;
  std::uint64_t seed = 0;
  double iid_auc = 0.0;
  double wc_auc = 0.0;
};

inline std::vector<Exp1Record> run_experiment_1(const Exp1Params& params) {
  std::vector<Exp1Record> records;
  for (std::size_t level = 0; level < params.utility_levels.size(); ++level) {
    for (std::size_t rep = 0; rep < params.n_seeds; ++rep) {
      SynthConfig config = params.base;
      config.bias.reset();
      const double u = params.utility_levels[level];
      if (u > 0.0)
        config.target_utility = u;
      else
        config.target_utility.reset();
      config.seed = derive_seed(params.base.seed, level, rep);
      const SynthDataset data = generate(config);
      const auto pair =
          detail::task_auc_pair(data, params.folds, config.seed);
      records.push_back({u, config.seed, pair.iid, pair.worst_case});
    }
  }
  return records;
}

// Experiment 2: invisible artifact (signal forced to 0); naive AUC of the
// artifact predictor looks strong at high utility while the adjusted CMI
// interval brackets zero.
struct Exp2Params {
  SynthConfig base = [] {
    SynthConfig config;
    config.signal = 0.0;
    config.label_signal = 2.0;
    return config;
  }();
  std::vector<double> utility_levels{0.06, 0.18, 0.30};
  std::size_t n_seeds = 1;
  std::size_t folds = 3;
  std::size_t n_perm = 1000;
  std::size_t n_boot = 1000;
  double cutoff = 0.95;
};

struct Exp2Record {
  double utility_target = 0.0;
  std::uint64_t seed = 0;
  double naive_auc = 0.0;
  AdjustedStatistic cmi;
  BootstrapCI ci;
  double percentile = 0.0;
  bool detectable = false;
};

inline std::vector<Exp2Record> run_experiment_2(const Exp2Params& params) {
  std::vector<Exp2Record> records;
  for (std::size_t level = 0; level < params.utility_levels.size(); ++level) {
    for (std::size_t rep = 0; rep < params.n_seeds; ++rep) {
      SynthConfig config = params.base;
      config.signal = 0.0;  // the invisible artifact is the experiment
      config.bias.reset();
      config.target_utility = params.utility_levels[level];
      config.seed = derive_seed(params.base.seed, level, rep);
      const SynthDataset data = generate(config);
      const auto outcome = detail::audit_artifact(
          data, params.folds, params.n_perm, params.n_boot, config.seed);
      Exp2Record record;
      record.utility_target = params.utility_levels[level];
      record.seed = config.seed;
      record.naive_auc = outcome.naive_auc;
      record.cmi = outcome.cmi;
      record.ci = outcome.ci;
      record.percentile = outcome.percentile;
      record.detectable = outcome.percentile >= params.cutoff;
      records.push_back(record);
    }
  }
  return records;
}

// Experiment 3: detectability sweep of a label-independent artifact, the
// Table-1 analog (AUC / adjusted CMI / percentile per signal level).
struct Exp3Params {
  SynthConfig base;
  std::vector<double> signal_levels{6.0, 3.0, 1.5, 0.75, 0.3, 0.0};
  std::size_t folds = 3;
  std::size_t n_perm = 1000;
  std::size_t n_boot = 0;  // Table 1 reports no intervals
  double cutoff = 0.95;
};

struct Exp3Record {
  double signal = 0.0;
  std::uint64_t seed = 0;
  double auc_value = 0.0;
  AdjustedStatistic cmi;
  double percentile = 0.0;
  bool detectable = false;
};

inline std::vector<Exp3Record> run_experiment_3(const Exp3Params& params) {
  std::vector<Exp3Record> records;
  for (std::size_t level = 0; level < params.signal_levels.size(); ++level) {
    SynthConfig config = params.base;
    config.bias.reset();
    config.target_utility.reset();  // A independent of Y
    config.signal = params.signal_levels[level];
    config.seed = derive_seed(params.base.seed, level);
    const SynthDataset data = generate(config);
    const auto outcome = detail::audit_artifact(data, params.folds,
                                                params.n_perm, params.n_boot,
                                                config.seed);
    Exp3Record record;
    record.signal = params.signal_levels[level];
    record.seed = config.seed;
    record.auc_value = outcome.naive_auc;
    record.cmi = outcome.cmi;
    record.percentile = outcome.percentile;
    record.detectable = outcome.percentile >= params.cutoff;
    records.push_back(record);
  }
  return records;
}

// Experiment 4: signal x utility grid; every visible cell should be flagged
// detectable, and within a utility level detectability should track the
// worst-case AUC drop.
struct Exp4Params {
  SynthConfig base;
  std::vector<double> signal_levels{6.0, 3.0, 1.5, 0.75, 0.5, 0.3};
  std::vector<double> utility_levels{0.0, 0.06, 0.12, 0.18, 0.24, 0.30};
  std::size_t folds = 3;
  std::size_t n_perm = 1000;
  double cutoff = 0.95;
};

struct Exp4Record {
  double signal = 0.0;
  double utility_target = 0.0;
  std::uint64_t seed = 0;
  double utility_ami = 0.0;  // empirical adjusted MI(A;Y)
  double detectability = 0.0;
  double percentile = 0.0;
  bool detectable = false;
  double iid_auc = 0.0;
  double wc_auc = 0.0;
  double auc_drop = 0.0;
};

struct Exp4Result {
  std::vector<Exp4Record> cells;
  // Kendall tau of (detectability, AUC drop) across signals, one entry per
  // positive utility level; undefined taus are omitted.
  std::vector<std::pair<double, double>> tau_by_utility;
};

inline Exp4Result run_experiment_4(const Exp4Params& params) {
  Exp4Result result;
  for (std::size_t ui = 0; ui < params.utility_levels.size(); ++ui) {
    for (std::size_t si = 0; si < params.signal_levels.size(); ++si) {
      SynthConfig config = params.base;
      config.bias.reset();
      const double u = params.utility_levels[ui];
      if (u > 0.0)
        config.target_utility = u;
      else
        config.target_utility.reset();
      config.signal = params.signal_levels[si];
      config.seed = derive_seed(params.base.seed, ui, si);
      const SynthDataset data = generate(config);

      Exp4Record record;
      record.signal = config.signal;
      record.utility_target = u;
      record.seed = config.seed;
      record.utility_ami =
          adjusted_mi(ContingencyTable::from_codes(data.a, data.y, 2, 2))
              .adjusted;
      const auto outcome = detail::audit_artifact(data, params.folds,
                                                  params.n_perm, 0,
                                                  config.seed);
      record.detectability = outcome.cmi.adjusted;
      record.percentile = outcome.percentile;
      record.detectable = outcome.percentile >= params.cutoff;
      const auto pair = detail::task_auc_pair(data, params.folds, config.seed);
      record.iid_auc = pair.iid;
      record.wc_auc = pair.worst_case;
      record.auc_drop = pair.iid - pair.worst_case;
      result.cells.push_back(record);
    }
  }

  for (double u : params.utility_levels) {
    if (u <= 0.0) continue;
    std::vector<double> detect, drop;
    for (const auto& cell : result.cells)
      if (cell.utility_target == u) {
        detect.push_back(cell.detectability);
        drop.push_back(cell.auc_drop);
      }
    const auto tau = kendall_tau(detect, drop);
    if (tau.defined) result.tau_by_utility.emplace_back(u, tau.value);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Config-file schemas: one JSON object per experiment, every key optional.
// "base" holds SynthConfig overrides; the rest mirror the param structs.

inline Exp1Params exp1_params_from_json(const nlohmann::json& j) {
  Exp1Params params;
  if (j.contains("base"))
    params.base = synth_config_from_json(j.at("base"), params.base);
  if (j.contains("utility_levels"))
    params.utility_levels = j.at("utility_levels").get<std::vector<double>>();
  params.n_seeds = j.value("n_seeds", params.n_seeds);
  params.folds = j.value("folds", params.folds);
  return params;
}

inline Exp2Params exp2_params_from_json(const nlohmann::json& j) {
  Exp2Params params;
  if (j.contains("base"))
    params.base = synth_config_from_json(j.at("base"), params.base);
  if (j.contains("utility_levels"))
    params.utility_levels = j.at("utility_levels").get<std::vector<double>>();
  params.n_seeds = j.value("n_seeds", params.n_seeds);
  params.folds = j.value("folds", params.folds);
  params.n_perm = j.value("n_perm", params.n_perm);
  params.n_boot = j.value("n_boot", params.n_boot);
  params.cutoff = j.value("cutoff", params.cutoff);
  return params;
}

inline Exp3Params exp3_params_from_json(const nlohmann::json& j) {
  Exp3Params params;
  if (j.contains("base"))
    params.base = synth_config_from_json(j.at("base"), params.base);
  if (j.contains("signal_levels"))
    params.signal_levels = j.at("signal_levels").get<std::vector<double>>();
  params.folds = j.value("folds", params.folds);
  params.n_perm = j.value("n_perm", params.n_perm);
  params.n_boot = j.value("n_boot", params.n_boot);
  params.cutoff = j.value("cutoff", params.cutoff);
  return params;
}

inline Exp4Params exp4_params_from_json(const nlohmann::json& j) {
  Exp4Params params;
  if (j.contains("base"))
    params.base = synth_config_from_json(j.at("base"), params.base);
  if (j.contains("signal_levels"))
    params.signal_levels = j.at("signal_levels").get<std::vector<double>>();
  if (j.contains("utility_levels"))
    params.utility_levels = j.at("utility_levels").get<std::vector<double>>();
  params.folds = j.value("folds", params.folds);
  params.n_perm = j.value("n_perm", params.n_perm);
  params.cutoff = j.value("cutoff", params.cutoff);
  return params;
}

}  // namespace biascope
