#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "biascope/crossfit.hpp"
#include "biascope/csv.hpp"
#include "biascope/digest.hpp"
#include "biascope/folds.hpp"
#include "biascope/inference.hpp"
#include "biascope/infotheo.hpp"
#include "biascope/parallel.hpp"
#include "biascope/rng.hpp"
#include "biascope/table.hpp"
#include "biascope/version.hpp"

namespace biascope {

struct AuditParams {
  std::size_t n_perm = 1000;
  std::size_t n_boot = 1000;
  double cutoff = 0.95;
  std::size_t folds = 3;
  std::uint64_t seed = 0;
  NormalizerMode normalizer = NormalizerMode::kMax;
  std::size_t n_bins = 5;  // quantile bins for continuous attributes
  unsigned n_threads = 0;  // attribute-level parallelism; 0 = hardware
  std::string input_digest;  // fingerprint of the source file, if any
};

/// One audited attribute. Tautological attributes (a bijection of the label)
/// carry only the utility point estimate: detectability is undefined for
/// them, they get rank 0, and they are excluded from the ranking.
struct AttributeRiskRecord {
  std::string attribute;
  AdjustedStatistic utility;
  BootstrapCI utility_ci;
  AdjustedStatistic detectability;
  BootstrapCI detectability_ci;
  PermutationTestResult test;
  bool detectable = false;
  bool tautological = false;
  std::vector<std::string> warnings;
  std::size_t rank = 0;
};

struct AuditMetadata {
  std::uint64_t seed = 0;
  std::size_t n_perm = 0;
  std::size_t n_boot = 0;
  double cutoff = 0.95;
  std::size_t folds = 0;
  std::string normalizer = "max";
  std::string version = kVersion;
  std::string input_digest;
  std::string timestamp;  // RFC 3339 UTC; excluded from the canonical form
};

struct AuditReport {
  AuditMetadata metadata;
  std::vector<AttributeRiskRecord> records;
};

namespace detail {

inline std::string utc_timestamp() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buffer[32];
  std::strftime(buffer, sizeof buffer, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buffer;
}

// A and Y are tautological when their crosstab is a bijection between the
// observed levels: exactly one nonzero cell in every row and every column.
inline bool is_tautological(const ContingencyTable& t) {
  if (t.n_rows != t.n_cols) return false;
  for (std::size_t i = 0; i < t.n_rows; ++i) {
    std::size_t nonzero = 0;
    for (std::size_t j = 0; j < t.n_cols; ++j)
      if (t.at(i, j) > 0.0) ++nonzero;
    if (nonzero != 1) return false;
  }
  for (std::size_t j = 0; j < t.n_cols; ++j) {
    std::size_t nonzero = 0;
    for (std::size_t i = 0; i < t.n_rows; ++i)
      if (t.at(i, j) > 0.0) ++nonzero;
    if (nonzero != 1) return false;
  }
  return true;
}

}  // namespace detail

/// Audit the named attributes. Each attribute draws its own seed stream from
/// (params.seed, hash of its name), so results do not depend on the order
/// attributes are listed or on the thread schedule. Predictions come from
/// `external` when it has an entry for the attribute, else from cross-fitting
/// the table's features.
inline AuditReport audit(
    const AuditTable& table, const std::vector<std::string>& attributes,
    const AuditParams& params,
    const std::map<std::string, CrossFitResult>* external = nullptr) {
  if (params.n_perm < 1)
    throw std::invalid_argument("audit: n_perm must be >= 1");
  if (!(params.cutoff > 0.0 && params.cutoff <= 1.0))
    throw std::invalid_argument("audit: cutoff must be in (0, 1]");
  for (const auto& name : attributes)
    table.attribute(name);  // throws for unknown names before any work

  AuditReport report;
  report.metadata.seed = params.seed;
  report.metadata.n_perm = params.n_perm;
  report.metadata.n_boot = params.n_boot;
  report.metadata.cutoff = params.cutoff;
  report.metadata.folds = params.folds;
  report.metadata.normalizer = to_string(params.normalizer);
  report.metadata.input_digest = params.input_digest;
  report.metadata.timestamp = detail::utc_timestamp();

  report.records.resize(attributes.size());
  parallel_for(
      attributes.size(),
      [&](std::size_t idx) {
        const std::string& name = attributes[idx];
        const CategoricalColumn& col = table.attribute(name);
        const std::size_t k_a = col.codec.size();
        const std::size_t k_y = table.label.codec.size();
        const std::uint64_t attr_seed =
            derive_seed(params.seed, fnv1a64(name));

        AttributeRiskRecord record;
        record.attribute = name;
        const auto crosstab =
            ContingencyTable::from_codes(col.codes, table.label.codes, k_a,
                                         k_y);
        record.utility = adjusted_mi(crosstab, params.normalizer);
        record.tautological = detail::is_tautological(crosstab);
        if (record.tautological) {
          record.warnings.push_back(
              "attribute is a bijection of the label; detectability is "
              "undefined and the attribute is excluded from the ranking");
          report.records[idx] = std::move(record);
          return;
        }

        if (k_a < 2) {
          // Constant attribute: nothing to predict, every stratum is
          // degenerate whatever the predictions are.
          record.warnings.push_back(
              "attribute is constant; utility and detectability are "
              "degenerate");
          record.detectability = adjusted_cmi(
              StratifiedTables::from_codes(col.codes, col.codes,
                                           table.label.codes, k_a, k_a, k_y),
              params.normalizer);
          report.records[idx] = std::move(record);
          return;
        }

        // A degenerate statistic is degenerate in every resample; its CI
        // stays empty rather than erroring out of the redraw budget.
        if (!record.utility.degenerate)
          record.utility_ci = bootstrap_adjusted_mi(
              col.codes, table.label.codes, k_a, k_y, params.n_boot, 0.95,
              derive_seed(attr_seed, 1), params.normalizer);

        CrossFitResult fit;
        if (external != nullptr && external->count(name) > 0) {
          fit = external->at(name);
        } else {
          const auto folds = assign_folds(col.codes, table.label.codes,
                                          params.folds,
                                          derive_seed(attr_seed, 2));
          record.warnings.insert(record.warnings.end(),
                                 folds.small_cell_warnings.begin(),
                                 folds.small_cell_warnings.end());
          CrossFitConfig config;
          config.folds = params.folds;
          config.seed = derive_seed(attr_seed, 3);
          fit = crossfit_predict(table, name, folds, config);
        }
        record.warnings.insert(record.warnings.end(), fit.warnings.begin(),
                               fit.warnings.end());

        record.detectability = adjusted_cmi(
            StratifiedTables::from_codes(col.codes, fit.predicted,
                                         table.label.codes, k_a, k_a, k_y),
            params.normalizer);
        if (!record.detectability.degenerate)
          record.detectability_ci = bootstrap_adjusted_cmi(
              col.codes, fit.predicted, table.label.codes, k_a, k_a, k_y,
              params.n_boot, 0.95, derive_seed(attr_seed, 4),
              params.normalizer);
        // The permutation replicates run serially inside each attribute;
        // parallelism lives at the attribute level.
        record.test = conditional_permutation_test(
            col.codes, fit.predicted, table.label.codes, k_a, k_a, k_y,
            params.n_perm, derive_seed(attr_seed, 5), params.normalizer, 1);
        record.detectable = classify_detectable(record.test, params.cutoff);
        report.records[idx] = std::move(record);
      },
      params.n_threads);

  // Rank: flagged attributes first, then higher utility, then higher
  // detectability; names break exact ties. Tautological records sort last
  // and keep rank 0.
  std::vector<std::size_t> order(report.records.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    const auto& a = report.records[i];
    const auto& b = report.records[j];
    if (a.tautological != b.tautological) return b.tautological;
    if (!a.tautological) {
      if (a.detectable != b.detectable) return a.detectable;
      if (a.utility.adjusted != b.utility.adjusted)
        return a.utility.adjusted > b.utility.adjusted;
      if (a.detectability.adjusted != b.detectability.adjusted)
        return a.detectability.adjusted > b.detectability.adjusted;
    }
    return a.attribute < b.attribute;
  });
  std::vector<AttributeRiskRecord> ranked;
  ranked.reserve(report.records.size());
  std::size_t next_rank = 1;
  for (std::size_t idx : order) {
    auto& record = report.records[idx];
    record.rank = record.tautological ? 0 : next_rank++;
    ranked.push_back(std::move(record));
  }
  report.records = std::move(ranked);
  return report;
}

// ---------------------------------------------------------------------------
// Serialization. Key order inside objects is alphabetical (nlohmann maps),
// so equal reports dump to equal bytes.

inline nlohmann::json ci_to_json(const BootstrapCI& ci) {
  return {{"lower", ci.lower},
          {"upper", ci.upper},
          {"level", ci.level},
          {"n_replicates", ci.n_replicates},
          {"seed", ci.seed}};
}

inline BootstrapCI ci_from_json(const nlohmann::json& j) {
  BootstrapCI ci;
  ci.lower = j.at("lower").get<double>();
  ci.upper = j.at("upper").get<double>();
  ci.level = j.at("level").get<double>();
  ci.n_replicates = j.at("n_replicates").get<std::size_t>();
  ci.seed = j.at("seed").get<std::uint64_t>();
  return ci;
}

inline nlohmann::json adjusted_to_json(const AdjustedStatistic& s) {
  return {{"raw", s.raw},
          {"expected_under_chance", s.expected_under_chance},
          {"normalizer", s.normalizer},
          {"adjusted", s.adjusted},
          {"degenerate", s.degenerate}};
}

inline AdjustedStatistic adjusted_from_json(const nlohmann::json& j) {
  AdjustedStatistic s;
  s.raw = j.at("raw").get<double>();
  s.expected_under_chance = j.at("expected_under_chance").get<double>();
  s.normalizer = j.at("normalizer").get<double>();
  s.adjusted = j.at("adjusted").get<double>();
  s.degenerate = j.at("degenerate").get<bool>();
  return s;
}

inline nlohmann::json record_to_json(const AttributeRiskRecord& r) {
  // The permutation null samples stay in memory only; the report keeps the
  // summary needed to interpret and reproduce the test.
  return {{"attribute", r.attribute},
          {"utility", adjusted_to_json(r.utility)},
          {"utility_ci", ci_to_json(r.utility_ci)},
          {"detectability", adjusted_to_json(r.detectability)},
          {"detectability_ci", ci_to_json(r.detectability_ci)},
          {"test",
           {{"observed", r.test.observed},
            {"n_permutations", r.test.n_permutations},
            {"percentile", r.test.percentile},
            {"seed", r.test.seed}}},
          {"detectable", r.detectable},
          {"tautological", r.tautological},
          {"warnings", r.warnings},
          {"rank", r.rank}};
}

inline AttributeRiskRecord record_from_json(const nlohmann::json& j) {
  AttributeRiskRecord r;
  r.attribute = j.at("attribute").get<std::string>();
  r.utility = adjusted_from_json(j.at("utility"));
  r.utility_ci = ci_from_json(j.at("utility_ci"));
  r.detectability = adjusted_from_json(j.at("detectability"));
  r.detectability_ci = ci_from_json(j.at("detectability_ci"));
  const auto& t = j.at("test");
  r.test.observed = t.at("observed").get<double>();
  r.test.n_permutations = t.at("n_permutations").get<std::size_t>();
  r.test.percentile = t.at("percentile").get<double>();
  r.test.seed = t.at("seed").get<std::uint64_t>();
  r.detectable = j.at("detectable").get<bool>();
  r.tautological = j.at("tautological").get<bool>();
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  r.rank = j.at("rank").get<std::size_t>();
  return r;
}

inline nlohmann::json report_to_json(const AuditReport& report) {
  nlohmann::json records = nlohmann::json::array();
  for (const auto& r : report.records) records.push_back(record_to_json(r));
  return {{"metadata",
           {{"seed", report.metadata.seed},
            {"n_perm", report.metadata.n_perm},
            {"n_boot", report.metadata.n_boot},
            {"cutoff", report.metadata.cutoff},
            {"folds", report.metadata.folds},
            {"normalizer", report.metadata.normalizer},
            {"version", report.metadata.version},
            {"input_digest", report.metadata.input_digest},
            {"timestamp", report.metadata.timestamp}}},
          {"records", records}};
}

inline AuditReport report_from_json(const nlohmann::json& j) {
  AuditReport report;
  const auto& m = j.at("metadata");
  report.metadata.seed = m.at("seed").get<std::uint64_t>();
  report.metadata.n_perm = m.at("n_perm").get<std::size_t>();
  report.metadata.n_boot = m.at("n_boot").get<std::size_t>();
  report.metadata.cutoff = m.at("cutoff").get<double>();
  report.metadata.folds = m.at("folds").get<std::size_t>();
  report.metadata.normalizer = m.at("normalizer").get<std::string>();
  report.metadata.version = m.at("version").get<std::string>();
  report.metadata.input_digest = m.at("input_digest").get<std::string>();
  report.metadata.timestamp = m.value("timestamp", std::string{});
  for (const auto& rec : j.at("records"))
    report.records.push_back(record_from_json(rec));
  return report;
}

/// Serialized report with the timestamp removed: the comparison canon for
/// determinism checks.
inline std::string canonical_report_json(const AuditReport& report) {
  auto j = report_to_json(report);
  j.at("metadata").erase("timestamp");
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// File emission.

/// Fixed CSV column order (one row per attribute, ranked order):
///   rank, attribute, tautological, detectable,
///   utility, utility_degenerate, utility_ci_lower, utility_ci_upper,
///   detectability, detectability_degenerate,
///   detectability_ci_lower, detectability_ci_upper,
///   percentile, warnings (joined with "; ")
inline void write_report_csv(const AuditReport& report, std::ostream& out) {
  csv::write_row(out, csv::Row{"rank", "attribute", "tautological",
                               "detectable", "utility", "utility_degenerate",
                               "utility_ci_lower", "utility_ci_upper",
                               "detectability", "detectability_degenerate",
                               "detectability_ci_lower",
                               "detectability_ci_upper", "percentile",
                               "warnings"});
  for (const auto& r : report.records) {
    std::string joined;
    for (const auto& w : r.warnings) {
      if (!joined.empty()) joined += "; ";
      joined += w;
    }
    csv::write_row(
        out,
        csv::Row{std::to_string(r.rank), r.attribute,
                 r.tautological ? "true" : "false",
                 r.detectable ? "true" : "false",
                 csv::format_double(r.utility.adjusted),
                 r.utility.degenerate ? "true" : "false",
                 csv::format_double(r.utility_ci.lower),
                 csv::format_double(r.utility_ci.upper),
                 csv::format_double(r.detectability.adjusted),
                 r.detectability.degenerate ? "true" : "false",
                 csv::format_double(r.detectability_ci.lower),
                 csv::format_double(r.detectability_ci.upper),
                 csv::format_double(r.test.percentile), joined});
  }
}

/// Scatter-ready data: utility, detectability, label. Tautological records
/// have no detectability and are omitted.
inline void write_plot_csv(const AuditReport& report, std::ostream& out) {
  csv::write_row(out, csv::Row{"utility", "detectability", "label"});
  for (const auto& r : report.records) {
    if (r.tautological) continue;
    csv::write_row(out, csv::Row{csv::format_double(r.utility.adjusted),
                                 csv::format_double(r.detectability.adjusted),
                                 r.attribute});
  }
}

inline void emit_report(const AuditReport& report, const std::string& format,
                        const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("report: cannot open '" + path +
                             "' for writing");
  if (format == "json") {
    out << report_to_json(report).dump(2) << '\n';
  } else if (format == "csv") {
    write_report_csv(report, out);
  } else {
    throw std::invalid_argument("report: unknown format '" + format +
                                "' (expected json or csv)");
  }
  if (!out) throw std::runtime_error("report: write to '" + path +
                                     "' failed");
}

inline void emit_plot_data(const AuditReport& report,
                           const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("report: cannot open '" + path +
                             "' for writing");
  write_plot_csv(report, out);
  if (!out) throw std::runtime_error("report: write to '" + path +
                                     "' failed");
}

}  // namespace biascope
