// biascope: audit tabular datasets for shortcut risk.
//
// Subcommands:
//   audit       rank attributes by utility and detectability
//   simulate    draw a synthetic dataset from a config file
//   experiment  run one of the built-in synthetic studies (e1..e4)
//   stat        one-off adjusted MI / CMI from a CSV

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "biascope.hpp"

namespace {

using namespace biascope;

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("bad JSON in '" + path + "': " + e.what());
  }
  if (!j.is_object())
    throw std::runtime_error("'" + path + "': expected a JSON object");
  return j;
}

void write_json_file(const nlohmann::json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path +
                                     "' for writing");
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

void write_csv_file(const std::vector<csv::Row>& rows,
                    const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path +
                                     "' for writing");
  for (const auto& row : rows) csv::write_row(out, row);
  if (!out) throw std::runtime_error("write to '" + path + "' failed");
}

std::string fmt(double value) { return csv::format_double(value); }

// ---------------------------------------------------------------------------
// audit

struct AuditOptions {
  std::string input;
  std::string label;
  std::vector<std::string> attributes;
  std::vector<std::string> features;
  std::vector<std::string> exclude;
  std::string predictions;
  std::string out;
  std::string plot_out;
  std::string format = "json";
  std::string normalizer = "max";
  std::size_t n_perm = 1000;
  std::size_t n_boot = 1000;
  double cutoff = 0.95;
  std::size_t folds = 3;
  std::size_t bins = 5;
  std::uint64_t seed = 0;
  unsigned threads = 0;
};

// Attribute names the sidecar file can serve: those with a `<name>_pred`
// column or a full `<name>_prob_<class>` set.
std::set<std::string> sidecar_coverage(const std::string& path,
                                       const AuditTable& table,
                                       const std::vector<std::string>& names) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("sidecar: cannot open '" + path + "'");
  std::string header_line;
  if (!std::getline(in, header_line))
    throw std::runtime_error("sidecar: empty file '" + path + "'");
  std::istringstream header_in(header_line);
  const auto rows = csv::read_all(header_in);
  if (rows.empty()) throw std::runtime_error("sidecar: empty header");
  const std::set<std::string> columns(rows[0].begin(), rows[0].end());

  std::set<std::string> covered;
  for (const auto& name : names) {
    if (columns.count(name + "_pred") > 0) {
      covered.insert(name);
      continue;
    }
    const auto& codec = table.attribute(name).codec;
    bool all = codec.size() > 0;
    for (const auto& value : codec.values())
      if (columns.count(name + "_prob_" + value) == 0) all = false;
    if (all) covered.insert(name);
  }
  return covered;
}

void run_audit(const AuditOptions& opt) {
  std::vector<std::string> audited;
  for (const auto& name : opt.attributes) {
    if (std::find(opt.exclude.begin(), opt.exclude.end(), name) !=
        opt.exclude.end())
      continue;
    if (std::find(audited.begin(), audited.end(), name) == audited.end())
      audited.push_back(name);
  }
  if (audited.empty())
    throw std::runtime_error("audit: no attributes left to audit");

  // A column named as both attribute and feature is ingested as a numeric
  // feature and audited through a same-named quantile-binned attribute.
  std::vector<std::string> binned;
  Schema schema;
  schema.label = opt.label;
  schema.features = opt.features;
  for (const auto& name : audited) {
    if (std::find(opt.features.begin(), opt.features.end(), name) !=
        opt.features.end())
      binned.push_back(name);
    else
      schema.attributes.push_back(name);
  }

  AuditTable table = ingest_csv_file(opt.input, schema, std::cerr);
  for (const auto& name : binned) {
    table = with_binned_attribute(table, name, opt.bins);
    std::cerr << "audit: binned feature '" << name << "' into "
              << table.attribute(name).codec.size()
              << " quantile levels" << '\n';
  }

  std::map<std::string, CrossFitResult> external;
  if (!opt.predictions.empty()) {
    const auto covered = sidecar_coverage(opt.predictions, table, audited);
    for (const auto& name : covered)
      external[name] =
          load_sidecar_predictions_file(table, name, opt.predictions);
    for (const auto& name : audited)
      if (covered.count(name) == 0)
        std::cerr << "audit: sidecar has no predictions for '" << name
                  << "'; falling back to cross-fitting" << '\n';
  }

  AuditParams params;
  params.n_perm = opt.n_perm;
  params.n_boot = opt.n_boot;
  params.cutoff = opt.cutoff;
  params.folds = opt.folds;
  params.seed = opt.seed;
  params.normalizer = normalizer_from_string(opt.normalizer);
  params.n_bins = opt.bins;
  params.n_threads = opt.threads;
  params.input_digest = digest_file(opt.input);

  const AuditReport report =
      audit(table, audited, params, external.empty() ? nullptr : &external);

  emit_report(report, opt.format, opt.out);
  if (!opt.plot_out.empty()) emit_plot_data(report, opt.plot_out);

  for (const auto& r : report.records) {
    if (r.tautological) {
      std::cout << "  -  " << r.attribute << ": tautological (bijection of "
                << "the label), excluded from ranking" << '\n';
      continue;
    }
    std::cout << "  " << r.rank << ". " << r.attribute
              << ": utility=" << fmt(r.utility.adjusted)
              << " detectability=" << fmt(r.detectability.adjusted)
              << " percentile=" << fmt(r.test.percentile)
              << (r.detectable ? " DETECTABLE" : "") << '\n';
    for (const auto& w : r.warnings)
      std::cerr << "audit: " << r.attribute << ": " << w << '\n';
  }
  std::cout << "wrote " << opt.out << '\n';
  if (!opt.plot_out.empty()) std::cout << "wrote " << opt.plot_out << '\n';
}

// ---------------------------------------------------------------------------
// simulate

void run_simulate(const std::string& config_path, const std::string& out_dir) {
  const SynthConfig config = synth_config_from_json(load_json_file(config_path));
  const SynthDataset data = generate(config);
  emit_dataset(data, out_dir);
  std::cout << "wrote " << out_dir << "/data.csv (" << data.y.size()
            << " rows) and " << out_dir << "/manifest.json" << '\n';
}

// ---------------------------------------------------------------------------
// experiment

void run_experiment(const std::string& which, const std::string& config_path,
                    const std::string& out_dir) {
  const nlohmann::json config = load_json_file(config_path);
  std::filesystem::create_directories(out_dir);

  if (which == "e1") {
    const auto params = exp1_params_from_json(config);
    std::cerr << "experiment e1: " << params.utility_levels.size()
              << " utility levels x " << params.n_seeds << " seeds" << '\n';
    const auto records = run_experiment_1(params);
    std::vector<csv::Row> rows{{"utility_target", "seed", "iid_auc",
                                "wc_auc"}};
    for (const auto& r : records)
      rows.push_back({fmt(r.utility_target), std::to_string(r.seed),
                      fmt(r.iid_auc), fmt(r.wc_auc)});
    write_csv_file(rows, out_dir + "/records.csv");
    write_json_file(
        {{"experiment", "e1"},
         {"base", synth_config_to_json(params.base)},
         {"utility_levels", params.utility_levels},
         {"n_seeds", params.n_seeds},
         {"folds", params.folds}},
        out_dir + "/params.json");
  } else if (which == "e2") {
    const auto params = exp2_params_from_json(config);
    std::cerr << "experiment e2: " << params.utility_levels.size()
              << " utility levels x " << params.n_seeds << " seeds" << '\n';
    const auto records = run_experiment_2(params);
    std::vector<csv::Row> rows{{"utility_target", "seed", "naive_auc",
                                "adjusted_cmi", "raw_cmi", "ci_lower",
                                "ci_upper", "percentile", "detectable"}};
    for (const auto& r : records)
      rows.push_back({fmt(r.utility_target), std::to_string(r.seed),
                      fmt(r.naive_auc), fmt(r.cmi.adjusted), fmt(r.cmi.raw),
                      fmt(r.ci.lower), fmt(r.ci.upper), fmt(r.percentile),
                      r.detectable ? "true" : "false"});
    write_csv_file(rows, out_dir + "/records.csv");
    write_json_file(
        {{"experiment", "e2"},
         {"base", synth_config_to_json(params.base)},
         {"utility_levels", params.utility_levels},
         {"n_seeds", params.n_seeds},
         {"folds", params.folds},
         {"n_perm", params.n_perm},
         {"n_boot", params.n_boot},
         {"cutoff", params.cutoff}},
        out_dir + "/params.json");
  } else if (which == "e3") {
    const auto params = exp3_params_from_json(config);
    std::cerr << "experiment e3: " << params.signal_levels.size()
              << " signal levels" << '\n';
    const auto records = run_experiment_3(params);
    std::vector<csv::Row> rows{{"signal", "seed", "auc", "adjusted_cmi",
                                "percentile", "detectable"}};
    for (const auto& r : records)
      rows.push_back({fmt(r.signal), std::to_string(r.seed),
                      fmt(r.auc_value), fmt(r.cmi.adjusted),
                      fmt(r.percentile), r.detectable ? "true" : "false"});
    write_csv_file(rows, out_dir + "/records.csv");
    write_json_file(
        {{"experiment", "e3"},
         {"base", synth_config_to_json(params.base)},
         {"signal_levels", params.signal_levels},
         {"folds", params.folds},
         {"n_perm", params.n_perm},
         {"n_boot", params.n_boot},
         {"cutoff", params.cutoff}},
        out_dir + "/params.json");
  } else {
    const auto params = exp4_params_from_json(config);
    std::cerr << "experiment e4: " << params.signal_levels.size() << " x "
              << params.utility_levels.size() << " grid" << '\n';
    const auto result = run_experiment_4(params);
    std::vector<csv::Row> rows{{"signal", "utility_target", "seed",
                                "utility_ami", "detectability", "percentile",
                                "detectable", "iid_auc", "wc_auc",
                                "auc_drop"}};
    for (const auto& r : result.cells)
      rows.push_back({fmt(r.signal), fmt(r.utility_target),
                      std::to_string(r.seed), fmt(r.utility_ami),
                      fmt(r.detectability), fmt(r.percentile),
                      r.detectable ? "true" : "false", fmt(r.iid_auc),
                      fmt(r.wc_auc), fmt(r.auc_drop)});
    write_csv_file(rows, out_dir + "/cells.csv");
    std::vector<csv::Row> taus{{"utility_target", "kendall_tau"}};
    for (const auto& [u, tau] : result.tau_by_utility)
      taus.push_back({fmt(u), fmt(tau)});
    write_csv_file(taus, out_dir + "/taus.csv");
    write_json_file(
        {{"experiment", "e4"},
         {"base", synth_config_to_json(params.base)},
         {"signal_levels", params.signal_levels},
         {"utility_levels", params.utility_levels},
         {"folds", params.folds},
         {"n_perm", params.n_perm},
         {"cutoff", params.cutoff}},
        out_dir + "/params.json");
  }
  std::cout << "wrote " << out_dir << '\n';
}

// ---------------------------------------------------------------------------
// stat

struct StatOptions {
  std::string input;
  std::string a;
  std::string b;
  std::string given;
  std::string normalizer = "max";
  std::size_t n_perm = 0;
  std::size_t n_boot = 0;
  std::uint64_t seed = 0;
};

// Pull named columns from a CSV, dropping rows with an empty cell in any of
// them. Returns one encoded column per requested name.
struct StatColumns {
  std::vector<std::vector<std::int32_t>> codes;
  std::vector<std::size_t> k;
  std::size_t n_used = 0;
  std::size_t n_dropped = 0;
};

StatColumns read_stat_columns(const std::string& path,
                              const std::vector<std::string>& names) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  const auto rows = csv::read_all(in);
  if (rows.size() < 2)
    throw std::runtime_error("'" + path + "': need a header and data rows");

  std::vector<std::size_t> idx;
  for (const auto& name : names) {
    const auto it = std::find(rows[0].begin(), rows[0].end(), name);
    if (it == rows[0].end())
      throw std::runtime_error("'" + path + "': no column '" + name + "'");
    idx.push_back(static_cast<std::size_t>(it - rows[0].begin()));
  }

  std::vector<std::vector<std::string>> raw(names.size());
  StatColumns out;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size())
      throw std::runtime_error("'" + path + "': ragged row " +
                               std::to_string(r));
    bool missing = false;
    for (std::size_t c : idx)
      if (rows[r][c].empty()) missing = true;
    if (missing) {
      ++out.n_dropped;
      continue;
    }
    for (std::size_t j = 0; j < idx.size(); ++j)
      raw[j].push_back(rows[r][idx[j]]);
  }
  if (raw[0].empty())
    throw std::runtime_error("'" + path + "': no usable rows");

  out.n_used = raw[0].size();
  for (auto& column : raw) {
    const auto codec = CategoricalCodec::fit(column);
    std::vector<std::int32_t> codes;
    codes.reserve(column.size());
    for (const auto& v : column) codes.push_back(codec.encode(v));
    out.codes.push_back(std::move(codes));
    out.k.push_back(codec.size());
  }
  return out;
}

void run_stat_mi(const StatOptions& opt) {
  const auto cols = read_stat_columns(opt.input, {opt.a, opt.b});
  if (cols.n_dropped > 0)
    std::cerr << "stat: dropped " << cols.n_dropped
              << " row(s) with missing cells" << '\n';
  const auto mode = normalizer_from_string(opt.normalizer);
  const auto stat = adjusted_mi(
      ContingencyTable::from_codes(cols.codes[0], cols.codes[1], cols.k[0],
                                   cols.k[1]),
      mode);
  nlohmann::json j{{"statistic", "adjusted_mi"},
                   {"a", opt.a},
                   {"b", opt.b},
                   {"n", cols.n_used},
                   {"result", adjusted_to_json(stat)}};
  if (opt.n_boot > 0 && !stat.degenerate)
    j["ci"] = ci_to_json(bootstrap_adjusted_mi(cols.codes[0], cols.codes[1],
                                               cols.k[0], cols.k[1],
                                               opt.n_boot, 0.95, opt.seed,
                                               mode));
  std::cout << j.dump(2) << '\n';
}

void run_stat_cmi(const StatOptions& opt) {
  const auto cols = read_stat_columns(opt.input, {opt.a, opt.b, opt.given});
  if (cols.n_dropped > 0)
    std::cerr << "stat: dropped " << cols.n_dropped
              << " row(s) with missing cells" << '\n';
  const auto mode = normalizer_from_string(opt.normalizer);
  const auto stat = adjusted_cmi(
      StratifiedTables::from_codes(cols.codes[0], cols.codes[1],
                                   cols.codes[2], cols.k[0], cols.k[1],
                                   cols.k[2]),
      mode);
  nlohmann::json j{{"statistic", "adjusted_cmi"},
                   {"a", opt.a},
                   {"b", opt.b},
                   {"given", opt.given},
                   {"n", cols.n_used},
                   {"result", adjusted_to_json(stat)}};
  if (opt.n_perm > 0) {
    const auto test = conditional_permutation_test(
        cols.codes[0], cols.codes[1], cols.codes[2], cols.k[0], cols.k[1],
        cols.k[2], opt.n_perm, opt.seed, mode);
    j["test"] = {{"observed", test.observed},
                 {"n_permutations", test.n_permutations},
                 {"percentile", test.percentile},
                 {"seed", test.seed}};
  }
  if (opt.n_boot > 0 && !stat.degenerate)
    j["ci"] = ci_to_json(bootstrap_adjusted_cmi(
        cols.codes[0], cols.codes[1], cols.codes[2], cols.k[0], cols.k[1],
        cols.k[2], opt.n_boot, 0.95, derive_seed(opt.seed, 1), mode));
  std::cout << j.dump(2) << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"biascope: dataset shortcut-risk auditing"};
  app.set_version_flag("--version", std::string(biascope::kVersion));
  app.require_subcommand(1);

  AuditOptions audit_opt;
  auto* audit_cmd =
      app.add_subcommand("audit", "Rank attributes by utility and "
                                  "detectability");
  audit_cmd->add_option("--input", audit_opt.input, "Input CSV")
      ->required()
      ->check(CLI::ExistingFile);
  audit_cmd->add_option("--label", audit_opt.label, "Label column")
      ->required();
  audit_cmd
      ->add_option("--attributes", audit_opt.attributes,
                   "Attribute columns to audit (comma separated)")
      ->required()
      ->delimiter(',');
  audit_cmd
      ->add_option("--features", audit_opt.features,
                   "Numeric feature columns used to predict attributes")
      ->delimiter(',');
  audit_cmd
      ->add_option("--exclude", audit_opt.exclude,
                   "Attributes to leave out of the audit (domain knowledge)")
      ->delimiter(',');
  audit_cmd
      ->add_option("--predictions", audit_opt.predictions,
                   "Sidecar CSV with row_id and <attribute>_pred or "
                   "<attribute>_prob_<class> columns")
      ->check(CLI::ExistingFile);
  audit_cmd->add_option("--n-perm", audit_opt.n_perm,
                        "Permutation replicates");
  audit_cmd->add_option("--n-boot", audit_opt.n_boot,
                        "Bootstrap replicates");
  audit_cmd->add_option("--cutoff", audit_opt.cutoff,
                        "Detectability percentile cutoff");
  audit_cmd->add_option("--folds", audit_opt.folds, "Cross-fitting folds");
  audit_cmd->add_option("--bins", audit_opt.bins,
                        "Quantile bins for continuous attributes");
  audit_cmd->add_option("--seed", audit_opt.seed, "Master seed");
  audit_cmd->add_option("--threads", audit_opt.threads,
                        "Worker threads (0 = hardware)");
  audit_cmd
      ->add_option("--normalizer", audit_opt.normalizer,
                   "Entropy normalizer: max, mean, or min")
      ->check(CLI::IsMember({"max", "mean", "min"}));
  audit_cmd->add_option("--out", audit_opt.out, "Report path")->required();
  audit_cmd
      ->add_option("--format", audit_opt.format, "Report format")
      ->check(CLI::IsMember({"json", "csv"}));
  audit_cmd->add_option("--plot-out", audit_opt.plot_out,
                        "Also write scatter-ready CSV here");
  audit_cmd->callback([&audit_opt] { run_audit(audit_opt); });

  std::string sim_config, sim_out;
  auto* sim_cmd =
      app.add_subcommand("simulate", "Draw a synthetic dataset");
  sim_cmd->add_option("--config", sim_config, "SynthConfig JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  sim_cmd->add_option("--out", sim_out, "Output directory")->required();
  sim_cmd->callback([&sim_config, &sim_out] {
    run_simulate(sim_config, sim_out);
  });

  std::string exp_which, exp_config, exp_out;
  auto* exp_cmd =
      app.add_subcommand("experiment", "Run a built-in synthetic study");
  exp_cmd->add_option("which", exp_which, "One of e1, e2, e3, e4")
      ->required()
      ->check(CLI::IsMember({"e1", "e2", "e3", "e4"}));
  exp_cmd->add_option("--config", exp_config, "Experiment JSON config")
      ->required()
      ->check(CLI::ExistingFile);
  exp_cmd->add_option("--out", exp_out, "Output directory")->required();
  exp_cmd->callback([&exp_which, &exp_config, &exp_out] {
    run_experiment(exp_which, exp_config, exp_out);
  });

  StatOptions stat_opt;
  auto* stat_cmd =
      app.add_subcommand("stat", "One-off statistics from a CSV");
  stat_cmd->require_subcommand(1);
  auto* mi_cmd = stat_cmd->add_subcommand("mi", "Adjusted MI between two "
                                                "categorical columns");
  auto* cmi_cmd = stat_cmd->add_subcommand(
      "cmi", "Adjusted CMI between two columns given a third");
  for (auto* cmd : {mi_cmd, cmi_cmd}) {
    cmd->add_option("--input", stat_opt.input, "Input CSV")
        ->required()
        ->check(CLI::ExistingFile);
    cmd->add_option("--a", stat_opt.a, "First column")->required();
    cmd->add_option("--b", stat_opt.b, "Second column")->required();
    cmd->add_option("--normalizer", stat_opt.normalizer,
                    "Entropy normalizer: max, mean, or min")
        ->check(CLI::IsMember({"max", "mean", "min"}));
    cmd->add_option("--n-boot", stat_opt.n_boot,
                    "Bootstrap replicates (0 = no interval)");
    cmd->add_option("--seed", stat_opt.seed, "Seed");
  }
  cmi_cmd->add_option("--given", stat_opt.given, "Conditioning column")
      ->required();
  cmi_cmd->add_option("--n-perm", stat_opt.n_perm,
                      "Permutation replicates (0 = no test)");
  mi_cmd->callback([&stat_opt] { run_stat_mi(stat_opt); });
  cmi_cmd->callback([&stat_opt] { run_stat_cmi(stat_opt); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
