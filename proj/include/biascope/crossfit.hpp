#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "biascope/csv.hpp"
#include "biascope/folds.hpp"
#include "biascope/logistic.hpp"
#include "biascope/matrix.hpp"
#include "biascope/table.hpp"

namespace biascope {

struct CrossFitConfig {
  std::size_t folds = 3;
  double val_fraction = 0.10;
  TrainConfig train;
  std::uint64_t seed = 0;
};

/// Whole-dataset out-of-fold predictions: row i is predicted by the model
/// whose training (and validation) data excluded row i.
struct CrossFitResult {
  std::vector<std::int32_t> predicted;    // argmax class per row
  Matrix scores;                          // n x K probabilities
  std::vector<std::int32_t> fold_of_row;  // -1 when external
  std::vector<PredictorModel> fold_models;
  std::vector<std::string> warnings;
  bool external = false;
  std::size_t n_classes = 0;
};

/// Cross-fit the baseline predictor: for each fold, split the out-of-fold
/// pool 90:10 into train/validation (stratified by class, seeded from
/// (seed, fold)), train with early stopping, and predict the held-out fold.
inline CrossFitResult crossfit_fit_predict(const Matrix& x,
                                           std::span<const std::int32_t> codes,
                                           std::size_t n_classes,
                                           const FoldAssignment& folds,
                                           const CrossFitConfig& config) {
  const std::size_t n = x.rows;
  if (codes.size() != n)
    throw std::invalid_argument("crossfit: feature/code length mismatch");
  if (folds.fold_of_row.size() != n)
    throw std::invalid_argument("crossfit: fold assignment length mismatch");
  if (folds.k < 2) throw std::invalid_argument("crossfit: need k >= 2 folds");
  if (config.val_fraction < 0.0 || config.val_fraction >= 1.0)
    throw std::invalid_argument("crossfit: val_fraction must be in [0, 1)");

  CrossFitResult out;
  out.n_classes = n_classes;
  out.predicted.assign(n, -1);
  out.scores = Matrix(n, n_classes);
  out.fold_of_row.assign(folds.fold_of_row.begin(), folds.fold_of_row.end());

  for (std::size_t f = 0; f < folds.k; ++f) {
    // Pool = rows outside fold f, bucketed by class in row order.
    std::vector<std::vector<std::size_t>> by_class(n_classes);
    for (std::size_t i = 0; i < n; ++i)
      if (static_cast<std::size_t>(folds.fold_of_row[i]) != f)
        by_class[static_cast<std::size_t>(codes[i])].push_back(i);

    Rng rng(derive_seed(config.seed, f));
    std::vector<std::size_t> train_rows, val_rows;
    for (std::size_t c = 0; c < n_classes; ++c) {
      auto& rows = by_class[c];
      rng.shuffle(rows);
      const std::size_t n_val = static_cast<std::size_t>(
          config.val_fraction * static_cast<double>(rows.size()));
      val_rows.insert(val_rows.end(), rows.begin(), rows.begin() + n_val);
      train_rows.insert(train_rows.end(), rows.begin() + n_val, rows.end());
      if (rows.empty())
        out.warnings.push_back("fold " + std::to_string(f) + ": class " +
                               std::to_string(c) +
                               " absent from training data; never predicted "
                               "in this fold");
    }
    // Gradient sums run in row order and float addition is not associative;
    // canonical (sorted) order keeps the fit bitwise reproducible.
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(val_rows.begin(), val_rows.end());

    const Matrix x_train = x.gather_rows(train_rows);
    const Matrix x_val = x.gather_rows(val_rows);
    std::vector<std::int32_t> a_train, a_val;
    for (std::size_t i : train_rows) a_train.push_back(codes[i]);
    for (std::size_t i : val_rows) a_val.push_back(codes[i]);

    TrainConfig train_config = config.train;
    train_config.seed = derive_seed(config.seed, f, 1);
    out.fold_models.push_back(train_baseline(x_train, a_train, x_val, a_val,
                                             n_classes, train_config));

    const PredictorModel& model = out.fold_models.back();
    std::vector<double> probs(n_classes);
    for (std::size_t i = 0; i < n; ++i) {
      if (static_cast<std::size_t>(folds.fold_of_row[i]) != f) continue;
      model.predict_proba(x.row(i), probs);
      std::copy(probs.begin(), probs.end(), out.scores.row(i).begin());
      out.predicted[i] = PredictorModel::argmax_class(probs);
    }
  }

  for (std::int32_t p : out.predicted)
    if (p < 0)
      throw std::logic_error("crossfit: a row was never predicted");
  return out;
}

inline Matrix feature_matrix(const AuditTable& table,
                             std::span<const std::string> feature_names) {
  Matrix x(table.n_rows, feature_names.size());
  for (std::size_t j = 0; j < feature_names.size(); ++j) {
    const NumericColumn& col = table.feature(feature_names[j]);
    for (std::size_t i = 0; i < table.n_rows; ++i) x.at(i, j) = col.values[i];
  }
  return x;
}

inline Matrix feature_matrix(const AuditTable& table) {
  std::vector<std::string> names;
  for (const auto& col : table.features) names.push_back(col.name);
  return feature_matrix(table, names);
}

/// Cross-fit predictions for `attribute` from the table's feature columns.
inline CrossFitResult crossfit_predict(const AuditTable& table,
                                       const std::string& attribute,
                                       const FoldAssignment& folds,
                                       const CrossFitConfig& config) {
  if (table.features.empty())
    throw std::invalid_argument(
        "crossfit: table has no feature columns to predict from");
  const CategoricalColumn& col = table.attribute(attribute);
  return crossfit_fit_predict(feature_matrix(table), col.codes,
                              col.codec.size(), folds, config);
}

/// Re-apply the per-fold models to new feature rows (e.g. counterfactual
/// features for the same rows), keeping the out-of-fold discipline.
inline void predict_with_fold_models(const CrossFitResult& fit,
                                     const Matrix& x,
                                     std::vector<std::int32_t>& predicted,
                                     Matrix& scores) {
  if (fit.external || fit.fold_models.empty())
    throw std::invalid_argument(
        "crossfit: external results carry no fold models");
  if (x.rows != fit.fold_of_row.size())
    throw std::invalid_argument("crossfit: row count mismatch");
  predicted.assign(x.rows, -1);
  scores = Matrix(x.rows, fit.n_classes);
  std::vector<double> probs(fit.n_classes);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto f = static_cast<std::size_t>(fit.fold_of_row[i]);
    fit.fold_models[f].predict_proba(x.row(i), probs);
    std::copy(probs.begin(), probs.end(), scores.row(i).begin());
    predicted[i] = PredictorModel::argmax_class(probs);
  }
}

/// Wrap an ingested prediction column (already encoded against the
/// attribute codec) as an external CrossFitResult with one-hot scores.
inline CrossFitResult external_predictions(const AuditTable& table,
                                           const std::string& attribute,
                                           const std::string& column) {
  const PredictionColumn* pred = nullptr;
  for (const auto& p : table.predictions)
    if (p.name == column) pred = &p;
  if (pred == nullptr)
    throw std::invalid_argument("external: no prediction column '" + column +
                                "'");
  if (pred->attribute != attribute)
    throw std::invalid_argument("external: column '" + column +
                                "' predicts attribute '" + pred->attribute +
                                "', not '" + attribute + "'");
  const std::size_t n_classes = table.attribute(attribute).codec.size();

  CrossFitResult out;
  out.external = true;
  out.n_classes = n_classes;
  out.predicted = pred->codes;
  out.fold_of_row.assign(table.n_rows, -1);
  out.scores = Matrix(table.n_rows, n_classes);
  for (std::size_t i = 0; i < table.n_rows; ++i)
    out.scores.at(i, static_cast<std::size_t>(pred->codes[i])) = 1.0;
  return out;
}

/// Read a sidecar prediction CSV and join it to the table on row_id.
/// Accepts either a hard-label column `<attribute>_pred` or one
/// `<attribute>_prob_<class>` column per attribute class (argmax rule,
/// probabilities must sum to 1 within 1e-6).
inline CrossFitResult load_sidecar_predictions(const AuditTable& table,
                                               const std::string& attribute,
                                               std::istream& in) {
  const CategoricalCodec& codec = table.attribute(attribute).codec;
  const std::size_t n_classes = codec.size();
  const auto rows = csv::read_all(in);
  if (rows.empty()) throw std::invalid_argument("sidecar: empty file");
  const csv::Row& header = rows.front();

  const std::size_t id_idx = detail::require_column(header, "row_id");
  const std::string pred_name = attribute + "_pred";
  const auto pred_it = std::find(header.begin(), header.end(), pred_name);

  std::vector<std::size_t> prob_idx;
  const bool hard = pred_it != header.end();
  if (!hard) {
    for (const auto& value : codec.values()) {
      const std::string col = attribute + "_prob_" + value;
      const auto it = std::find(header.begin(), header.end(), col);
      if (it == header.end())
        throw std::invalid_argument(
            "sidecar: missing column '" + pred_name + "' or '" + col + "'");
      prob_idx.push_back(static_cast<std::size_t>(it - header.begin()));
    }
  }

  std::map<std::int64_t, std::size_t> sidecar_row;  // row_id -> data row
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != header.size())
      throw std::invalid_argument("sidecar: ragged row " + std::to_string(r));
    std::int64_t id = 0;
    try {
      id = static_cast<std::int64_t>(std::stoll(rows[r][id_idx]));
    } catch (const std::exception&) {
      throw std::invalid_argument("sidecar: bad row_id '" + rows[r][id_idx] +
                                  "'");
    }
    if (!sidecar_row.emplace(id, r).second)
      throw std::invalid_argument("sidecar: duplicate row_id " +
                                  std::to_string(id));
  }

  CrossFitResult out;
  out.external = true;
  out.n_classes = n_classes;
  out.predicted.assign(table.n_rows, -1);
  out.fold_of_row.assign(table.n_rows, -1);
  out.scores = Matrix(table.n_rows, n_classes);

  for (std::size_t i = 0; i < table.n_rows; ++i) {
    const auto it = sidecar_row.find(table.row_ids[i]);
    if (it == sidecar_row.end())
      throw std::invalid_argument("sidecar: no prediction for row_id " +
                                  std::to_string(table.row_ids[i]));
    const csv::Row& row = rows[it->second];
    if (hard) {
      const std::string& raw =
          row[static_cast<std::size_t>(pred_it - header.begin())];
      if (!codec.contains(raw))
        throw std::invalid_argument("sidecar: prediction '" + raw +
                                    "' unseen in attribute '" + attribute +
                                    "'");
      const std::int32_t code = codec.encode(raw);
      out.predicted[i] = code;
      out.scores.at(i, static_cast<std::size_t>(code)) = 1.0;
    } else {
      double total = 0.0;
      for (std::size_t c = 0; c < n_classes; ++c) {
        const double p = csv::parse_double(row[prob_idx[c]]);
        if (!std::isfinite(p) || p < 0.0)
          throw std::invalid_argument(
              "sidecar: invalid probability for row_id " +
              std::to_string(table.row_ids[i]));
        out.scores.at(i, c) = p;
        total += p;
      }
      if (std::abs(total - 1.0) > 1e-6)
        throw std::invalid_argument(
            "sidecar: probabilities for row_id " +
            std::to_string(table.row_ids[i]) + " sum to " +
            csv::format_double(total) + ", expected 1");
      for (std::size_t c = 0; c < n_classes; ++c) out.scores.at(i, c) /= total;
      out.predicted[i] = PredictorModel::argmax_class(out.scores.row(i));
    }
  }
  return out;
}

inline CrossFitResult load_sidecar_predictions_file(const AuditTable& table,
                                                    const std::string& attribute,
                                                    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("sidecar: cannot open '" + path + "'");
  return load_sidecar_predictions(table, attribute, in);
}

}  // namespace biascope
