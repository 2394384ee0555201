#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "biascope/csv.hpp"

namespace biascope {

enum class ColumnRole { kLabel, kAttribute, kFeature, kPrediction };

/// Role assignment for the columns of an input CSV. Columns not named here
/// are ignored at ingestion. Exactly one label column; prediction columns
/// reference the attribute they predict.
struct Schema {
  std::string label;
  std::vector<std::string> attributes;
  std::vector<std::string> features;
  // prediction column name -> attribute it predicts
  std::map<std::string, std::string> predictions;

  void validate() const {
    if (label.empty())
      throw std::invalid_argument("schema: label column is required");
    std::set<std::string> seen{label};
    auto claim = [&seen](const std::string& name, const char* role) {
      if (name.empty())
        throw std::invalid_argument(std::string("schema: empty ") + role +
                                    " column name");
      if (!seen.insert(name).second)
        throw std::invalid_argument("schema: column '" + name +
                                    "' assigned more than one role");
    };
    for (const auto& a : attributes) claim(a, "attribute");
    for (const auto& f : features) claim(f, "feature");
    for (const auto& [col, attr] : predictions) {
      claim(col, "prediction");
      if (std::find(attributes.begin(), attributes.end(), attr) ==
          attributes.end())
        throw std::invalid_argument("schema: prediction column '" + col +
                                    "' references unknown attribute '" + attr +
                                    "'");
    }
  }
};

/// Bijective mapping between observed raw string values and dense integer
/// codes [0, K). Codes follow the lexicographic order of the raw values.
class CategoricalCodec {
 public:
  CategoricalCodec() = default;

  static CategoricalCodec fit(std::span<const std::string> values) {
    CategoricalCodec codec;
    codec.values_.assign(values.begin(), values.end());
    std::sort(codec.values_.begin(), codec.values_.end());
    codec.values_.erase(
        std::unique(codec.values_.begin(), codec.values_.end()),
        codec.values_.end());
    return codec;
  }

  std::size_t size() const { return values_.size(); }

  std::int32_t encode(const std::string& value) const {
    const auto it = std::lower_bound(values_.begin(), values_.end(), value);
    if (it == values_.end() || *it != value)
      throw std::invalid_argument("codec: unseen category '" + value + "'");
    return static_cast<std::int32_t>(it - values_.begin());
  }

  bool contains(const std::string& value) const {
    return std::binary_search(values_.begin(), values_.end(), value);
  }

  const std::string& decode(std::int32_t code) const {
    if (code < 0 || static_cast<std::size_t>(code) >= values_.size())
      throw std::out_of_range("codec: code " + std::to_string(code) +
                              " outside [0, " + std::to_string(values_.size()) +
                              ")");
    return values_[static_cast<std::size_t>(code)];
  }

  const std::vector<std::string>& values() const { return values_; }

 private:
  std::vector<std::string> values_;
};

struct CategoricalColumn {
  std::string name;
  std::vector<std::int32_t> codes;
  CategoricalCodec codec;
};

struct NumericColumn {
  std::string name;
  std::vector<double> values;
};

/// Predicted values of `attribute`, encoded with that attribute's codec so
/// the code spaces align.
struct PredictionColumn {
  std::string name;
  std::string attribute;
  std::vector<std::int32_t> codes;
};

/// Column-typed dataset. Immutable after construction; all members are safe
/// for concurrent reads.
struct AuditTable {
  std::size_t n_rows = 0;
  std::size_t n_dropped = 0;
  // Original 0-based data-row index (header excluded, before drops); the
  // join key for sidecar prediction files.
  std::vector<std::int64_t> row_ids;
  CategoricalColumn label;
  std::vector<CategoricalColumn> attributes;
  std::vector<NumericColumn> features;
  std::vector<PredictionColumn> predictions;

  const CategoricalColumn& attribute(const std::string& name) const {
    for (const auto& col : attributes)
      if (col.name == name) return col;
    throw std::invalid_argument("table: no attribute column '" + name + "'");
  }

  bool has_attribute(const std::string& name) const {
    for (const auto& col : attributes)
      if (col.name == name) return true;
    return false;
  }

  const NumericColumn& feature(const std::string& name) const {
    for (const auto& col : features)
      if (col.name == name) return col;
    throw std::invalid_argument("table: no feature column '" + name + "'");
  }

  bool has_feature(const std::string& name) const {
    for (const auto& col : features)
      if (col.name == name) return true;
    return false;
  }

  const PredictionColumn* prediction_for(const std::string& attribute) const {
    for (const auto& col : predictions)
      if (col.attribute == attribute) return &col;
    return nullptr;
  }
};

namespace detail {

inline std::size_t require_column(const csv::Row& header,
                                  const std::string& name) {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end())
    throw std::invalid_argument("ingest: column '" + name +
                                "' not found in header");
  return static_cast<std::size_t>(it - header.begin());
}

}  // namespace detail

/// Parse a CSV stream against `schema`. Rows with a missing (empty) cell in
/// any schema column are dropped and counted; a summary of drops goes to
/// `diagnostics`. Throws on unknown columns, unparsable or non-finite
/// feature values, a constant label, and prediction values unseen in the
/// predicted attribute.
inline AuditTable ingest_csv(std::istream& in, const Schema& schema,
                             std::ostream& diagnostics = std::cerr) {
  schema.validate();
  const auto rows = csv::read_all(in);
  if (rows.empty()) throw std::invalid_argument("ingest: empty input");
  const csv::Row& header = rows.front();

  const std::size_t label_idx = detail::require_column(header, schema.label);
  std::vector<std::size_t> attr_idx, feat_idx, pred_idx;
  for (const auto& a : schema.attributes)
    attr_idx.push_back(detail::require_column(header, a));
  for (const auto& f : schema.features)
    feat_idx.push_back(detail::require_column(header, f));
  std::vector<std::pair<std::string, std::string>> pred_cols(
      schema.predictions.begin(), schema.predictions.end());
  for (const auto& [col, attr] : pred_cols)
    pred_idx.push_back(detail::require_column(header, col));

  std::vector<std::size_t> audited = {label_idx};
  audited.insert(audited.end(), attr_idx.begin(), attr_idx.end());
  audited.insert(audited.end(), feat_idx.begin(), feat_idx.end());
  audited.insert(audited.end(), pred_idx.begin(), pred_idx.end());

  AuditTable table;
  std::vector<std::string> label_raw;
  std::vector<std::vector<std::string>> attr_raw(attr_idx.size());
  std::vector<std::vector<std::string>> pred_raw(pred_idx.size());
  table.features.resize(feat_idx.size());
  for (std::size_t j = 0; j < feat_idx.size(); ++j)
    table.features[j].name = schema.features[j];

  for (std::size_t r = 1; r < rows.size(); ++r) {
    const csv::Row& row = rows[r];
    const std::int64_t row_id = static_cast<std::int64_t>(r) - 1;
    if (row.size() != header.size())
      throw std::invalid_argument(
          "ingest: row " + std::to_string(row_id) + " has " +
          std::to_string(row.size()) + " fields, header has " +
          std::to_string(header.size()));
    const bool missing = std::any_of(
        audited.begin(), audited.end(),
        [&row](std::size_t idx) { return row[idx].empty(); });
    if (missing) {
      ++table.n_dropped;
      continue;
    }
    table.row_ids.push_back(row_id);
    label_raw.push_back(row[label_idx]);
    for (std::size_t j = 0; j < attr_idx.size(); ++j)
      attr_raw[j].push_back(row[attr_idx[j]]);
    for (std::size_t j = 0; j < pred_idx.size(); ++j)
      pred_raw[j].push_back(row[pred_idx[j]]);
    for (std::size_t j = 0; j < feat_idx.size(); ++j) {
      double value = 0.0;
      try {
        value = csv::parse_double(row[feat_idx[j]]);
      } catch (const std::invalid_argument&) {
        throw std::invalid_argument(
            "ingest: feature '" + schema.features[j] + "' row " +
            std::to_string(row_id) + ": not a number: '" + row[feat_idx[j]] +
            "'");
      }
      if (!std::isfinite(value))
        throw std::invalid_argument("ingest: feature '" + schema.features[j] +
                                    "' row " + std::to_string(row_id) +
                                    ": non-finite value");
      table.features[j].values.push_back(value);
    }
  }

  table.n_rows = table.row_ids.size();
  if (table.n_rows == 0)
    throw std::invalid_argument("ingest: no usable rows after drops");
  if (table.n_dropped > 0)
    diagnostics << "ingest: dropped " << table.n_dropped
                << " row(s) with missing cells" << '\n';

  table.label.name = schema.label;
  table.label.codec = CategoricalCodec::fit(label_raw);
  if (table.label.codec.size() < 2)
    throw std::invalid_argument("ingest: label column '" + schema.label +
                                "' is constant");
  table.label.codes.reserve(table.n_rows);
  for (const auto& v : label_raw)
    table.label.codes.push_back(table.label.codec.encode(v));

  for (std::size_t j = 0; j < attr_idx.size(); ++j) {
    CategoricalColumn col;
    col.name = schema.attributes[j];
    col.codec = CategoricalCodec::fit(attr_raw[j]);
    col.codes.reserve(table.n_rows);
    for (const auto& v : attr_raw[j]) col.codes.push_back(col.codec.encode(v));
    table.attributes.push_back(std::move(col));
  }

  for (std::size_t j = 0; j < pred_idx.size(); ++j) {
    PredictionColumn col;
    col.name = pred_cols[j].first;
    col.attribute = pred_cols[j].second;
    const CategoricalCodec& codec = table.attribute(col.attribute).codec;
    col.codes.reserve(table.n_rows);
    for (const auto& v : pred_raw[j]) {
      if (!codec.contains(v))
        throw std::invalid_argument(
            "ingest: prediction column '" + col.name + "' has value '" + v +
            "' unseen in attribute '" + col.attribute + "'");
      col.codes.push_back(codec.encode(v));
    }
    table.predictions.push_back(std::move(col));
  }
  return table;
}

inline AuditTable ingest_csv_file(const std::string& path,
                                  const Schema& schema,
                                  std::ostream& diagnostics = std::cerr) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw std::runtime_error("ingest: cannot open '" + path + "'");
  return ingest_csv(in, schema, diagnostics);
}

/// Write the table back out: row_id, label, attributes, features,
/// predictions, with categorical codes decoded to their raw values.
inline void emit_csv(const AuditTable& table, std::ostream& out) {
  csv::Row header{"row_id", table.label.name};
  for (const auto& col : table.attributes) header.push_back(col.name);
  for (const auto& col : table.features) header.push_back(col.name);
  for (const auto& col : table.predictions) header.push_back(col.name);
  csv::write_row(out, header);
  for (std::size_t i = 0; i < table.n_rows; ++i) {
    csv::Row row;
    row.push_back(std::to_string(table.row_ids[i]));
    row.push_back(table.label.codec.decode(table.label.codes[i]));
    for (const auto& col : table.attributes)
      row.push_back(col.codec.decode(col.codes[i]));
    for (const auto& col : table.features)
      row.push_back(csv::format_double(col.values[i]));
    for (const auto& col : table.predictions) {
      const CategoricalCodec& codec = table.attribute(col.attribute).codec;
      row.push_back(codec.decode(col.codes[i]));
    }
    csv::write_row(out, row);
  }
}

inline void emit_csv_file(const AuditTable& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out)
    throw std::runtime_error("emit: cannot open '" + path + "' for writing");
  emit_csv(table, out);
  if (!out)
    throw std::runtime_error("emit: write to '" + path + "' failed");
}

struct BinnedColumn {
  std::vector<std::int32_t> codes;  // dense in [0, n_levels)
  std::size_t n_levels = 0;
  std::vector<double> edges;  // raw quantile edges, one per interior cut
  bool degenerate = false;    // single occupied bin
};

/// Quantile binning: interior edges at the i/n_bins empirical quantiles,
/// values equal to an edge fall in the lower bin. Occupied bins are
/// renumbered densely, preserving order, so downstream contingency tables
/// have no empty rows.
inline BinnedColumn bin_continuous(std::span<const double> values,
                                   std::size_t n_bins) {
  if (n_bins < 2)
    throw std::invalid_argument("bin_continuous: n_bins must be >= 2");
  if (values.empty())
    throw std::invalid_argument("bin_continuous: empty column");
  for (double v : values)
    if (!std::isfinite(v))
      throw std::invalid_argument("bin_continuous: non-finite value");

  const std::size_t n = values.size();
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());

  BinnedColumn out;
  for (std::size_t i = 1; i < n_bins; ++i) {
    // Index of the i/n_bins quantile: ceil(i*n/n_bins) in 1-based terms.
    const std::size_t pos = (i * n + n_bins - 1) / n_bins;
    out.edges.push_back(sorted[pos - 1]);
  }

  std::vector<std::int32_t> raw(n);
  std::int32_t max_raw = 0;
  for (std::size_t r = 0; r < n; ++r) {
    const auto bin = std::lower_bound(out.edges.begin(), out.edges.end(),
                                      values[r],
                                      [](double edge, double x) {
                                        return edge < x;
                                      }) -
                     out.edges.begin();
    raw[r] = static_cast<std::int32_t>(bin);
    max_raw = std::max(max_raw, raw[r]);
  }

  std::vector<std::int32_t> remap(static_cast<std::size_t>(max_raw) + 1, -1);
  for (std::int32_t b : raw) remap[static_cast<std::size_t>(b)] = 0;
  std::int32_t next = 0;
  for (auto& m : remap)
    if (m == 0) m = next++;
  out.codes.resize(n);
  for (std::size_t r = 0; r < n; ++r)
    out.codes[r] = remap[static_cast<std::size_t>(raw[r])];
  out.n_levels = static_cast<std::size_t>(next);
  out.degenerate = out.n_levels < 2;
  return out;
}

/// Return a copy of the table in which feature `name` also appears as a
/// categorical attribute of the same name, quantile-binned.
inline AuditTable with_binned_attribute(const AuditTable& table,
                                        const std::string& name,
                                        std::size_t n_bins = 5) {
  const NumericColumn& source = table.feature(name);
  if (table.has_attribute(name))
    throw std::invalid_argument("table: attribute '" + name +
                                "' already exists");
  const BinnedColumn binned = bin_continuous(source.values, n_bins);

  AuditTable out = table;
  CategoricalColumn col;
  col.name = name;
  col.codes = binned.codes;
  // Zero-padded labels sort lexicographically in bin order, so fitting the
  // codec on them preserves the (already dense) code assignment.
  std::size_t width = 1;
  for (std::size_t v = binned.n_levels > 0 ? binned.n_levels - 1 : 0; v >= 10;
       v /= 10)
    ++width;
  std::vector<std::string> labels;
  for (std::size_t level = 0; level < binned.n_levels; ++level) {
    std::string digits = std::to_string(level);
    labels.push_back("bin" + std::string(width - digits.size(), '0') + digits);
  }
  col.codec = CategoricalCodec::fit(labels);
  out.attributes.push_back(std::move(col));
  return out;
}

}  // namespace biascope
