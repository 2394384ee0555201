#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "biascope/rng.hpp"
#include "biascope/table.hpp"

namespace biascope {

struct FoldAssignment {
  std::vector<std::int32_t> fold_of_row;  // in [0, k)
  std::size_t k = 0;
  // One entry per (attribute, label) cell holding fewer than k rows.
  std::vector<std::string> small_cell_warnings;
};

/// Deterministic stratified k-fold assignment over the joint (A, Y) cells:
/// within each cell the rows are shuffled and dealt round-robin from a
/// seeded starting fold, so per-cell fold counts differ from proportional
/// allocation by at most 1.
inline FoldAssignment assign_folds(std::span<const std::int32_t> attribute,
                                   std::span<const std::int32_t> label,
                                   std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("assign_folds: k must be >= 2");
  if (attribute.size() != label.size())
    throw std::invalid_argument("assign_folds: array length mismatch");
  if (attribute.empty())
    throw std::invalid_argument("assign_folds: empty input");

  std::map<std::pair<std::int32_t, std::int32_t>, std::vector<std::size_t>>
      cells;
  for (std::size_t i = 0; i < attribute.size(); ++i)
    cells[{attribute[i], label[i]}].push_back(i);

  FoldAssignment out;
  out.k = k;
  out.fold_of_row.assign(attribute.size(), -1);

  std::uint64_t cell_index = 0;
  for (auto& [key, rows] : cells) {
    if (rows.size() < k)
      out.small_cell_warnings.push_back(
          "cell (attribute=" + std::to_string(key.first) +
          ", label=" + std::to_string(key.second) + ") has " +
          std::to_string(rows.size()) + " rows, fewer than k=" +
          std::to_string(k));
    Rng rng(derive_seed(seed, cell_index++));
    rng.shuffle(rows);
    const std::size_t start = rng.uniform_index(k);
    for (std::size_t i = 0; i < rows.size(); ++i)
      out.fold_of_row[rows[i]] = static_cast<std::int32_t>((start + i) % k);
  }
  return out;
}

inline FoldAssignment assign_folds(const AuditTable& table,
                                   const std::string& attribute_name,
                                   std::size_t k, std::uint64_t seed) {
  return assign_folds(table.attribute(attribute_name).codes,
                      table.label.codes, k, seed);
}

}  // namespace biascope
