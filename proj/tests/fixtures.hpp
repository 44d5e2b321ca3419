#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sage/sage.hpp"

namespace fixture {

inline std::filesystem::path data_dir() { return SAGE_DATA_DIR; }

inline sage::Table load(const std::string& stem) {
  const auto schema = sage::load_schema(data_dir() / (stem + ".schema.json"));
  return sage::load_table(data_dir() / (stem + ".csv"), schema);
}

inline sage::Feature num(std::string name) { return {std::move(name), sage::FeatureKind::numerical}; }
inline sage::Feature cat(std::string name) { return {std::move(name), sage::FeatureKind::categorical}; }

/// Table of categorical 0/1 columns named x0, x1, ... from integer columns.
inline sage::Table binary_table(const std::vector<std::vector<int>>& columns) {
  std::vector<sage::Feature> features;
  for (std::size_t c = 0; c < columns.size(); ++c) features.push_back(cat("x" + std::to_string(c)));
  std::vector<sage::Record> rows(columns.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (const auto& col : columns) rows[r].push_back(std::to_string(col[r]));
  }
  return sage::Table(sage::FeatureSchema(features), std::move(rows));
}

/// Planted dependency: A uniform over {a0..a3}, B equals A's index with
/// probability `strength` else uniform, C independent noise.
inline sage::Table planted(std::size_t n, double strength, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<sage::Record> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = sage::uniform_index(rng, 4);
    const auto b = sage::uniform01(rng) < strength ? a : sage::uniform_index(rng, 4);
    const auto c = sage::uniform_index(rng, 4);
    rows.push_back({"a" + std::to_string(a), "b" + std::to_string(b), "c" + std::to_string(c)});
  }
  return sage::Table(sage::FeatureSchema({cat("A"), cat("B"), cat("C")}), std::move(rows));
}

}  // namespace fixture
