#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sage/core.hpp"

namespace sage {

enum class FeatureKind { numerical, categorical };
enum class Task { classification, regression, none };

inline std::string_view to_string(FeatureKind k) {
  return k == FeatureKind::numerical ? "numerical" : "categorical";
}

inline std::string_view to_string(Task t) {
  switch (t) {
    case Task::classification: return "classification";
    case Task::regression: return "regression";
    case Task::none: return "none";
  }
  return "none";
}

struct Feature {
  std::string name;
  FeatureKind kind = FeatureKind::numerical;

  bool operator==(const Feature&) const = default;
};

/// Ordered feature list plus the optional prediction target.
class FeatureSchema {
 public:
  FeatureSchema() = default;

  FeatureSchema(std::vector<Feature> features, std::optional<std::string> target = std::nullopt,
                Task task = Task::none)
      : features_(std::move(features)), target_(std::move(target)), task_(task) {
    for (std::size_t i = 0; i < features_.size(); ++i) {
      const auto& name = features_[i].name;
      if (name.empty()) throw Error(ErrorKind::invalid_schema, "feature name is empty");
      if (!index_.emplace(name, i).second) {
        throw Error(ErrorKind::invalid_schema, "duplicate feature name '" + name + "'");
      }
    }
    if (target_ && !index_.contains(*target_)) {
      throw Error(ErrorKind::invalid_schema, "target '" + *target_ + "' is not a schema feature");
    }
    if (task_ != Task::none && !target_) {
      throw Error(ErrorKind::invalid_schema, "a task requires a target feature");
    }
    if (target_) {
      const auto kind = features_[index_.at(*target_)].kind;
      if (task_ == Task::classification && kind != FeatureKind::categorical) {
        throw Error(ErrorKind::invalid_schema, "classification target must be categorical");
      }
      if (task_ == Task::regression && kind != FeatureKind::numerical) {
        throw Error(ErrorKind::invalid_schema, "regression target must be numerical");
      }
    }
  }

  std::size_t size() const noexcept { return features_.size(); }
  const Feature& operator[](std::size_t i) const { return features_.at(i); }
  const std::vector<Feature>& features() const noexcept { return features_; }
  const std::optional<std::string>& target() const noexcept { return target_; }
  Task task() const noexcept { return task_; }

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t index_of(const std::string& name) const {
    auto idx = find(name);
    if (!idx) throw Error(ErrorKind::unknown_feature, "unknown feature '" + name + "'");
    return *idx;
  }

  std::optional<std::size_t> target_index() const {
    if (!target_) return std::nullopt;
    return index_.at(*target_);
  }

  bool operator==(const FeatureSchema& o) const {
    return features_ == o.features_ && target_ == o.target_ && task_ == o.task_;
  }

  nlohmann::json to_json() const {
    nlohmann::json features = nlohmann::json::array();
    for (const auto& f : features_) {
      features.push_back({{"name", f.name}, {"kind", to_string(f.kind)}});
    }
    nlohmann::json out = {{"features", features}, {"task", to_string(task_)}};
    out["target"] = target_ ? nlohmann::json(*target_) : nlohmann::json(nullptr);
    return out;
  }

  static FeatureSchema from_json(const nlohmann::json& j) {
    try {
      std::vector<Feature> features;
      for (const auto& f : j.at("features")) {
        const auto kind = f.at("kind").get<std::string>();
        if (kind != "numerical" && kind != "categorical") {
          throw Error(ErrorKind::invalid_schema, "unknown feature kind '" + kind + "'");
        }
        features.push_back({f.at("name").get<std::string>(),
                            kind == "numerical" ? FeatureKind::numerical : FeatureKind::categorical});
      }
      std::optional<std::string> target;
      if (j.contains("target") && !j["target"].is_null()) target = j["target"].get<std::string>();
      Task task = Task::none;
      if (j.contains("task") && !j["task"].is_null()) {
        const auto t = j["task"].get<std::string>();
        if (t == "classification") task = Task::classification;
        else if (t == "regression") task = Task::regression;
        else if (t != "none") throw Error(ErrorKind::invalid_schema, "unknown task '" + t + "'");
      }
      return FeatureSchema(std::move(features), std::move(target), task);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::invalid_schema, e.what());
    }
  }

 private:
  std::vector<Feature> features_;
  std::optional<std::string> target_;
  Task task_ = Task::none;
  std::unordered_map<std::string, std::size_t> index_;
};

/// An immutable, validated table. Rows are stored in schema column order.
class Table {
 public:
  Table() = default;

  /// Validates every row against the schema.
  Table(FeatureSchema schema, std::vector<Record> rows)
      : schema_(std::move(schema)), rows_(std::move(rows)) {
    for (std::size_t r = 0; r < rows_.size(); ++r) validate_row(r);
  }

  const FeatureSchema& schema() const noexcept { return schema_; }
  const std::vector<Record>& rows() const noexcept { return rows_; }
  const Record& row(std::size_t i) const { return rows_.at(i); }
  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }

  /// Numerical column as doubles.
  std::vector<double> numeric_column(std::size_t feature) const {
    std::vector<double> out;
    out.reserve(rows_.size());
    for (const auto& r : rows_) out.push_back(as_number(r[feature]));
    return out;
  }

  Table subset(std::span<const std::size_t> indices) const {
    std::vector<Record> rows;
    rows.reserve(indices.size());
    for (auto i : indices) rows.push_back(rows_.at(i));
    Table out;
    out.schema_ = schema_;
    out.rows_ = std::move(rows);
    return out;
  }

  bool operator==(const Table& o) const { return schema_ == o.schema_ && rows_ == o.rows_; }

 private:
  void validate_row(std::size_t r) const {
    const auto& row = rows_[r];
    if (row.size() != schema_.size()) {
      throw Error(ErrorKind::type_mismatch, "row " + std::to_string(r) + " has " +
                                                std::to_string(row.size()) + " values, expected " +
                                                std::to_string(schema_.size()));
    }
    for (std::size_t f = 0; f < row.size(); ++f) {
      const auto& feat = schema_[f];
      const bool ok = feat.kind == FeatureKind::numerical
                          ? is_number(row[f]) && std::isfinite(as_number(row[f]))
                          : !is_number(row[f]) && !as_text(row[f]).empty();
      if (!ok) {
        throw Error(ErrorKind::type_mismatch,
                    "row " + std::to_string(r) + ", feature '" + feat.name + "'");
      }
      if (!is_number(row[f]) && as_text(row[f]).find(", ") != std::string::npos) {
        throw Error(ErrorKind::type_mismatch, "row " + std::to_string(r) + ", feature '" +
                                                  feat.name + "': value contains \", \"");
      }
    }
  }

  FeatureSchema schema_;
  std::vector<Record> rows_;
};

// ---------------------------------------------------------------------------
// CSV (RFC 4180: comma separated, optional double-quote quoting, "" escapes).

namespace csv {

inline std::vector<std::vector<std::string>> parse(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool field_started = false;
  std::size_t i = 0;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
    row.clear();
  };
  if (text.starts_with("\xEF\xBB\xBF")) i = 3;
  for (; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"' && !field_started) {
      quoted = true;
      field_started = true;
    } else if (c == ',') {
      end_field();
    } else if (c == '\n') {
      end_row();
    } else if (c == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_row();
    } else {
      field.push_back(c);
      field_started = true;
    }
  }
  if (quoted) throw Error(ErrorKind::io, "unterminated quoted field");
  if (field_started || !row.empty()) end_row();
  return rows;
}

inline std::string quote(std::string_view field) {
  if (field.find_first_of(",\"\r\n") == std::string_view::npos &&
      trim(field).size() == field.size()) {
    return std::string(field);
  }
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out += '"';
  return out;
}

}  // namespace csv

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw Error(ErrorKind::io, "write failed for '" + path.string() + "'");
}

inline FeatureSchema load_schema(const std::filesystem::path& path) {
  try {
    return FeatureSchema::from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::invalid_schema, path.string() + ": " + e.what());
  }
}

/// Parses CSV text under a schema. Header columns may appear in any order;
/// rows come back in schema column order and file row order.
inline Table parse_table(std::string_view text, const FeatureSchema& schema) {
  auto cells = csv::parse(text);
  if (cells.empty()) throw Error(ErrorKind::empty_table, "missing header row");
  const auto& header = cells.front();
  std::vector<std::size_t> column_of(schema.size(), SIZE_MAX);
  for (std::size_t c = 0; c < header.size(); ++c) {
    auto idx = schema.find(std::string(trim(header[c])));
    if (idx) column_of[*idx] = c;
  }
  for (std::size_t f = 0; f < schema.size(); ++f) {
    if (column_of[f] == SIZE_MAX) {
      throw Error(ErrorKind::missing_column, "column '" + schema[f].name + "' not in header");
    }
  }
  if (cells.size() == 1) throw Error(ErrorKind::empty_table, "no data rows");

  std::vector<Record> rows;
  rows.reserve(cells.size() - 1);
  for (std::size_t r = 1; r < cells.size(); ++r) {
    const auto& line = cells[r];
    Record rec;
    rec.reserve(schema.size());
    for (std::size_t f = 0; f < schema.size(); ++f) {
      const std::size_t c = column_of[f];
      const std::string_view raw = c < line.size() ? std::string_view(line[c]) : std::string_view();
      const std::string_view cell = trim(raw);
      if (c >= line.size() || cell.empty()) {
        throw Error(ErrorKind::type_mismatch, "row " + std::to_string(r - 1) + ", feature '" +
                                                  schema[f].name + "': missing value");
      }
      if (schema[f].kind == FeatureKind::numerical) {
        double v = 0.0;
        if (!parse_number(cell, v)) {
          throw Error(ErrorKind::type_mismatch, "row " + std::to_string(r - 1) + ", feature '" +
                                                    schema[f].name + "': '" + std::string(cell) +
                                                    "' is not a finite number");
        }
        rec.emplace_back(v);
      } else {
        rec.emplace_back(std::string(cell));
      }
    }
    rows.push_back(std::move(rec));
  }
  return Table(schema, std::move(rows));
}

inline Table load_table(const std::filesystem::path& path, const FeatureSchema& schema) {
  try {
    return parse_table(read_file(path), schema);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

inline std::string to_csv(const Table& table) {
  std::string out;
  const auto& schema = table.schema();
  for (std::size_t f = 0; f < schema.size(); ++f) {
    if (f) out += ',';
    out += csv::quote(schema[f].name);
  }
  out += '\n';
  for (const auto& row : table.rows()) {
    for (std::size_t f = 0; f < row.size(); ++f) {
      if (f) out += ',';
      out += csv::quote(format_value(row[f]));
    }
    out += '\n';
  }
  return out;
}

inline void write_table(const std::filesystem::path& path, const Table& table) {
  write_file(path, to_csv(table));
}

/// Deterministic shuffled split: floor(N * train_fraction) rows to train.
/// Each side keeps the original relative row order.
inline std::pair<Table, Table> split(const Table& table, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw Error(ErrorKind::invalid_argument, "train_fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(table.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(stream_seed(seed, 0x5917));
  shuffle(order, rng);
  const auto n_train =
      static_cast<std::size_t>(std::floor(static_cast<double>(table.size()) * train_fraction));
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());
  return {table.subset(train), table.subset(test)};
}

}  // namespace sage
