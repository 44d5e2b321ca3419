#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sage/core.hpp"
#include "sage/dataset.hpp"

namespace sage {

inline constexpr std::size_t kMaxBins = 16;

/// Freedman-Diaconis bin count ceil(range / (2 * IQR * n^(-1/3))), capped at
/// `cap`. Constant samples (zero range or zero IQR) get a single bin.
inline std::size_t freedman_diaconis_bins(std::span<const double> values, std::size_t cap = kMaxBins) {
  if (values.empty()) throw Error(ErrorKind::empty_table, "cannot bin an empty sample");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double range = sorted.back() - sorted.front();
  const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  if (!(range > 0.0) || !(iqr > 0.0)) return 1;
  const double n = static_cast<double>(sorted.size());
  // range / (2 IQR n^(-1/3)) rearranged to avoid the reciprocal cube root
  const double k = std::ceil(range * std::cbrt(n) / (2.0 * iqr));
  return static_cast<std::size_t>(std::clamp(k, 1.0, static_cast<double>(cap)));
}

struct BinningOptions {
  enum class Rule { freedman_diaconis, fixed };
  Rule rule = Rule::freedman_diaconis;
  std::size_t fixed_bins = 10;  // used by Rule::fixed
  std::size_t max_bins = kMaxBins;
};

/// Discretization of one feature into pseudo-features.
struct FeatureBins {
  FeatureKind kind = FeatureKind::numerical;
  std::vector<double> cuts;             // numerical: a_0 < a_1 < ... < a_k
  std::vector<std::string> categories;  // categorical: first-appearance order
  PseudoId first_id = 0;

  std::size_t count() const {
    return kind == FeatureKind::numerical ? (cuts.size() < 2 ? 1 : cuts.size() - 1)
                                          : categories.size();
  }

  bool operator==(const FeatureBins&) const = default;
};

/// Active pseudo-feature per schema feature, in schema order.
struct PseudoVector {
  std::vector<PseudoId> active;

  bool operator==(const PseudoVector&) const = default;
};

/// Per-feature cut points / category lists and the dense global pseudo-feature ids.
class BinLayout {
 public:
  BinLayout() = default;

  BinLayout(FeatureSchema schema, std::vector<FeatureBins> bins)
      : schema_(std::move(schema)), bins_(std::move(bins)) {
    if (bins_.size() != schema_.size()) {
      throw Error(ErrorKind::invalid_argument, "bin layout does not cover the schema");
    }
    PseudoId next = 0;
    category_index_.resize(bins_.size());
    for (std::size_t f = 0; f < bins_.size(); ++f) {
      auto& b = bins_[f];
      if (b.kind != schema_[f].kind) {
        throw Error(ErrorKind::invalid_argument, "bin kind mismatch for '" + schema_[f].name + "'");
      }
      if (b.kind == FeatureKind::numerical) {
        if (b.cuts.size() == 1) b.cuts.push_back(b.cuts.front());
        if (b.cuts.size() < 2 || b.cuts.size() - 1 > kMaxBins) {
          throw Error(ErrorKind::invalid_argument, "bad cut points for '" + schema_[f].name + "'");
        }
        const bool degenerate = b.cuts.size() == 2 && b.cuts[0] == b.cuts[1];
        if (!degenerate && !std::is_sorted(b.cuts.begin(), b.cuts.end(), std::less_equal<>())) {
          throw Error(ErrorKind::invalid_argument,
                      "cut points not strictly increasing for '" + schema_[f].name + "'");
        }
      } else {
        if (b.categories.empty()) {
          throw Error(ErrorKind::invalid_argument, "no categories for '" + schema_[f].name + "'");
        }
        for (std::size_t c = 0; c < b.categories.size(); ++c) {
          if (!category_index_[f].emplace(b.categories[c], c).second) {
            throw Error(ErrorKind::invalid_argument,
                        "duplicate category '" + b.categories[c] + "' in '" + schema_[f].name + "'");
          }
        }
      }
      b.first_id = next;
      for (std::size_t i = 0; i < b.count(); ++i) owner_.push_back(f);
      next = static_cast<PseudoId>(next + b.count());
    }
  }

  const FeatureSchema& schema() const noexcept { return schema_; }
  std::size_t feature_count() const noexcept { return bins_.size(); }
  std::size_t pseudo_count() const noexcept { return owner_.size(); }
  const FeatureBins& bins(std::size_t feature) const { return bins_.at(feature); }
  std::size_t bin_count(std::size_t feature) const { return bins_.at(feature).count(); }

  std::size_t feature_of(PseudoId id) const { return owner_.at(id); }
  std::size_t local_index(PseudoId id) const { return id - bins_[feature_of(id)].first_id; }
  PseudoId id(std::size_t feature, std::size_t local) const {
    return static_cast<PseudoId>(bins_.at(feature).first_id + local);
  }

  double min(std::size_t feature) const { return bins_.at(feature).cuts.front(); }
  double max(std::size_t feature) const { return bins_.at(feature).cuts.back(); }

  /// Bin interval [lo, hi); the last bin is closed on the right.
  std::pair<double, double> interval(PseudoId id) const {
    const auto& b = bins_[feature_of(id)];
    const auto i = local_index(id);
    return {b.cuts[i], b.cuts[i + 1]};
  }

  bool contains(std::size_t feature, const Value& v) const {
    const auto& b = bins_.at(feature);
    if (b.kind == FeatureKind::numerical) {
      return is_number(v) && as_number(v) >= b.cuts.front() && as_number(v) <= b.cuts.back();
    }
    return !is_number(v) && category_index_[feature].contains(as_text(v));
  }

  /// Pseudo-feature activated by `v`. Numerical bins are half-open
  /// [a_(i-1), a_i) except the last, which also captures a_k = max.
  PseudoId assign(std::size_t feature, const Value& v) const {
    const auto& b = bins_.at(feature);
    const auto& name = schema_[feature].name;
    if (b.kind == FeatureKind::numerical) {
      if (!is_number(v)) throw Error(ErrorKind::type_mismatch, "'" + name + "' expects a number");
      const double x = as_number(v);
      if (!(x >= b.cuts.front() && x <= b.cuts.back())) {
        throw Error(ErrorKind::out_of_range,
                    format_number(x) + " outside [" + format_number(b.cuts.front()) + ", " +
                        format_number(b.cuts.back()) + "] for '" + name + "'");
      }
      const auto inner_begin = b.cuts.begin() + 1;
      const auto inner_end = b.cuts.end() - 1;
      const auto local = static_cast<std::size_t>(std::upper_bound(inner_begin, inner_end, x) - inner_begin);
      return static_cast<PseudoId>(b.first_id + local);
    }
    if (is_number(v)) throw Error(ErrorKind::type_mismatch, "'" + name + "' expects a category");
    auto it = category_index_[feature].find(as_text(v));
    if (it == category_index_[feature].end()) {
      throw Error(ErrorKind::unseen_category, "'" + as_text(v) + "' for '" + name + "'");
    }
    return static_cast<PseudoId>(b.first_id + it->second);
  }

  PseudoId assign(const std::string& feature, const Value& v) const {
    return assign(schema_.index_of(feature), v);
  }

  /// Candidate value standing for a pseudo-feature: the bin midpoint or the category.
  Value representative(PseudoId id) const {
    const auto f = feature_of(id);
    const auto& b = bins_[f];
    if (b.kind == FeatureKind::categorical) return b.categories[local_index(id)];
    const auto [lo, hi] = interval(id);
    return lo + (hi - lo) / 2.0;
  }

  std::string label(PseudoId id) const {
    const auto f = feature_of(id);
    const auto& b = bins_[f];
    if (b.kind == FeatureKind::categorical) return schema_[f].name + "=" + b.categories[local_index(id)];
    const auto [lo, hi] = interval(id);
    const bool last = local_index(id) + 1 == b.count();
    return schema_[f].name + "[" + format_number(lo) + "," + format_number(hi) + (last ? "]" : ")");
  }

  nlohmann::json to_json() const {
    nlohmann::json features = nlohmann::json::array();
    for (std::size_t f = 0; f < bins_.size(); ++f) {
      const auto& b = bins_[f];
      nlohmann::json entry = {{"name", schema_[f].name}, {"first_id", b.first_id}, {"count", b.count()}};
      if (b.kind == FeatureKind::numerical) entry["cuts"] = b.cuts;
      else entry["categories"] = b.categories;
      features.push_back(std::move(entry));
    }
    nlohmann::json ids = nlohmann::json::array();
    for (PseudoId id = 0; id < pseudo_count(); ++id) ids.push_back(label(id));
    return {{"features", features}, {"ids", ids}};
  }

  static BinLayout from_json(const FeatureSchema& schema, const nlohmann::json& j) {
    try {
      std::vector<FeatureBins> bins;
      const auto& features = j.at("features");
      if (features.size() != schema.size()) {
        throw Error(ErrorKind::integrity, "bins.json does not match the schema");
      }
      for (std::size_t f = 0; f < schema.size(); ++f) {
        const auto& entry = features[f];
        if (entry.at("name").get<std::string>() != schema[f].name) {
          throw Error(ErrorKind::integrity, "bins.json feature order differs from the schema");
        }
        FeatureBins b;
        b.kind = schema[f].kind;
        if (b.kind == FeatureKind::numerical) b.cuts = entry.at("cuts").get<std::vector<double>>();
        else b.categories = entry.at("categories").get<std::vector<std::string>>();
        bins.push_back(std::move(b));
      }
      return BinLayout(schema, std::move(bins));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::integrity, std::string("bins.json: ") + e.what());
    }
  }

  bool operator==(const BinLayout& o) const { return schema_ == o.schema_ && bins_ == o.bins_; }

 private:
  FeatureSchema schema_;
  std::vector<FeatureBins> bins_;
  std::vector<std::size_t> owner_;
  std::vector<std::unordered_map<std::string, std::size_t>> category_index_;
};

/// Equal-width cut points a_i = min + i * (max - min) / k, with a_k pinned to max.
inline std::vector<double> equal_width_cuts(double lo, double hi, std::size_t k) {
  if (k == 0) throw Error(ErrorKind::invalid_argument, "bin count must be positive");
  if (!(hi > lo)) return {lo, hi};
  for (; k > 1; --k) {
    const double width = (hi - lo) / static_cast<double>(k);
    std::vector<double> cuts(k + 1);
    for (std::size_t i = 0; i <= k; ++i) cuts[i] = lo + static_cast<double>(i) * width;
    cuts[k] = hi;
    // Extreme magnitude ratios can collapse neighbouring cuts; fall back to fewer bins.
    if (std::adjacent_find(cuts.begin(), cuts.end(), std::greater_equal<>()) == cuts.end()) return cuts;
  }
  return {lo, hi};
}

/// Fits bins on a training table: numerical features get equal-width bins
/// over [min, max] with k from the configured rule; categorical features list
/// their observed categories in order of first appearance.
inline BinLayout fit_bins(const Table& train, const BinningOptions& options = {}) {
  if (train.empty()) throw Error(ErrorKind::empty_table, "cannot fit bins on an empty table");
  if (options.max_bins == 0 || options.max_bins > kMaxBins) {
    throw Error(ErrorKind::invalid_argument, "max_bins must lie in [1, 16]");
  }
  if (options.rule == BinningOptions::Rule::fixed &&
      (options.fixed_bins == 0 || options.fixed_bins > options.max_bins)) {
    throw Error(ErrorKind::invalid_argument, "fixed bin count must lie in [1, max_bins]");
  }
  const auto& schema = train.schema();
  std::vector<FeatureBins> bins(schema.size());
  for (std::size_t f = 0; f < schema.size(); ++f) {
    auto& b = bins[f];
    b.kind = schema[f].kind;
    if (b.kind == FeatureKind::numerical) {
      const auto column = train.numeric_column(f);
      const auto [lo, hi] = std::minmax_element(column.begin(), column.end());
      const std::size_t k = options.rule == BinningOptions::Rule::fixed
                                ? options.fixed_bins
                                : freedman_diaconis_bins(column, options.max_bins);
      b.cuts = equal_width_cuts(*lo, *hi, k);
    } else {
      std::unordered_map<std::string, bool> seen;
      for (const auto& row : train.rows()) {
        const auto& v = as_text(row[f]);
        if (seen.emplace(v, true).second) b.categories.push_back(v);
      }
    }
  }
  return BinLayout(schema, std::move(bins));
}

inline PseudoId assign_bin(const BinLayout& layout, const std::string& feature, const Value& v) {
  return layout.assign(feature, v);
}

inline PseudoVector expand(const BinLayout& layout, const Record& record) {
  if (record.size() != layout.feature_count()) {
    throw Error(ErrorKind::invalid_argument, "record width does not match the layout");
  }
  PseudoVector out;
  out.active.reserve(record.size());
  for (std::size_t f = 0; f < record.size(); ++f) out.active.push_back(layout.assign(f, record[f]));
  return out;
}

/// Expands every row of a table; row i of the result is expand(row i).
inline std::vector<PseudoVector> expand_table(const BinLayout& layout, const Table& table,
                                              unsigned threads = 1) {
  std::vector<PseudoVector> out(table.size());
  parallel_for(table.size(), threads, [&](std::size_t r) { out[r] = expand(layout, table.row(r)); });
  return out;
}

}  // namespace sage
