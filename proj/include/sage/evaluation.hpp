#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

#include "sage/core.hpp"
#include "sage/dataset.hpp"

namespace sage {

// ===========================================================================
// Feature encoding for the learners
// ===========================================================================

/// Dense encoding of every non-target feature: numerical values pass
/// through, categorical values are one-hot over the categories seen at fit.
class OneHotEncoder {
 public:
  OneHotEncoder() = default;

  static OneHotEncoder fit(const Table& table, std::optional<std::size_t> skip = std::nullopt) {
    OneHotEncoder enc;
    const auto& schema = table.schema();
    for (std::size_t f = 0; f < schema.size(); ++f) {
      if (skip && *skip == f) continue;
      Column col{f, schema[f].kind, {}};
      if (col.kind == FeatureKind::categorical) {
        for (const auto& row : table.rows()) {
          const auto& v = as_text(row[f]);
          if (std::find(col.categories.begin(), col.categories.end(), v) == col.categories.end()) {
            col.categories.push_back(v);
          }
        }
      }
      enc.width_ += col.kind == FeatureKind::numerical ? 1 : col.categories.size();
      enc.columns_.push_back(std::move(col));
    }
    return enc;
  }

  std::size_t width() const noexcept { return width_; }

  std::vector<double> encode(const Record& row) const {
    std::vector<double> out;
    out.reserve(width_);
    for (const auto& col : columns_) {
      if (col.kind == FeatureKind::numerical) {
        out.push_back(as_number(row[col.feature]));
        continue;
      }
      const auto& v = as_text(row[col.feature]);
      for (const auto& c : col.categories) out.push_back(c == v ? 1.0 : 0.0);
    }
    return out;
  }

  std::vector<std::vector<double>> encode(const Table& table) const {
    std::vector<std::vector<double>> out;
    out.reserve(table.size());
    for (const auto& row : table.rows()) out.push_back(encode(row));
    return out;
  }

 private:
  struct Column {
    std::size_t feature;
    FeatureKind kind;
    std::vector<std::string> categories;
  };
  std::vector<Column> columns_;
  std::size_t width_ = 0;
};

// ===========================================================================
// CART decision tree and bagged forest
// ===========================================================================

struct TreeOptions {
  int max_depth = 8;
  std::size_t min_samples_split = 2;
  std::size_t max_features = 0;  // 0: consider every feature at each split
};

/// CART tree: Gini impurity for classification, squared error for regression.
class DecisionTree {
 public:
  using Matrix = std::vector<std::vector<double>>;

  template <class Rng = std::mt19937_64>
  void fit_classifier(const Matrix& x, std::span<const int> y, int n_classes, const TreeOptions& options,
                      Rng* rng = nullptr) {
    classes_ = n_classes;
    fit_impl(x, [&](std::size_t i) { return static_cast<double>(y[i]); }, options, rng);
  }

  template <class Rng = std::mt19937_64>
  void fit_regressor(const Matrix& x, std::span<const double> y, const TreeOptions& options, Rng* rng = nullptr) {
    classes_ = 0;
    fit_impl(x, [&](std::size_t i) { return y[i]; }, options, rng);
  }

  /// Class distribution at the leaf (classification only).
  std::span<const double> class_probabilities(std::span<const double> row) const {
    return nodes_[leaf(row)].distribution;
  }

  int predict_class(std::span<const double> row) const {
    const auto dist = class_probabilities(row);
    return static_cast<int>(std::max_element(dist.begin(), dist.end()) - dist.begin());
  }

  double predict_value(std::span<const double> row) const { return nodes_[leaf(row)].value; }

  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    std::size_t left = 0, right = 0;
    double value = 0.0;
    std::vector<double> distribution;
  };

  std::size_t leaf(std::span<const double> row) const {
    std::size_t n = 0;
    while (nodes_[n].feature >= 0) {
      n = row[static_cast<std::size_t>(nodes_[n].feature)] <= nodes_[n].threshold ? nodes_[n].left : nodes_[n].right;
    }
    return n;
  }

  template <class Target, class Rng>
  void fit_impl(const Matrix& x, Target target, const TreeOptions& options, Rng* rng) {
    if (x.empty()) throw Error(ErrorKind::empty_table, "cannot fit a tree on zero rows");
    nodes_.clear();
    x_ = &x;
    y_.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) y_[i] = target(i);
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), 0);
    grow(idx, 0, options, rng);
    x_ = nullptr;
  }

  double impurity_sum(std::span<const std::size_t> idx) const {
    // Gini * n for classification, SSE for regression.
    if (classes_ > 0) {
      std::vector<double> counts(static_cast<std::size_t>(classes_), 0.0);
      for (auto i : idx) counts[static_cast<std::size_t>(y_[i])] += 1.0;
      const double n = static_cast<double>(idx.size());
      double g = 1.0;
      for (double c : counts) g -= (c / n) * (c / n);
      return g * n;
    }
    double mean = 0.0;
    for (auto i : idx) mean += y_[i];
    mean /= static_cast<double>(idx.size());
    double sse = 0.0;
    for (auto i : idx) sse += (y_[i] - mean) * (y_[i] - mean);
    return sse;
  }

  template <class Rng>
  std::size_t grow(std::vector<std::size_t>& idx, int depth, const TreeOptions& options, Rng* rng) {
    const std::size_t id = nodes_.size();
    nodes_.emplace_back();
    {
      Node& node = nodes_[id];
      if (classes_ > 0) {
        node.distribution.assign(static_cast<std::size_t>(classes_), 0.0);
        for (auto i : idx) node.distribution[static_cast<std::size_t>(y_[i])] += 1.0;
        for (auto& d : node.distribution) d /= static_cast<double>(idx.size());
      } else {
        double mean = 0.0;
        for (auto i : idx) mean += y_[i];
        node.value = mean / static_cast<double>(idx.size());
      }
    }
    const double parent = impurity_sum(idx);
    if (depth >= options.max_depth || idx.size() < options.min_samples_split || parent <= 1e-12) return id;

    const std::size_t width = (*x_)[0].size();
    std::vector<std::size_t> features(width);
    std::iota(features.begin(), features.end(), 0);
    if (options.max_features > 0 && options.max_features < width && rng) {
      shuffle(features, *rng);
      features.resize(options.max_features);
      std::sort(features.begin(), features.end());
    }

    const std::size_t n = idx.size();
    double best_gain = 1e-12;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::size_t> sorted(idx);
    for (auto f : features) {
      std::sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) {
        const double va = (*x_)[a][f], vb = (*x_)[b][f];
        return va < vb || (va == vb && a < b);
      });
      if (classes_ > 0) {
        const auto k = static_cast<std::size_t>(classes_);
        std::vector<double> left(k, 0.0), right(k, 0.0);
        for (auto i : sorted) right[static_cast<std::size_t>(y_[i])] += 1.0;
        double left_sq = 0.0, right_sq = 0.0;
        for (double c : right) right_sq += c * c;
        for (std::size_t s = 0; s + 1 < n; ++s) {
          const auto c = static_cast<std::size_t>(y_[sorted[s]]);
          left_sq += 2.0 * left[c] + 1.0;
          right_sq -= 2.0 * right[c] - 1.0;
          left[c] += 1.0;
          right[c] -= 1.0;
          const double a = (*x_)[sorted[s]][f], b = (*x_)[sorted[s + 1]][f];
          if (!(a < b)) continue;
          const double nl = static_cast<double>(s + 1), nr = static_cast<double>(n - s - 1);
          const double child = (nl - left_sq / nl) + (nr - right_sq / nr);
          const double gain = parent - child;
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = static_cast<int>(f);
            best_threshold = a + (b - a) / 2.0;
          }
        }
      } else {
        double total = 0.0, total_sq = 0.0;
        for (auto i : sorted) {
          total += y_[i];
          total_sq += y_[i] * y_[i];
        }
        double ls = 0.0, lsq = 0.0;
        for (std::size_t s = 0; s + 1 < n; ++s) {
          const double v = y_[sorted[s]];
          ls += v;
          lsq += v * v;
          const double a = (*x_)[sorted[s]][f], b = (*x_)[sorted[s + 1]][f];
          if (!(a < b)) continue;
          const double nl = static_cast<double>(s + 1), nr = static_cast<double>(n - s - 1);
          const double rs = total - ls, rsq = total_sq - lsq;
          const double child = (lsq - ls * ls / nl) + (rsq - rs * rs / nr);
          const double gain = parent - child;
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = static_cast<int>(f);
            best_threshold = a + (b - a) / 2.0;
          }
        }
      }
    }
    if (best_feature < 0) return id;

    std::vector<std::size_t> left_idx, right_idx;
    for (auto i : idx) {
      ((*x_)[i][static_cast<std::size_t>(best_feature)] <= best_threshold ? left_idx : right_idx).push_back(i);
    }
    if (left_idx.empty() || right_idx.empty()) return id;
    idx.clear();
    idx.shrink_to_fit();
    const auto l = grow(left_idx, depth + 1, options, rng);
    const auto r = grow(right_idx, depth + 1, options, rng);
    nodes_[id].feature = best_feature;
    nodes_[id].threshold = best_threshold;
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  std::vector<Node> nodes_;
  int classes_ = 0;
  const Matrix* x_ = nullptr;
  std::vector<double> y_;
};

struct ForestOptions {
  std::size_t trees = 25;
  TreeOptions tree;  // max_features 0 here means round(sqrt(width))
  std::uint64_t seed = 0;
};

/// Bagged CART trees with per-split feature subsampling.
class RandomForest {
 public:
  using Matrix = DecisionTree::Matrix;

  void fit_classifier(const Matrix& x, std::span<const int> y, int n_classes, const ForestOptions& options) {
    classes_ = n_classes;
    fit_impl(x, options, [&](DecisionTree& t, const Matrix& bx, const std::vector<std::size_t>& rows,
                             const TreeOptions& to, std::mt19937_64& rng) {
      std::vector<int> by;
      by.reserve(rows.size());
      for (auto r : rows) by.push_back(y[r]);
      t.fit_classifier(bx, by, n_classes, to, &rng);
    });
  }

  void fit_regressor(const Matrix& x, std::span<const double> y, const ForestOptions& options) {
    classes_ = 0;
    fit_impl(x, options, [&](DecisionTree& t, const Matrix& bx, const std::vector<std::size_t>& rows,
                             const TreeOptions& to, std::mt19937_64& rng) {
      std::vector<double> by;
      by.reserve(rows.size());
      for (auto r : rows) by.push_back(y[r]);
      t.fit_regressor(bx, by, to, &rng);
    });
  }

  /// Class with the highest mean leaf probability across trees.
  int predict_class(std::span<const double> row) const {
    std::vector<double> acc(static_cast<std::size_t>(classes_), 0.0);
    for (const auto& t : trees_) {
      const auto d = t.class_probabilities(row);
      for (std::size_t c = 0; c < acc.size(); ++c) acc[c] += d[c];
    }
    return static_cast<int>(std::max_element(acc.begin(), acc.end()) - acc.begin());
  }

  double predict_value(std::span<const double> row) const {
    double sum = 0.0;
    for (const auto& t : trees_) sum += t.predict_value(row);
    return sum / static_cast<double>(trees_.size());
  }

 private:
  template <class FitTree>
  void fit_impl(const Matrix& x, const ForestOptions& options, FitTree fit_tree) {
    if (x.empty()) throw Error(ErrorKind::empty_table, "cannot fit a forest on zero rows");
    trees_.assign(options.trees, DecisionTree{});
    TreeOptions to = options.tree;
    if (to.max_features == 0) {
      to.max_features = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(x[0].size())))));
    }
    for (std::size_t t = 0; t < options.trees; ++t) {
      std::mt19937_64 rng(stream_seed(options.seed, t));
      std::vector<std::size_t> rows(x.size());
      for (auto& r : rows) r = uniform_index(rng, x.size());
      Matrix bx;
      bx.reserve(rows.size());
      for (auto r : rows) bx.push_back(x[r]);
      fit_tree(trees_[t], bx, rows, to, rng);
    }
  }

  std::vector<DecisionTree> trees_;
  int classes_ = 0;
};

// ===========================================================================
// Metrics
// ===========================================================================

inline double accuracy(std::span<const std::string> truth, std::span<const std::string> predicted) {
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == predicted[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

/// Unweighted mean of per-class F1 over every label in truth or prediction.
inline double macro_f1(std::span<const std::string> truth, std::span<const std::string> predicted) {
  std::map<std::string, std::array<double, 3>> stats;  // tp, fp, fn
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] == predicted[i]) {
      stats[truth[i]][0] += 1.0;
    } else {
      stats[predicted[i]][1] += 1.0;
      stats[truth[i]][2] += 1.0;
    }
  }
  if (stats.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [label, s] : stats) {
    const double denom = 2.0 * s[0] + s[1] + s[2];
    sum += denom > 0.0 ? 2.0 * s[0] / denom : 0.0;
  }
  return sum / static_cast<double>(stats.size());
}

/// Mean of |y - y_hat| / max(|y|, eps).
inline double mape(std::span<const double> truth, std::span<const double> predicted) {
  if (truth.empty()) return 0.0;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    sum += std::abs(truth[i] - predicted[i]) / std::max(std::abs(truth[i]), eps);
  }
  return sum / static_cast<double>(truth.size());
}

struct ClassificationScore {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
};

/// Per-model utility: classification scores or regression MAPE.
struct UtilityMetrics {
  Task task = Task::none;
  std::map<std::string, ClassificationScore> classification;
  std::map<std::string, double> mape;

  nlohmann::json to_json() const {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [model, s] : classification) out[model] = {{"accuracy", s.accuracy}, {"macro_f1", s.macro_f1}};
    for (const auto& [model, m] : mape) out[model] = {{"mape", m}};
    return out;
  }
};

struct UtilityOptions {
  TreeOptions tree;
  ForestOptions forest;
};

/// Train-on-synthetic, test-on-real utility with a CART tree ("dt") and a
/// bagged forest ("rf").
inline UtilityMetrics eval_utility(const Table& synthetic, const Table& real_test, const UtilityOptions& options = {}) {
  const auto& schema = synthetic.schema();
  if (!(schema == real_test.schema())) throw Error(ErrorKind::invalid_argument, "synthetic and real schemas differ");
  const auto target = schema.target_index();
  if (!target || schema.task() == Task::none) {
    throw Error(ErrorKind::invalid_argument, "utility needs a schema target and task");
  }
  if (synthetic.empty() || real_test.empty()) throw Error(ErrorKind::empty_table, "utility needs non-empty tables");
  const auto enc = OneHotEncoder::fit(synthetic, *target);
  const auto x_train = enc.encode(synthetic);
  const auto x_test = enc.encode(real_test);

  UtilityMetrics out;
  out.task = schema.task();
  if (schema.task() == Task::classification) {
    std::vector<std::string> labels;
    std::unordered_map<std::string, int> code;
    std::vector<int> y;
    for (const auto& row : synthetic.rows()) {
      const auto& v = as_text(row[*target]);
      auto [it, inserted] = code.emplace(v, static_cast<int>(labels.size()));
      if (inserted) labels.push_back(v);
      y.push_back(it->second);
    }
    if (labels.size() < 2) {
      throw Error(ErrorKind::degenerate_target, "synthetic data holds " + std::to_string(labels.size()) + " class(es)");
    }
    std::vector<std::string> truth;
    for (const auto& row : real_test.rows()) truth.push_back(as_text(row[*target]));

    DecisionTree dt;
    dt.fit_classifier<std::mt19937_64>(x_train, y, static_cast<int>(labels.size()), options.tree);
    RandomForest rf;
    rf.fit_classifier(x_train, y, static_cast<int>(labels.size()), options.forest);
    std::vector<std::string> p_dt, p_rf;
    for (const auto& row : x_test) {
      p_dt.push_back(labels[static_cast<std::size_t>(dt.predict_class(row))]);
      p_rf.push_back(labels[static_cast<std::size_t>(rf.predict_class(row))]);
    }
    out.classification["dt"] = {accuracy(truth, p_dt), macro_f1(truth, p_dt)};
    out.classification["rf"] = {accuracy(truth, p_rf), macro_f1(truth, p_rf)};
  } else {
    const auto y = synthetic.numeric_column(*target);
    const auto truth = real_test.numeric_column(*target);
    DecisionTree dt;
    dt.fit_regressor<std::mt19937_64>(x_train, y, options.tree);
    RandomForest rf;
    rf.fit_regressor(x_train, y, options.forest);
    std::vector<double> p_dt, p_rf;
    for (const auto& row : x_test) {
      p_dt.push_back(dt.predict_value(row));
      p_rf.push_back(rf.predict_value(row));
    }
    out.mape["dt"] = mape(truth, p_dt);
    out.mape["rf"] = mape(truth, p_rf);
  }
  return out;
}

// ===========================================================================
// Discriminator realism
// ===========================================================================

struct LogisticOptions {
  int iterations = 300;
  double learning_rate = 0.5;
  double l2 = 1e-3;
};

/// L2-regularized logistic regression fitted by full-batch gradient descent
/// on standardized inputs. Deterministic for a given input.
class LogisticRegression {
 public:
  void fit(const std::vector<std::vector<double>>& x, std::span<const int> y, const LogisticOptions& options = {}) {
    const std::size_t n = x.size();
    const std::size_t d = n ? x[0].size() : 0;
    mean_.assign(d, 0.0);
    scale_.assign(d, 1.0);
    for (const auto& row : x) {
      for (std::size_t j = 0; j < d; ++j) mean_[j] += row[j];
    }
    for (auto& m : mean_) m /= static_cast<double>(std::max<std::size_t>(n, 1));
    for (std::size_t j = 0; j < d; ++j) {
      double var = 0.0;
      for (const auto& row : x) var += (row[j] - mean_[j]) * (row[j] - mean_[j]);
      var /= static_cast<double>(std::max<std::size_t>(n, 1));
      scale_[j] = var > 1e-24 ? std::sqrt(var) : 1.0;
    }
    std::vector<std::vector<double>> z(n, std::vector<double>(d));
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) z[i][j] = (x[i][j] - mean_[j]) / scale_[j];
    }
    weights_.assign(d, 0.0);
    bias_ = 0.0;
    std::vector<double> grad(d);
    for (int it = 0; it < options.iterations; ++it) {
      std::fill(grad.begin(), grad.end(), 0.0);
      double grad_b = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double err = sigmoid(linear(z[i])) - static_cast<double>(y[i]);
        for (std::size_t j = 0; j < d; ++j) grad[j] += err * z[i][j];
        grad_b += err;
      }
      for (std::size_t j = 0; j < d; ++j) {
        weights_[j] -= options.learning_rate * (grad[j] / static_cast<double>(n) + options.l2 * weights_[j]);
      }
      bias_ -= options.learning_rate * grad_b / static_cast<double>(n);
    }
  }

  double probability(std::span<const double> row) const {
    std::vector<double> z(row.size());
    for (std::size_t j = 0; j < row.size(); ++j) z[j] = (row[j] - mean_[j]) / scale_[j];
    return sigmoid(linear(z));
  }

  int predict(std::span<const double> row) const { return probability(row) >= 0.5 ? 1 : 0; }

 private:
  static double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }
  double linear(std::span<const double> z) const {
    double s = bias_;
    for (std::size_t j = 0; j < z.size(); ++j) s += weights_[j] * z[j];
    return s;
  }

  std::vector<double> mean_, scale_, weights_;
  double bias_ = 0.0;
};

struct DiscriminatorResult {
  double mean = 0.0;
  double sd = 0.0;
  std::vector<double> fold_accuracy;
  std::vector<std::pair<std::size_t, std::size_t>> fold_balance;  // (real, synthetic) per test fold
};

struct DiscriminatorOptions {
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  LogisticOptions logistic;
};

/// Cross-validated accuracy of a linear classifier separating real from
/// synthetic rows. The larger side is subsampled to balance the classes;
/// every test fold holds equal numbers of each. Lower is more realistic.
inline DiscriminatorResult eval_discriminator(const Table& synthetic, const Table& real_train,
                                              const DiscriminatorOptions& options = {}) {
  if (synthetic.empty() || real_train.empty()) throw Error(ErrorKind::empty_table, "discriminator needs rows");
  if (!(synthetic.schema() == real_train.schema())) throw Error(ErrorKind::invalid_argument, "schemas differ");
  if (options.folds < 2) throw Error(ErrorKind::invalid_argument, "need at least 2 folds");
  const std::size_t m = std::min(synthetic.size(), real_train.size());
  if (m < options.folds) throw Error(ErrorKind::invalid_argument, "fewer rows per class than folds");

  std::mt19937_64 rng(stream_seed(options.seed, 0xd15c));
  // Subsample, then order by content so that a record present on both sides
  // lands in the same fold on both (otherwise duplicates leak across folds).
  auto pick = [&](const Table& t) {
    std::vector<std::size_t> idx(t.size());
    std::iota(idx.begin(), idx.end(), 0);
    shuffle(idx, rng);
    idx.resize(m);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return t.row(a) < t.row(b); });
    return idx;
  };
  const auto real_idx = pick(real_train);
  const auto synth_idx = pick(synthetic);

  // Encoder over both sides so categories of either are represented.
  std::vector<Record> pooled;
  for (auto i : real_idx) pooled.push_back(real_train.row(i));
  for (auto i : synth_idx) pooled.push_back(synthetic.row(i));
  const auto enc = OneHotEncoder::fit(Table(real_train.schema(), pooled));
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    x.push_back(enc.encode(pooled[i]));
    y.push_back(i < m ? 0 : 1);
  }

  // Position j of each class goes to fold j % folds, so folds are balanced.
  DiscriminatorResult out;
  for (std::size_t k = 0; k < options.folds; ++k) {
    std::vector<std::vector<double>> xtr, xte;
    std::vector<int> ytr, yte;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const std::size_t pos = i < m ? i : i - m;
      if (pos % options.folds == k) {
        xte.push_back(x[i]);
        yte.push_back(y[i]);
      } else {
        xtr.push_back(x[i]);
        ytr.push_back(y[i]);
      }
    }
    LogisticRegression clf;
    clf.fit(xtr, ytr, options.logistic);
    std::size_t hits = 0, reals = 0;
    for (std::size_t i = 0; i < xte.size(); ++i) {
      hits += clf.predict(xte[i]) == yte[i];
      reals += yte[i] == 0;
    }
    out.fold_accuracy.push_back(static_cast<double>(hits) / static_cast<double>(xte.size()));
    out.fold_balance.emplace_back(reals, xte.size() - reals);
  }
  out.mean = sage::mean(out.fold_accuracy);
  double var = 0.0;
  for (double a : out.fold_accuracy) var += (a - out.mean) * (a - out.mean);
  out.sd = std::sqrt(var / static_cast<double>(out.fold_accuracy.size()));
  return out;
}

// ===========================================================================
// Distance to closest record
// ===========================================================================

struct DcrSummary {
  double min = 0.0;
  double median = 0.0;
  double mean = 0.0;
  std::vector<double> distances;  // per synthetic row
};

/// L1 distance between two records: numerical differences scaled by the
/// reference range, categorical 0/1 mismatch.
class DcrEncoding {
 public:
  explicit DcrEncoding(const Table& reference) : schema_(reference.schema()) {
    lo_.assign(schema_.size(), 0.0);
    range_.assign(schema_.size(), 1.0);
    for (std::size_t f = 0; f < schema_.size(); ++f) {
      if (schema_[f].kind != FeatureKind::numerical || reference.empty()) continue;
      const auto col = reference.numeric_column(f);
      const auto [lo, hi] = std::minmax_element(col.begin(), col.end());
      lo_[f] = *lo;
      range_[f] = *hi > *lo ? *hi - *lo : 1.0;
    }
  }

  double distance(const Record& a, const Record& b) const {
    double d = 0.0;
    for (std::size_t f = 0; f < schema_.size(); ++f) {
      if (schema_[f].kind == FeatureKind::numerical) d += std::abs(as_number(a[f]) - as_number(b[f])) / range_[f];
      else d += as_text(a[f]) == as_text(b[f]) ? 0.0 : 1.0;
    }
    return d;
  }

 private:
  FeatureSchema schema_;
  std::vector<double> lo_, range_;
};

inline DcrSummary eval_dcr(const Table& synthetic, const Table& real_train, unsigned threads = 1) {
  if (!(synthetic.schema() == real_train.schema())) throw Error(ErrorKind::invalid_argument, "schemas differ");
  if (real_train.empty()) throw Error(ErrorKind::empty_table, "DCR needs reference rows");
  const DcrEncoding enc(real_train);
  DcrSummary out;
  out.distances.assign(synthetic.size(), 0.0);
  parallel_for(synthetic.size(), threads, [&](std::size_t i) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& r : real_train.rows()) best = std::min(best, enc.distance(synthetic.row(i), r));
    out.distances[i] = best;
  });
  if (!out.distances.empty()) {
    out.min = *std::min_element(out.distances.begin(), out.distances.end());
    out.median = median(out.distances);
    out.mean = mean(out.distances);
  }
  return out;
}

// ===========================================================================
// Rule-based constraints
// ===========================================================================

struct Point {
  double x = 0.0, y = 0.0;
};

struct PolygonContainment {
  std::string lon_feature, lat_feature;
  std::vector<Point> ring;  // open ring: first vertex not repeated
};

struct OrdinalConsistency {
  std::string category_feature, numeric_feature;
  std::map<std::string, double> order;
};

struct Constraint {
  std::string name;
  std::variant<PolygonContainment, OrdinalConsistency> rule;
};

namespace geometry {

inline double cross(Point o, Point a, Point b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

inline bool on_segment(Point p, Point a, Point b) {
  return cross(a, b, p) == 0.0 && std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) &&
         std::min(a.y, b.y) <= p.y && p.y <= std::max(a.y, b.y);
}

inline bool segments_intersect(Point a, Point b, Point c, Point d) {
  const double d1 = cross(c, d, a), d2 = cross(c, d, b), d3 = cross(a, b, c), d4 = cross(a, b, d);
  if (((d1 > 0 && d2 < 0) || (d1 < 0 && d2 > 0)) && ((d3 > 0 && d4 < 0) || (d3 < 0 && d4 > 0))) return true;
  return on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b);
}

/// Drops a repeated closing vertex and rejects rings that are too small,
/// contain non-finite coordinates or self-intersect.
inline std::vector<Point> normalize_ring(std::vector<Point> ring) {
  if (ring.size() >= 2 && ring.front().x == ring.back().x && ring.front().y == ring.back().y) ring.pop_back();
  if (ring.size() < 3) throw Error(ErrorKind::malformed_polygon, "ring needs at least 3 distinct vertices");
  for (const auto& p : ring) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw Error(ErrorKind::malformed_polygon, "non-finite vertex");
  }
  const std::size_t n = ring.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Point a = ring[i], b = ring[(i + 1) % n];
    if (a.x == b.x && a.y == b.y) throw Error(ErrorKind::malformed_polygon, "repeated vertex");
    for (std::size_t j = i + 1; j < n; ++j) {
      if (j == i + 1 || (i == 0 && j == n - 1)) continue;  // adjacent edges share a vertex
      if (segments_intersect(a, b, ring[j], ring[(j + 1) % n])) {
        throw Error(ErrorKind::malformed_polygon, "ring self-intersects");
      }
    }
  }
  return ring;
}

/// Even-odd ray casting; points on the boundary count as inside.
inline bool contains(std::span<const Point> ring, Point p) {
  const std::size_t n = ring.size();
  bool inside = false;
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const Point a = ring[i], b = ring[j];
    if (on_segment(p, a, b)) return true;
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

}  // namespace geometry

inline Constraint make_polygon_constraint(std::string name, std::string lon, std::string lat, std::vector<Point> ring) {
  return {std::move(name), PolygonContainment{std::move(lon), std::move(lat), geometry::normalize_ring(std::move(ring))}};
}

inline Constraint make_ordinal_constraint(std::string name, std::string category, std::string numeric,
                                          std::map<std::string, double> order) {
  std::map<double, std::string> seen;
  for (const auto& [cat, rank] : order) {
    if (!std::isfinite(rank)) throw Error(ErrorKind::invalid_argument, "non-finite rank for '" + cat + "'");
    if (!seen.emplace(rank, cat).second) {
      throw Error(ErrorKind::invalid_argument, "order map is not injective: '" + cat + "' and '" + seen[rank] +
                                                   "' share a rank");
    }
  }
  if (order.empty()) throw Error(ErrorKind::invalid_argument, "empty order map");
  return {std::move(name), OrdinalConsistency{std::move(category), std::move(numeric), std::move(order)}};
}

/// Reads {"constraints": [...]} with entries of kind polygon_containment
/// ({"lon", "lat", "ring": [[x, y], ...]}) or ordinal_consistency
/// ({"category", "numeric", "order": {category: rank}}).
inline std::vector<Constraint> parse_constraints(const nlohmann::json& j) {
  std::vector<Constraint> out;
  try {
    for (const auto& c : j.at("constraints")) {
      const auto kind = c.at("kind").get<std::string>();
      const auto name = c.at("name").get<std::string>();
      if (kind == "polygon_containment") {
        std::vector<Point> ring;
        for (const auto& v : c.at("ring")) {
          if (!v.is_array() || v.size() != 2) throw Error(ErrorKind::malformed_polygon, "vertex must be [x, y]");
          ring.push_back({v[0].get<double>(), v[1].get<double>()});
        }
        out.push_back(make_polygon_constraint(name, c.at("lon").get<std::string>(), c.at("lat").get<std::string>(),
                                              std::move(ring)));
      } else if (kind == "ordinal_consistency") {
        out.push_back(make_ordinal_constraint(name, c.at("category").get<std::string>(),
                                              c.at("numeric").get<std::string>(),
                                              c.at("order").get<std::map<std::string, double>>()));
      } else {
        throw Error(ErrorKind::invalid_argument, "unknown constraint kind '" + kind + "'");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::invalid_argument, std::string("constraints: ") + e.what());
  }
  return out;
}

struct ViolationResult {
  double rate = 0.0;
  std::size_t violations = 0;
  std::size_t rows = 0;
  std::optional<std::string> warning;
};

inline bool violates(const Constraint& constraint, const FeatureSchema& schema, const Record& row) {
  if (const auto* poly = std::get_if<PolygonContainment>(&constraint.rule)) {
    const Point p{as_number(row[schema.index_of(poly->lon_feature)]), as_number(row[schema.index_of(poly->lat_feature)])};
    return !geometry::contains(poly->ring, p);
  }
  const auto& ord = std::get<OrdinalConsistency>(constraint.rule);
  const auto& category = as_text(row[schema.index_of(ord.category_feature)]);
  const double value = as_number(row[schema.index_of(ord.numeric_feature)]);
  auto it = ord.order.find(category);
  return it == ord.order.end() || it->second != value;
}

/// Fraction of rows breaking the constraint; zero (with a warning) for an empty table.
inline ViolationResult eval_violations(const Table& synthetic, const Constraint& constraint) {
  const auto& schema = synthetic.schema();
  auto require = [&](const std::string& name, FeatureKind kind) {
    const auto f = schema.index_of(name);
    if (schema[f].kind != kind) {
      throw Error(ErrorKind::invalid_argument, "constraint '" + constraint.name + "': feature '" + name +
                                                   "' must be " + std::string(to_string(kind)));
    }
  };
  if (const auto* poly = std::get_if<PolygonContainment>(&constraint.rule)) {
    require(poly->lon_feature, FeatureKind::numerical);
    require(poly->lat_feature, FeatureKind::numerical);
  } else {
    const auto& ord = std::get<OrdinalConsistency>(constraint.rule);
    require(ord.category_feature, FeatureKind::categorical);
    require(ord.numeric_feature, FeatureKind::numerical);
  }
  ViolationResult out;
  out.rows = synthetic.size();
  if (synthetic.empty()) {
    out.warning = "constraint '" + constraint.name + "' evaluated over 0 rows; rate reported as 0";
    return out;
  }
  for (const auto& row : synthetic.rows()) out.violations += violates(constraint, schema, row);
  out.rate = static_cast<double>(out.violations) / static_cast<double>(out.rows);
  return out;
}

// ===========================================================================
// Report
// ===========================================================================

struct ReportOptions {
  UtilityOptions utility;
  DiscriminatorOptions discriminator;
  unsigned threads = 1;
};

/// Every metric family in one JSON document. Families whose inputs are
/// missing (no target, no test split) are reported as null with a note.
inline nlohmann::json metric_report(const Table& synthetic, const Table& real_train, const Table* real_test,
                                    std::span<const Constraint> constraints, const ReportOptions& options = {}) {
  nlohmann::json report;
  report["notes"] = {
      "realism uses an L2 logistic-regression discriminator (not an SVM) on standardized one-hot features",
      "DCR encodes numerical features min-max scaled by real-train ranges and categorical features as 0/1 mismatch",
  };
  nlohmann::json warnings = nlohmann::json::array();
  report["rows"] = {{"synthetic", synthetic.size()}, {"real_train", real_train.size()},
                    {"real_test", real_test ? real_test->size() : 0}};

  const auto& schema = synthetic.schema();
  if (real_test && schema.target_index() && schema.task() != Task::none) {
    report["utility"] = eval_utility(synthetic, *real_test, options.utility).to_json();
  } else {
    report["utility"] = nullptr;
    warnings.push_back("utility skipped: needs a target, a task and a real test table");
  }

  const auto disc = eval_discriminator(synthetic, real_train, options.discriminator);
  report["realism"] = {{"discriminator_accuracy_mean", disc.mean}, {"discriminator_accuracy_sd", disc.sd},
                       {"folds", disc.fold_accuracy}};

  const auto dcr = eval_dcr(synthetic, real_train, options.threads);
  report["privacy"] = {{"dcr_min", dcr.min}, {"dcr_median", dcr.median}, {"dcr_mean", dcr.mean}};

  nlohmann::json fidelity = nlohmann::json::object();
  for (const auto& c : constraints) {
    const auto v = eval_violations(synthetic, c);
    fidelity[c.name] = {{"violation_rate", v.rate}, {"violations", v.violations}, {"rows", v.rows}};
    if (v.warning) warnings.push_back(*v.warning);
  }
  report["fidelity"] = fidelity;
  report["warnings"] = warnings;
  return report;
}

}  // namespace sage
