#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sage/core.hpp"
#include "sage/pseudofeatures.hpp"

namespace sage {

/// Plug-in mutual information (nats) of an r x c contingency table of counts.
/// Empty cells contribute nothing.
inline double contingency_mi(std::span<const std::uint64_t> counts, std::size_t rows, std::size_t cols) {
  std::vector<std::uint64_t> row_sum(rows, 0), col_sum(cols, 0);
  std::uint64_t total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const auto n = counts[r * cols + c];
      row_sum[r] += n;
      col_sum[c] += n;
      total += n;
    }
  }
  if (total == 0) return 0.0;
  const double n_total = static_cast<double>(total);
  double mi = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const auto n = counts[r * cols + c];
      if (n == 0) continue;
      const double joint = static_cast<double>(n);
      const double ratio = (joint * n_total) /
                           (static_cast<double>(row_sum[r]) * static_cast<double>(col_sum[c]));
      mi += joint / n_total * std::log(ratio);
    }
  }
  return mi > 0.0 ? mi : 0.0;
}

/// MI of two binary indicators from their activation counts over n rows.
inline double binary_mi(std::uint64_t n, std::uint64_t n_a, std::uint64_t n_b, std::uint64_t n_ab) {
  const std::uint64_t cells[4] = {n - n_a - n_b + n_ab, n_b - n_ab, n_a - n_ab, n_ab};
  return contingency_mi(cells, 2, 2);
}

/// Entropy (nats) of a binary indicator active in `k` of `n` rows.
inline double binary_entropy(std::uint64_t n, std::uint64_t k) {
  if (n == 0 || k == 0 || k == n) return 0.0;
  const double p = static_cast<double>(k) / static_cast<double>(n);
  return -p * std::log(p) - (1.0 - p) * std::log(1.0 - p);
}

enum class FeatureMiMode {
  bin_index,      // I(pseudo ; bin index of the target feature)
  max_over_bins,  // max over the target's pseudo-features of the pairwise MI
};

enum class TauSource {
  feature_level,  // median of pseudo-to-feature MI values
  pairwise,       // median of cross-feature pseudo-to-pseudo MI values
};

struct MiOptions {
  FeatureMiMode feature_mi = FeatureMiMode::bin_index;
  TauSource tau_source = TauSource::feature_level;
  unsigned threads = 1;
};

/// Pairwise pseudo-feature MI plus the feature-level aggregates that drive guidance.
class MIGraph {
 public:
  MIGraph() = default;

  std::size_t pseudo_count() const noexcept { return owner_.size(); }
  std::size_t feature_count() const noexcept { return feature_count_; }
  std::size_t owner(PseudoId p) const { return owner_.at(p); }
  const MiOptions& options() const noexcept { return options_; }

  /// Symmetric pseudo-to-pseudo MI; zero for pseudo-features of the same feature.
  double mi(PseudoId a, PseudoId b) const { return mi_.at(index(a, b)); }

  /// MI between a pseudo-feature and a whole feature; zero when p belongs to it.
  double feature_mi(PseudoId p, std::size_t target) const {
    return feature_mi_.at(static_cast<std::size_t>(p) * feature_count_ + target);
  }

  double tau() const noexcept { return tau_; }
  double mu_train(std::size_t target) const { return mu_train_.at(target); }

  /// All pseudo-to-feature values over pairs with different parent features.
  std::vector<double> feature_mi_values() const {
    std::vector<double> out;
    for (PseudoId p = 0; p < pseudo_count(); ++p) {
      for (std::size_t t = 0; t < feature_count_; ++t) {
        if (owner_[p] != t) out.push_back(feature_mi(p, t));
      }
    }
    return out;
  }

  /// All pairwise values over unordered cross-feature pseudo pairs.
  std::vector<double> pairwise_mi_values() const {
    std::vector<double> out;
    for (PseudoId a = 0; a < pseudo_count(); ++a) {
      for (PseudoId b = a + 1; b < pseudo_count(); ++b) {
        if (owner_[a] != owner_[b]) out.push_back(mi(a, b));
      }
    }
    return out;
  }

  nlohmann::json to_json() const {
    std::vector<double> upper;
    for (PseudoId a = 0; a < pseudo_count(); ++a) {
      for (PseudoId b = a + 1; b < pseudo_count(); ++b) upper.push_back(mi(a, b));
    }
    return {
        {"pseudo_count", pseudo_count()},
        {"feature_count", feature_count_},
        {"owner", owner_},
        {"feature_mi_mode", options_.feature_mi == FeatureMiMode::bin_index ? "bin_index" : "max_over_bins"},
        {"tau_source", options_.tau_source == TauSource::feature_level ? "feature_level" : "pairwise"},
        {"mi_upper", upper},
        {"feature_mi", feature_mi_},
        {"tau", tau_},
        {"mu_train", mu_train_},
    };
  }

  static MIGraph from_json(const nlohmann::json& j) {
    try {
      MIGraph g;
      g.owner_ = j.at("owner").get<std::vector<std::size_t>>();
      g.feature_count_ = j.at("feature_count").get<std::size_t>();
      g.options_.feature_mi = j.at("feature_mi_mode").get<std::string>() == "bin_index"
                                  ? FeatureMiMode::bin_index
                                  : FeatureMiMode::max_over_bins;
      g.options_.tau_source = j.at("tau_source").get<std::string>() == "feature_level"
                                  ? TauSource::feature_level
                                  : TauSource::pairwise;
      const auto p = g.owner_.size();
      const auto upper = j.at("mi_upper").get<std::vector<double>>();
      if (upper.size() != p * (p - (p ? 1 : 0)) / 2) throw Error(ErrorKind::integrity, "mi_upper size");
      g.mi_.assign(p * p, 0.0);
      std::size_t k = 0;
      for (std::size_t a = 0; a < p; ++a) {
        for (std::size_t b = a + 1; b < p; ++b, ++k) {
          g.mi_[a * p + b] = upper[k];
          g.mi_[b * p + a] = upper[k];
        }
      }
      g.feature_mi_ = j.at("feature_mi").get<std::vector<double>>();
      if (g.feature_mi_.size() != p * g.feature_count_) throw Error(ErrorKind::integrity, "feature_mi size");
      g.tau_ = j.at("tau").get<double>();
      g.mu_train_ = j.at("mu_train").get<std::vector<double>>();
      if (g.mu_train_.size() != g.feature_count_) throw Error(ErrorKind::integrity, "mu_train size");
      return g;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::integrity, std::string("migraph.json: ") + e.what());
    }
  }

  bool operator==(const MIGraph& o) const {
    return owner_ == o.owner_ && feature_count_ == o.feature_count_ && mi_ == o.mi_ &&
           feature_mi_ == o.feature_mi_ && tau_ == o.tau_ && mu_train_ == o.mu_train_;
  }

 private:
  friend MIGraph estimate_mi(const Table&, const BinLayout&, const MiOptions&);

  std::size_t index(PseudoId a, PseudoId b) const {
    return static_cast<std::size_t>(a) * owner_.size() + b;
  }

  std::vector<std::size_t> owner_;
  std::size_t feature_count_ = 0;
  MiOptions options_;
  std::vector<double> mi_;          // P x P
  std::vector<double> feature_mi_;  // P x F
  double tau_ = 0.0;
  std::vector<double> mu_train_;    // F
};

inline double feature_level_mi(const MIGraph& graph, PseudoId pseudo, std::size_t target) {
  return graph.feature_mi(pseudo, target);
}

/// Median of the MI values selected by the graph's tau source.
inline double default_tau(const MIGraph& graph) {
  auto values = graph.options().tau_source == TauSource::feature_level ? graph.feature_mi_values()
                                                                       : graph.pairwise_mi_values();
  if (values.empty()) return 0.0;
  return median(std::move(values));
}

/// Mean feature-level MI with `target` over every pseudo-feature outside it.
inline double mu_train(const MIGraph& graph, std::size_t target) { return graph.mu_train(target); }

/// Builds the dependency graph from plug-in frequencies of the expanded
/// training table. Work over rows and over pairs is split across
/// `options.threads` workers; the result does not depend on the split.
inline MIGraph estimate_mi(const Table& train, const BinLayout& layout, const MiOptions& options = {}) {
  if (train.empty()) throw Error(ErrorKind::empty_table, "cannot estimate MI on an empty table");
  const std::size_t P = layout.pseudo_count();
  const std::size_t F = layout.feature_count();
  const auto rows = expand_table(layout, train, options.threads);
  const auto N = static_cast<std::uint64_t>(rows.size());

  // Activation and co-activation counts, accumulated per worker then merged.
  const unsigned workers = std::min<unsigned>(resolve_threads(options.threads),
                                              static_cast<unsigned>(std::max<std::size_t>(rows.size(), 1)));
  std::vector<std::vector<std::uint64_t>> partial(workers, std::vector<std::uint64_t>(P * P, 0));
  {
    const std::size_t chunk = (rows.size() + workers - 1) / workers;
    parallel_for(workers, workers, [&](std::size_t w) {
      auto& co = partial[w];
      const std::size_t end = std::min(rows.size(), (w + 1) * chunk);
      for (std::size_t r = w * chunk; r < end; ++r) {
        const auto& act = rows[r].active;
        for (std::size_t i = 0; i < act.size(); ++i) {
          for (std::size_t j = i; j < act.size(); ++j) ++co[act[i] * P + act[j]];
        }
      }
    });
  }
  std::vector<std::uint64_t> co(P * P, 0);
  for (const auto& part : partial) {
    for (std::size_t i = 0; i < co.size(); ++i) co[i] += part[i];
  }
  // Counts were recorded with i <= j in schema order; activation counts sit on the diagonal.
  auto joint = [&](PseudoId a, PseudoId b) {
    return a == b ? co[a * P + a] : co[a * P + b] + co[b * P + a];
  };
  std::vector<std::uint64_t> active(P);
  for (std::size_t p = 0; p < P; ++p) active[p] = co[p * P + p];

  MIGraph g;
  g.owner_.resize(P);
  for (PseudoId p = 0; p < P; ++p) g.owner_[p] = layout.feature_of(p);
  g.feature_count_ = F;
  g.options_ = options;
  g.mi_.assign(P * P, 0.0);
  parallel_for(P, options.threads, [&](std::size_t a) {
    for (std::size_t b = 0; b < P; ++b) {
      if (g.owner_[a] == g.owner_[b]) continue;
      g.mi_[a * P + b] = binary_mi(N, active[a], active[b],
                                   joint(static_cast<PseudoId>(a), static_cast<PseudoId>(b)));
    }
  });

  g.feature_mi_.assign(P * F, 0.0);
  parallel_for(P, options.threads, [&](std::size_t p) {
    for (std::size_t t = 0; t < F; ++t) {
      if (g.owner_[p] == t) continue;
      const auto& tb = layout.bins(t);
      const std::size_t k = tb.count();
      double value = 0.0;
      if (options.feature_mi == FeatureMiMode::bin_index) {
        std::vector<std::uint64_t> cells(2 * k);
        for (std::size_t j = 0; j < k; ++j) {
          const auto q = static_cast<PseudoId>(tb.first_id + j);
          const auto both = joint(static_cast<PseudoId>(p), q);
          cells[j] = active[q] - both;  // pseudo inactive, target in bin j
          cells[k + j] = both;          // pseudo active, target in bin j
        }
        value = contingency_mi(cells, 2, k);
      } else {
        for (std::size_t j = 0; j < k; ++j) {
          value = std::max(value, g.mi_[p * P + tb.first_id + j]);
        }
      }
      g.feature_mi_[p * F + t] = value;
    }
  });

  g.mu_train_.assign(F, 0.0);
  for (std::size_t t = 0; t < F; ++t) {
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < P; ++p) {
      if (g.owner_[p] == t) continue;
      sum += g.feature_mi_[p * F + t];
      ++n;
    }
    g.mu_train_[t] = n ? sum / static_cast<double>(n) : 0.0;
  }
  g.tau_ = default_tau(g);
  return g;
}

}  // namespace sage
