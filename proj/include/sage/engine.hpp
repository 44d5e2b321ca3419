#pragma once

#include <algorithm>
#include <memory>
#include <span>
#include <vector>

#include "sage/backend.hpp"
#include "sage/dataset.hpp"
#include "sage/migraph.hpp"
#include "sage/pseudofeatures.hpp"

namespace sage {

struct EngineOptions {
  BinningOptions binning;
  MiOptions mi;
  BuiltinOptions builtin;
};

/// Everything generation needs: the training table, its bins and dependency
/// graph, the built-in backend, and the backend actually used for scoring
/// (the built-in one unless replaced).
class Engine {
 public:
  Engine() = default;

  static Engine fit(Table train, const EngineOptions& options = {}) {
    auto layout = fit_bins(train, options.binning);
    auto graph = estimate_mi(train, layout, options.mi);
    auto builtin = BuiltinBackend::fit(train, layout, graph, options.builtin);
    return Engine(std::move(train), std::move(layout), std::move(graph), std::move(builtin), options);
  }

  Engine(Table train, BinLayout layout, MIGraph graph, BuiltinBackend builtin, EngineOptions options)
      : train_(std::move(train)),
        layout_(std::move(layout)),
        graph_(std::move(graph)),
        builtin_(std::make_shared<BuiltinBackend>(std::move(builtin))),
        backend_(builtin_),
        options_(options) {
    build_pools();
  }

  const FeatureSchema& schema() const noexcept { return train_.schema(); }
  const Table& train() const noexcept { return train_; }
  const BinLayout& layout() const noexcept { return layout_; }
  const MIGraph& graph() const noexcept { return graph_; }
  const BuiltinBackend& builtin() const noexcept { return *builtin_; }
  const Backend& backend() const noexcept { return *backend_; }
  const EngineOptions& options() const noexcept { return options_; }

  void set_backend(std::shared_ptr<const Backend> backend) {
    backend_ = backend ? std::move(backend) : builtin_;
  }

  /// Training values falling in a numerical bin, sorted ascending.
  std::span<const double> pool(PseudoId bin) const { return pools_.at(bin); }
  std::size_t distinct_in_pool(PseudoId bin) const { return distinct_.at(bin); }

  /// Most frequent training pseudo-feature of a feature (first on ties).
  PseudoId mode_pseudo(std::size_t feature) const { return modes_.at(feature); }

 private:
  void build_pools() {
    const std::size_t P = layout_.pseudo_count();
    pools_.assign(P, {});
    distinct_.assign(P, 0);
    std::vector<std::size_t> counts(P, 0);
    for (const auto& row : train_.rows()) {
      for (std::size_t f = 0; f < row.size(); ++f) {
        const auto p = layout_.assign(f, row[f]);
        ++counts[p];
        if (is_number(row[f])) pools_[p].push_back(as_number(row[f]));
      }
    }
    for (std::size_t p = 0; p < P; ++p) {
      auto& pool = pools_[p];
      std::sort(pool.begin(), pool.end());
      for (std::size_t i = 0; i < pool.size(); ++i) {
        if (i == 0 || pool[i] != pool[i - 1]) ++distinct_[p];
      }
    }
    modes_.assign(layout_.feature_count(), 0);
    for (std::size_t f = 0; f < layout_.feature_count(); ++f) {
      const auto& b = layout_.bins(f);
      PseudoId best = b.first_id;
      for (std::size_t i = 1; i < b.count(); ++i) {
        const auto p = static_cast<PseudoId>(b.first_id + i);
        if (counts[p] > counts[best]) best = p;
      }
      modes_[f] = best;
    }
  }

  Table train_;
  BinLayout layout_;
  MIGraph graph_;
  std::shared_ptr<const BuiltinBackend> builtin_;
  std::shared_ptr<const Backend> backend_;
  EngineOptions options_;
  std::vector<std::vector<double>> pools_;
  std::vector<std::size_t> distinct_;
  std::vector<PseudoId> modes_;
};

}  // namespace sage
