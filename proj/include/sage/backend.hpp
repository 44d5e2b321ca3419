#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sage/core.hpp"
#include "sage/dataset.hpp"
#include "sage/migraph.hpp"
#include "sage/pseudofeatures.hpp"

namespace sage {

/// One "feature is value" unit of generation context.
struct ContextPair {
  std::string feature;
  Value value;

  bool operator==(const ContextPair&) const = default;
};

/// Scores for every candidate value of one target feature. Logits are
/// unnormalized natural-log scores, parallel to `candidates`.
struct CandidateDistribution {
  std::string target;
  std::vector<Value> candidates;
  std::vector<double> logits;
};

/// Renders context as comma-joined "feature is value" phrases.
inline std::string textualize(std::span<const ContextPair> context) {
  std::string out;
  for (std::size_t i = 0; i < context.size(); ++i) {
    if (i) out += ", ";
    out += context[i].feature;
    out += " is ";
    out += format_value(context[i].value);
  }
  return out;
}

/// Full legal value set of a feature: every category in layout order, or one
/// representative (the midpoint) per numerical bin.
inline std::vector<Value> legal_candidates(const BinLayout& layout, std::size_t feature) {
  std::vector<Value> out;
  const auto& b = layout.bins(feature);
  out.reserve(b.count());
  for (std::size_t i = 0; i < b.count(); ++i) out.push_back(layout.representative(layout.id(feature, i)));
  return out;
}

/// Contract for anything that can score candidate values of a target feature
/// given an ordered context. Implementations must be safe to call concurrently.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual CandidateDistribution score(std::span<const ContextPair> context,
                                      const std::string& target) const = 0;

  virtual std::string name() const = 0;

  /// True when every returned candidate is known to be legal for the schema.
  virtual bool legal_by_construction() const { return false; }
};

inline CandidateDistribution score_candidates(const Backend& backend, std::span<const ContextPair> context,
                                              const std::string& target) {
  return backend.score(context, target);
}

struct BuiltinOptions {
  enum class Context {
    conditional,    // consult every informative context pseudo-feature
    marginal_only,  // ignore context entirely
  };
  double alpha = 0.5;
  Context context = Context::conditional;
};

/// Dependency-free backend: a smoothed product of single-pseudo-feature
/// conditionals,
///   logit(c) = log P(c) + sum_p [log P(c | p) - log P(c)],
/// with Laplace smoothing alpha on every count. Context pseudo-features with
/// zero feature-level MI against the target are skipped.
class BuiltinBackend final : public Backend {
 public:
  BuiltinBackend() = default;

  static BuiltinBackend fit(const Table& train, const BinLayout& layout, const MIGraph& graph,
                            const BuiltinOptions& options = {}) {
    if (!(options.alpha > 0.0)) throw Error(ErrorKind::invalid_argument, "alpha must be positive");
    if (graph.pseudo_count() != layout.pseudo_count()) {
      throw Error(ErrorKind::invalid_argument, "graph and layout disagree on pseudo-features");
    }
    BuiltinBackend b;
    b.layout_ = layout;
    b.options_ = options;
    b.rows_ = train.size();
    const std::size_t P = layout.pseudo_count();
    const std::size_t F = layout.feature_count();
    b.active_.assign(P, 0);
    b.joint_.assign(P * P, 0);
    for (const auto& row : train.rows()) {
      const auto pv = expand(layout, row);
      for (auto a : pv.active) {
        ++b.active_[a];
        for (auto c : pv.active) {
          if (layout.feature_of(a) != layout.feature_of(c)) ++b.joint_[a * P + c];
        }
      }
    }
    b.informative_.assign(P * F, 0);
    for (PseudoId p = 0; p < P; ++p) {
      for (std::size_t t = 0; t < F; ++t) {
        b.informative_[p * F + t] = layout.feature_of(p) != t && graph.feature_mi(p, t) > 0.0;
      }
    }
    return b;
  }

  CandidateDistribution score(std::span<const ContextPair> context, const std::string& target) const override {
    const auto& schema = layout_.schema();
    const std::size_t t = schema.index_of(target);
    const std::size_t F = layout_.feature_count();
    const std::size_t P = layout_.pseudo_count();
    const auto& tb = layout_.bins(t);
    const std::size_t k = tb.count();
    const double alpha = options_.alpha;
    const double n = static_cast<double>(rows_);

    std::vector<PseudoId> given;
    for (const auto& pair : context) {
      const std::size_t f = schema.index_of(pair.feature);
      if (f == t) throw Error(ErrorKind::invalid_argument, "target '" + target + "' appears in its own context");
      const PseudoId p = layout_.assign(f, pair.value);
      if (options_.context == BuiltinOptions::Context::conditional && informative_[p * F + t]) given.push_back(p);
    }

    CandidateDistribution out;
    out.target = target;
    out.candidates = legal_candidates(layout_, t);
    out.logits.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
      const PseudoId c = static_cast<PseudoId>(tb.first_id + j);
      const double log_prior = std::log((static_cast<double>(active_[c]) + alpha) / (n + alpha * static_cast<double>(k)));
      double logit = log_prior;
      for (auto p : given) {
        const double cond = (static_cast<double>(joint_[p * P + c]) + alpha) /
                            (static_cast<double>(active_[p]) + alpha * static_cast<double>(k));
        logit += std::log(cond) - log_prior;
      }
      out.logits[j] = logit;
    }
    return out;
  }

  std::string name() const override { return "builtin"; }
  bool legal_by_construction() const override { return true; }

  const BinLayout& layout() const noexcept { return layout_; }
  const BuiltinOptions& options() const noexcept { return options_; }

  nlohmann::json to_json() const {
    return {
        {"alpha", options_.alpha},
        {"context", options_.context == BuiltinOptions::Context::conditional ? "conditional" : "marginal_only"},
        {"rows", rows_},
        {"active", active_},
        {"joint", joint_},
        {"informative", informative_},
    };
  }

  static BuiltinBackend from_json(const BinLayout& layout, const nlohmann::json& j) {
    try {
      BuiltinBackend b;
      b.layout_ = layout;
      b.options_.alpha = j.at("alpha").get<double>();
      b.options_.context = j.at("context").get<std::string>() == "conditional"
                               ? BuiltinOptions::Context::conditional
                               : BuiltinOptions::Context::marginal_only;
      b.rows_ = j.at("rows").get<std::uint64_t>();
      b.active_ = j.at("active").get<std::vector<std::uint64_t>>();
      b.joint_ = j.at("joint").get<std::vector<std::uint64_t>>();
      b.informative_ = j.at("informative").get<std::vector<std::uint8_t>>();
      const std::size_t P = layout.pseudo_count();
      if (b.active_.size() != P || b.joint_.size() != P * P ||
          b.informative_.size() != P * layout.feature_count()) {
        throw Error(ErrorKind::integrity, "backend.json does not match the bin layout");
      }
      return b;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::integrity, std::string("backend.json: ") + e.what());
    }
  }

  bool operator==(const BuiltinBackend& o) const {
    return layout_ == o.layout_ && options_.alpha == o.options_.alpha &&
           options_.context == o.options_.context && rows_ == o.rows_ && active_ == o.active_ &&
           joint_ == o.joint_ && informative_ == o.informative_;
  }

 private:
  BinLayout layout_;
  BuiltinOptions options_;
  std::uint64_t rows_ = 0;
  std::vector<std::uint64_t> active_;     // P: rows activating each pseudo-feature
  std::vector<std::uint64_t> joint_;      // P x P: co-activation across features
  std::vector<std::uint8_t> informative_; // P x F: feature-level MI > 0
};

inline BuiltinBackend fit_builtin(const Table& train, const BinLayout& layout, const MIGraph& graph,
                                  const BuiltinOptions& options = {}) {
  return BuiltinBackend::fit(train, layout, graph, options);
}

}  // namespace sage
