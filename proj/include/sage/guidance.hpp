#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sage/backend.hpp"
#include "sage/migraph.hpp"

namespace sage {

enum class GuidanceMode { none, feature_selector, logit_correction };

inline std::string_view to_string(GuidanceMode m) {
  switch (m) {
    case GuidanceMode::none: return "none";
    case GuidanceMode::feature_selector: return "fs";
    case GuidanceMode::logit_correction: return "lc";
  }
  return "none";
}

inline GuidanceMode parse_guidance_mode(std::string_view s) {
  if (s == "fs" || s == "feature_selector") return GuidanceMode::feature_selector;
  if (s == "lc" || s == "logit_correction") return GuidanceMode::logit_correction;
  if (s == "none") return GuidanceMode::none;
  throw Error(ErrorKind::invalid_argument, "unknown guidance mode '" + std::string(s) + "'");
}

/// Lower bound on the correction scale 1 + lambda * delta.
inline constexpr double kMinCorrectionScale = 1e-3;

struct GuidanceConfig {
  GuidanceMode mode = GuidanceMode::feature_selector;
  std::optional<double> tau;  // unset: the graph's default (median MI)
  double lambda = 1.0;

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(ErrorKind::invalid_argument, "lambda must be >= 0");
    if (tau && (!(*tau >= 0.0) || !std::isfinite(*tau))) throw Error(ErrorKind::invalid_argument, "tau must be >= 0");
  }

  double resolved_tau(const MIGraph& graph) const { return tau.value_or(graph.tau()); }
};

/// A value already generated for the current record, in generation order.
struct PrefixItem {
  ContextPair pair;
  std::size_t feature = 0;
  PseudoId pseudo = 0;
};

/// Context pairs whose active pseudo-feature has feature-level MI with the
/// target strictly above tau. Generation order is preserved.
inline std::vector<ContextPair> select_context(const MIGraph& graph, std::span<const PrefixItem> prefix,
                                               std::size_t target, double tau) {
  std::vector<ContextPair> out;
  for (const auto& item : prefix) {
    if (graph.feature_mi(item.pseudo, target) > tau) out.push_back(item.pair);
  }
  return out;
}

/// Mean feature-level MI between the prefix's pseudo-features and the
/// target; empty when there is no prefix.
inline std::optional<double> mu_sample(const MIGraph& graph, std::span<const PrefixItem> prefix, std::size_t target) {
  if (prefix.empty()) return std::nullopt;
  double sum = 0.0;
  for (const auto& item : prefix) sum += graph.feature_mi(item.pseudo, target);
  return sum / static_cast<double>(prefix.size());
}

/// Relative context informativeness mu_sample / mu_train - 1; zero when
/// mu_train is not positive.
inline double correction_delta(double mu_s, double mu_t) {
  if (!(mu_t > 0.0)) return 0.0;
  return mu_s / mu_t - 1.0;
}

inline double correction_scale(double delta, double lambda) {
  return std::max(1.0 + lambda * delta, kMinCorrectionScale);
}

/// Scales every logit by c = max(1 + lambda * delta, 1e-3).
inline CandidateDistribution correct_logits(CandidateDistribution dist, double mu_s, double mu_t, double lambda) {
  const double c = correction_scale(correction_delta(mu_s, mu_t), lambda);
  for (auto& z : dist.logits) z *= c;
  return dist;
}

struct GuidedScore {
  CandidateDistribution dist;
  std::size_t context_size = 0;  // pairs handed to the backend
  double delta = 0.0;            // correction delta applied (logit correction only)
};

/// One guided scoring step: prune (feature selector) or rescale (logit
/// correction) around a backend call. `tau` must already be resolved.
inline GuidedScore guided_score(const Backend& backend, const MIGraph& graph, GuidanceMode mode, double tau,
                                double lambda, std::span<const PrefixItem> prefix, const std::string& target_name,
                                std::size_t target) {
  GuidedScore out;
  std::vector<ContextPair> context;
  if (mode == GuidanceMode::feature_selector) {
    context = select_context(graph, prefix, target, tau);
  } else {
    context.reserve(prefix.size());
    for (const auto& item : prefix) context.push_back(item.pair);
  }
  out.context_size = context.size();
  out.dist = backend.score(context, target_name);
  if (mode == GuidanceMode::logit_correction) {
    if (auto mu_s = mu_sample(graph, prefix, target)) {
      out.delta = correction_delta(*mu_s, graph.mu_train(target));
      out.dist = correct_logits(std::move(out.dist), *mu_s, graph.mu_train(target), lambda);
    }
  }
  return out;
}

}  // namespace sage
