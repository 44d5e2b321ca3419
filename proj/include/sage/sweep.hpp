#pragma once

#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sage/engine.hpp"
#include "sage/evaluation.hpp"
#include "sage/sampler.hpp"

namespace sage {

enum class SweepMetric { utility, dcr, discriminator };

struct SweepPlan {
  std::vector<double> quantiles{0.0, 0.25, 0.5, 0.75, 0.9};
  GuidanceMode mode = GuidanceMode::feature_selector;
  SamplerConfig sampler;  // guidance.tau is overwritten per point
  std::size_t count = 0;  // 0: as many rows as the training table
  std::set<SweepMetric> metrics{SweepMetric::utility, SweepMetric::dcr};
  std::size_t probe_rows = 256;
  unsigned threads = 1;   // sweep points evaluated concurrently

  void validate() const {
    if (quantiles.empty()) throw Error(ErrorKind::invalid_argument, "sweep needs at least one quantile");
    for (std::size_t i = 0; i < quantiles.size(); ++i) {
      if (!(quantiles[i] >= 0.0 && quantiles[i] <= 1.0)) {
        throw Error(ErrorKind::invalid_argument, "quantiles must lie in [0, 1]");
      }
      if (i && !(quantiles[i] > quantiles[i - 1])) {
        throw Error(ErrorKind::invalid_argument, "quantiles must be strictly increasing");
      }
    }
  }
};

struct SweepPoint {
  double quantile = 0.0;
  double tau = 0.0;
  std::map<std::string, double> metrics;
  double mean_context_size = 0.0;      // selector output on the fixed probe prefixes
  double realized_context_size = 0.0;  // mean context handed to the backend while sampling
};

/// Tau at quantile q of the feature-level MI distribution (type-7 interpolation).
inline double tau_at_quantile(const MIGraph& graph, double q) {
  auto values = graph.feature_mi_values();
  if (values.empty()) return 0.0;
  return quantile(std::move(values), q);
}

/// Mean selected-context size over a fixed probe set: the first `rows`
/// training rows, each walked in a seed-determined feature order. The probe
/// does not depend on tau, so the result is monotone in tau.
inline double probe_context_size(const Engine& engine, double tau, std::size_t rows, std::uint64_t seed) {
  const auto& train = engine.train();
  const auto& layout = engine.layout();
  const auto& schema = engine.schema();
  const std::size_t n = std::min(rows, train.size());
  double total = 0.0;
  std::size_t steps = 0;
  for (std::size_t r = 0; r < n; ++r) {
    std::mt19937_64 rng(stream_seed(seed ^ 0x9b0be, r));
    std::vector<std::size_t> order(schema.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle(order, rng);
    std::vector<PrefixItem> prefix;
    for (auto f : order) {
      total += static_cast<double>(select_context(engine.graph(), prefix, f, tau).size());
      ++steps;
      const auto& v = train.row(r)[f];
      prefix.push_back({{schema[f].name, v}, f, layout.assign(f, v)});
    }
  }
  return steps ? total / static_cast<double>(steps) : 0.0;
}

/// Threshold ablation: for each quantile q, tau_q is the q-quantile of the
/// feature-level MI values; synthesize under tau_q and evaluate.
inline std::vector<SweepPoint> run_sweep(const Engine& engine, const SweepPlan& plan, const Table* real_test) {
  plan.validate();
  std::vector<SweepPoint> points(plan.quantiles.size());
  parallel_for(points.size(), plan.threads, [&](std::size_t i) {
    SweepPoint& pt = points[i];
    pt.quantile = plan.quantiles[i];
    pt.tau = tau_at_quantile(engine.graph(), pt.quantile);
    pt.mean_context_size = probe_context_size(engine, pt.tau, plan.probe_rows, plan.sampler.seed);

    SamplerConfig cfg = plan.sampler;
    cfg.guidance.mode = plan.mode;
    cfg.guidance.tau = pt.tau;
    const std::size_t count = plan.count ? plan.count : engine.train().size();
    const auto records = synthesize(engine, count, cfg);
    pt.realized_context_size = mean_context_size(records);
    const auto synthetic = to_table(engine.schema(), records);

    if (plan.metrics.contains(SweepMetric::utility) && real_test && engine.schema().task() != Task::none) {
      const auto u = eval_utility(synthetic, *real_test);
      for (const auto& [model, s] : u.classification) {
        pt.metrics[model + "_accuracy"] = s.accuracy;
        pt.metrics[model + "_macro_f1"] = s.macro_f1;
      }
      for (const auto& [model, m] : u.mape) pt.metrics[model + "_mape"] = m;
    }
    if (plan.metrics.contains(SweepMetric::dcr)) {
      pt.metrics["dcr_median"] = eval_dcr(synthetic, engine.train()).median;
    }
    if (plan.metrics.contains(SweepMetric::discriminator)) {
      DiscriminatorOptions d;
      d.seed = plan.sampler.seed;
      pt.metrics["discriminator_accuracy"] = eval_discriminator(synthetic, engine.train(), d).mean;
    }
  });
  return points;
}

/// CSV with columns quantile, tau, metrics (sorted by name), mean_context_size,
/// realized_context_size.
inline std::string sweep_csv(const std::vector<SweepPoint>& points) {
  std::set<std::string> names;
  for (const auto& p : points) {
    for (const auto& [k, v] : p.metrics) names.insert(k);
  }
  std::ostringstream out;
  out << "quantile,tau";
  for (const auto& n : names) out << ',' << n;
  out << ",mean_context_size,realized_context_size\n";
  for (const auto& p : points) {
    out << format_number(p.quantile) << ',' << format_number(p.tau);
    for (const auto& n : names) {
      out << ',';
      if (auto it = p.metrics.find(n); it != p.metrics.end()) out << format_number(it->second);
    }
    out << ',' << format_number(p.mean_context_size) << ',' << format_number(p.realized_context_size) << '\n';
  }
  return out.str();
}

}  // namespace sage
