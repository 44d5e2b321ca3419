#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "sage/engine.hpp"
#include "sage/guidance.hpp"

namespace sage {

enum class PrefixMode { prompt_only, seed_k };

struct SamplerConfig {
  double nucleus_p = 0.95;
  double temperature = 1.0;
  std::uint64_t seed = 0;
  PrefixMode prefix_mode = PrefixMode::prompt_only;
  std::size_t seed_k = 0;
  int max_attempts = 8;
  unsigned threads = 1;
  GuidanceConfig guidance;

  /// "default" (p = 0.95) or "appendix-e" (p = 0.7); both at temperature 1.
  static SamplerConfig preset(std::string_view name) {
    SamplerConfig c;
    if (name == "default") return c;
    if (name == "appendix-e") {
      c.nucleus_p = 0.7;
      return c;
    }
    throw Error(ErrorKind::invalid_argument, "unknown sampler preset '" + std::string(name) + "'");
  }

  void validate(std::size_t feature_count) const {
    if (!(nucleus_p > 0.0 && nucleus_p <= 1.0)) throw Error(ErrorKind::invalid_argument, "nucleus_p must lie in (0, 1]");
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
      throw Error(ErrorKind::invalid_argument, "temperature must be positive");
    }
    if (max_attempts < 1) throw Error(ErrorKind::invalid_argument, "max_attempts must be >= 1");
    if (prefix_mode == PrefixMode::seed_k && seed_k >= feature_count) {
      throw Error(ErrorKind::invalid_argument, "seed_k must be smaller than the feature count");
    }
    guidance.validate();
  }
};

/// How one value of a synthetic record came about.
struct Provenance {
  GuidanceMode mode = GuidanceMode::none;
  bool seeded = false;           // copied from a real row by seed_k prefixing
  std::size_t context_size = 0;  // pairs handed to the backend
  double delta = 0.0;
  int attempts = 0;
  bool forced = false;           // attempts exhausted, fell back to argmax
};

struct SynthRecord {
  Record values;
  std::vector<Provenance> provenance;  // schema order
  std::vector<std::size_t> order;      // generation order of feature indices
};

/// Softmax of logits / temperature (max-subtracted).
inline std::vector<double> softmax(std::span<const double> logits, double temperature = 1.0) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double top = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((logits[i] - top) / temperature);
    sum += p[i];
  }
  for (auto& x : p) x /= sum;
  return p;
}

/// Candidate indices of the nucleus: sorted by probability (descending, ties
/// in candidate order), smallest prefix reaching cumulative mass p.
inline std::vector<std::size_t> nucleus_indices(const CandidateDistribution& dist, double p, double temperature) {
  if (dist.logits.empty()) throw Error(ErrorKind::no_legal_candidate, "empty distribution for '" + dist.target + "'");
  const auto probs = softmax(dist.logits, temperature);
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  double mass = 0.0;
  std::size_t keep = 0;
  while (keep < order.size()) {
    mass += probs[order[keep++]];
    if (mass >= p - 1e-12) break;
  }
  order.resize(keep);
  return order;
}

template <std::uniform_random_bit_generator Rng>
std::size_t nucleus_sample(const CandidateDistribution& dist, double p, double temperature, Rng& rng) {
  const auto nucleus = nucleus_indices(dist, p, temperature);
  const auto probs = softmax(dist.logits, temperature);
  double mass = 0.0;
  for (auto i : nucleus) mass += probs[i];
  double u = uniform01(rng) * mass;
  for (auto i : nucleus) {
    u -= probs[i];
    if (u < 0.0) return i;
  }
  return nucleus.back();
}

/// Drops candidates outside the feature's legal domain (unknown categories,
/// out-of-range or unparsable numbers), duplicates and non-finite logits.
/// Numerical string candidates are parsed into numbers.
inline CandidateDistribution constrain(const CandidateDistribution& dist, const BinLayout& layout,
                                       std::size_t feature) {
  CandidateDistribution out;
  out.target = dist.target;
  const bool numerical = layout.bins(feature).kind == FeatureKind::numerical;
  const std::size_t n = std::min(dist.candidates.size(), dist.logits.size());
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(dist.logits[i])) continue;
    Value v = dist.candidates[i];
    if (numerical && !is_number(v)) {
      double x = 0.0;
      if (!parse_number(as_text(v), x)) continue;
      v = x;
    }
    if (!layout.contains(feature, v)) continue;
    if (!seen.insert(format_value(v)).second) continue;
    out.candidates.push_back(std::move(v));
    out.logits.push_back(dist.logits[i]);
  }
  if (out.candidates.empty()) {
    throw Error(ErrorKind::no_legal_candidate, "no legal candidate for '" + dist.target + "'");
  }
  return out;
}

/// Concrete value for a numerical bin: a uniformly drawn training value from
/// the bin, or uniform on the bin interval when the bin holds fewer than 3
/// distinct training values.
template <std::uniform_random_bit_generator Rng>
double draw_from_bin(const Engine& engine, PseudoId bin, Rng& rng) {
  const auto pool = engine.pool(bin);
  if (engine.distinct_in_pool(bin) >= 3) return pool[uniform_index(rng, pool.size())];
  const auto [lo, hi] = engine.layout().interval(bin);
  const double x = lo + uniform01(rng) * (hi - lo);
  const bool last = engine.layout().local_index(bin) + 1 == engine.layout().bin_count(engine.layout().feature_of(bin));
  if (x > hi || (!last && x >= hi) || x < lo) return lo;
  return x;
}

namespace detail {

template <std::uniform_random_bit_generator Rng>
Value realize(const Engine& engine, std::size_t feature, const Value& candidate, Rng& rng) {
  if (engine.layout().bins(feature).kind == FeatureKind::categorical) return candidate;
  return draw_from_bin(engine, engine.layout().assign(feature, candidate), rng);
}

}  // namespace detail

/// Synthesizes one record with the given random stream.
template <std::uniform_random_bit_generator Rng>
SynthRecord sample_record(const Engine& engine, const SamplerConfig& config, Rng& rng) {
  const auto& schema = engine.schema();
  const auto& layout = engine.layout();
  const auto& graph = engine.graph();
  const std::size_t F = schema.size();
  const double tau = config.guidance.resolved_tau(graph);

  SynthRecord rec;
  rec.values.assign(F, Value{});
  rec.provenance.assign(F, Provenance{});
  rec.order.resize(F);
  std::iota(rec.order.begin(), rec.order.end(), 0);
  shuffle(rec.order, rng);

  std::vector<PrefixItem> prefix;
  prefix.reserve(F);
  std::size_t step = 0;
  if (config.prefix_mode == PrefixMode::seed_k && config.seed_k > 0) {
    const auto& real = engine.train().row(uniform_index(rng, engine.train().size()));
    for (; step < config.seed_k; ++step) {
      const auto f = rec.order[step];
      rec.values[f] = real[f];
      rec.provenance[f].seeded = true;
      rec.provenance[f].mode = config.guidance.mode;
      prefix.push_back({{schema[f].name, real[f]}, f, layout.assign(f, real[f])});
    }
  }

  for (; step < F; ++step) {
    const auto f = rec.order[step];
    auto& prov = rec.provenance[f];
    prov.mode = config.guidance.mode;
    std::optional<Value> chosen;
    for (int attempt = 1; attempt <= config.max_attempts && !chosen; ++attempt) {
      prov.attempts = attempt;
      try {
        auto scored = guided_score(engine.backend(), graph, config.guidance.mode, tau, config.guidance.lambda,
                                   prefix, schema[f].name, f);
        prov.context_size = scored.context_size;
        prov.delta = scored.delta;
        auto legal = engine.backend().legal_by_construction() ? std::move(scored.dist)
                                                              : constrain(scored.dist, layout, f);
        const auto idx = nucleus_sample(legal, config.nucleus_p, config.temperature, rng);
        chosen = legal.candidates[idx];
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::no_legal_candidate && e.kind() != ErrorKind::malformed_response) throw;
      }
    }
    if (!chosen) {
      prov.forced = true;
      chosen = layout.representative(engine.mode_pseudo(f));
    }
    Value value = detail::realize(engine, f, *chosen, rng);
    prefix.push_back({{schema[f].name, value}, f, layout.assign(f, value)});
    rec.values[f] = std::move(value);
  }
  return rec;
}

/// Record `index` of the corpus defined by config.seed; independent of any
/// other record, so serial and parallel synthesis agree.
inline SynthRecord sample_record(const Engine& engine, const SamplerConfig& config, std::uint64_t index) {
  std::mt19937_64 rng(stream_seed(config.seed, index));
  return sample_record(engine, config, rng);
}

inline std::vector<SynthRecord> synthesize(const Engine& engine, std::size_t count, const SamplerConfig& config) {
  if (count == 0) throw Error(ErrorKind::invalid_argument, "sample count must be >= 1");
  config.validate(engine.schema().size());
  std::vector<SynthRecord> out(count);
  parallel_for(count, config.threads,
               [&](std::size_t i) { out[i] = sample_record(engine, config, static_cast<std::uint64_t>(i)); });
  return out;
}

inline Table to_table(const FeatureSchema& schema, std::span<const SynthRecord> records) {
  std::vector<Record> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(r.values);
  return Table(schema, std::move(rows));
}

inline nlohmann::json provenance_json(const FeatureSchema& schema, std::span<const SynthRecord> records) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : records) {
    nlohmann::json order = nlohmann::json::array();
    for (auto f : r.order) order.push_back(schema[f].name);
    nlohmann::json features = nlohmann::json::object();
    for (std::size_t f = 0; f < schema.size(); ++f) {
      const auto& p = r.provenance[f];
      features[schema[f].name] = {{"mode", to_string(p.mode)}, {"seeded", p.seeded},
                                  {"context_size", p.context_size}, {"delta", p.delta},
                                  {"attempts", p.attempts}, {"forced", p.forced}};
    }
    rows.push_back({{"order", order}, {"features", features}});
  }
  return rows;
}

/// Mean number of context pairs handed to the backend per generated (non-seeded) value.
inline double mean_context_size(std::span<const SynthRecord> records) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : records) {
    for (const auto& p : r.provenance) {
      if (p.seeded) continue;
      sum += static_cast<double>(p.context_size);
      ++n;
    }
  }
  return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace sage
