#pragma once

#include <span>

#include <json.hpp>

#include "sage/engine.hpp"
#include "sage/evaluation.hpp"
#include "sage/sampler.hpp"

namespace sage {

struct PipelineOptions {
  EngineOptions engine;
  SamplerConfig sampler;
  double train_fraction = 0.8;
  std::uint64_t split_seed = 0;
  std::size_t count = 0;  // 0: as many rows as the training split
  ReportOptions report;
};

struct PipelineResult {
  Table train;
  Table test;
  Table synthetic;
  nlohmann::json report;
};

/// split -> fit -> synthesize -> evaluate, in one call.
inline PipelineResult run_pipeline(const Table& data, std::span<const Constraint> constraints,
                                   const PipelineOptions& options) {
  auto [train, test] = split(data, options.train_fraction, options.split_seed);
  const auto engine = Engine::fit(train, options.engine);
  const auto records = synthesize(engine, options.count ? options.count : train.size(), options.sampler);
  PipelineResult out{train, test, to_table(data.schema(), records), {}};
  out.report = metric_report(out.synthetic, out.train, &out.test, constraints, options.report);
  out.report["guidance"] = {{"mode", to_string(options.sampler.guidance.mode)},
                            {"tau", options.sampler.guidance.resolved_tau(engine.graph())},
                            {"lambda", options.sampler.guidance.lambda}};
  out.report["mean_context_size"] = mean_context_size(records);
  return out;
}

}  // namespace sage
