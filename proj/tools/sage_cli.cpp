// sage: fit / sample / eval / sweep / mi-graph export / pipeline over a model directory.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "sage/http_backend.hpp"
#include "sage/sage.hpp"

namespace fs = std::filesystem;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::string backend = "builtin";
};

struct SamplerFlags {
  std::string guidance = "fs";
  std::string tau = "auto";
  double lambda = 1.0;
  std::string prefix_mode = "prompt";
  std::string preset = "default";
  std::optional<double> nucleus_p;
  std::optional<double> temperature;
  int max_attempts = 8;

  void add(CLI::App* cmd) {
    cmd->add_option("--guidance", guidance, "fs | lc | none")->check(CLI::IsMember({"fs", "lc", "none"}));
    cmd->add_option("--tau", tau, "MI threshold in nats, or 'auto' for the training median");
    cmd->add_option("--lambda", lambda, "logit-correction scale")->check(CLI::NonNegativeNumber);
    cmd->add_option("--prefix-mode", prefix_mode, "prompt | seed:K");
    cmd->add_option("--preset", preset, "default (p=0.95) | appendix-e (p=0.7)")
        ->check(CLI::IsMember({"default", "appendix-e"}));
    cmd->add_option("--nucleus-p", nucleus_p, "overrides the preset's nucleus mass");
    cmd->add_option("--temperature", temperature, "overrides the preset's temperature");
    cmd->add_option("--max-attempts", max_attempts, "rejection retries per value")->check(CLI::PositiveNumber);
  }

  sage::SamplerConfig build(const Globals& g) const {
    auto c = sage::SamplerConfig::preset(preset);
    if (nucleus_p) c.nucleus_p = *nucleus_p;
    if (temperature) c.temperature = *temperature;
    c.seed = g.seed;
    c.threads = g.threads;
    c.max_attempts = max_attempts;
    c.guidance.mode = sage::parse_guidance_mode(guidance);
    c.guidance.lambda = lambda;
    if (tau != "auto") {
      double t = 0.0;
      if (!sage::parse_number(tau, t)) throw sage::Error(sage::ErrorKind::invalid_argument, "--tau: '" + tau + "'");
      c.guidance.tau = t;
    }
    if (prefix_mode == "prompt" || prefix_mode == "prompt_only") {
      c.prefix_mode = sage::PrefixMode::prompt_only;
    } else if (prefix_mode.rfind("seed:", 0) == 0) {
      double k = 0.0;
      if (!sage::parse_number(prefix_mode.substr(5), k) || k < 0 || k != std::floor(k)) {
        throw sage::Error(sage::ErrorKind::invalid_argument, "--prefix-mode: '" + prefix_mode + "'");
      }
      c.prefix_mode = sage::PrefixMode::seed_k;
      c.seed_k = static_cast<std::size_t>(k);
    } else {
      throw sage::Error(sage::ErrorKind::invalid_argument, "--prefix-mode: '" + prefix_mode + "'");
    }
    return c;
  }
};

struct EngineFlags {
  std::string bins = "fd";
  std::string feature_mi = "bin-index";
  std::string tau_source = "feature";
  double alpha = 0.5;
  std::string builtin_context = "conditional";

  void add(CLI::App* cmd) {
    cmd->add_option("--bins", bins, "'fd' (Freedman-Diaconis, capped at 16) or a fixed count 1..16");
    cmd->add_option("--feature-mi", feature_mi, "bin-index | max-over-bins")
        ->check(CLI::IsMember({"bin-index", "max-over-bins"}));
    cmd->add_option("--tau-source", tau_source, "feature | pairwise")->check(CLI::IsMember({"feature", "pairwise"}));
    cmd->add_option("--alpha", alpha, "Laplace smoothing of the built-in backend")->check(CLI::PositiveNumber);
    cmd->add_option("--builtin-context", builtin_context, "conditional | marginal")
        ->check(CLI::IsMember({"conditional", "marginal"}));
  }

  sage::EngineOptions build(const Globals& g) const {
    sage::EngineOptions o;
    if (bins != "fd") {
      double k = 0.0;
      if (!sage::parse_number(bins, k) || k != std::floor(k) || k < 1 || k > 16) {
        throw sage::Error(sage::ErrorKind::invalid_argument, "--bins: '" + bins + "'");
      }
      o.binning.rule = sage::BinningOptions::Rule::fixed;
      o.binning.fixed_bins = static_cast<std::size_t>(k);
    }
    o.mi.feature_mi = feature_mi == "bin-index" ? sage::FeatureMiMode::bin_index : sage::FeatureMiMode::max_over_bins;
    o.mi.tau_source = tau_source == "feature" ? sage::TauSource::feature_level : sage::TauSource::pairwise;
    o.mi.threads = g.threads;
    o.builtin.alpha = alpha;
    o.builtin.context = builtin_context == "conditional" ? sage::BuiltinOptions::Context::conditional
                                                         : sage::BuiltinOptions::Context::marginal_only;
    return o;
  }
};

void attach_backend(sage::Engine& engine, const Globals& g) {
  if (g.backend == "builtin") return;
  if (g.backend.rfind("http:", 0) != 0) {
    throw sage::Error(sage::ErrorKind::invalid_argument, "--backend must be 'builtin' or 'http:<url>'");
  }
  auto url = g.backend.substr(5);
  if (url.rfind("//", 0) == 0) url = "http:" + url;
  auto backend = std::make_shared<sage::HttpBackend>(url, engine.layout());
  spdlog::info("using external backend {} (max_in_flight={})", url, backend->max_in_flight());
  engine.set_backend(std::move(backend));
}

std::vector<sage::Constraint> load_constraints(const std::string& path) {
  if (path.empty()) return {};
  try {
    return sage::parse_constraints(nlohmann::json::parse(sage::read_file(path)));
  } catch (const nlohmann::json::exception& e) {
    throw sage::Error(sage::ErrorKind::invalid_argument, path + ": " + e.what());
  }
}

void write_json(const std::string& path, const nlohmann::json& j) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
  } else {
    sage::write_file(path, j.dump(2) + "\n");
  }
}

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("sage");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::warn);
  if (const char* level = std::getenv("SAGE_LOG")) spdlog::set_level(spdlog::level::from_str(level));
}

}  // namespace

int main(int argc, char** argv) {
  configure_logging();

  CLI::App app{"Guided tabular data synthesis with mutual-information sparse guidance"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "random seed")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads (0 = all cores)")->capture_default_str();
  app.add_option("--backend", g.backend, "builtin | http:<url>")->capture_default_str();

  // fit
  auto* fit = app.add_subcommand("fit", "fit bins, MI graph and the built-in backend; write a model directory");
  std::string fit_data, fit_schema, fit_out, fit_test_out;
  std::optional<double> fit_fraction;
  EngineFlags fit_engine;
  fit->add_option("--data", fit_data, "training CSV (or full CSV with --train-fraction)")->required();
  fit->add_option("--schema", fit_schema, "schema JSON")->required();
  fit->add_option("--out", fit_out, "model directory")->required();
  fit->add_option("--train-fraction", fit_fraction, "split the data first; fit on this fraction");
  fit->add_option("--test-out", fit_test_out, "where to write the held-out split (with --train-fraction)");
  fit_engine.add(fit);

  // sample
  auto* sample = app.add_subcommand("sample", "synthesize rows from a model directory");
  std::string sample_model, sample_out, sample_prov;
  std::size_t sample_count = 0;
  SamplerFlags sample_flags;
  sample->add_option("--model", sample_model, "model directory")->required();
  sample->add_option("--count", sample_count, "rows to generate (default: training size)");
  sample->add_option("--out", sample_out, "output CSV")->required();
  sample->add_option("--provenance", sample_prov, "optional provenance sidecar JSON");
  sample_flags.add(sample);

  // eval
  auto* eval = app.add_subcommand("eval", "utility, realism, privacy and constraint fidelity report");
  std::string eval_syn, eval_train, eval_test, eval_schema, eval_model, eval_constraints, eval_report, eval_dcr_csv;
  eval->add_option("--synthetic", eval_syn, "synthetic CSV")->required();
  eval->add_option("--real-train", eval_train, "real training CSV")->required();
  eval->add_option("--real-test", eval_test, "real test CSV (enables utility)");
  eval->add_option("--schema", eval_schema, "schema JSON");
  eval->add_option("--model", eval_model, "model directory (schema source when --schema is absent)");
  eval->add_option("--constraints", eval_constraints, "constraints JSON");
  eval->add_option("--report", eval_report, "report JSON path ('-' for stdout)");
  eval->add_option("--dcr-csv", eval_dcr_csv, "optional per-row DCR CSV");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "MI-threshold sweep over feature-level MI quantiles");
  std::string sweep_model, sweep_report, sweep_test, sweep_metrics = "utility,dcr";
  std::vector<double> sweep_quantiles{0.0, 0.25, 0.5, 0.75, 0.9};
  std::size_t sweep_count = 0;
  SamplerFlags sweep_flags;
  sweep->add_option("--model", sweep_model, "model directory")->required();
  sweep->add_option("--quantiles", sweep_quantiles, "comma-separated quantiles")->delimiter(',');
  sweep->add_option("--report", sweep_report, "output CSV")->required();
  sweep->add_option("--real-test", sweep_test, "real test CSV (enables utility)");
  sweep->add_option("--count", sweep_count, "rows per point (default: training size)");
  sweep->add_option("--metrics", sweep_metrics, "subset of utility,dcr,discriminator");
  sweep_flags.add(sweep);

  // mi-graph export
  auto* mi = app.add_subcommand("mi-graph", "dependency graph tools");
  mi->require_subcommand(1);
  auto* mi_export = mi->add_subcommand("export", "write the pairwise MI matrix and feature-level aggregates");
  std::string mi_model, mi_matrix, mi_aggregates;
  mi_export->add_option("--model", mi_model, "model directory")->required();
  mi_export->add_option("--matrix", mi_matrix, "CSV of (pseudo_id_a, pseudo_id_b, mi)")->required();
  mi_export->add_option("--aggregates", mi_aggregates, "JSON of feature-level aggregates")->required();

  // pipeline
  auto* pipe = app.add_subcommand("pipeline", "split, fit, sample and evaluate in one run");
  std::string pipe_data, pipe_schema, pipe_constraints, pipe_report, pipe_syn;
  double pipe_fraction = 0.8;
  std::size_t pipe_count = 0;
  EngineFlags pipe_engine;
  SamplerFlags pipe_flags;
  pipe->add_option("--data", pipe_data, "full CSV")->required();
  pipe->add_option("--schema", pipe_schema, "schema JSON")->required();
  pipe->add_option("--constraints", pipe_constraints, "constraints JSON");
  pipe->add_option("--report", pipe_report, "report JSON path ('-' for stdout)");
  pipe->add_option("--synthetic-out", pipe_syn, "also write the synthetic CSV");
  pipe->add_option("--train-fraction", pipe_fraction, "train share of the split")->capture_default_str();
  pipe->add_option("--count", pipe_count, "rows to generate (default: training size)");
  pipe_engine.add(pipe);
  pipe_flags.add(pipe);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*fit) {
      const auto schema = sage::load_schema(fit_schema);
      auto table = sage::load_table(fit_data, schema);
      if (fit_fraction) {
        auto [train, test] = sage::split(table, *fit_fraction, g.seed);
        if (!fit_test_out.empty()) sage::write_table(fit_test_out, test);
        table = std::move(train);
      }
      spdlog::info("fitting on {} rows x {} features", table.size(), schema.size());
      const auto engine = sage::Engine::fit(std::move(table), fit_engine.build(g));
      sage::save_artifact(engine, fit_out);
      std::cout << nlohmann::json{{"model", fit_out},
                                  {"rows", engine.train().size()},
                                  {"pseudo_features", engine.layout().pseudo_count()},
                                  {"tau", engine.graph().tau()}}
                       .dump()
                << '\n';
    } else if (*sample) {
      auto engine = sage::load_artifact(sample_model);
      attach_backend(engine, g);
      const auto config = sample_flags.build(g);
      const auto records = sage::synthesize(engine, sample_count ? sample_count : engine.train().size(), config);
      sage::write_table(sample_out, sage::to_table(engine.schema(), records));
      if (!sample_prov.empty()) {
        write_json(sample_prov, {{"seed", g.seed},
                                 {"guidance", std::string(sage::to_string(config.guidance.mode))},
                                 {"tau", config.guidance.resolved_tau(engine.graph())},
                                 {"lambda", config.guidance.lambda},
                                 {"nucleus_p", config.nucleus_p},
                                 {"temperature", config.temperature},
                                 {"backend", engine.backend().name()},
                                 {"records", sage::provenance_json(engine.schema(), records)}});
      }
      std::cout << nlohmann::json{{"rows", records.size()}, {"out", sample_out}}.dump() << '\n';
    } else if (*eval) {
      sage::FeatureSchema schema;
      if (!eval_schema.empty()) schema = sage::load_schema(eval_schema);
      else if (!eval_model.empty()) schema = sage::load_schema(fs::path(eval_model) / "schema.json");
      else throw sage::Error(sage::ErrorKind::invalid_argument, "eval needs --schema or --model");
      const auto synthetic = sage::load_table(eval_syn, schema);
      const auto real_train = sage::load_table(eval_train, schema);
      std::optional<sage::Table> real_test;
      if (!eval_test.empty()) real_test = sage::load_table(eval_test, schema);
      const auto constraints = load_constraints(eval_constraints);
      sage::ReportOptions options;
      options.threads = g.threads;
      options.discriminator.seed = g.seed;
      options.utility.forest.seed = g.seed;
      const auto report =
          sage::metric_report(synthetic, real_train, real_test ? &*real_test : nullptr, constraints, options);
      write_json(eval_report, report);
      if (!eval_dcr_csv.empty()) {
        const auto dcr = sage::eval_dcr(synthetic, real_train, g.threads);
        std::string csv = "row,dcr\n";
        for (std::size_t i = 0; i < dcr.distances.size(); ++i) {
          csv += std::to_string(i) + "," + sage::format_number(dcr.distances[i]) + "\n";
        }
        sage::write_file(eval_dcr_csv, csv);
      }
    } else if (*sweep) {
      auto engine = sage::load_artifact(sweep_model);
      attach_backend(engine, g);
      sage::SweepPlan plan;
      plan.quantiles = sweep_quantiles;
      plan.sampler = sweep_flags.build(g);
      plan.sampler.threads = 1;
      plan.mode = plan.sampler.guidance.mode;
      plan.count = sweep_count;
      plan.threads = g.threads;
      plan.metrics.clear();
      std::stringstream ss(sweep_metrics);
      for (std::string m; std::getline(ss, m, ',');) {
        if (m == "utility") plan.metrics.insert(sage::SweepMetric::utility);
        else if (m == "dcr") plan.metrics.insert(sage::SweepMetric::dcr);
        else if (m == "discriminator") plan.metrics.insert(sage::SweepMetric::discriminator);
        else throw sage::Error(sage::ErrorKind::invalid_argument, "--metrics: unknown metric '" + m + "'");
      }
      std::optional<sage::Table> test;
      if (!sweep_test.empty()) test = sage::load_table(sweep_test, engine.schema());
      const auto points = sage::run_sweep(engine, plan, test ? &*test : nullptr);
      sage::write_file(sweep_report, sage::sweep_csv(points));
      std::cout << nlohmann::json{{"points", points.size()}, {"report", sweep_report}}.dump() << '\n';
    } else if (*mi_export) {
      const auto engine = sage::load_artifact(mi_model);
      const auto& graph = engine.graph();
      const auto& layout = engine.layout();
      std::string csv = "pseudo_id_a,pseudo_id_b,mi\n";
      for (sage::PseudoId a = 0; a < graph.pseudo_count(); ++a) {
        for (sage::PseudoId b = a + 1; b < graph.pseudo_count(); ++b) {
          if (graph.owner(a) == graph.owner(b)) continue;
          csv += std::to_string(a) + "," + std::to_string(b) + "," + sage::format_number(graph.mi(a, b)) + "\n";
        }
      }
      sage::write_file(mi_matrix, csv);
      nlohmann::json pseudo = nlohmann::json::array();
      nlohmann::json feature_mi = nlohmann::json::array();
      for (sage::PseudoId p = 0; p < graph.pseudo_count(); ++p) {
        pseudo.push_back({{"id", p}, {"label", layout.label(p)}, {"feature", engine.schema()[layout.feature_of(p)].name}});
        for (std::size_t t = 0; t < graph.feature_count(); ++t) {
          if (graph.owner(p) == t) continue;
          feature_mi.push_back({{"pseudo_id", p}, {"target", engine.schema()[t].name}, {"mi", graph.feature_mi(p, t)}});
        }
      }
      nlohmann::json mu = nlohmann::json::object();
      for (std::size_t t = 0; t < graph.feature_count(); ++t) mu[engine.schema()[t].name] = graph.mu_train(t);
      write_json(mi_aggregates, {{"unit", "nats"},
                                 {"tau", graph.tau()},
                                 {"mu_train", mu},
                                 {"pseudo_features", pseudo},
                                 {"feature_mi", feature_mi}});
    } else if (*pipe) {
      const auto schema = sage::load_schema(pipe_schema);
      const auto data = sage::load_table(pipe_data, schema);
      sage::PipelineOptions options;
      options.engine = pipe_engine.build(g);
      options.sampler = pipe_flags.build(g);
      options.train_fraction = pipe_fraction;
      options.split_seed = g.seed;
      options.count = pipe_count;
      options.report.threads = g.threads;
      options.report.discriminator.seed = g.seed;
      options.report.utility.forest.seed = g.seed;
      const auto constraints = load_constraints(pipe_constraints);
      if (g.backend != "builtin") {
        throw sage::Error(sage::ErrorKind::invalid_argument, "pipeline supports only the builtin backend");
      }
      const auto result = sage::run_pipeline(data, constraints, options);
      if (!pipe_syn.empty()) sage::write_table(pipe_syn, result.synthetic);
      write_json(pipe_report, result.report);
    }
  } catch (const sage::Error& e) {
    std::cerr << nlohmann::json{{"error", {{"kind", sage::to_string(e.kind())}, {"message", e.what()}}}}.dump() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << nlohmann::json{{"error", {{"kind", "Internal"}, {"message", e.what()}}}}.dump() << '\n';
    return 1;
  }
  return 0;
}
