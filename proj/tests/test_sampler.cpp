#include <gtest/gtest.h>

#include <map>
#include <set>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace sage;

namespace {

CandidateDistribution dist_of(std::vector<Value> candidates, std::vector<double> logits) {
  return {"t", std::move(candidates), std::move(logits)};
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::invalid_argument;
}

// Proposes out-of-domain candidates, or fails outright, for a fraction of calls.
class RogueBackend final : public Backend {
 public:
  RogueBackend(const BinLayout& layout, ErrorKind failure) : layout_(layout), failure_(failure) {}
  CandidateDistribution score(std::span<const ContextPair>, const std::string& target) const override {
    const auto f = layout_.schema().index_of(target);
    if (failure_ == ErrorKind::backend_unavailable) throw Error(failure_, "down");
    CandidateDistribution d{target, {std::string("???"), 1e9, -1e9, std::string("not a number")}, {5, 5, 5, 5}};
    if (layout_.bins(f).kind == FeatureKind::numerical) {
      // one legal numeric string amid junk
      d.candidates.push_back(format_number(layout_.min(f)));
      d.logits.push_back(0.0);
    }
    return d;
  }
  std::string name() const override { return "rogue"; }

 private:
  const BinLayout& layout_;
  ErrorKind failure_;
};

void expect_legal(const Engine& e, const Table& t) {
  for (const auto& row : t.rows()) {
    for (std::size_t f = 0; f < row.size(); ++f) ASSERT_TRUE(e.layout().contains(f, row[f])) << format_value(row[f]);
  }
}

}  // namespace

TEST(Nucleus, UniformFourAtHalfKeepsTwo) {
  const auto d = dist_of({1.0, 2.0, 3.0, 4.0}, {0, 0, 0, 0});
  EXPECT_EQ(nucleus_indices(d, 0.5, 1.0), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(nucleus_indices(d, 1.0, 1.0).size(), 4u);
  EXPECT_EQ(nucleus_indices(d, 0.51, 1.0).size(), 3u);
}

TEST(Nucleus, OrdersByProbability) {
  const auto d = dist_of({1.0, 2.0, 3.0}, {0.0, std::log(6.0), std::log(3.0)});
  // probabilities 0.1, 0.6, 0.3
  EXPECT_EQ(nucleus_indices(d, 0.6, 1.0), (std::vector<std::size_t>{1}));
  EXPECT_EQ(nucleus_indices(d, 0.85, 1.0), (std::vector<std::size_t>{1, 2}));
  EXPECT_EQ(nucleus_indices(d, 0.95, 1.0), (std::vector<std::size_t>{1, 2, 0}));
}

TEST(Nucleus, SamplesStayInNucleusWithRightFrequencies) {
  const auto d = dist_of({1.0, 2.0, 3.0}, {0.0, std::log(6.0), std::log(3.0)});
  std::mt19937_64 rng(1);
  std::map<std::size_t, int> counts;
  for (int i = 0; i < 20000; ++i) ++counts[nucleus_sample(d, 0.85, 1.0, rng)];
  EXPECT_EQ(counts.count(0), 0u);
  EXPECT_NEAR(counts[1] / 20000.0, 2.0 / 3.0, 0.02);
}

TEST(Nucleus, Presets) {
  EXPECT_EQ(SamplerConfig::preset("default").nucleus_p, 0.95);
  EXPECT_EQ(SamplerConfig::preset("appendix-e").nucleus_p, 0.7);
  EXPECT_THROW(SamplerConfig::preset("other"), Error);
}

TEST(Constrain, DropsIllegalAndParsesNumbers) {
  const auto engine = Engine::fit(fixture::load("census_mini"));
  const auto& layout = engine.layout();
  const auto age = engine.schema().index_of("age");
  const auto edu = engine.schema().index_of("education");

  const auto cat = constrain(dist_of({std::string("Masters"), std::string("Wizard"), std::string("Masters"),
                                      std::string("HS-grad")},
                                     {1, 2, 3, std::numeric_limits<double>::quiet_NaN()}),
                             layout, edu);
  EXPECT_EQ(cat.candidates, (std::vector<Value>{std::string("Masters")}));
  EXPECT_EQ(cat.logits, (std::vector<double>{1}));

  const auto num = constrain(dist_of({std::string("40"), std::string("forty"), 1000.0, 30.0}, {1, 2, 3, 4}),
                             layout, age);
  EXPECT_EQ(num.candidates, (std::vector<Value>{40.0, 30.0}));

  EXPECT_EQ(kind_of([&] { constrain(dist_of({std::string("Wizard")}, {0}), layout, edu); }),
            ErrorKind::no_legal_candidate);
}

TEST(Sampler, DrawFromBinStaysInBin) {
  const auto engine = Engine::fit(fixture::load("wine"));
  std::mt19937_64 rng(3);
  for (PseudoId p = 0; p < engine.layout().pseudo_count(); ++p) {
    const auto f = engine.layout().feature_of(p);
    if (engine.layout().bins(f).kind != FeatureKind::numerical) continue;
    for (int i = 0; i < 20; ++i) EXPECT_EQ(engine.layout().assign(f, Value{draw_from_bin(engine, p, rng)}), p);
  }
}

TEST(Sampler, DeterministicAndThreadIndependent) {
  const auto engine = Engine::fit(fixture::load("iris"));
  SamplerConfig cfg;
  cfg.seed = 77;
  const auto a = to_table(engine.schema(), synthesize(engine, 200, cfg));
  const auto b = to_table(engine.schema(), synthesize(engine, 200, cfg));
  cfg.threads = 4;
  const auto c = to_table(engine.schema(), synthesize(engine, 200, cfg));
  EXPECT_TRUE(a == b);
  EXPECT_TRUE(a == c);
  cfg.seed = 78;
  EXPECT_FALSE(a == to_table(engine.schema(), synthesize(engine, 200, cfg)));
}

TEST(Sampler, OutputIsLegalUnderEveryMode) {
  const auto engine = Engine::fit(fixture::load("census_mini"));
  for (auto mode : {GuidanceMode::none, GuidanceMode::feature_selector, GuidanceMode::logit_correction}) {
    SamplerConfig cfg;
    cfg.guidance.mode = mode;
    cfg.seed = 5;
    const auto records = synthesize(engine, 300, cfg);
    expect_legal(engine, to_table(engine.schema(), records));
    for (const auto& r : records) {
      std::vector<std::size_t> order = r.order;
      std::sort(order.begin(), order.end());
      for (std::size_t i = 0; i < order.size(); ++i) EXPECT_EQ(order[i], i);
    }
  }
}

TEST(Sampler, SeedPrefixCopiesARealRow) {
  const auto engine = Engine::fit(fixture::load("iris"));
  SamplerConfig cfg;
  cfg.prefix_mode = PrefixMode::seed_k;
  cfg.seed_k = 2;
  const auto records = synthesize(engine, 100, cfg);
  for (const auto& r : records) {
    const auto f0 = r.order[0], f1 = r.order[1];
    EXPECT_TRUE(r.provenance[f0].seeded && r.provenance[f1].seeded);
    bool found = false;
    for (const auto& row : engine.train().rows()) found |= row[f0] == r.values[f0] && row[f1] == r.values[f1];
    EXPECT_TRUE(found);
    std::size_t seeded = 0;
    for (const auto& p : r.provenance) seeded += p.seeded;
    EXPECT_EQ(seeded, 2u);
  }
  cfg.seed_k = 5;
  EXPECT_THROW(synthesize(engine, 1, cfg), Error);
}

TEST(Sampler, MarginalsOfIndependentTableAreReproduced) {
  std::mt19937_64 rng(42);
  std::vector<Record> rows;
  const double weights[3][4] = {{0.5, 0.3, 0.2, 0.0}, {0.25, 0.25, 0.25, 0.25}, {0.7, 0.1, 0.1, 0.1}};
  for (int i = 0; i < 1000; ++i) {
    Record r;
    for (int f = 0; f < 3; ++f) {
      double u = uniform01(rng);
      int v = 0;
      while (v < 3 && u >= weights[f][v]) u -= weights[f][v++];
      r.push_back("v" + std::to_string(v));
    }
    rows.push_back(r);
  }
  const auto engine = Engine::fit(Table(FeatureSchema({fixture::cat("a"), fixture::cat("b"), fixture::cat("c")}), rows));
  SamplerConfig cfg;
  cfg.seed = 9;
  const auto syn = to_table(engine.schema(), synthesize(engine, 1000, cfg));
  for (std::size_t f = 0; f < 3; ++f) {
    std::map<std::string, double> p, q;
    for (const auto& r : engine.train().rows()) p[as_text(r[f])] += 1.0 / 1000;
    for (const auto& r : syn.rows()) q[as_text(r[f])] += 1.0 / 1000;
    EXPECT_LT(oracle::total_variation(p, q), 0.15) << "feature " << f;
  }
}

TEST(Sampler, RogueBackendFallsBackToLegalValues) {
  auto engine = Engine::fit(fixture::load("census_mini"));
  engine.set_backend(std::make_shared<RogueBackend>(engine.layout(), ErrorKind::no_legal_candidate));
  SamplerConfig cfg;
  cfg.max_attempts = 3;
  const auto records = synthesize(engine, 50, cfg);
  expect_legal(engine, to_table(engine.schema(), records));
  for (const auto& r : records) {
    for (std::size_t f = 0; f < engine.schema().size(); ++f) {
      const bool numerical = engine.schema()[f].kind == FeatureKind::numerical;
      EXPECT_EQ(r.provenance[f].forced, !numerical);
      EXPECT_EQ(r.provenance[f].attempts, numerical ? 1 : 3);
      if (!numerical) EXPECT_EQ(engine.layout().assign(f, r.values[f]), engine.mode_pseudo(f));
    }
  }
}

TEST(Sampler, UnavailableBackendPropagates) {
  auto engine = Engine::fit(fixture::load("iris"));
  engine.set_backend(std::make_shared<RogueBackend>(engine.layout(), ErrorKind::backend_unavailable));
  EXPECT_EQ(kind_of([&] { synthesize(engine, 3, SamplerConfig{}); }), ErrorKind::backend_unavailable);
  engine.set_backend(nullptr);
  EXPECT_EQ(engine.backend().name(), "builtin");
}

TEST(Sampler, ConfigValidation) {
  const auto engine = Engine::fit(fixture::load("iris"));
  SamplerConfig cfg;
  cfg.nucleus_p = 0.0;
  EXPECT_THROW(synthesize(engine, 1, cfg), Error);
  cfg = {};
  cfg.temperature = 0.0;
  EXPECT_THROW(synthesize(engine, 1, cfg), Error);
  EXPECT_THROW(synthesize(engine, 0, SamplerConfig{}), Error);
}

TEST(Nucleus, DominantCandidateIsASingletonNucleus) {
  const double rest = std::log(0.01 / 3);
  const auto d = dist_of({0.0, 1.0, 2.0, 3.0}, {rest, std::log(0.99), rest, rest});
  EXPECT_EQ(nucleus_indices(d, 0.9, 1.0), (std::vector<std::size_t>{1}));
  std::mt19937_64 rng(8);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(nucleus_sample(d, 0.9, 1.0, rng), 1u);
  EXPECT_EQ(nucleus_indices(d, 1.0, 1.0).size(), 4u);
}

TEST(Constrain, BuiltinDistributionIsUnchanged) {
  const auto engine = Engine::fit(fixture::load("census_mini"));
  for (std::size_t f = 0; f < engine.schema().size(); ++f) {
    const auto d = engine.builtin().score({}, engine.schema()[f].name);
    const auto c = constrain(d, engine.layout(), f);
    EXPECT_EQ(c.candidates, d.candidates) << f;
    EXPECT_EQ(c.logits, d.logits) << f;
  }
}

TEST(Sampler, PromptOnlyIrisRecordsAreComplete) {
  const auto [train, test] = split(fixture::load("iris"), 0.8, 0);
  const auto engine = Engine::fit(train);
  std::set<std::string> labels;
  const auto species = engine.schema().index_of("species");
  for (const auto& r : train.rows()) labels.insert(as_text(r[species]));
  const auto records = synthesize(engine, train.size(), SamplerConfig{});
  ASSERT_EQ(records.size(), 120u);
  for (const auto& rec : records) {
    ASSERT_EQ(rec.values.size(), 5u);
    EXPECT_TRUE(labels.contains(as_text(rec.values[species])));
  }
}
