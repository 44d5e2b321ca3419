#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "fixtures.hpp"
#include "oracles.hpp"

using namespace sage;

namespace {

MIGraph graph_of(const Table& t, MiOptions opts = {}) { return estimate_mi(t, fit_bins(t), opts); }

// Pseudo id of category `value` of feature f.
PseudoId pid(const BinLayout& layout, std::size_t f, const std::string& value) {
  return layout.assign(f, Value{value});
}

std::vector<int> indicator(const Table& t, std::size_t f, const std::string& value) {
  std::vector<int> out;
  for (const auto& r : t.rows()) out.push_back(as_text(r[f]) == value ? 1 : 0);
  return out;
}

std::vector<std::string> column(const Table& t, std::size_t f) {
  std::vector<std::string> out;
  for (const auto& r : t.rows()) out.push_back(format_value(r[f]));
  return out;
}

Table random_table(std::mt19937_64& rng, std::size_t n, std::size_t features) {
  std::vector<Feature> fs;
  std::vector<std::size_t> arity;
  for (std::size_t f = 0; f < features; ++f) {
    fs.push_back(fixture::cat("f" + std::to_string(f)));
    arity.push_back(2 + uniform_index(rng, 4));
  }
  std::vector<Record> rows(n);
  for (auto& r : rows) {
    const auto shared = uniform_index(rng, 6);
    for (std::size_t f = 0; f < features; ++f) {
      const auto v = uniform01(rng) < 0.4 ? shared % arity[f] : uniform_index(rng, arity[f]);
      r.push_back("v" + std::to_string(v));
    }
  }
  return Table(FeatureSchema(fs), std::move(rows));
}

}  // namespace

TEST(MutualInformation, IdenticalBalancedIndicatorsGiveLn2) {
  const auto t = fixture::binary_table({{0, 1, 0, 1, 0, 1}, {0, 1, 0, 1, 0, 1}});
  const auto layout = fit_bins(t);
  const auto g = estimate_mi(t, layout);
  EXPECT_NEAR(g.mi(pid(layout, 0, "1"), pid(layout, 1, "1")), std::numbers::ln2, 1e-12);
  EXPECT_NEAR(binary_mi(6, 3, 3, 3), std::numbers::ln2, 1e-12);
}

TEST(MutualInformation, IndependentColumnsGiveExactlyZero) {
  // every combination appears equally often
  const auto t = fixture::binary_table({{0, 0, 1, 1, 0, 0, 1, 1}, {0, 1, 0, 1, 0, 1, 0, 1}});
  const auto layout = fit_bins(t);
  const auto g = estimate_mi(t, layout);
  for (PseudoId a = 0; a < layout.pseudo_count(); ++a) {
    for (PseudoId b = 0; b < layout.pseudo_count(); ++b) EXPECT_EQ(g.mi(a, b), 0.0);
  }
  EXPECT_EQ(g.feature_mi(pid(layout, 0, "1"), 1), 0.0);
}

TEST(MutualInformation, SixRowTableMatchesOracle) {
  // contingency [[2,1],[1,2]]
  const std::vector<int> x = {0, 0, 0, 1, 1, 1};
  const std::vector<int> y = {0, 0, 1, 0, 1, 1};
  const auto t = fixture::binary_table({x, y});
  const auto layout = fit_bins(t);
  const auto g = estimate_mi(t, layout);
  const double expected = oracle::mutual_information(x, y);
  EXPECT_NEAR(expected, (2.0 / 3.0) * std::log(4.0 / 3.0) + (1.0 / 3.0) * std::log(2.0 / 3.0), 1e-15);
  EXPECT_NEAR(g.mi(pid(layout, 0, "1"), pid(layout, 1, "1")), expected, 1e-12);
  EXPECT_NEAR(g.feature_mi(pid(layout, 0, "1"), 1), expected, 1e-12);
}

TEST(MutualInformation, TwoByThreeContingencyMatchesOracle) {
  const std::vector<int> x = {0, 0, 0, 0, 1, 1, 1, 1};
  const std::vector<int> y = {0, 0, 1, 2, 1, 2, 2, 2};
  const std::uint64_t counts[6] = {2, 1, 1, 0, 1, 3};
  EXPECT_NEAR(contingency_mi(counts, 2, 3), oracle::mutual_information(x, y), 1e-12);

  const auto t = fixture::binary_table({x, y});
  const auto layout = fit_bins(t);
  const auto g = estimate_mi(t, layout);
  // pseudo-feature x=1 against the whole three-valued feature
  EXPECT_NEAR(g.feature_mi(pid(layout, 0, "1"), 1), oracle::mutual_information(x, y), 1e-12);
  // pseudo-feature y=2 against the indicator x=1
  EXPECT_NEAR(g.mi(pid(layout, 1, "2"), pid(layout, 0, "1")),
              oracle::mutual_information(indicator(t, 1, "2"), indicator(t, 0, "1")), 1e-12);
}

TEST(MutualInformation, ConstantTargetGivesZero) {
  const auto t = fixture::binary_table({{0, 1, 0, 1, 1}, {1, 1, 1, 1, 1}});
  const auto layout = fit_bins(t);
  const auto g = estimate_mi(t, layout);
  EXPECT_EQ(g.feature_mi(pid(layout, 0, "1"), 1), 0.0);
  EXPECT_EQ(g.mu_train(1), 0.0);
}

TEST(MutualInformation, RandomTablesMatchOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto t = random_table(rng, 20 + uniform_index(rng, 200), 3 + uniform_index(rng, 3));
    const auto layout = fit_bins(t);
    const auto g = estimate_mi(t, layout);
    for (PseudoId a = 0; a < layout.pseudo_count(); ++a) {
      const auto fa = layout.feature_of(a);
      const auto ia = indicator(t, fa, as_text(layout.representative(a)));
      for (std::size_t target = 0; target < t.schema().size(); ++target) {
        if (target == fa) continue;
        EXPECT_NEAR(g.feature_mi(a, target), oracle::mutual_information(ia, column(t, target)), 1e-12);
      }
      for (PseudoId b = 0; b < layout.pseudo_count(); ++b) {
        const auto fb = layout.feature_of(b);
        if (fb == fa) {
          EXPECT_EQ(g.mi(a, b), 0.0);
          continue;
        }
        const auto ib = indicator(t, fb, as_text(layout.representative(b)));
        EXPECT_NEAR(g.mi(a, b), oracle::mutual_information(ia, ib), 1e-12);
        EXPECT_EQ(g.mi(a, b), g.mi(b, a));
        EXPECT_LE(g.mi(a, b), std::min(oracle::entropy01(ia), oracle::entropy01(ib)) + 1e-12);
        EXPECT_GE(g.mi(a, b), 0.0);
      }
    }
  }
}

TEST(MutualInformation, MuTrainAndTauMatchOracle) {
  std::mt19937_64 rng(8);
  const auto t = random_table(rng, 150, 4);
  const auto layout = fit_bins(t);
  const auto g = estimate_mi(t, layout);
  std::vector<double> all;
  for (std::size_t target = 0; target < 4; ++target) {
    double sum = 0.0;
    int n = 0;
    for (PseudoId p = 0; p < layout.pseudo_count(); ++p) {
      if (layout.feature_of(p) == target) continue;
      const double v = oracle::mutual_information(
          indicator(t, layout.feature_of(p), as_text(layout.representative(p))), column(t, target));
      sum += v;
      ++n;
      all.push_back(v);
    }
    EXPECT_NEAR(g.mu_train(target), sum / n, 1e-12);
  }
  std::sort(all.begin(), all.end());
  const auto m = all.size();
  const double med = m % 2 ? all[m / 2] : 0.5 * (all[m / 2 - 1] + all[m / 2]);
  EXPECT_NEAR(g.tau(), med, 1e-12);
  EXPECT_EQ(default_tau(g), g.tau());
}

TEST(MutualInformation, PairwiseTauSourceUsesPairwiseMedian) {
  std::mt19937_64 rng(9);
  const auto t = random_table(rng, 120, 3);
  MiOptions opts;
  opts.tau_source = TauSource::pairwise;
  const auto g = graph_of(t, opts);
  EXPECT_NEAR(g.tau(), median(g.pairwise_mi_values()), 1e-15);
}

TEST(MutualInformation, MaxOverBinsMode) {
  std::mt19937_64 rng(10);
  const auto t = random_table(rng, 120, 3);
  MiOptions opts;
  opts.feature_mi = FeatureMiMode::max_over_bins;
  const auto layout = fit_bins(t);
  const auto g = estimate_mi(t, layout, opts);
  for (PseudoId p = 0; p < layout.pseudo_count(); ++p) {
    for (std::size_t target = 0; target < 3; ++target) {
      if (layout.feature_of(p) == target) continue;
      double best = 0.0;
      for (std::size_t j = 0; j < layout.bin_count(target); ++j) best = std::max(best, g.mi(p, layout.id(target, j)));
      EXPECT_EQ(g.feature_mi(p, target), best);
    }
  }
}

// Merging target categories cannot increase information about it.
TEST(MutualInformation, CoarseningTargetNeverIncreasesMi) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Record> fine, coarse;
    for (int i = 0; i < 200; ++i) {
      const auto a = uniform_index(rng, 3);
      const auto y = uniform01(rng) < 0.5 ? a + uniform_index(rng, 2) : uniform_index(rng, 4);
      fine.push_back({"a" + std::to_string(a), "y" + std::to_string(y)});
      coarse.push_back({"a" + std::to_string(a), "y" + std::to_string(y / 2)});
    }
    const FeatureSchema schema({fixture::cat("a"), fixture::cat("y")});
    const Table tf(schema, fine), tc(schema, coarse);
    const auto lf = fit_bins(tf), lc = fit_bins(tc);
    const auto gf = estimate_mi(tf, lf), gc = estimate_mi(tc, lc);
    for (const char* v : {"a0", "a1", "a2"}) {
      EXPECT_LE(gc.feature_mi(pid(lc, 0, v), 1), gf.feature_mi(pid(lf, 0, v), 1) + 1e-12);
    }
  }
}

TEST(MutualInformation, RowOrderAndThreadCountDoNotMatter) {
  const auto census = fixture::load("census_mini");
  const auto layout = fit_bins(census);
  const auto base = estimate_mi(census, layout);
  std::vector<std::size_t> idx(census.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(4);
  shuffle(idx, rng);
  const auto permuted = estimate_mi(census.subset(idx), layout);
  MiOptions threaded;
  threaded.threads = 4;
  const auto parallel = estimate_mi(census, layout, threaded);
  for (PseudoId a = 0; a < layout.pseudo_count(); ++a) {
    for (std::size_t t = 0; t < layout.feature_count(); ++t) {
      EXPECT_EQ(base.feature_mi(a, t), permuted.feature_mi(a, t));
      EXPECT_EQ(base.feature_mi(a, t), parallel.feature_mi(a, t));
    }
  }
  EXPECT_EQ(base.tau(), permuted.tau());
}

TEST(MutualInformation, JsonRoundTrip) {
  const auto iris = fixture::load("iris");
  const auto g = graph_of(iris);
  EXPECT_TRUE(MIGraph::from_json(g.to_json()) == g);
}

TEST(MIGraph, MedianConventions) {
  EXPECT_DOUBLE_EQ(median({0.1, 0.2, 0.3}), 0.2);
  EXPECT_DOUBLE_EQ(median({0.3, 0.1}), 0.2);
}

TEST(MIGraph, MeanExamples) {
  const std::vector<double> pair = {0.0, 0.4};
  EXPECT_DOUBLE_EQ(mean(pair), 0.2);
  // x1 and x2 copy a balanced x0: every outside pseudo-feature carries ln 2 about x0
  std::vector<int> x0;
  for (int i = 0; i < 40; ++i) x0.push_back(i % 2);
  const auto t = fixture::binary_table({x0, x0, x0});
  const auto g = graph_of(t);
  for (PseudoId p = 0; p < g.pseudo_count(); ++p) {
    if (g.owner(p) != 0) EXPECT_NEAR(g.feature_mi(p, 0), std::numbers::ln2, 1e-12);
  }
  EXPECT_NEAR(mu_train(g, 0), std::numbers::ln2, 1e-12);
}

TEST(MIGraph, RepeatedEstimationIsIdentical) {
  const auto census = fixture::load("census_mini");
  EXPECT_EQ(graph_of(census), graph_of(census));
}
