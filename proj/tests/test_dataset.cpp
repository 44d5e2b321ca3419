#include <gtest/gtest.h>

#include <set>

#include "fixtures.hpp"

using namespace sage;

namespace {

FeatureSchema small_schema() {
  return FeatureSchema({fixture::num("age"), fixture::cat("income")}, "income", Task::classification);
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

}  // namespace

TEST(Dataset, LoadsIris) {
  const auto iris = fixture::load("iris");
  EXPECT_EQ(iris.size(), 150u);
  EXPECT_EQ(iris.schema().size(), 5u);
  EXPECT_EQ(iris.schema().target(), std::optional<std::string>("species"));
  EXPECT_EQ(iris.schema().task(), Task::classification);
}

TEST(Dataset, HeaderOrderDoesNotMatter) {
  const auto t = parse_table("income,age\n<=50K,39\n>50K,52.5\n", small_schema());
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(as_number(t.row(1)[0]), 52.5);
  EXPECT_EQ(as_text(t.row(1)[1]), ">50K");
}

TEST(Dataset, NonNumericCellIsTypeMismatch) {
  EXPECT_EQ(kind_of([] { parse_table("age,income\nforty,<=50K\n", small_schema()); }), ErrorKind::type_mismatch);
}

TEST(Dataset, MissingCellIsTypeMismatch) {
  EXPECT_EQ(kind_of([] { parse_table("age,income\n,<=50K\n", small_schema()); }), ErrorKind::type_mismatch);
}

TEST(Dataset, HeaderOnlyIsEmptyTable) {
  EXPECT_EQ(kind_of([] { parse_table("age,income\n", small_schema()); }), ErrorKind::empty_table);
  EXPECT_EQ(kind_of([] { parse_table("", small_schema()); }), ErrorKind::empty_table);
}

TEST(Dataset, AbsentColumnIsMissingColumn) {
  EXPECT_EQ(kind_of([] { parse_table("age\n39\n", small_schema()); }), ErrorKind::missing_column);
}

TEST(Dataset, SchemaRejectsNumericalClassificationTarget) {
  EXPECT_EQ(kind_of([] { FeatureSchema({fixture::num("y")}, "y", Task::classification); }),
            ErrorKind::invalid_schema);
  EXPECT_EQ(kind_of([] { FeatureSchema({fixture::num("y"), fixture::num("y")}); }), ErrorKind::invalid_schema);
}

TEST(Dataset, CsvHandlesQuotesCrlfAndBom) {
  const auto cells = csv::parse("\xEF\xBB\xBFname,note\r\n\"a,b\",\"say \"\"hi\"\"\"\r\n");
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_EQ(cells[0][0], "name");
  EXPECT_EQ(cells[1][0], "a,b");
  EXPECT_EQ(cells[1][1], "say \"hi\"");
}

TEST(Dataset, SplitSizes) {
  const auto iris = fixture::load("iris");
  const auto [train, test] = split(iris, 0.8, 7);
  EXPECT_EQ(train.size(), 120u);
  EXPECT_EQ(test.size(), 30u);
}

TEST(Dataset, SplitIsDeterministicAndDisjoint) {
  const auto iris = fixture::load("iris");
  const auto [a1, b1] = split(iris, 0.8, 11);
  const auto [a2, b2] = split(iris, 0.8, 11);
  EXPECT_TRUE(a1 == a2);
  EXPECT_TRUE(b1 == b2);
  // train + test is a permutation of the input rows
  std::multiset<std::string> all, parts;
  for (const auto& r : iris.rows()) all.insert(format_value(r[0]) + format_value(r[1]) + format_value(r[2]) + format_value(r[3]) + as_text(r[4]));
  for (const auto* t : {&a1, &b1}) {
    for (const auto& r : t->rows()) parts.insert(format_value(r[0]) + format_value(r[1]) + format_value(r[2]) + format_value(r[3]) + as_text(r[4]));
  }
  EXPECT_EQ(all, parts);
}

TEST(Dataset, SplitVariesWithSeed) {
  const auto iris = fixture::load("iris");
  std::set<std::string> partitions;
  for (std::uint64_t seed = 0; seed < 100; ++seed) partitions.insert(to_csv(split(iris, 0.8, seed).second));
  EXPECT_GE(partitions.size(), 2u);
}

TEST(Dataset, SplitRejectsBadFraction) {
  const auto iris = fixture::load("iris");
  EXPECT_EQ(kind_of([&] { split(iris, 0.0, 1); }), ErrorKind::invalid_argument);
  EXPECT_EQ(kind_of([&] { split(iris, 1.0, 1); }), ErrorKind::invalid_argument);
}

TEST(Dataset, CsvRoundTripProperty) {
  std::mt19937_64 rng(99);
  const std::vector<std::string> words = {"plain", "with,comma", "with \"quote\"", "line\nbreak", "semi;colon"};
  const FeatureSchema schema({fixture::num("x"), fixture::cat("w")});
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Record> rows;
    const auto n = 1 + uniform_index(rng, 20);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = (uniform01(rng) - 0.5) * std::pow(10.0, static_cast<double>(uniform_index(rng, 12)) - 4.0);
      rows.push_back({x, words[uniform_index(rng, words.size())]});
    }
    const Table t(schema, rows);
    const auto back = parse_table(to_csv(t), schema);
    EXPECT_TRUE(back == t) << to_csv(t);
  }
}

TEST(Dataset, TenRowSplitPartitionsVaryAcrossSeeds) {
  std::vector<Record> rows;
  for (int i = 0; i < 10; ++i) rows.push_back({static_cast<double>(i)});
  const Table t(FeatureSchema({fixture::num("x")}), rows);
  std::set<std::vector<double>> partitions;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto [train, test] = split(t, 0.8, seed);
    ASSERT_EQ(train.size(), 8u);
    std::vector<double> held;
    for (const auto& r : test.rows()) held.push_back(as_number(r[0]));
    std::sort(held.begin(), held.end());
    partitions.insert(held);
  }
  EXPECT_GE(partitions.size(), 2u);
}
