#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "protodiff/latent_table.hpp"
#include "test_support.hpp"

using namespace protodiff;
using testing_support::TempDir;

namespace {

LatentTable random_table(std::size_t n, std::size_t d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  LatentTable t;
  t.dim = d;
  const auto values = oracle::gaussian_rows(n, d, rng);
  for (std::size_t i = 0; i < n; ++i) {
    t.add({"r" + std::to_string(i), static_cast<int>(i % 2),
           std::vector<float>(values.begin() + i * d, values.begin() + (i + 1) * d)});
  }
  return t;
}

}  // namespace

TEST(LatentTable, TenRowsPlusHeaderAndColumnCount) {
  TempDir dir;
  const auto t = random_table(10, 5, 1);
  t.write_csv(dir / "z.csv");
  std::ifstream in(dir / "z.csv");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) {
    ++lines;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 5 + 1);  // d + 2 columns
    if (lines == 1) {
      EXPECT_EQ(line, "ref,label,z0,z1,z2,z3,z4");
    }
  }
  EXPECT_EQ(lines, 11u);
}

TEST(LatentTable, CsvRoundTripIsExactAndDeterministic) {
  TempDir dir;
  const auto t = random_table(20, 7, 2);
  t.write_csv(dir / "a.csv");
  t.write_csv(dir / "b.csv");
  EXPECT_EQ(testing_support::slurp(dir / "a.csv"), testing_support::slurp(dir / "b.csv"));
  const auto back = LatentTable::read_csv(dir / "a.csv");
  ASSERT_EQ(back.rows.size(), t.rows.size());
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    EXPECT_EQ(back.rows[i].ref, t.rows[i].ref);
    EXPECT_EQ(back.rows[i].label, t.rows[i].label);
    EXPECT_EQ(back.rows[i].values, t.rows[i].values);
  }
}

TEST(LatentTable, RejectsBadRows) {
  LatentTable t;
  t.dim = 2;
  EXPECT_THROW(t.add({"a", 0, {1.0f}}), std::invalid_argument);
  TempDir dir;
  testing_support::spit(dir / "bad.csv", "ref,label,z0\na,0,1,2\n");
  EXPECT_THROW(LatentTable::read_csv(dir / "bad.csv"), std::runtime_error);
}

TEST(Separation, OneHotClassesGiveUnitMargin) {
  LatentTable t;
  t.dim = 2;
  for (int i = 0; i < 3; ++i) t.add({"a" + std::to_string(i), 0, {1, 0}});
  for (int i = 0; i < 3; ++i) t.add({"b" + std::to_string(i), 1, {0, 1}});
  const auto s = separation_stats(t);
  EXPECT_DOUBLE_EQ(s.intra, 1.0);
  EXPECT_DOUBLE_EQ(s.inter, 0.0);
  EXPECT_DOUBLE_EQ(s.margin, 1.0);
  EXPECT_EQ(s.intra_pairs, 6u);
  EXPECT_EQ(s.inter_pairs, 9u);
}

TEST(Separation, IdenticalLatentsGiveZeroMargin) {
  LatentTable t;
  t.dim = 3;
  for (int i = 0; i < 6; ++i) t.add({"r" + std::to_string(i), i % 2, {0.2f, -1.0f, 3.0f}});
  const auto s = separation_stats(t);
  EXPECT_NEAR(s.intra, 1.0, 1e-12);
  EXPECT_NEAR(s.inter, 1.0, 1e-12);
  EXPECT_NEAR(s.margin, 0.0, 1e-12);
}

TEST(Separation, MatchesDoubleLoopOracle) {
  const auto t = random_table(100, 6, 9);
  std::vector<std::vector<float>> rows;
  std::vector<int> labels;
  for (const auto& r : t.rows) {
    rows.push_back(r.values);
    labels.push_back(r.label);
  }
  const auto o = oracle::separation(rows, labels);
  const auto s = separation_stats(t);
  EXPECT_NEAR(s.intra, static_cast<double>(o.intra), 1e-10);
  EXPECT_NEAR(s.inter, static_cast<double>(o.inter), 1e-10);
  EXPECT_NEAR(s.margin, static_cast<double>(o.intra - o.inter), 1e-10);
}

TEST(Separation, NeedsTwoRowsPerClass) {
  LatentTable t;
  t.dim = 1;
  t.add({"a", 0, {1}});
  t.add({"b", 0, {1}});
  t.add({"c", 1, {1}});
  EXPECT_THROW(separation_stats(t), std::invalid_argument);
}
