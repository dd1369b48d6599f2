#include <gtest/gtest.h>

#include <random>

#include "json.hpp"
#include "oracles.hpp"
#include "protodiff/explainer.hpp"
#include "test_support.hpp"

using namespace protodiff;
using testing_support::TempDir;

namespace {

GrayImage tile(float v) { return GrayImage(8, 8, v); }

ImageResolver constant_resolver() {
  return [](const std::string& ref) { return tile(static_cast<float>(ref.size() % 5) / 5.0f); };
}

}  // namespace

TEST(DifferenceMap, IdenticalImagesGiveZeros) {
  const auto d = difference_map(tile(0.3f), tile(0.3f));
  for (float v : d.pixels) EXPECT_EQ(v, 0.0f);
}

TEST(DifferenceMap, OnesMinusZerosSaturates) {
  const auto d = difference_map(tile(1.0f), tile(0.0f));
  for (float v : d.pixels) EXPECT_EQ(v, 1.0f);
  for (float v : render_difference(d).pixels) EXPECT_EQ(v, 1.0f);
}

TEST(DifferenceMap, BlockChangeIsLocalized) {
  GrayImage a = tile(0.2f), b = tile(0.2f);
  for (int y = 2; y < 6; ++y)
    for (int x = 1; x < 5; ++x) a.at(x, y) = 0.7f;
  const auto d = difference_map(a, b);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) {
      const bool inside = y >= 2 && y < 6 && x >= 1 && x < 5;
      EXPECT_NEAR(d.at(x, y), inside ? 0.5f : 0.0f, 1e-6);
    }
}

TEST(DifferenceMap, ShapeMismatchRejected) {
  EXPECT_THROW(difference_map(GrayImage(4, 4), GrayImage(4, 5)), std::invalid_argument);
}

TEST(Explain, ProbeEqualToTrainingLatentRanksItFirst) {
  PrototypeIndex idx({1, 0, 0, 1, 1, 1}, 2, {0, 1, 1}, {"a", "bb", "ccc"});
  const std::vector<float> z{0, 1};
  const auto r = explain(z, tile(0.5f), idx, 1, constant_resolver());
  ASSERT_EQ(r.prototypes.size(), 1u);
  EXPECT_EQ(r.prototypes[0].id, 1u);
  EXPECT_EQ(r.prototypes[0].image_ref, "bb");
  EXPECT_NEAR(r.prototypes[0].similarity, 1.0, 1e-12);
  EXPECT_EQ(r.predicted_label, 1);
}

TEST(Explain, KEqualToIndexSizeReturnsAllSorted) {
  PrototypeIndex idx({1, 0, 0, 1, 1, 1}, 2, {0, 1, 1}, {"a", "b", "c"});
  const auto r = explain(std::vector<float>{1.0f, 0.1f}, tile(0.5f), idx, 3, constant_resolver());
  ASSERT_EQ(r.prototypes.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(r.prototypes[i].rank, i + 1);
  EXPECT_GE(r.prototypes[0].similarity, r.prototypes[1].similarity);
  EXPECT_GE(r.prototypes[1].similarity, r.prototypes[2].similarity);
  EXPECT_THROW(explain(std::vector<float>{1, 0}, tile(0.5f), idx, 4, constant_resolver()), std::invalid_argument);
}

TEST(Explain, TopThreeMatchBruteForce) {
  std::mt19937_64 rng(4);
  const auto raw = oracle::gaussian_rows(200, 8, rng);
  std::vector<int> labels(200);
  std::vector<std::string> refs(200);
  for (std::size_t i = 0; i < 200; ++i) {
    labels[i] = static_cast<int>(i % 2);
    refs[i] = std::to_string(i);
  }
  PrototypeIndex idx(raw, 8, labels, refs);
  for (int probe = 0; probe < 20; ++probe) {
    const auto q = oracle::gaussian_rows(1, 8, rng);
    const auto ranked = oracle::rank_all(raw, 8, q);
    const auto r = explain(q, tile(0.5f), idx, 3, constant_resolver(), 7);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(r.prototypes[i].id, ranked[i].id);
    std::vector<int> seven;
    for (std::size_t i = 0; i < 7; ++i) seven.push_back(labels[ranked[i].id]);
    EXPECT_EQ(r.predicted_label, oracle::vote(seven));
  }
}

TEST(RenderReport, GridLayoutJsonAndDeterminism) {
  TempDir a, b;
  PrototypeIndex idx({1, 0, 0, 1, 1, 1, 2, 1}, 2, {0, 1, 1, 0}, {"p/a.png", "p/b.png", "p/c.png", "p/d.png"});
  auto r1 = explain(std::vector<float>{0.3f, 1.0f}, tile(0.25f), idx, 3, constant_resolver());
  r1.test_ref = "class1/img_00007.png";
  r1.true_label = 1;
  auto r2 = r1;
  render_report(r1, a.path());
  render_report(r2, b.path());
  EXPECT_EQ(r1.grid_path, a / "class1_img_00007" / "grid.png");

  const auto grid = read_raster(r1.grid_path);
  EXPECT_EQ(grid.width, 5 * 8);
  EXPECT_EQ(grid.height, 8);

  const auto doc = nlohmann::json::parse(testing_support::slurp(r1.json_path));
  ASSERT_EQ(doc["prototypes"].size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(doc["prototypes"][i]["similarity"].get<double>(), r1.prototypes[i].similarity);
  }
  EXPECT_EQ(doc["true_label"], 1);

  EXPECT_EQ(testing_support::slurp(r1.grid_path), testing_support::slurp(r2.grid_path));
  EXPECT_EQ(testing_support::slurp(r1.json_path), testing_support::slurp(r2.json_path));
}

TEST(ReportId, FlattensPaths) {
  EXPECT_EQ(report_id("class0/img_00001.png"), "class0_img_00001");
  EXPECT_EQ(report_id("/abs/dir/x.y.pgm"), "abs_dir_x_y");
}
