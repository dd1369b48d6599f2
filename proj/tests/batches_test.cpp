#include <gtest/gtest.h>

#include <map>

#include "protodiff/batches.hpp"
#include "protodiff/image.hpp"
#include "test_support.hpp"

using namespace protodiff;
using testing_support::TempDir;

namespace {

DatasetManifest make_manifest(const TempDir& dir, std::size_t n0, std::size_t n1) {
  std::vector<ManifestRecord> records;
  write_png(dir / "img.png", GrayImage(2, 2));
  for (std::size_t i = 0; i < n0 + n1; ++i) {
    const std::string name = "r" + std::to_string(i) + ".png";
    std::filesystem::copy_file(dir / "img.png", dir / name);
    records.push_back({name, i < n0 ? 0 : 1, Split::Train});
  }
  write_manifest(dir / "m.csv", records);
  return load_manifest(dir / "m.csv");
}

}  // namespace

TEST(Batches, TenTenWithMFiveGivesTwoBalancedBatches) {
  TempDir dir;
  const auto m = make_manifest(dir, 10, 10);
  const auto batches = balanced_batches(m, Split::Train, {5, 3}, 0);
  ASSERT_EQ(batches.size(), 2u);
  std::map<std::size_t, int> seen;
  for (const auto& b : batches) {
    ASSERT_EQ(b.records.size(), 10u);
    for (std::size_t i = 0; i < 10; ++i) {
      EXPECT_EQ(b.labels[i], i < 5 ? 0 : 1);
      EXPECT_EQ(m.records[b.records[i]].label, b.labels[i]);
      ++seen[b.records[i]];
    }
  }
  EXPECT_EQ(seen.size(), 20u);
}

TEST(Batches, MinorityIsReusedWhenImbalanced) {
  TempDir dir;
  const auto m = make_manifest(dir, 100, 10);
  const auto batches = balanced_batches(m, Split::Train, {5, 9}, 4);
  ASSERT_EQ(batches.size(), 20u);
  std::map<std::size_t, int> majority, minority;
  for (const auto& b : batches) {
    for (std::size_t i = 0; i < 5; ++i) ++majority[b.records[i]];
    for (std::size_t i = 5; i < 10; ++i) ++minority[b.records[i]];
  }
  // 100 majority draws each used once; 100 minority draws over 10 records.
  EXPECT_EQ(majority.size(), 100u);
  for (auto& [id, n] : majority) EXPECT_EQ(n, 1);
  ASSERT_EQ(minority.size(), 10u);
  for (auto& [id, n] : minority) EXPECT_EQ(n, 10) << "record " << id;
}

TEST(Batches, SameSeedSameSequenceDifferentEpochDiffers) {
  TempDir dir;
  const auto m = make_manifest(dir, 12, 8);
  const auto a = balanced_batches(m, Split::Train, {4, 11}, 2);
  const auto b = balanced_batches(m, Split::Train, {4, 11}, 2);
  const auto c = balanced_batches(m, Split::Train, {4, 11}, 3);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].records, b[i].records);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs |= a[i].records != c[i].records;
  EXPECT_TRUE(differs);
}

TEST(Batches, ClassSmallerThanMRejected) {
  TempDir dir;
  const auto m = make_manifest(dir, 10, 3);
  EXPECT_THROW(balanced_batches(m, Split::Train, {5, 0}, 0), std::invalid_argument);
  EXPECT_THROW(balanced_batches(m, Split::Train, {0, 0}, 0), std::invalid_argument);
}
