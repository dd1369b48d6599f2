#include <gtest/gtest.h>

#include "protodiff/image.hpp"
#include "protodiff/manifest.hpp"
#include "test_support.hpp"

using namespace protodiff;
using testing_support::spit;
using testing_support::TempDir;

namespace {

void touch_images(const TempDir& dir, std::initializer_list<const char*> names) {
  for (auto n : names) write_png(dir / n, GrayImage(4, 4, 0.5f));
}

std::string error_of(const std::filesystem::path& p) {
  try {
    load_manifest(p);
  } catch (const ManifestError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Manifest, FourRowsCountsMatchTally) {
  TempDir dir;
  touch_images(dir, {"a.png", "b.png", "c.png", "d.png"});
  spit(dir / "m.csv", "path,label,split\na.png,0,train\nb.png,1,train\nc.png,1,val\nd.png,0,test\n");
  const auto m = load_manifest(dir / "m.csv");
  ASSERT_EQ(m.records.size(), 4u);
  const auto counts = m.class_counts();
  EXPECT_EQ(counts[0][0], 1u);
  EXPECT_EQ(counts[0][1], 1u);
  EXPECT_EQ(counts[1][1], 1u);
  EXPECT_EQ(counts[2][0], 1u);
  EXPECT_EQ(m.indices(Split::Train).size(), 2u);
  EXPECT_EQ(m.indices(Split::Train, 1), std::vector<std::size_t>{1});
  EXPECT_EQ(m.resolve(m.records[0]), dir / "a.png");
}

TEST(Manifest, BadLabelNamesTheLine) {
  TempDir dir;
  touch_images(dir, {"a.png", "b.png"});
  spit(dir / "m.csv", "path,label,split\na.png,0,train\nb.png,2,train\n");
  const auto msg = error_of(dir / "m.csv");
  EXPECT_NE(msg.find("m.csv:3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("label"), std::string::npos) << msg;
}

TEST(Manifest, PathInTwoSplitsIsLeakage) {
  TempDir dir;
  touch_images(dir, {"a.png"});
  spit(dir / "m.csv", "path,label,split\na.png,0,train\na.png,0,test\n");
  EXPECT_NE(error_of(dir / "m.csv").find("split leakage"), std::string::npos);
}

TEST(Manifest, DuplicateInOneSplitRejected) {
  TempDir dir;
  touch_images(dir, {"a.png"});
  spit(dir / "m.csv", "path,label,split\na.png,0,train\na.png,0,train\n");
  EXPECT_NE(error_of(dir / "m.csv").find("duplicate path"), std::string::npos);
}

TEST(Manifest, DanglingPathRejected) {
  TempDir dir;
  spit(dir / "m.csv", "path,label,split\nmissing.png,0,train\n");
  EXPECT_NE(error_of(dir / "m.csv").find("dangling"), std::string::npos);
}

TEST(Manifest, HeaderAndSplitValidated) {
  TempDir dir;
  touch_images(dir, {"a.png"});
  spit(dir / "h.csv", "file,class,split\na.png,0,train\n");
  EXPECT_NE(error_of(dir / "h.csv").find("header"), std::string::npos);
  spit(dir / "s.csv", "path,label,split\na.png,0,holdout\n");
  EXPECT_NE(error_of(dir / "s.csv").find("split"), std::string::npos);
  spit(dir / "e.csv", "");
  EXPECT_FALSE(error_of(dir / "e.csv").empty());
  EXPECT_THROW(load_manifest(dir / "absent.csv"), ManifestError);
}

TEST(Manifest, WriteThenLoadRoundTrips) {
  TempDir dir;
  touch_images(dir, {"x.png", "y.png"});
  write_manifest(dir / "m.csv", {{"x.png", 1, Split::Val}, {"y.png", 0, Split::Test}});
  const auto m = load_manifest(dir / "m.csv");
  ASSERT_EQ(m.records.size(), 2u);
  EXPECT_EQ(m.records[0].label, 1);
  EXPECT_EQ(m.records[0].split, Split::Val);
  EXPECT_EQ(m.records[1].split, Split::Test);
}

TEST(Manifest, SplitNamesRoundTrip) {
  for (auto s : {Split::Train, Split::Val, Split::Test}) EXPECT_EQ(parse_split(to_string(s)), s);
  EXPECT_FALSE(parse_split("training").has_value());
}
