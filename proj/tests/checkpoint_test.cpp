#include <gtest/gtest.h>

#include "protodiff/checkpoint.hpp"
#include "protodiff/inference.hpp"
#include "test_support.hpp"

using namespace protodiff;
using testing_support::slurp;
using testing_support::TempDir;

namespace {

Checkpoint sample_checkpoint() {
  Checkpoint ck;
  ck.config = toy_experiment();
  ck.epoch = 12;
  ck.global_step = 3456;
  ck.training_state = {{"best_val_acc", 0.75}};
  ck.put("b/f64", torch::arange(6, torch::kFloat64).view({2, 3}));
  ck.put("a/f32", torch::randn({4}));
  ck.put("c/i64", torch::tensor({1, -2, 3}, torch::kLong));
  ck.put("d/u8", torch::tensor({7, 8}, torch::kUInt8));
  return ck;
}

}  // namespace

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  TempDir dir;
  const auto ck = sample_checkpoint();
  ck.save(dir / "a.pdck");
  const auto back = Checkpoint::load(dir / "a.pdck");
  back.save(dir / "b.pdck");
  EXPECT_EQ(slurp(dir / "a.pdck"), slurp(dir / "b.pdck"));
  EXPECT_EQ(back.epoch, 12);
  EXPECT_EQ(back.global_step, 3456);
  EXPECT_EQ(back.training_state["best_val_acc"], 0.75);
  EXPECT_EQ(back.config.to_json(), ck.config.to_json());
  for (const auto& [name, t] : ck.tensors) {
    ASSERT_TRUE(back.has(name));
    EXPECT_TRUE(torch::equal(back.tensor(name), t)) << name;
    EXPECT_EQ(back.tensor(name).scalar_type(), t.scalar_type());
  }
  EXPECT_FALSE(std::filesystem::exists(dir / "a.pdck.tmp"));
}

TEST(Checkpoint, PutReplacesAndClones) {
  Checkpoint ck;
  auto t = torch::zeros({2});
  ck.put("x", t);
  t.fill_(5);
  EXPECT_EQ(ck.tensor("x").sum().item<double>(), 0.0);
  ck.put("x", torch::ones({3}));
  EXPECT_EQ(ck.tensors.size(), 1u);
  EXPECT_EQ(ck.tensor("x").numel(), 3);
  EXPECT_THROW(ck.tensor("missing"), std::runtime_error);
}

TEST(Checkpoint, RejectsForeignAndTruncatedFiles) {
  TempDir dir;
  testing_support::spit(dir / "junk", "hello world, not a checkpoint");
  EXPECT_THROW(Checkpoint::load(dir / "junk"), std::runtime_error);
  sample_checkpoint().save(dir / "ok.pdck");
  auto bytes = slurp(dir / "ok.pdck");
  testing_support::spit(dir / "cut.pdck", bytes.substr(0, bytes.size() - 5));
  EXPECT_THROW(Checkpoint::load(dir / "cut.pdck"), std::runtime_error);
  EXPECT_THROW(Checkpoint::load(dir / "absent.pdck"), std::runtime_error);
}

TEST(Checkpoint, ModelParametersRestoreExactly) {
  TempDir dir;
  torch::manual_seed(4);
  auto config = toy_experiment();
  DenoiserModel model(config.model_config());
  Checkpoint ck;
  ck.config = config;
  for (auto& [name, p] : model->canonical_parameters()) ck.put("param/" + name, p);
  ck.save(dir / "m.pdck");
  auto loaded = load_model(dir / "m.pdck");
  const auto a = model->canonical_parameters();
  const auto b = loaded.model->canonical_parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].first, b[i].first);
    EXPECT_TRUE(torch::equal(a[i].second, b[i].second)) << a[i].first;
  }
}

TEST(Checkpoint, ShapeMismatchNamesParameter) {
  auto config = toy_experiment();
  DenoiserModel model(config.model_config());
  Checkpoint ck;
  for (auto& [name, p] : model->canonical_parameters()) ck.put("param/" + name, p);
  ck.put("param/unet.head.bias", torch::zeros({2}));
  try {
    load_parameters(model, ck);
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find("unet.head.bias"), std::string::npos);
  }
}
