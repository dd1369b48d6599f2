#include <gtest/gtest.h>

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>

#include "oracles.hpp"
#include "protodiff/objectives.hpp"
#include "toy_model.hpp"

using namespace protodiff;

namespace {

torch::Tensor rows(std::initializer_list<std::initializer_list<double>> values) {
  std::vector<torch::Tensor> out;
  for (auto r : values) out.push_back(torch::tensor(std::vector<double>(r), torch::kFloat64));
  return torch::stack(out);
}

std::vector<std::vector<double>> to_rows(const torch::Tensor& t) {
  std::vector<std::vector<double>> out;
  const auto c = t.to(torch::kFloat64).contiguous();
  for (std::int64_t i = 0; i < c.size(0); ++i) {
    out.emplace_back(c[i].data_ptr<double>(), c[i].data_ptr<double>() + c.size(1));
  }
  return out;
}

}  // namespace

TEST(DiffusionLoss, PerfectPredictorGivesZero) {
  const auto s = NoiseSchedule::linear(100, 1e-3, 0.05);
  const auto x0 = torch::rand({4, 1, 4, 4});
  const auto noise = torch::randn({4, 1, 4, 4});
  NoisePredictor perfect = [&](const torch::Tensor&, const torch::Tensor&, const torch::Tensor&) { return noise; };
  const auto l = diffusion_loss(perfect, x0, torch::tensor({1, 2, 3, 4}, torch::kLong), noise, torch::zeros({4, 2}), s);
  EXPECT_EQ(l.item<double>(), 0.0);
}

TEST(DiffusionLoss, ZeroPredictorGivesUnitMeanSquare) {
  const auto s = NoiseSchedule::linear(100, 1e-3, 0.05);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(5);
  const auto noise = torch::randn({10000, 1, 1, 1}, gen, torch::TensorOptions().dtype(torch::kFloat64));
  NoisePredictor zero = [](const torch::Tensor& x, const torch::Tensor&, const torch::Tensor&) {
    return torch::zeros_like(x);
  };
  const auto t = torch::full({10000}, 50, torch::kLong);
  const auto l = diffusion_loss(zero, torch::zeros_like(noise), t, noise, torch::zeros({10000, 1}), s);
  EXPECT_NEAR(l.item<double>(), 1.0, 0.05);
}

TEST(ContrastiveLoss, SeparatedLimitHandValue) {
  const auto pos = rows({{1, 0}, {1, 0}});
  const auto neg = rows({{0, 1}, {0, 1}});
  const double per_anchor = -std::log(std::exp(10.0) / (std::exp(10.0) + 2.0));
  const auto l = contrastive_loss(pos, neg, 0.1).item<double>();
  EXPECT_NEAR(l, per_anchor, 1e-12);
  const auto oracle_value = oracle::contrastive(to_rows(torch::cat({pos, neg})), {0, 0, 1, 1}, 0.1);
  EXPECT_NEAR(l, static_cast<double>(oracle_value), 1e-12);
}

TEST(ContrastiveLoss, MatchesBruteForceOnRandomBatches) {
  torch::manual_seed(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int m = 2 + trial % 5;
    const auto pos = torch::randn({m, 6}, torch::kFloat64);
    const auto neg = torch::randn({m, 6}, torch::kFloat64);
    std::vector<int> labels(2 * m, 0);
    std::fill(labels.begin() + m, labels.end(), 1);
    for (double tau : {0.1, 0.5, 2.0}) {
      const auto expect = oracle::contrastive(to_rows(torch::cat({pos, neg})), labels, tau);
      EXPECT_NEAR(contrastive_loss(pos, neg, tau).item<double>(), static_cast<double>(expect), 1e-10);
    }
  }
}

TEST(ContrastiveLoss, MovingPartnerCloserLowersLoss) {
  auto pos = rows({{1, 0, 0}, {0.2, 1, 0.3}});
  const auto neg = rows({{0, 0, 1}, {-0.3, 0.2, 1}});
  const double before = contrastive_loss(pos, neg, 0.5).item<double>();
  auto closer = pos.clone();
  closer[1] = 0.5 * pos[1] + 0.5 * pos[0];
  ASSERT_GT(oracle::cosine(std::vector<float>{1, 0, 0}.data(), std::vector<float>{0.6f, 0.5f, 0.15f}.data(), 3),
            oracle::cosine(std::vector<float>{1, 0, 0}.data(), std::vector<float>{0.2f, 1, 0.3f}.data(), 3));
  EXPECT_LT(contrastive_loss(closer, neg, 0.5).item<double>(), before);
}

TEST(ContrastiveLoss, ScaleInvariant) {
  torch::manual_seed(3);
  const auto pos = torch::randn({4, 5}, torch::kFloat64);
  const auto neg = torch::randn({4, 5}, torch::kFloat64);
  EXPECT_NEAR(contrastive_loss(pos, neg, 0.5).item<double>(), contrastive_loss(3 * pos, 3 * neg, 0.5).item<double>(),
              1e-12);
}

TEST(ContrastiveLoss, RejectsDegenerateInput) {
  const auto ok = torch::randn({3, 4});
  EXPECT_THROW(contrastive_loss(torch::randn({1, 4}), torch::randn({1, 4}), 0.5), std::invalid_argument);
  EXPECT_THROW(contrastive_loss(ok, torch::randn({2, 4}), 0.5), std::invalid_argument);
  EXPECT_THROW(contrastive_loss(ok, ok, 0.0), std::invalid_argument);
  EXPECT_THROW(contrastive_loss(torch::zeros({3, 4}), ok, 0.5), std::invalid_argument);
}

TEST(ContrastiveLoss, LargeLogitsStayFinite) {
  const auto pos = rows({{1, 0}, {1, 1e-3}});
  const auto neg = rows({{-1, 0}, {-1, 1e-3}});
  const auto l = contrastive_loss(pos, neg, 1e-3);
  EXPECT_TRUE(std::isfinite(l.item<double>()));
}

TEST(SoftVote, AllNeighboursOneClass) {
  const auto z = rows({{1, 0}, {1, 0.1}, {1, 0.2}, {1, -0.1}});
  const auto labels = torch::tensor({1, 1, 1, 1}, torch::kLong);
  const auto p = batch_soft_probabilities(z, labels, 3, 0.1);
  for (int i = 0; i < 4; ++i) {
    EXPECT_EQ(p[i][0].item<double>(), 0.0);
    EXPECT_NEAR(p[i][1].item<double>(), 1.0, 1e-15);
  }
}

TEST(SoftVote, HandEvaluatedSoftmax) {
  // Row 0 sees cosines 1.0 (label 1), 0.5 (label 1) and 0.0 (label 0).
  const double c = 0.5, s = std::sqrt(0.75);
  const auto z = rows({{1, 0}, {1, 0}, {c, s}, {0, 1}});
  const auto labels = torch::tensor({0, 1, 1, 0}, torch::kLong);
  const auto p = batch_soft_probabilities(z, labels, 3, 1.0);
  const double e = std::exp(1.0), h = std::exp(0.5);
  EXPECT_NEAR(p[0][1].item<double>(), (e + h) / (e + h + 1.0), 1e-12);
}

TEST(SoftVote, TieGivesHalf) {
  const auto z = rows({{1, 0}, {0, 1}, {0, -1}});
  const auto labels = torch::tensor({0, 0, 1}, torch::kLong);
  const auto p = batch_soft_probabilities(z, labels, 2, 0.1);
  EXPECT_NEAR(p[0][0].item<double>(), 0.5, 1e-15);
  EXPECT_NEAR(p[0][1].item<double>(), 0.5, 1e-15);
}

TEST(HardVote, SelfExcludedAndMode) {
  const auto z = rows({{1, 0}, {1, 0.05}, {1, 0.1}, {0, 1}, {0.1, 1}});
  const auto labels = torch::tensor({0, 0, 1, 1, 1}, torch::kLong);
  const auto pred = batch_hard_predictions(z, labels, 1);
  EXPECT_EQ(pred[0].item<int>(), 0);  // nearest other row is row 1
  EXPECT_EQ(pred[2].item<int>(), 0);  // row 2 is closest to row 1
  EXPECT_THROW(batch_hard_predictions(z, labels, 5), std::invalid_argument);
}

TEST(PredictionLoss, HandValues) {
  const auto labels = torch::tensor({0, 1}, torch::kLong);
  EXPECT_NEAR(prediction_loss(rows({{1, 0}, {0, 1}}), labels).item<double>(), 0.0, 1e-15);
  EXPECT_NEAR(prediction_loss(rows({{0.5, 0.5}, {0.5, 0.5}}), labels).item<double>(), std::log(2.0), 1e-15);
  EXPECT_NEAR(prediction_loss(rows({{0.9, 0.1}, {0.2, 0.8}}), labels).item<double>(),
              (-std::log(0.9) - std::log(0.8)) / 2, 1e-15);
  EXPECT_NEAR(prediction_loss(rows({{0, 1}}), torch::tensor({0}, torch::kLong)).item<double>(), -std::log(1e-12), 1e-9);
  EXPECT_THROW(prediction_loss(rows({{1.5, -0.5}}), torch::tensor({0}, torch::kLong)), std::invalid_argument);
}

TEST(TotalLoss, SumsAndMasks) {
  const auto a = torch::tensor(1.0), b = torch::tensor(2.0), c = torch::tensor(3.0);
  EXPECT_DOUBLE_EQ(total_loss(a, b, c).item<double>(), 6.0);
  EXPECT_DOUBLE_EQ(total_loss(a, b, c, PhaseMask::warmup()).item<double>(), 1.0);
  EXPECT_DOUBLE_EQ(total_loss(a, b, c, PhaseMask::joint(true)).item<double>(), 5.0);
  const auto zero = torch::tensor(0.0);
  EXPECT_DOUBLE_EQ(total_loss(zero, zero, zero).item<double>(), 0.0);
  EXPECT_DOUBLE_EQ(total_loss(a, b, c, {}, {2.0, 0.5, 1.0}).item<double>(), 6.0);
}

TEST(TotalLoss, NonFiniteActiveTermDiverges) {
  const auto nan = torch::tensor(std::nan(""));
  EXPECT_THROW(total_loss(torch::tensor(1.0), nan, torch::tensor(1.0)), DivergenceError);
  // Masked terms are not inspected.
  EXPECT_NO_THROW(total_loss(torch::tensor(1.0), nan, nan, PhaseMask::warmup()));
}

// Central differences on the 89-parameter toy model.
TEST(Gradients, DiffusionLossMatchesFiniteDifferences) {
  toy::Model model(1);
  ASSERT_LE(model.size(), 100);
  const auto s = NoiseSchedule::linear(50, 1e-3, 0.1);
  const auto x0 = torch::rand({4, 1, 2, 4}, torch::kFloat64);
  const auto noise = torch::randn({4, 1, 2, 4}, torch::kFloat64);
  const auto t = torch::tensor({1, 10, 30, 50}, torch::kLong);
  const auto eps = model.predictor(50);
  const auto r = toy::check_gradients(model, [&] { return diffusion_loss(eps, x0, t, noise, model.encode(x0), s); });
  EXPECT_EQ(r.checked, 89u);
  EXPECT_LT(r.worst_relative, 1e-3);
}

TEST(Gradients, ContrastiveLossMatchesFiniteDifferences) {
  toy::Model model(2);
  const auto x = torch::rand({6, 1, 2, 4}, torch::kFloat64);
  const auto r = toy::check_gradients(model, [&] {
    const auto z = model.encode(x);
    return contrastive_loss(z.slice(0, 0, 3), z.slice(0, 3, 6), 0.5);
  });
  EXPECT_LT(r.worst_relative, 1e-3);
}

TEST(Gradients, SoftPredictionLossMatchesFiniteDifferences) {
  toy::Model model(3);
  const auto x = torch::rand({8, 1, 2, 4}, torch::kFloat64);
  const auto labels = torch::tensor({0, 0, 0, 0, 1, 1, 1, 1}, torch::kLong);
  const auto r = toy::check_gradients(model, [&] {
    return prediction_loss(batch_soft_probabilities(model.encode(x), labels, 3, 0.5), labels);
  });
  EXPECT_LT(r.worst_relative, 1e-3);
}
