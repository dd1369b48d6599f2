#include "protodiff/objectives.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace protodiff {

namespace {

constexpr double kLogFloor = 1e-12;

torch::Tensor unit_rows(const torch::Tensor& z, const char* what) {
  auto norms = z.norm(2, 1, true);
  if (norms.numel() > 0 && norms.min().item<double>() == 0.0) {
    throw std::invalid_argument(std::string(what) + ": zero-norm latent");
  }
  return z / norms;
}

torch::Tensor neg_inf_like(const torch::Tensor& t) {
  return torch::full({}, -std::numeric_limits<double>::infinity(), t.options());
}

}  // namespace

void ContrastConfig::validate() const {
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  if (!(tau_pred > 0.0)) throw std::invalid_argument("tau_pred must be positive");
}

torch::Tensor diffusion_loss(const NoisePredictor& eps, const torch::Tensor& x0, const torch::Tensor& t,
                             const torch::Tensor& noise, const torch::Tensor& z, const NoiseSchedule& schedule) {
  if (x0.size(0) != t.size(0) || x0.size(0) != noise.size(0) || x0.size(0) != z.size(0)) {
    throw std::invalid_argument("diffusion_loss: mismatched batch sizes");
  }
  const auto x_t = q_sample(x0, t, noise, schedule);
  return (eps(x_t, t, z) - noise).pow(2).mean();
}

torch::Tensor contrastive_loss(const torch::Tensor& z_pos, const torch::Tensor& z_neg, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("contrastive_loss: tau must be positive");
  if (z_pos.dim() != 2 || z_neg.dim() != 2 || z_pos.size(1) != z_neg.size(1)) {
    throw std::invalid_argument("contrastive_loss: expected [M,d] matrices of equal width");
  }
  if (z_pos.size(0) < 2 || z_neg.size(0) < 2) throw std::invalid_argument("contrastive_loss: need M >= 2 per class");
  if (z_pos.size(0) != z_neg.size(0)) throw std::invalid_argument("contrastive_loss: classes must both have M rows");

  const auto m = z_pos.size(0);
  const auto u = unit_rows(torch::cat({z_pos, z_neg}, 0), "contrastive_loss");
  const auto logits = torch::matmul(u, u.t()) / tau;

  auto opts = torch::TensorOptions().dtype(torch::kBool);
  const auto labels = torch::cat({torch::zeros({m}, torch::kLong), torch::ones({m}, torch::kLong)});
  const auto same = labels.unsqueeze(0).eq(labels.unsqueeze(1));
  const auto self = torch::eye(2 * m, opts);
  const auto positive = same.logical_and(self.logical_not());

  const auto ninf = neg_inf_like(logits);
  const auto lse_pos = torch::logsumexp(torch::where(positive, logits, ninf), 1);
  const auto lse_all = torch::logsumexp(torch::where(self, ninf, logits), 1);
  return (lse_all - lse_pos).mean();
}

namespace {

std::pair<torch::Tensor, torch::Tensor> batch_neighbours(const torch::Tensor& z, int k) {
  const auto n = z.size(0);
  if (k < 1 || k > n - 1) {
    throw std::invalid_argument("batch neighbour vote: K=" + std::to_string(k) + " outside [1, " +
                                std::to_string(n - 1) + "]");
  }
  const auto u = unit_rows(z, "batch neighbour vote");
  auto sims = torch::matmul(u, u.t());
  sims = torch::where(torch::eye(n, torch::TensorOptions().dtype(torch::kBool)), neg_inf_like(sims), sims);
  auto top = torch::topk(sims, k, 1, true, true);
  return {std::get<0>(top), std::get<1>(top)};
}

}  // namespace

torch::Tensor batch_soft_probabilities(const torch::Tensor& z, const torch::Tensor& labels, int k, double tau_pred) {
  if (!(tau_pred > 0.0)) throw std::invalid_argument("tau_pred must be positive");
  if (labels.numel() != z.size(0)) throw std::invalid_argument("batch_soft_probabilities: label count mismatch");
  auto [values, indices] = batch_neighbours(z, k);
  const auto weights = torch::softmax(values / tau_pred, 1);
  const auto neighbour_labels = labels.to(torch::kLong).index({indices});
  const auto is_one = neighbour_labels.to(weights.scalar_type());
  const auto p1 = (weights * is_one).sum(1);
  const auto p0 = (weights * (1 - is_one)).sum(1);
  return torch::stack({p0, p1}, 1);
}

torch::Tensor batch_hard_predictions(const torch::Tensor& z, const torch::Tensor& labels, int k) {
  torch::NoGradGuard no_grad;
  auto [values, indices] = batch_neighbours(z.detach(), k);
  const auto neighbour_labels = labels.to(torch::kLong).index({indices});
  const auto ones = neighbour_labels.sum(1);
  const auto zeros = k - ones;
  auto pred = (ones > zeros).to(torch::kLong);
  const auto tie = ones.eq(zeros);
  return torch::where(tie, neighbour_labels.select(1, 0), pred);
}

torch::Tensor prediction_loss(const torch::Tensor& probabilities, const torch::Tensor& labels) {
  if (probabilities.dim() != 2 || probabilities.size(1) != 2 || probabilities.size(0) != labels.numel()) {
    throw std::invalid_argument("prediction_loss: expected [N,2] probabilities and N labels");
  }
  // Softmax sums may overshoot 1 by a few ulps.
  constexpr double slack = 1e-5;
  if (probabilities.numel() > 0 &&
      (probabilities.min().item<double>() < -slack || probabilities.max().item<double>() > 1.0 + slack)) {
    throw std::invalid_argument("prediction_loss: probability outside [0, 1]");
  }
  const auto picked = probabilities.gather(1, labels.to(torch::kLong).view({-1, 1})).squeeze(1);
  return -picked.clamp(kLogFloor, 1.0).log().mean();
}

torch::Tensor total_loss(const torch::Tensor& l_diff, const torch::Tensor& l_contrast, const torch::Tensor& l_pred,
                         const PhaseMask& mask, const LossWeights& weights) {
  torch::Tensor total;
  auto add = [&](const torch::Tensor& term, bool active, double weight, const char* name) {
    if (!active || !term.defined()) return;
    const double value = term.item<double>();
    if (!std::isfinite(value)) throw DivergenceError(std::string("non-finite ") + name + " loss");
    auto weighted = weight == 1.0 ? term : term * weight;
    total = total.defined() ? total + weighted : weighted;
  };
  add(l_diff, mask.diffusion, weights.diffusion, "diffusion");
  add(l_contrast, mask.contrast, weights.contrast, "contrastive");
  add(l_pred, mask.prediction, weights.prediction, "prediction");
  if (!total.defined()) {
    auto like = l_diff.defined() ? l_diff : (l_contrast.defined() ? l_contrast : l_pred);
    return like.defined() ? torch::zeros({}, like.options()) : torch::zeros({}, torch::kFloat64);
  }
  return total;
}

}  // namespace protodiff
