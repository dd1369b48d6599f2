#include "protodiff/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace protodiff {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
  if (betas_.empty()) throw std::invalid_argument("noise schedule needs T >= 1");
  alphas_.resize(betas_.size() + 1);
  alphas_[0] = 1.0;
  for (std::size_t i = 0; i < betas_.size(); ++i) {
    const double b = betas_[i];
    if (!std::isfinite(b) || !(b > 0.0) || !(b < 1.0)) {
      throw std::invalid_argument("beta_" + std::to_string(i + 1) + " = " + std::to_string(b) + " outside (0, 1)");
    }
    alphas_[i + 1] = alphas_[i] * (1.0 - b);
  }
  if (!(alphas_.back() > 0.0)) throw std::invalid_argument("noise schedule underflows to alpha_T = 0");
  auto table = torch::tensor(alphas_, torch::kFloat64);
  sqrt_alpha_ = table.sqrt();
  sqrt_one_minus_alpha_ = (1.0 - table).sqrt();
}

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw std::invalid_argument("noise schedule needs T >= 1");
  if (!std::isfinite(beta_start) || !std::isfinite(beta_end) || !(beta_start > 0.0) || !(beta_end < 1.0) ||
      beta_start > beta_end) {
    throw std::invalid_argument("linear schedule requires 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    betas[static_cast<std::size_t>(i)] = beta_start + (beta_end - beta_start) * frac;
  }
  return NoiseSchedule(std::move(betas));
}

double NoiseSchedule::beta(int t) const {
  if (t < 1 || t > steps()) throw std::out_of_range("step " + std::to_string(t) + " outside [1, T]");
  return betas_[static_cast<std::size_t>(t - 1)];
}

double NoiseSchedule::alpha(int t) const {
  if (t < 0 || t > steps()) throw std::out_of_range("step " + std::to_string(t) + " outside [0, T]");
  return alphas_[static_cast<std::size_t>(t)];
}

torch::Tensor q_sample(const torch::Tensor& x0, int t, const torch::Tensor& noise, const NoiseSchedule& schedule) {
  if (t < 1 || t > schedule.steps()) {
    throw std::out_of_range("q_sample: step " + std::to_string(t) + " outside [1, " +
                            std::to_string(schedule.steps()) + "]");
  }
  if (!x0.sizes().equals(noise.sizes())) throw std::invalid_argument("q_sample: noise shape differs from x0 shape");
  const double a = schedule.alpha(t);
  return std::sqrt(a) * x0 + std::sqrt(1.0 - a) * noise;
}

torch::Tensor q_sample(const torch::Tensor& x0, const torch::Tensor& t, const torch::Tensor& noise,
                       const NoiseSchedule& schedule) {
  if (!x0.sizes().equals(noise.sizes())) throw std::invalid_argument("q_sample: noise shape differs from x0 shape");
  if (t.dim() != 1 || t.size(0) != x0.size(0)) throw std::invalid_argument("q_sample: t must have shape [B]");
  const auto lo = t.min().item<std::int64_t>(), hi = t.max().item<std::int64_t>();
  if (lo < 1 || hi > schedule.steps()) throw std::out_of_range("q_sample: step outside [1, T]");
  std::vector<std::int64_t> bshape(static_cast<std::size_t>(x0.dim()), 1);
  bshape[0] = x0.size(0);
  const auto idx = t.to(torch::kLong);
  auto a = schedule.sqrt_alpha_table().index_select(0, idx).to(x0.scalar_type()).view(bshape);
  auto b = schedule.sqrt_one_minus_alpha_table().index_select(0, idx).to(x0.scalar_type()).view(bshape);
  return a * x0 + b * noise;
}

}  // namespace protodiff
