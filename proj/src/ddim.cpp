#include "protodiff/ddim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace protodiff {

SamplerPlan SamplerPlan::uniform(int total_steps, int substeps) {
  if (substeps < 1 || substeps > total_steps) {
    throw std::invalid_argument("sampler substeps must lie in [1, " + std::to_string(total_steps) + "], got " +
                                std::to_string(substeps));
  }
  SamplerPlan plan;
  for (int k = 0; k <= substeps; ++k) {
    plan.steps.push_back(static_cast<int>(static_cast<long long>(k) * total_steps / substeps));
  }
  return plan;
}

void SamplerPlan::validate(const NoiseSchedule& schedule) const {
  if (steps.size() < 2) throw std::invalid_argument("sampler plan needs at least one substep");
  if (steps.front() != 0) throw std::invalid_argument("sampler plan must start at step 0");
  if (steps.back() != schedule.steps()) throw std::invalid_argument("sampler plan must end at step T");
  for (std::size_t k = 1; k < steps.size(); ++k) {
    if (steps[k] <= steps[k - 1]) throw std::invalid_argument("sampler plan steps must strictly increase");
  }
}

namespace {

void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* what) {
  if (!a.sizes().equals(b.sizes())) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + c10::str(a.sizes()) + " vs " +
                                c10::str(b.sizes()));
  }
}

// Move x_t at noise level `from` to noise level `to` along the predicted eps.
torch::Tensor transfer(const torch::Tensor& x_t, int from, int to, const torch::Tensor& eps,
                       const NoiseSchedule& schedule) {
  const double a_from = schedule.alpha(from);
  const double a_to = schedule.alpha(to);
  const double keep = std::sqrt(a_to / a_from);
  const double mix = std::sqrt(1.0 - a_to) - std::sqrt(a_to) * std::sqrt(1.0 - a_from) / std::sqrt(a_from);
  return keep * x_t + mix * eps;
}

torch::Tensor step_tensor(int t, const torch::Tensor& like) {
  return torch::full({like.size(0)}, static_cast<std::int64_t>(t), torch::TensorOptions().dtype(torch::kLong));
}

}  // namespace

torch::Tensor ddim_step(const torch::Tensor& x_t, int t, int t_prev, const torch::Tensor& eps_hat,
                        const NoiseSchedule& schedule) {
  if (t_prev >= t) throw std::invalid_argument("ddim_step: t_prev must be below t");
  check_same_shape(x_t, eps_hat, "ddim_step");
  return transfer(x_t, t, t_prev, eps_hat, schedule);
}

torch::Tensor ddim_invert_step(const torch::Tensor& x_t, int t, int t_next, const torch::Tensor& eps_hat,
                               const NoiseSchedule& schedule) {
  if (t_next <= t) throw std::invalid_argument("ddim_invert_step: t_next must exceed t");
  check_same_shape(x_t, eps_hat, "ddim_invert_step");
  return transfer(x_t, t, t_next, eps_hat, schedule);
}

torch::Tensor predict_noise(DenoiserModel& model, const torch::Tensor& x_t, const torch::Tensor& t,
                            const torch::Tensor& z, const NoiseSchedule& schedule) {
  if (t.numel() > 0 && t.max().item<std::int64_t>() > schedule.steps()) {
    throw std::out_of_range("predict_noise: step index above T=" + std::to_string(schedule.steps()));
  }
  return model->predict_noise(x_t, t, z);
}

DecodeResult decode(const NoisePredictor& eps, const torch::Tensor& z, const torch::Tensor& x_T,
                    const SamplerPlan& plan, const NoiseSchedule& schedule) {
  plan.validate(schedule);
  torch::Tensor x = x_T;
  for (std::size_t k = plan.steps.size() - 1; k >= 1; --k) {
    const int t = plan.steps[k];
    const auto eps_hat = eps(x, step_tensor(t, x), z);
    x = ddim_step(x, t, plan.steps[k - 1], eps_hat, schedule);
  }
  return {x, x.clamp(0.0, 1.0)};
}

torch::Tensor encode_stochastic(const NoisePredictor& eps, const torch::Tensor& x0, const torch::Tensor& z,
                                const SamplerPlan& plan, const NoiseSchedule& schedule) {
  plan.validate(schedule);
  torch::Tensor x = x0;
  for (std::size_t k = 0; k + 1 < plan.steps.size(); ++k) {
    const int t = plan.steps[k];
    const auto eps_hat = eps(x, step_tensor(std::max(t, 1), x), z);
    x = ddim_invert_step(x, t, plan.steps[k + 1], eps_hat, schedule);
  }
  return x;
}

}  // namespace protodiff
