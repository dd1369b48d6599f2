#pragma once

#include <torch/torch.h>

#include <vector>

#include "protodiff/network.hpp"
#include "protodiff/schedule.hpp"

namespace protodiff {

/// Step indices 0 = t_0 < t_1 < ... < t_S = T. Decoding walks the list
/// backwards, inversion forwards.
struct SamplerPlan {
  std::vector<int> steps;

  /// t_k = floor(k T / S); requires 1 <= S <= T.
  static SamplerPlan uniform(int total_steps, int substeps);

  int substeps() const { return static_cast<int>(steps.size()) - 1; }
  /// Throws unless steps start at 0, end at T and strictly increase.
  void validate(const NoiseSchedule& schedule) const;
};

/// Deterministic update from t to t_prev < t:
///   sqrt(a_prev) (x_t - sqrt(1 - a_t) eps) / sqrt(a_t) + sqrt(1 - a_prev) eps
/// with alpha(0) = 1. Coefficients are computed in double.
torch::Tensor ddim_step(const torch::Tensor& x_t, int t, int t_prev, const torch::Tensor& eps_hat,
                        const NoiseSchedule& schedule);

/// The same update run towards higher noise (t_next > t), used for
/// inversion.
torch::Tensor ddim_invert_step(const torch::Tensor& x_t, int t, int t_next, const torch::Tensor& eps_hat,
                               const NoiseSchedule& schedule);

/// Noise prediction with the step range checked against the schedule.
torch::Tensor predict_noise(DenoiserModel& model, const torch::Tensor& x_t, const torch::Tensor& t,
                            const torch::Tensor& z, const NoiseSchedule& schedule);

struct DecodeResult {
  torch::Tensor raw;      // unclamped x_0
  torch::Tensor clamped;  // clamped to [0, 1] for display
};

/// Generative pass x_T -> x_0 conditioned on z_sem. Consumes no randomness.
DecodeResult decode(const NoisePredictor& eps, const torch::Tensor& z, const torch::Tensor& x_T,
                    const SamplerPlan& plan, const NoiseSchedule& schedule);

/// Deterministic inversion x_0 -> x_T (the stochastic subcode). At t_0 = 0
/// the predictor is queried at step 1.
torch::Tensor encode_stochastic(const NoisePredictor& eps, const torch::Tensor& x0, const torch::Tensor& z,
                                const SamplerPlan& plan, const NoiseSchedule& schedule);

}  // namespace protodiff
