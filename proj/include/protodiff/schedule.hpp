#pragma once

#include <torch/torch.h>

#include <vector>

namespace protodiff {

/// Variance schedule with 1-based steps t = 1..T. alpha(t) is the running
/// product prod_{s<=t} (1 - beta_s) held in double precision; alpha(0) = 1
/// so a sampler can land exactly on the clean image.
class NoiseSchedule {
 public:
  explicit NoiseSchedule(std::vector<double> betas);

  /// Betas evenly spaced from beta_start to beta_end inclusive.
  static NoiseSchedule linear(int steps, double beta_start, double beta_end);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const;
  double alpha(int t) const;
  const std::vector<double>& betas() const { return betas_; }
  /// alpha(0), alpha(1), ..., alpha(T).
  const std::vector<double>& alphas() const { return alphas_; }

  /// sqrt(alpha(t)) and sqrt(1 - alpha(t)) for t = 0..T as float64 tensors.
  const torch::Tensor& sqrt_alpha_table() const { return sqrt_alpha_; }
  const torch::Tensor& sqrt_one_minus_alpha_table() const { return sqrt_one_minus_alpha_; }

 private:
  std::vector<double> betas_;
  std::vector<double> alphas_;
  torch::Tensor sqrt_alpha_;
  torch::Tensor sqrt_one_minus_alpha_;
};

/// x_t = sqrt(alpha_t) x0 + sqrt(1 - alpha_t) noise for a single step.
torch::Tensor q_sample(const torch::Tensor& x0, int t, const torch::Tensor& noise, const NoiseSchedule& schedule);

/// Batched form: `t` is an int64 tensor of shape [B] indexing the leading
/// dimension of x0 and noise.
torch::Tensor q_sample(const torch::Tensor& x0, const torch::Tensor& t, const torch::Tensor& noise,
                       const NoiseSchedule& schedule);

}  // namespace protodiff
