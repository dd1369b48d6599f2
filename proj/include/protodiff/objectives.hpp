#pragma once

#include <torch/torch.h>

#include <stdexcept>

#include "protodiff/network.hpp"
#include "protodiff/schedule.hpp"

namespace protodiff {

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ContrastConfig {
  double tau = 0.5;
  double tau_pred = 0.1;
  void validate() const;
};

/// Per-element mean of (eps_theta(q_sample(x0, t, noise), t, z) - noise)^2.
/// `z` should come from the encoder in the same graph so gradients reach it.
torch::Tensor diffusion_loss(const NoisePredictor& eps, const torch::Tensor& x0, const torch::Tensor& t,
                             const torch::Tensor& noise, const torch::Tensor& z, const NoiseSchedule& schedule);

/// Symmetrized supervised contrastive loss over a class-balanced batch.
/// Every row of z_pos ([M,d], class 0) and z_neg ([M,d], class 1) acts as an
/// anchor i with
///   L_i = -log( P_i / (P_i + N_i) ),
///   P_i = sum_{same class j != i} exp(sim_ij / tau),
///   N_i = sum_{other class k} exp(sim_ik / tau),
/// averaged over the 2M anchors. Computed with log-sum-exp.
torch::Tensor contrastive_loss(const torch::Tensor& z_pos, const torch::Tensor& z_neg, double tau);

/// Differentiable neighbour vote inside a batch: each row's K most cosine-
/// similar other rows (self excluded) vote with weights softmax(sim / tau_pred).
/// Returns [N, 2] class probabilities.
torch::Tensor batch_soft_probabilities(const torch::Tensor& z, const torch::Tensor& labels, int k, double tau_pred);

/// Hard mode vote inside a batch (self excluded), even-K ties to the nearest
/// neighbour. Returns int64 [N] labels.
torch::Tensor batch_hard_predictions(const torch::Tensor& z, const torch::Tensor& labels, int k);

/// Mean cross-entropy -log(max(p[label], 1e-12)).
torch::Tensor prediction_loss(const torch::Tensor& probabilities, const torch::Tensor& labels);

struct LossWeights {
  double diffusion = 1.0;
  double contrast = 1.0;
  double prediction = 1.0;
};

/// Which terms contribute. Warm-up uses {true, false, false}.
struct PhaseMask {
  bool diffusion = true;
  bool contrast = true;
  bool prediction = true;

  static PhaseMask warmup() { return {true, false, false}; }
  static PhaseMask joint(bool freeze_diffusion) { return {!freeze_diffusion, true, true}; }
};

/// Weighted, masked sum. Throws DivergenceError if any active term is not
/// finite. Undefined tensors count as zero.
torch::Tensor total_loss(const torch::Tensor& l_diff, const torch::Tensor& l_contrast, const torch::Tensor& l_pred,
                         const PhaseMask& mask = {}, const LossWeights& weights = {});

}  // namespace protodiff
