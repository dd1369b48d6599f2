#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace protodiff {

/// Architecture hyperparameters shared by the semantic encoder and the
/// conditioned U-Net. Input is a single-channel square image.
struct ModelConfig {
  int image_size = 64;
  int base_channels = 32;
  std::vector<int> channel_multipliers{1, 2, 4};
  int layers_per_resolution = 3;
  int middle_attention_layers = 3;
  int latent_dim = 128;
  int time_embed_dim = 128;
  int group_norm_groups = 8;

  /// 64x64 input, 32/64/128 channels, 3 residual blocks per resolution.
  static ModelConfig paper_scale();
  /// 32x32 input, 8/16/32 channels, d = 32.
  static ModelConfig toy();

  std::vector<int> channels() const;
  void validate() const;
};

/// conv3x3 -> GroupNorm -> SiLU.
class ConvNormActImpl : public torch::nn::Module {
 public:
  ConvNormActImpl(int in_channels, int out_channels, int groups, int stride = 1);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv2d conv{nullptr};
  torch::nn::GroupNorm norm{nullptr};
};
TORCH_MODULE(ConvNormAct);

/// Residual block x + SiLU(GN(conv(SiLU(mod(GN(conv(x))))))) where mod is an
/// adaptive scale/shift from the time embedding and from z_sem. Either
/// conditioning can be disabled with a zero dimension (semantic encoder).
class ResBlockImpl : public torch::nn::Module {
 public:
  ResBlockImpl(int channels, int groups, int time_dim, int latent_dim);
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& time_emb = {}, const torch::Tensor& z = {});

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::GroupNorm norm1{nullptr}, norm2{nullptr};
  torch::nn::Linear time_proj{nullptr}, latent_proj{nullptr};
};
TORCH_MODULE(ResBlock);

/// Single-head self-attention over flattened spatial positions.
class AttentionBlockImpl : public torch::nn::Module {
 public:
  AttentionBlockImpl(int channels, int groups);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::GroupNorm norm{nullptr};
  torch::nn::Linear qkv{nullptr}, out{nullptr};
};
TORCH_MODULE(AttentionBlock);

/// Down path + middle block (separate weights from the U-Net), global
/// average pool, linear map to latent_dim.
class SemanticEncoderImpl : public torch::nn::Module {
 public:
  explicit SemanticEncoderImpl(const ModelConfig& config);
  torch::Tensor forward(const torch::Tensor& x0);

 private:
  ConvNormAct stem_{nullptr};
  std::vector<std::vector<ResBlock>> levels_;
  std::vector<ConvNormAct> downsample_;
  std::vector<AttentionBlock> middle_attention_;
  std::vector<ResBlock> middle_res_;
  torch::nn::Linear project_{nullptr};
};
TORCH_MODULE(SemanticEncoder);

/// eps_theta(x_t, t, z_sem).
class ConditionalUNetImpl : public torch::nn::Module {
 public:
  explicit ConditionalUNetImpl(const ModelConfig& config);
  torch::Tensor forward(const torch::Tensor& x_t, const torch::Tensor& t, const torch::Tensor& z);

 private:
  int time_embed_dim_;
  torch::nn::Linear time_fc1_{nullptr}, time_fc2_{nullptr};
  ConvNormAct stem_{nullptr};
  std::vector<std::vector<ResBlock>> down_;
  std::vector<ConvNormAct> downsample_;
  std::vector<AttentionBlock> middle_attention_;
  std::vector<ResBlock> middle_res_;
  std::vector<ConvNormAct> merge_;
  std::vector<std::vector<ResBlock>> up_;
  std::vector<ConvNormAct> upsample_;
  torch::nn::Conv2d head_{nullptr};
};
TORCH_MODULE(ConditionalUNet);

/// Sinusoidal embedding of (float) step indices, shape [B, dim].
torch::Tensor timestep_embedding(const torch::Tensor& t, int dim);

/// The trainable object: semantic encoder + conditioned U-Net.
class DenoiserModelImpl : public torch::nn::Module {
 public:
  explicit DenoiserModelImpl(const ModelConfig& config);

  /// [B,1,H,W] in [0,1] -> [B, latent_dim].
  torch::Tensor encode_semantic(const torch::Tensor& x0);
  /// t: int64 [B] in [1, T_max]; z: [B, latent_dim]. Returns [B,1,H,W].
  torch::Tensor predict_noise(const torch::Tensor& x_t, const torch::Tensor& t, const torch::Tensor& z);

  const ModelConfig& config() const { return config_; }
  /// Parameters sorted by canonical name (e.g. "unet.down.0.1.conv1.weight").
  std::vector<std::pair<std::string, torch::Tensor>> canonical_parameters() const;

 private:
  void check_image(const torch::Tensor& x, const char* what) const;

  ModelConfig config_;
  SemanticEncoder encoder_{nullptr};
  ConditionalUNet unet_{nullptr};
};
TORCH_MODULE(DenoiserModel);

/// Exact trainable-scalar count from the architecture formula.
std::int64_t parameter_count(const ModelConfig& config);

/// One entry per layer in forward order, used to audit the architecture.
struct LayerRecord {
  std::string name;   // canonical parameter prefix ("" for parameter-free layers)
  std::string kind;   // conv, group_norm, modulation, silu, attention, linear, pool, upsample, concat, head
  std::string stage;  // e.g. "encoder.down.1", "unet.middle", "unet.up.0"
  int in_channels = 0;
  int out_channels = 0;
  int resolution = 0;
};

std::vector<LayerRecord> architecture_audit(const ModelConfig& config);

/// Signature used by the samplers and losses, so tests can stub eps_theta.
using NoisePredictor =
    std::function<torch::Tensor(const torch::Tensor& x_t, const torch::Tensor& t, const torch::Tensor& z)>;

NoisePredictor noise_predictor(DenoiserModel model);

}  // namespace protodiff
