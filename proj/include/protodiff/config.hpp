#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "protodiff/network.hpp"
#include "protodiff/objectives.hpp"
#include "protodiff/schedule.hpp"

namespace protodiff {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat key/value experiment configuration. Every key is listed in
/// config_schema(); unknown keys are rejected and `--set key=value`
/// overrides are parsed against the declared type.
struct ExperimentConfig {
  // data
  std::string manifest;
  std::string warmup_manifest;  // optional per-phase overrides
  std::string joint_manifest;
  // model
  int image_size = 64;
  int base_channels = 32;
  std::vector<int> channel_multipliers{1, 2, 4};
  int layers_per_resolution = 3;
  int middle_attention_layers = 3;
  int latent_dim = 128;
  int time_embed_dim = 128;
  int group_norm_groups = 8;
  // diffusion
  int diffusion_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
  int decode_steps = 50;
  int invert_steps = 50;
  // objectives
  double tau = 0.5;
  double tau_pred = 0.1;
  double weight_diffusion = 1.0;
  double weight_contrast = 1.0;
  double weight_prediction = 1.0;
  bool freeze_diffusion_in_phase2 = false;
  // training
  int warmup_epochs = 340;
  int joint_epochs = 500;
  int K = 7;
  int M = 16;
  std::string optimizer = "adam";
  double learning_rate = 1e-4;
  double grad_clip = 1.0;
  std::uint64_t seed = 0;
  int checkpoint_every = 10;
  int eval_every = 1;
  int recon_probe_size = 4;
  std::string device = "cpu";
  int num_threads = 1;
  // explanations
  int explain_k = 3;

  ModelConfig model_config() const;
  NoiseSchedule schedule() const;
  ContrastConfig contrast() const;
  LossWeights loss_weights() const;

  void validate() const;

  nlohmann::json to_json() const;
  /// Starts from defaults; keys present in `doc` replace them.
  static ExperimentConfig from_json(const nlohmann::json& doc);
  static ExperimentConfig load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  /// "key=value"; the value is parsed according to the key's type.
  void apply_override(std::string_view assignment);
};

struct ConfigField {
  std::string_view name;
  std::string_view type;  // int, uint, double, bool, string, int_list
  std::string_view help;
};

const std::vector<ConfigField>& config_schema();

/// Small configuration used for desk-scale runs (32x32, 8 base channels,
/// d = 32, T = 200, 20 sampler substeps).
ExperimentConfig toy_experiment();

}  // namespace protodiff
