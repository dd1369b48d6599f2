#pragma once

#include <torch/torch.h>

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "protodiff/checkpoint.hpp"
#include "protodiff/config.hpp"
#include "protodiff/ddim.hpp"
#include "protodiff/explainer.hpp"
#include "protodiff/image.hpp"
#include "protodiff/knn.hpp"
#include "protodiff/latent_table.hpp"
#include "protodiff/manifest.hpp"
#include "protodiff/network.hpp"

namespace protodiff {

torch::Tensor image_to_tensor(const GrayImage& image);  // [1,1,H,W]
torch::Tensor images_to_tensor(std::span<const GrayImage> images);
GrayImage tensor_to_image(const torch::Tensor& t);  // accepts [H,W], [1,H,W] or [1,1,H,W]

/// Loads and stacks manifest records as [N,1,S,S].
torch::Tensor load_records(const DatasetManifest& manifest, std::span<const std::size_t> records, int image_size);

/// No-grad semantic encoding in chunks; returns float32 [N, d].
torch::Tensor encode_batch(DenoiserModel& model, const torch::Tensor& images, std::int64_t chunk = 64);

std::vector<float> latent_row(const torch::Tensor& latents, std::int64_t row);

struct EncodedSplit {
  std::vector<std::size_t> records;
  torch::Tensor latents;  // [N, d]
};

EncodedSplit encode_split(DenoiserModel& model, const DatasetManifest& manifest, Split split, int image_size);

/// Full training-split index; image refs are manifest paths.
PrototypeIndex build_prototype_index(const DatasetManifest& manifest, const EncodedSplit& train);

/// A model restored from a checkpoint, in eval mode.
struct LoadedModel {
  ExperimentConfig config;
  DenoiserModel model{nullptr};
};

void load_parameters(DenoiserModel& model, const Checkpoint& checkpoint);
LoadedModel load_model(const std::filesystem::path& checkpoint_path);

struct Reconstruction {
  torch::Tensor x0;
  torch::Tensor z_sem;
  torch::Tensor x_T;
  DecodeResult decoded;
  std::vector<double> mse;  // per image, unclamped reconstruction vs x0
};

/// encode_semantic -> encode_stochastic -> decode, no grad.
Reconstruction reconstruct(DenoiserModel& model, const torch::Tensor& x0, const NoiseSchedule& schedule,
                           int invert_steps, int decode_steps);

struct SamplePrediction {
  std::string ref;
  int label = 0;
  Prediction prediction;
};

struct EvaluationResult {
  std::string split;
  std::size_t k = 0;
  double accuracy = 0.0;
  std::array<std::array<std::size_t, 2>, 2> confusion{};  // [true][predicted]
  std::vector<SamplePrediction> samples;

  nlohmann::json to_json() const;
};

/// Hard-mode KNN over the full training pool (probes are never in the pool).
EvaluationResult evaluate_split(const DatasetManifest& manifest, Split split, const PrototypeIndex& index,
                                const EncodedSplit& encoded, std::size_t k, double tau_pred);

EvaluationResult evaluate(const std::filesystem::path& checkpoint_path, const DatasetManifest& manifest, Split split,
                          std::size_t k);

LatentTable latent_table(const DatasetManifest& manifest, const EncodedSplit& encoded);

LatentTable export_latents(const std::filesystem::path& checkpoint_path, const DatasetManifest& manifest, Split split,
                           const std::filesystem::path& out_path);

/// Explanations for every record of `split`, rendered under out_dir.
std::vector<ExplanationReport> explain_split(DenoiserModel& model, const ExperimentConfig& config,
                                             const DatasetManifest& manifest, Split split,
                                             const PrototypeIndex& index, std::size_t k,
                                             const std::filesystem::path& out_dir);

}  // namespace protodiff
