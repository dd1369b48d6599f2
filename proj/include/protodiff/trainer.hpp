#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "protodiff/checkpoint.hpp"
#include "protodiff/config.hpp"
#include "protodiff/manifest.hpp"
#include "protodiff/network.hpp"

namespace protodiff {

/// One metrics-log line. Masked loss terms are logged as 0 and listed in
/// `masked`; optional fields are null when not evaluated that epoch.
struct EpochMetrics {
  int epoch = 0;
  std::string phase;  // "warmup" or "joint"
  double l_diff = 0.0;
  double l_contrast = 0.0;
  double l_pred = 0.0;
  std::vector<std::string> masked;
  double train_acc = 0.0;  // hard vote inside each batch, self excluded
  std::optional<double> val_acc;
  std::optional<double> recon_mse;
  double wall_time = 0.0;  // seconds since the run (or resume) started

  nlohmann::json to_json() const;
  static EpochMetrics from_json(const nlohmann::json& doc);
};

struct TrainingState {
  int epoch = 0;
  std::int64_t global_step = 0;
  double best_val_acc = -1.0;
  EpochMetrics last;
};

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path metrics_log;
  std::vector<EpochMetrics> history;  // epochs run by this call
};

/// Two-phase trainer. Layout under out_dir:
///   metrics.jsonl, config.json, checkpoints/epoch_NNNN.pdck, final.pdck
class Trainer {
 public:
  Trainer(ExperimentConfig config, std::filesystem::path out_dir);

  /// Restores parameters, optimizer moments, counters and the RNG state.
  void resume(const std::filesystem::path& checkpoint_path);

  /// Runs until warmup_epochs + joint_epochs are complete, or until
  /// `stop_after_epoch` if given.
  TrainResult run(std::optional<int> stop_after_epoch = std::nullopt);

  DenoiserModel& model() { return model_; }
  const TrainingState& state() const { return state_; }
  Checkpoint snapshot() const;

 private:
  EpochMetrics run_epoch(int epoch, const DatasetManifest& manifest, bool joint);
  void validate_epoch(EpochMetrics& metrics, const DatasetManifest& manifest);
  std::filesystem::path write_checkpoint(const std::string& name);

  ExperimentConfig config_;
  std::filesystem::path out_dir_;
  NoiseSchedule schedule_;
  DenoiserModel model_{nullptr};
  std::unique_ptr<torch::optim::Adam> optimizer_;
  torch::Generator generator_;
  TrainingState state_;
  std::optional<DatasetManifest> base_manifest_;
  std::optional<DatasetManifest> warmup_manifest_;
  std::optional<DatasetManifest> joint_manifest_;
  torch::Tensor cached_images_;
  const DatasetManifest* cached_for_ = nullptr;
};

/// Convenience wrapper: fresh (or resumed) run to completion.
TrainResult train(const ExperimentConfig& config, const std::filesystem::path& out_dir,
                  const std::optional<std::filesystem::path>& resume_from = std::nullopt);

std::vector<EpochMetrics> read_metrics_log(const std::filesystem::path& path);

}  // namespace protodiff
