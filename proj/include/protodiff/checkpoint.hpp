#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "protodiff/config.hpp"

namespace protodiff {

/// Single-file training snapshot.
///
///   "PDCK" | u32 format_version | u64 header_bytes | header JSON | tensor blob
///
/// The header holds the model config, the full experiment config, counters,
/// the training state and a table {name, dtype, shape, offset, bytes} into
/// the blob. Tensor names are canonical:
///   param/<module path>            model parameters (f32)
///   adam/exp_avg/<module path>     first moments
///   adam/exp_avg_sq/<module path>  second moments
///   rng/cpu                        torch CPU generator state (u8)
/// Tensors are written in name order, little-endian, so a save -> load ->
/// save cycle is byte-identical.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  ExperimentConfig config;
  int epoch = 0;  // completed epochs
  std::int64_t global_step = 0;
  nlohmann::json training_state = nlohmann::json::object();
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  bool has(const std::string& name) const;
  const torch::Tensor& tensor(const std::string& name) const;
  void put(const std::string& name, const torch::Tensor& value);

  /// Writes to a temporary sibling and renames into place.
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

}  // namespace protodiff
