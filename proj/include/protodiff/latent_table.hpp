#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace protodiff {

struct LatentRow {
  std::string ref;
  int label = 0;
  std::vector<float> values;
};

/// Exported semantic latents. CSV header `ref,label,z0,...,z{d-1}`; values
/// printed with 9 significant digits so float32 round-trips exactly.
struct LatentTable {
  std::size_t dim = 0;
  std::vector<LatentRow> rows;

  void add(LatentRow row);
  void write_csv(const std::filesystem::path& path) const;
  static LatentTable read_csv(const std::filesystem::path& path);
};

struct SeparationStats {
  double intra = 0.0;   // mean cosine over unordered same-class pairs
  double inter = 0.0;   // mean cosine over cross-class pairs
  double margin = 0.0;  // intra - inter
  std::size_t intra_pairs = 0;
  std::size_t inter_pairs = 0;
};

/// Exhaustive pairwise statistics. Requires at least two rows per class.
SeparationStats separation_stats(const LatentTable& table);

}  // namespace protodiff
