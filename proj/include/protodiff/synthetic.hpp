#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>

#include "protodiff/image.hpp"
#include "protodiff/manifest.hpp"

namespace protodiff {

/// Per-class split sizes. When left unset the split is 80/10/10 of
/// n_per_class (val and test rounded down, remainder to train).
struct SyntheticSplits {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

struct SyntheticOptions {
  std::size_t n_per_class = 100;
  int image_size = 32;
  std::uint64_t seed = 0;
  std::optional<SyntheticSplits> splits;
};

/// Geometry of one generated sample; exposed so tests can measure the
/// planted signal inside the ellipse.
struct EllipseSample {
  GrayImage image;
  GrayImage interior_mask;  // 1 inside the ellipse core, 0 elsewhere
};

/// Class 0: a filled ellipse with a smooth boundary. Class 1: the same
/// family of ellipses with two to four dark interior voids.
EllipseSample render_synthetic_sample(int label, std::size_t index, int image_size, std::uint64_t seed);

/// Writes class0/*.png, class1/*.png and manifest.csv under out_dir and
/// returns the validated manifest. Byte-identical for a fixed seed.
DatasetManifest generate_synthetic_dataset(const SyntheticOptions& options, const std::filesystem::path& out_dir);

}  // namespace protodiff
