#include "protodiff/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <vector>

#include "protodiff/random.hpp"

namespace protodiff {

namespace fs = std::filesystem;

namespace {

double smoothstep_edge(double signed_distance, double softness) {
  return 1.0 / (1.0 + std::exp(-signed_distance / softness));
}

struct Void {
  double x, y, r;
};

}  // namespace

EllipseSample render_synthetic_sample(int label, std::size_t index, int image_size, std::uint64_t seed) {
  if (label != 0 && label != 1) throw std::invalid_argument("synthetic label must be 0 or 1");
  if (image_size < 8) throw std::invalid_argument("synthetic image_size must be >= 8");
  std::mt19937_64 rng(mix_seed(mix_seed(seed, static_cast<std::uint64_t>(label)), index));
  const double s = image_size;

  const double cx = uniform_real(rng, 0.42, 0.58) * s;
  const double cy = uniform_real(rng, 0.42, 0.58) * s;
  const double a = uniform_real(rng, 0.30, 0.40) * s;
  const double b = uniform_real(rng, 0.24, 0.32) * s;
  const double theta = uniform_real(rng, 0.0, std::numbers::pi);
  const double intensity = uniform_real(rng, 0.65, 0.90);
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);

  std::vector<Void> voids;
  if (label == 1) {
    const int count = 2 + static_cast<int>(uniform_index(rng, 3));
    for (int i = 0; i < count; ++i) {
      const double rad = uniform_real(rng, 0.0, 0.5);
      const double ang = uniform_real(rng, 0.0, 2.0 * std::numbers::pi);
      // Place in the ellipse frame, then rotate into image coordinates.
      const double u = rad * a * std::cos(ang), v = rad * b * std::sin(ang);
      voids.push_back({cx + u * cos_t - v * sin_t, cy + u * sin_t + v * cos_t, uniform_real(rng, 0.10, 0.15) * s});
    }
  }

  EllipseSample sample{GrayImage(image_size, image_size), GrayImage(image_size, image_size)};
  const double softness = 0.035;
  for (int y = 0; y < image_size; ++y) {
    for (int x = 0; x < image_size; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      const double u = (dx * cos_t + dy * sin_t) / a;
      const double v = (-dx * sin_t + dy * cos_t) / b;
      const double radius = std::sqrt(u * u + v * v);
      double value = intensity * smoothstep_edge(1.0 - radius, softness);
      for (const auto& hole : voids) {
        const double d = std::hypot(x + 0.5 - hole.x, y + 0.5 - hole.y);
        value *= 1.0 - 0.9 * smoothstep_edge((hole.r - d) / s, softness * 0.5);
      }
      sample.image.at(x, y) = static_cast<float>(value);
      sample.interior_mask.at(x, y) = radius < 0.8 ? 1.0f : 0.0f;
    }
  }
  return sample;
}

DatasetManifest generate_synthetic_dataset(const SyntheticOptions& options, const fs::path& out_dir) {
  SyntheticSplits splits;
  if (options.splits) {
    splits = *options.splits;
  } else {
    splits.val = options.n_per_class / 10;
    splits.test = options.n_per_class / 10;
    splits.train = options.n_per_class - splits.val - splits.test;
  }
  const std::size_t per_class = splits.train + splits.val + splits.test;
  if (per_class == 0) throw std::invalid_argument("synthetic dataset needs at least one image per class");

  std::vector<ManifestRecord> records;
  for (int label = 0; label < 2; ++label) {
    const std::string dir = "class" + std::to_string(label);
    fs::create_directories(out_dir / dir);
    for (std::size_t i = 0; i < per_class; ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "img_%05zu.png", i);
      const std::string rel = dir + "/" + name;
      write_png(out_dir / rel, render_synthetic_sample(label, i, options.image_size, options.seed).image);
      Split split = i < splits.train ? Split::Train : (i < splits.train + splits.val ? Split::Val : Split::Test);
      records.push_back({rel, label, split});
    }
  }
  write_manifest(out_dir / "manifest.csv", records);
  return load_manifest(out_dir / "manifest.csv");
}

}  // namespace protodiff
