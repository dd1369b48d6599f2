#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protodiff/image.hpp"
#include "protodiff/knn.hpp"

namespace protodiff {

struct PrototypeEntry {
  std::size_t rank = 0;  // 1-based
  std::size_t id = 0;    // prototype index row
  std::string image_ref;
  int label = 0;
  double similarity = 0.0;
};

/// A prediction explained by its k most similar training images and the
/// signed pixel difference to the rank-1 prototype.
struct ExplanationReport {
  std::string test_ref;
  int predicted_label = 0;
  std::optional<int> true_label;
  std::vector<PrototypeEntry> prototypes;
  GrayImage difference;  // test - rank-1 prototype, values in [-1, 1]

  // Pixel data used for rendering; not part of the JSON sidecar.
  GrayImage test_image;
  std::vector<GrayImage> prototype_images;

  std::filesystem::path grid_path;
  std::filesystem::path json_path;
};

/// Resolves a prototype image_ref to a normalized image of the test size.
using ImageResolver = std::function<GrayImage(const std::string& image_ref)>;

/// Signed difference a - b. Shapes must match.
GrayImage difference_map(const GrayImage& test_image, const GrayImage& prototype_image);

/// |signed| as an 8-bit-ready image in [0, 1].
GrayImage render_difference(const GrayImage& signed_map);

/// Builds the report: prototypes are the top-k neighbours with the same
/// ordering as knn_predict; the predicted label is the K-mode from
/// `predict_k` neighbours (defaults to k).
ExplanationReport explain(std::span<const float> z, const GrayImage& test_image, const PrototypeIndex& index,
                          std::size_t k, const ImageResolver& resolve, std::size_t predict_k = 0);

/// Directory name for a test ref: path separators and dots become '_'.
std::string report_id(const std::string& test_ref);

/// Writes `<out_dir>/<report_id>/grid.png` (test | prototypes | |difference|)
/// and `report.json`. Deterministic for identical reports.
void render_report(ExplanationReport& report, const std::filesystem::path& out_dir);

}  // namespace protodiff
