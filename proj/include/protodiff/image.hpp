#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace protodiff {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Single-channel float image, row-major. Loaded images live in [0, 1];
/// signed maps (difference maps) may hold values in [-1, 1].
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<float> pixels;

  GrayImage() = default;
  GrayImage(int w, int h, float fill = 0.0f);

  float& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
  std::size_t size() const { return pixels.size(); }
  bool same_shape(const GrayImage& other) const {
    return width == other.width && height == other.height;
  }
};

/// Reads a raster as 8-bit grayscale. PNG (any colour type, converted by
/// libpng) and binary PGM are accepted. Values are scaled by 1/255.
GrayImage read_raster(const std::filesystem::path& path);

/// Writes an 8-bit grayscale PNG. Values are clamped to [0,1] and rounded.
void write_png(const std::filesystem::path& path, const GrayImage& image);

/// Quantizes to 8 bits (round half up after clamping to [0,1]).
std::vector<std::uint8_t> to_bytes(const GrayImage& image);

/// Bilinear resampling with half-pixel centres and edge clamping (the
/// convention of OpenCV's INTER_LINEAR without antialiasing). A same-size
/// resize returns the input unchanged.
GrayImage resize_bilinear(const GrayImage& image, int width, int height);

/// Reads, converts to grayscale, resizes to target_size x target_size and
/// clamps to [0, 1].
GrayImage load_image(const std::filesystem::path& path, int target_size);

}  // namespace protodiff
