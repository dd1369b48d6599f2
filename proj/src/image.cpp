#include "protodiff/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace protodiff {

namespace fs = std::filesystem;

GrayImage::GrayImage(int w, int h, float fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {
  if (w < 0 || h < 0) throw std::invalid_argument("negative image dimensions");
}

namespace {

bool has_pgm_magic(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  return in.gcount() == 2 && magic[0] == 'P' && magic[1] == '5';
}

GrayImage read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  in >> magic;
  auto next_int = [&]() {
    int value = 0;
    while (in >> std::ws && in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
    }
    if (!(in >> value)) throw IoError("malformed PGM header: " + path.string());
    return value;
  };
  const int w = next_int();
  const int h = next_int();
  const int maxval = next_int();
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255) {
    throw IoError("unsupported PGM geometry or depth: " + path.string());
  }
  in.get();
  std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw IoError("truncated PGM: " + path.string());
  }
  GrayImage image(w, h);
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    image.pixels[i] = static_cast<float>(bytes[i]) / static_cast<float>(maxval);
  }
  return image;
}

GrayImage read_png(const fs::path& path) {
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw IoError("cannot decode image " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr)) {
    std::string message = png.message;
    png_image_free(&png);
    throw IoError("cannot decode image " + path.string() + ": " + message);
  }
  GrayImage image(static_cast<int>(png.width), static_cast<int>(png.height));
  for (std::size_t i = 0; i < buffer.size(); ++i) {
    image.pixels[i] = static_cast<float>(buffer[i]) / 255.0f;
  }
  return image;
}

}  // namespace

GrayImage read_raster(const fs::path& path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) throw IoError("image not found: " + path.string());
  if (fs::file_size(path, ec) == 0) throw IoError("zero-byte image: " + path.string());
  return has_pgm_magic(path) ? read_pgm(path) : read_png(path);
}

std::vector<std::uint8_t> to_bytes(const GrayImage& image) {
  std::vector<std::uint8_t> bytes(image.size());
  for (std::size_t i = 0; i < image.size(); ++i) {
    const float v = std::clamp(image.pixels[i], 0.0f, 1.0f);
    bytes[i] = static_cast<std::uint8_t>(std::floor(v * 255.0f + 0.5f));
  }
  return bytes;
}

void write_png(const fs::path& path, const GrayImage& image) {
  if (image.width <= 0 || image.height <= 0) throw IoError("cannot write empty image " + path.string());
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto bytes = to_bytes(image);
  png_image png{};
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw IoError("cannot write " + path.string() + ": " + png.message);
  }
}

GrayImage resize_bilinear(const GrayImage& image, int width, int height) {
  if (width <= 0 || height <= 0) throw std::invalid_argument("resize target must be positive");
  if (image.width == width && image.height == height) return image;
  GrayImage out(width, height);
  const double sx = static_cast<double>(image.width) / width;
  const double sy = static_cast<double>(image.height) / height;

  auto source_coord = [](int dst, double scale, int extent, int& i0, double& frac) {
    double f = (dst + 0.5) * scale - 0.5;
    int i = static_cast<int>(std::floor(f));
    frac = f - i;
    if (i < 0) {
      i = 0;
      frac = 0.0;
    }
    if (i >= extent - 1) {
      i = extent - 1;
      frac = 0.0;
    }
    i0 = i;
  };

  for (int y = 0; y < height; ++y) {
    int y0 = 0;
    double fy = 0.0;
    source_coord(y, sy, image.height, y0, fy);
    const int y1 = std::min(y0 + 1, image.height - 1);
    for (int x = 0; x < width; ++x) {
      int x0 = 0;
      double fx = 0.0;
      source_coord(x, sx, image.width, x0, fx);
      const int x1 = std::min(x0 + 1, image.width - 1);
      const double top = (1.0 - fx) * image.at(x0, y0) + fx * image.at(x1, y0);
      const double bottom = (1.0 - fx) * image.at(x0, y1) + fx * image.at(x1, y1);
      out.at(x, y) = static_cast<float>((1.0 - fy) * top + fy * bottom);
    }
  }
  return out;
}

GrayImage load_image(const fs::path& path, int target_size) {
  GrayImage image = resize_bilinear(read_raster(path), target_size, target_size);
  for (auto& v : image.pixels) v = std::clamp(v, 0.0f, 1.0f);
  return image;
}

}  // namespace protodiff
