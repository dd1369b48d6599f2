#include <gtest/gtest.h>
#include <opencv2/imgproc.hpp>

#include <cmath>

#include "protodiff/image.hpp"

using protodiff::GrayImage;

namespace {

GrayImage gradient(int w, int h) {
  GrayImage img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      img.at(x, y) = static_cast<float>((x * 3 + y * 5 + (x * y) % 17) % 256) / 255.0f;
  return img;
}

void compare_with_opencv(const GrayImage& src, int w, int h) {
  cv::Mat m(src.height, src.width, CV_32F, const_cast<float*>(src.pixels.data()));
  cv::Mat ref;
  cv::resize(m, ref, cv::Size(w, h), 0, 0, cv::INTER_LINEAR);
  const auto out = protodiff::resize_bilinear(src, w, h);
  double worst = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) worst = std::max(worst, std::abs(double(out.at(x, y)) - ref.at<float>(y, x)));
  EXPECT_LE(worst, 1.0 / 255.0) << src.width << "x" << src.height << " -> " << w << "x" << h;
}

}  // namespace

TEST(ResizeReference, Gradient130To64MatchesOpenCv) { compare_with_opencv(gradient(130, 130), 64, 64); }

TEST(ResizeReference, UpsampleMatchesOpenCv) { compare_with_opencv(gradient(20, 20), 64, 64); }

TEST(ResizeReference, NonSquareMatchesOpenCv) { compare_with_opencv(gradient(97, 41), 32, 32); }
