#pragma once

#include <string>
#include <vector>

#include "facade/math.hpp"

namespace facade {

// Linear-RGB floating point image, row-major.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<Vec3> pixels;

  Image() = default;
  Image(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, Vec3::Zero()) {}

  Vec3& at(int x, int y) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  const Vec3& at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

// Integer label image; -1 marks unlabeled pixels.
struct LabelImage {
  int width = 0;
  int height = 0;
  std::vector<int> labels;

  LabelImage() = default;
  LabelImage(int w, int h) : width(w), height(h), labels(static_cast<std::size_t>(w) * h, -1) {}

  int& at(int x, int y) { return labels[static_cast<std::size_t>(y) * width + x]; }
  int at(int x, int y) const { return labels[static_cast<std::size_t>(y) * width + x]; }
};

// Scalar float image (depth, roughness maps, ...).
struct ScalarImage {
  int width = 0;
  int height = 0;
  std::vector<real> values;

  ScalarImage() = default;
  ScalarImage(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.0) {}

  real& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  real at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
};

// OpenEXR (linear float) read/write.
void write_exr(const std::string& path, const Image& img);
Image read_exr(const std::string& path);
void write_exr_scalar(const std::string& path, const ScalarImage& img);
ScalarImage read_exr_scalar(const std::string& path);

// sRGB-mapped 8-bit preview.
void write_png_preview(const std::string& path, const Image& img);

// 16-bit grayscale label masks; 0 = unlabeled, label k stored as k+1.
void write_mask_png(const std::string& path, const LabelImage& img);
LabelImage read_mask_png(const std::string& path);

}  // namespace facade
