#include "facade/image.hpp"

#include <opencv2/imgcodecs.hpp>

#include <cstdlib>

namespace facade {
namespace {

void enable_exr() {
  static const bool once = [] {
#ifndef _WIN32
    setenv("OPENCV_IO_ENABLE_OPENEXR", "1", 0);
#endif
    return true;
  }();
  (void)once;
}

}  // namespace

void write_exr(const std::string& path, const Image& img) {
  enable_exr();
  cv::Mat m(img.height, img.width, CV_32FC3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const Vec3& p = img.at(x, y);
      // OpenCV stores BGR.
      m.at<cv::Vec3f>(y, x) = cv::Vec3f(static_cast<float>(p.z()), static_cast<float>(p.y()),
                                        static_cast<float>(p.x()));
    }
  if (!cv::imwrite(path, m)) throw DomainError("write_exr failed: " + path);
}

Image read_exr(const std::string& path) {
  enable_exr();
  cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (m.empty()) throw DomainError("read_exr failed: " + path);
  if (m.channels() == 1) {
    cv::Mat c;
    cv::Mat in[] = {m, m, m};
    cv::merge(in, 3, c);
    m = c;
  }
  m.convertTo(m, CV_32FC3);
  Image img(m.cols, m.rows);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) {
      const cv::Vec3f p = m.at<cv::Vec3f>(y, x);
      img.at(x, y) = Vec3(p[2], p[1], p[0]);
    }
  return img;
}

void write_exr_scalar(const std::string& path, const ScalarImage& img) {
  enable_exr();
  cv::Mat m(img.height, img.width, CV_32FC1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) m.at<float>(y, x) = static_cast<float>(img.at(x, y));
  if (!cv::imwrite(path, m)) throw DomainError("write_exr_scalar failed: " + path);
}

ScalarImage read_exr_scalar(const std::string& path) {
  enable_exr();
  cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (m.empty()) throw DomainError("read_exr_scalar failed: " + path);
  if (m.channels() > 1) {
    std::vector<cv::Mat> ch;
    cv::split(m, ch);
    m = ch[0];
  }
  m.convertTo(m, CV_32FC1);
  ScalarImage img(m.cols, m.rows);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x) img.at(x, y) = m.at<float>(y, x);
  return img;
}

namespace {
inline double linear_to_srgb(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}
}  // namespace

void write_png_preview(const std::string& path, const Image& img) {
  cv::Mat m(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const Vec3& p = img.at(x, y);
      m.at<cv::Vec3b>(y, x) =
          cv::Vec3b(static_cast<unsigned char>(255.0 * linear_to_srgb(p.z()) + 0.5),
                    static_cast<unsigned char>(255.0 * linear_to_srgb(p.y()) + 0.5),
                    static_cast<unsigned char>(255.0 * linear_to_srgb(p.x()) + 0.5));
    }
  if (!cv::imwrite(path, m)) throw DomainError("write_png_preview failed: " + path);
}

void write_mask_png(const std::string& path, const LabelImage& img) {
  cv::Mat m(img.height, img.width, CV_16UC1);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      m.at<std::uint16_t>(y, x) = static_cast<std::uint16_t>(img.at(x, y) + 1);
  if (!cv::imwrite(path, m)) throw DomainError("write_mask_png failed: " + path);
}

LabelImage read_mask_png(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_UNCHANGED);
  if (m.empty()) throw DomainError("read_mask_png failed: " + path);
  if (m.type() != CV_16UC1) m.convertTo(m, CV_16UC1);
  LabelImage img(m.cols, m.rows);
  for (int y = 0; y < m.rows; ++y)
    for (int x = 0; x < m.cols; ++x)
      img.at(x, y) = static_cast<int>(m.at<std::uint16_t>(y, x)) - 1;
  return img;
}

}  // namespace facade
