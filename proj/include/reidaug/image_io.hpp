#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "errors.hpp"
#include "image.hpp"

namespace reidaug::io {

namespace detail {

inline ImageTensor from_bgr8(const cv::Mat &bgr) {
  ImageTensor img(3, static_cast<std::size_t>(bgr.rows), static_cast<std::size_t>(bgr.cols));
  for (int y = 0; y < bgr.rows; ++y) {
    const auto *row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      // OpenCV is BGR; ImageTensor channel 0 is R.
      img.at(0, y, x) = row[x][2];
      img.at(1, y, x) = row[x][1];
      img.at(2, y, x) = row[x][0];
    }
  }
  return img;
}

inline cv::Mat to_bgr8(const ImageTensor &img) {
  if (img.channels() != 3)
    throw ArgumentError("to_bgr8: expected 3 channels, got " + std::to_string(img.channels()));
  const float lo = img.range().lo, hi = img.range().hi;
  auto quantize = [&](float v) {
    const float unit = (std::clamp(v, lo, hi) - lo) / (hi - lo);
    return static_cast<unsigned char>(std::lround(unit * 255.0f));
  };
  cv::Mat out(static_cast<int>(img.height()), static_cast<int>(img.width()), CV_8UC3);
  for (int y = 0; y < out.rows; ++y) {
    auto *row = out.ptr<cv::Vec3b>(y);
    for (int x = 0; x < out.cols; ++x)
      row[x] = cv::Vec3b(quantize(img.at(2, y, x)), quantize(img.at(1, y, x)), quantize(img.at(0, y, x)));
  }
  return out;
}

} // namespace detail

/// Reads an 8-bit raster (PNG, JPEG, ...) as RGB in [0,255].
inline ImageTensor read_rgb(const std::filesystem::path &path) {
  if (!std::filesystem::exists(path))
    throw IoError("no such image: " + path.string());
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty())
    throw IoError("cannot decode image: " + path.string());
  return detail::from_bgr8(bgr);
}

/// Writes an 8-bit RGB PNG. Compression settings are pinned so output bytes are reproducible.
inline void write_png(const std::filesystem::path &path, const ImageTensor &img) {
  if (path.has_parent_path())
    std::filesystem::create_directories(path.parent_path());
  const std::vector<int> params{cv::IMWRITE_PNG_COMPRESSION, 6, cv::IMWRITE_PNG_STRATEGY,
                                cv::IMWRITE_PNG_STRATEGY_DEFAULT};
  if (!cv::imwrite(path.string(), detail::to_bgr8(img), params))
    throw IoError("cannot write image: " + path.string());
}

/// Quantizes to 8 bits and back, the same rounding write_png applies.
inline ImageTensor quantize8(const ImageTensor &img) { return detail::from_bgr8(detail::to_bgr8(img)); }

/// Bilinear resize of each channel; keeps the value range tag.
inline ImageTensor resize(const ImageTensor &img, std::size_t height, std::size_t width) {
  if (img.height() == height && img.width() == width)
    return img;
  ImageTensor out(img.channels(), height, width, 0.0f, img.range());
  for (std::size_t c = 0; c < img.channels(); ++c) {
    cv::Mat src(static_cast<int>(img.height()), static_cast<int>(img.width()), CV_32FC1,
                const_cast<float *>(img.pixels().data() + c * img.height() * img.width()));
    cv::Mat dst(static_cast<int>(height), static_cast<int>(width), CV_32FC1,
                out.pixels().data() + c * height * width);
    cv::resize(src, dst, dst.size(), 0, 0, cv::INTER_LINEAR);
  }
  out.clamp_to_range();
  return out;
}

/**
 * Tiles images into a grid. columns[i] is drawn top to bottom in column i.
 * All images must share one shape; cells are separated by `pad` white pixels.
 */
inline ImageTensor compose_grid(const std::vector<std::vector<ImageTensor>> &columns, std::size_t pad = 2) {
  if (columns.empty() || columns.front().empty())
    throw ArgumentError("compose_grid: nothing to draw");
  const auto &ref = columns.front().front();
  std::size_t rows = 0;
  for (const auto &col : columns)
    rows = std::max(rows, col.size());
  const std::size_t h = ref.height(), w = ref.width();
  ImageTensor grid(3, rows * h + (rows + 1) * pad, columns.size() * w + (columns.size() + 1) * pad, 255.0f);
  for (std::size_t ci = 0; ci < columns.size(); ++ci) {
    for (std::size_t ri = 0; ri < columns[ci].size(); ++ri) {
      const auto &cell = columns[ci][ri];
      if (!cell.same_shape(ref))
        throw ArgumentError("compose_grid: mixed image shapes");
      const std::size_t oy = pad + ri * (h + pad), ox = pad + ci * (w + pad);
      for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x)
            grid.at(c, oy + y, ox + x) = cell.at(c, y, x);
    }
  }
  return grid;
}

} // namespace reidaug::io
