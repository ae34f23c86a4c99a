#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "errors.hpp"

namespace reidaug {

/// Closed interval of admissible pixel values.
struct ValueRange {
  float lo = 0.0f;
  float hi = 255.0f;
  bool operator==(const ValueRange &) const = default;
};

inline constexpr ValueRange kPixelRange{0.0f, 255.0f};

/**
 * C x H x W image, planar, values as reals. Ingested images live in [0,255];
 * the range tag travels with the pixels so callers never guess the scale.
 */
class ImageTensor {
public:
  ImageTensor() = default;
  ImageTensor(std::size_t channels, std::size_t height, std::size_t width, float fill = 0.0f,
              ValueRange range = kPixelRange)
      : channels_(channels), height_(height), width_(width), range_(range),
        pixels_(channels * height * width, fill) {}
  ImageTensor(std::size_t channels, std::size_t height, std::size_t width, std::vector<float> pixels,
              ValueRange range = kPixelRange)
      : channels_(channels), height_(height), width_(width), range_(range), pixels_(std::move(pixels)) {
    if (pixels_.size() != channels * height * width)
      throw ArgumentError("ImageTensor: pixel count does not match " + std::to_string(channels) + "x" +
                          std::to_string(height) + "x" + std::to_string(width));
  }

  std::size_t channels() const noexcept { return channels_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t size() const noexcept { return pixels_.size(); }
  ValueRange range() const noexcept { return range_; }

  float &at(std::size_t c, std::size_t y, std::size_t x) { return pixels_[(c * height_ + y) * width_ + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return pixels_[(c * height_ + y) * width_ + x]; }

  std::vector<float> &pixels() noexcept { return pixels_; }
  const std::vector<float> &pixels() const noexcept { return pixels_; }

  bool same_shape(const ImageTensor &o) const noexcept {
    return channels_ == o.channels_ && height_ == o.height_ && width_ == o.width_;
  }

  bool in_range() const {
    return std::all_of(pixels_.begin(), pixels_.end(),
                       [&](float v) { return std::isfinite(v) && v >= range_.lo && v <= range_.hi; });
  }

  void clamp_to_range() {
    for (auto &v : pixels_)
      v = std::clamp(v, range_.lo, range_.hi);
  }

  bool operator==(const ImageTensor &) const = default;

private:
  std::size_t channels_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  ValueRange range_{};
  std::vector<float> pixels_;
};

} // namespace reidaug
