#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "data.hpp"
#include "errors.hpp"
#include "image.hpp"
#include "rng.hpp"

namespace reidaug {

struct OcclusionRect {
  std::size_t x = 0, y = 0; // top-left
  std::size_t w = 1, h = 1;
  std::array<float, 3> fill{0.0f, 0.0f, 0.0f};

  bool contains(std::size_t px, std::size_t py) const noexcept {
    return px >= x && px < x + w && py >= y && py < y + h;
  }
  bool operator==(const OcclusionRect &) const = default;
};

struct OccludedPair {
  ImageTensor occluded; // network input
  ImageTensor original; // reconstruction target
  OcclusionRect rect;
};

enum class FillMode { channel_mean, black, white };

struct OcclusionConfig {
  double area_ratio_min = 0.1;
  double area_ratio_max = 0.4;
  double aspect_min = 0.3; // w / h
  double aspect_max = 3.3;
  FillMode fill = FillMode::channel_mean;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(area_ratio_min > 0.0 && area_ratio_min <= area_ratio_max && area_ratio_max <= 1.0))
      throw ArgumentError("OcclusionConfig: need 0 < area_ratio_min <= area_ratio_max <= 1");
    if (!(aspect_min > 0.0 && aspect_min <= aspect_max))
      throw ArgumentError("OcclusionConfig: need 0 < aspect_min <= aspect_max");
  }
};

struct RectSample {
  OcclusionRect rect;
  bool fallback = false; // no random draw satisfied the constraints
  int attempts = 0;
};

inline constexpr int kMaxRectAttempts = 64;

namespace detail {
inline constexpr double kRatioSlack = 1e-12;

inline bool admissible(const OcclusionConfig &cfg, std::size_t img_h, std::size_t img_w, std::size_t w,
                       std::size_t h) {
  if (w < 1 || h < 1 || w > img_w || h > img_h)
    return false;
  const double area = static_cast<double>(w * h) / static_cast<double>(img_h * img_w);
  const double aspect = static_cast<double>(w) / static_cast<double>(h);
  return area >= cfg.area_ratio_min - kRatioSlack && area <= cfg.area_ratio_max + kRatioSlack &&
         aspect >= cfg.aspect_min - kRatioSlack && aspect <= cfg.aspect_max + kRatioSlack;
}
} // namespace detail

/// Every (w, h) extent that satisfies the area and aspect bounds on an img_h x img_w image.
inline std::vector<std::pair<std::size_t, std::size_t>> admissible_extents(const OcclusionConfig &cfg,
                                                                           std::size_t img_h, std::size_t img_w) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t h = 1; h <= img_h; ++h)
    for (std::size_t w = 1; w <= img_w; ++w)
      if (detail::admissible(cfg, img_h, img_w, w, h))
        out.emplace_back(w, h);
  return out;
}

/**
 * Draws an occlusion rectangle: area ratio and aspect uniform in their
 * configured ranges, position uniform over valid offsets. After 64 rejected
 * draws the largest admissible extent is centered and flagged as fallback.
 */
inline RectSample sample_rect(const OcclusionConfig &cfg, std::size_t img_h, std::size_t img_w, Rng &rng,
                              std::array<float, 3> fill = {0.0f, 0.0f, 0.0f}) {
  cfg.validate();
  if (img_h < 4 || img_w < 4)
    throw ArgumentError("sample_rect: image must be at least 4x4");
  const double total = static_cast<double>(img_h * img_w);
  for (int attempt = 1; attempt <= kMaxRectAttempts; ++attempt) {
    const double area = rng.uniform(cfg.area_ratio_min, cfg.area_ratio_max) * total;
    const double aspect = rng.uniform(cfg.aspect_min, cfg.aspect_max);
    const auto h = static_cast<std::size_t>(std::llround(std::sqrt(area / aspect)));
    const auto w = static_cast<std::size_t>(std::llround(std::sqrt(area * aspect)));
    if (!detail::admissible(cfg, img_h, img_w, w, h))
      continue;
    RectSample s;
    s.rect.w = w;
    s.rect.h = h;
    s.rect.x = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(img_w - w)));
    s.rect.y = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(img_h - h)));
    s.rect.fill = fill;
    s.attempts = attempt;
    return s;
  }
  // Fallback: largest admissible area; ties go to the taller rect.
  std::size_t best_w = 0, best_h = 0;
  for (auto [w, h] : admissible_extents(cfg, img_h, img_w))
    if (w * h > best_w * best_h || (w * h == best_w * best_h && h > best_h)) {
      best_w = w;
      best_h = h;
    }
  if (best_w == 0)
    throw ArgumentError("sample_rect: no rectangle satisfies the area/aspect constraints on a " +
                        std::to_string(img_h) + "x" + std::to_string(img_w) + " image");
  RectSample s;
  s.rect = {(img_w - best_w) / 2, (img_h - best_h) / 2, best_w, best_h, fill};
  s.fallback = true;
  s.attempts = kMaxRectAttempts;
  return s;
}

/// Copies img and paints rect with its fill. No clipping: out-of-bounds rects are rejected.
inline OccludedPair apply_occlusion(const ImageTensor &img, const OcclusionRect &rect) {
  if (img.channels() != 3)
    throw ArgumentError("apply_occlusion: expected 3 channels");
  if (rect.w < 1 || rect.h < 1 || rect.x + rect.w > img.width() || rect.y + rect.h > img.height())
    throw ArgumentError("apply_occlusion: rect out of image bounds");
  for (float f : rect.fill)
    if (!(f >= img.range().lo && f <= img.range().hi))
      throw ArgumentError("apply_occlusion: fill outside the image value range");
  OccludedPair pair{img, img, rect};
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = rect.y; y < rect.y + rect.h; ++y)
      for (std::size_t x = rect.x; x < rect.x + rect.w; ++x)
        pair.occluded.at(c, y, x) = rect.fill[c];
  return pair;
}

inline std::array<float, 3> resolve_fill(FillMode mode, const ChannelStats &stats) {
  switch (mode) {
  case FillMode::black:
    return {0.0f, 0.0f, 0.0f};
  case FillMode::white:
    return {255.0f, 255.0f, 255.0f};
  case FillMode::channel_mean:
    break;
  }
  return stats.fill();
}

/// RNG for image `index` during pass `pass`; independent of processing order.
inline Rng occlusion_stream(std::uint64_t seed, std::uint64_t pass, std::uint64_t index) {
  return Rng::substream(seed, {0x0cc1, pass, index});
}

/**
 * One occlusion per image, in dataset order. `pass` selects a fresh set of
 * rectangles (e.g. per training epoch) under the same seed.
 */
inline std::vector<OccludedPair> occlude_dataset(const Dataset &ds, const OcclusionConfig &cfg,
                                                 const ChannelStats &stats, std::uint64_t pass = 0) {
  if (ds.empty())
    throw ArgumentError("occlude_dataset: empty dataset");
  cfg.validate();
  const auto fill = resolve_fill(cfg.fill, stats);
  std::vector<OccludedPair> out;
  out.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto &img = ds.samples[i].pixels;
    Rng rng = occlusion_stream(cfg.seed, pass, i);
    out.push_back(apply_occlusion(img, sample_rect(cfg, img.height(), img.width(), rng, fill).rect));
  }
  return out;
}

} // namespace reidaug
