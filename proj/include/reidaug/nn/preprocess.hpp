#pragma once

#include <vector>

#include "../image.hpp"
#include "tensor.hpp"

namespace reidaug::nn {

/// Affine map between pixel values [0,255] and network values: net = pixel * scale + offset.
struct PixelScaling {
  double scale = 1.0 / 127.5;
  double offset = -1.0;

  static PixelScaling symmetric() { return {1.0 / 127.5, -1.0}; } // [-1, 1]
  static PixelScaling unit() { return {1.0 / 255.0, 0.0}; }       // [0, 1]

  double to_net(double pixel) const { return pixel * scale + offset; }
  double to_pixel(double net) const { return (net - offset) / scale; }
};

/// Packs images of one shape into an NCHW batch in network scale.
template <typename T>
Tensor<T> images_to_batch(const std::vector<const ImageTensor *> &images, PixelScaling s = PixelScaling::symmetric()) {
  if (images.empty())
    throw ArgumentError("images_to_batch: empty batch");
  const auto &ref = *images.front();
  Tensor<T> out({images.size(), ref.channels(), ref.height(), ref.width()});
  const std::size_t n = ref.size();
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (!images[i]->same_shape(ref))
      throw ShapeError("images_to_batch", "image shape", "all images in a batch must match");
    const auto &px = images[i]->pixels();
    for (std::size_t k = 0; k < n; ++k)
      out[i * n + k] = static_cast<T>(s.to_net(px[k]));
  }
  return out;
}

/// Unpacks sample `index` of an NCHW batch back to pixel scale, clamped to [0,255].
template <typename T> ImageTensor batch_to_image(const Tensor<T> &batch, std::size_t index,
                                                 PixelScaling s = PixelScaling::symmetric()) {
  if (batch.rank() != 4 || index >= batch.dim(0))
    throw ShapeError("batch_to_image", "batch", shape_str(batch.shape()));
  ImageTensor img(batch.dim(1), batch.dim(2), batch.dim(3));
  const std::size_t n = img.size();
  for (std::size_t k = 0; k < n; ++k)
    img.pixels()[k] = static_cast<float>(s.to_pixel(static_cast<double>(batch[index * n + k])));
  img.clamp_to_range();
  return img;
}

} // namespace reidaug::nn
