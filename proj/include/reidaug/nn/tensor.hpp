#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "../errors.hpp"

namespace reidaug::nn {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape &s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape &s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i)
      out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

/**
 * Dense row-major tensor. Value type; copies are deep.
 * Network activations use NCHW layout.
 */
template <typename T> class Tensor {
public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_numel(shape_))
      throw ArgumentError("Tensor: data length " + std::to_string(data_.size()) + " does not match shape " +
                          shape_str(shape_));
  }

  const Shape &shape() const noexcept { return shape_; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T *data() noexcept { return data_.data(); }
  const T *data() const noexcept { return data_.data(); }
  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  std::vector<T> &vec() noexcept { return data_; }
  const std::vector<T> &vec() const noexcept { return data_; }

  T &operator[](std::size_t i) { return data_[i]; }
  const T &operator[](std::size_t i) const { return data_[i]; }

  T &at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T &at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(Shape s) const {
    if (shape_numel(s) != data_.size())
      throw ArgumentError("Tensor::reshaped: " + shape_str(shape_) + " -> " + shape_str(s));
    return Tensor(std::move(s), data_);
  }

  /// Slice of the leading (batch) dimension, [begin, end).
  Tensor batch_slice(std::size_t begin, std::size_t end) const {
    Shape s = shape_;
    const std::size_t stride = data_.size() / shape_[0];
    s[0] = end - begin;
    return Tensor(s, std::vector<T>(data_.begin() + begin * stride, data_.begin() + end * stride));
  }

  Tensor &operator+=(const Tensor &o) {
    check_same(o, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i)
      data_[i] += o.data_[i];
    return *this;
  }

  Tensor &operator*=(T s) {
    for (auto &v : data_)
      v *= s;
    return *this;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  bool operator==(const Tensor &o) const = default;

  void check_same(const Tensor &o, const std::string &node) const {
    if (shape_ != o.shape_)
      throw ShapeError(node, "shape", shape_str(shape_) + " vs " + shape_str(o.shape_));
  }

  template <typename U> Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i)
      out[i] = static_cast<U>(data_[i]);
    return out;
  }

private:
  Shape shape_;
  std::vector<T> data_;
};

/// Stacks equally-shaped tensors along a new leading dimension.
template <typename T> Tensor<T> stack(std::span<const Tensor<T>> items) {
  if (items.empty())
    throw ArgumentError("stack: no tensors");
  Shape s{items.size()};
  s.insert(s.end(), items[0].shape().begin(), items[0].shape().end());
  Tensor<T> out(s);
  const std::size_t n = items[0].size();
  for (std::size_t i = 0; i < items.size(); ++i) {
    items[0].check_same(items[i], "stack");
    std::copy(items[i].data(), items[i].data() + n, out.data() + i * n);
  }
  return out;
}

} // namespace reidaug::nn
