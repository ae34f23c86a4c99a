#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "tensor.hpp"

namespace reidaug::nn {

/// Loss value with its gradient w.r.t. the prediction.
template <typename T> struct LossResult {
  T value{};
  Tensor<T> grad;
  std::size_t clamped = 0; // predictions moved into [eps, 1-eps]
};

/// Mean squared error over all elements: (1/n) sum (pred - target)^2.
template <typename T> LossResult<T> mse(const Tensor<T> &pred, const Tensor<T> &target) {
  pred.check_same(target, "mse");
  if (pred.empty())
    throw ArgumentError("mse: empty tensors");
  const double n = static_cast<double>(pred.size());
  LossResult<T> r;
  r.grad = Tensor<T>(pred.shape());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
    r.grad[i] = static_cast<T>(2.0 * d / n);
  }
  r.value = static_cast<T>(acc / n);
  return r;
}

inline constexpr double kBceEps = 1e-7;

/**
 * Binary cross-entropy, -(1/B) sum [u log p + (1-u) log(1-p)].
 * Predictions are clamped to [eps, 1-eps]; the gradient is evaluated at the
 * clamped point so saturated inputs still receive a signal.
 */
template <typename T> LossResult<T> bce(const Tensor<T> &pred, std::span<const T> labels) {
  if (pred.size() != labels.size())
    throw ShapeError("bce", "batch",
                     std::to_string(pred.size()) + " predictions vs " + std::to_string(labels.size()) + " labels");
  if (pred.empty())
    throw ArgumentError("bce: empty batch");
  const double n = static_cast<double>(pred.size());
  LossResult<T> r;
  r.grad = Tensor<T>(pred.shape());
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    double p = pred[i];
    if (p < kBceEps || p > 1.0 - kBceEps) {
      p = std::clamp(p, kBceEps, 1.0 - kBceEps);
      ++r.clamped;
    }
    const double u = labels[i];
    acc += u * std::log(p) + (1.0 - u) * std::log1p(-p);
    r.grad[i] = static_cast<T>((-u / p + (1.0 - u) / (1.0 - p)) / n);
  }
  r.value = static_cast<T>(-acc / n);
  return r;
}

template <typename T> LossResult<T> bce(const Tensor<T> &pred, const std::vector<T> &labels) {
  return bce(pred, std::span<const T>(labels));
}

/// Mean over the batch of -log softmax(logits)[label]; logits are (N, K).
template <typename T> LossResult<T> softmax_cross_entropy(const Tensor<T> &logits, std::span<const int> labels) {
  if (logits.rank() != 2)
    throw ShapeError("softmax_cross_entropy", "rank", shape_str(logits.shape()));
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n)
    throw ShapeError("softmax_cross_entropy", "batch",
                     std::to_string(n) + " rows vs " + std::to_string(labels.size()) + " labels");
  LossResult<T> r;
  r.grad = Tensor<T>(logits.shape());
  double acc = 0.0;
  for (std::size_t b = 0; b < n; ++b) {
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= k)
      throw ArgumentError("softmax_cross_entropy: label out of range");
    const T *row = logits.data() + b * k;
    const double mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      z += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z);
    acc += log_z - row[labels[b]];
    for (std::size_t j = 0; j < k; ++j) {
      const double p = std::exp(row[j] - log_z);
      r.grad[b * k + j] = static_cast<T>((p - (static_cast<int>(j) == labels[b] ? 1.0 : 0.0)) / n);
    }
  }
  r.value = static_cast<T>(acc / n);
  return r;
}

template <typename T> LossResult<T> softmax_cross_entropy(const Tensor<T> &logits, const std::vector<int> &labels) {
  return softmax_cross_entropy(logits, std::span<const int>(labels));
}

} // namespace reidaug::nn
