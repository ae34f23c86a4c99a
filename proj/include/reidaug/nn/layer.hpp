#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "../errors.hpp"
#include "../rng.hpp"
#include "tensor.hpp"

namespace reidaug::nn {

enum class OpKind {
  conv2d,
  conv2d_transpose,
  batch_norm,
  prelu,
  sigmoid,
  tanh,
  dropout,
  fully_connected,
  global_avg_pool,
  concat_channels,
  softmax_cross_entropy,
  mse,
  bce,
};

inline const char *to_string(OpKind k) {
  switch (k) {
  case OpKind::conv2d:
    return "conv2d";
  case OpKind::conv2d_transpose:
    return "conv2d_transpose";
  case OpKind::batch_norm:
    return "batch_norm";
  case OpKind::prelu:
    return "prelu";
  case OpKind::sigmoid:
    return "sigmoid";
  case OpKind::tanh:
    return "tanh";
  case OpKind::dropout:
    return "dropout";
  case OpKind::fully_connected:
    return "fully_connected";
  case OpKind::global_avg_pool:
    return "global_avg_pool";
  case OpKind::concat_channels:
    return "concat_channels";
  case OpKind::softmax_cross_entropy:
    return "softmax_cross_entropy";
  case OpKind::mse:
    return "mse";
  case OpKind::bce:
    return "bce";
  }
  return "?";
}

enum class Mode { train, eval };

/// Learnable tensor with its accumulated gradient.
template <typename T> struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad.fill(T{0}); }
};

/// Non-learnable persistent state (batch-norm running statistics).
template <typename T> struct Buffer {
  std::string name;
  Tensor<T> *value;
};

/**
 * A differentiable operator with retained forward context.
 *
 * backward() consumes the context of the most recent forward(), returns the
 * input gradient and adds parameter gradients into Parameter::grad.
 */
template <typename T> class Layer {
public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer &) = default;
  Layer &operator=(const Layer &) = default;

  virtual OpKind kind() const = 0;
  virtual Tensor<T> forward(const Tensor<T> &x, Mode mode) = 0;
  virtual Tensor<T> backward(const Tensor<T> &grad_out) = 0;
  virtual std::string descriptor() const = 0;

  virtual std::vector<Parameter<T> *> parameters() { return {}; }
  virtual std::vector<Buffer<T>> buffers() { return {}; }
  /// Re-draws learnable parameters from the DCGAN initialization.
  virtual void reset_parameters(Rng &) {}

  const std::string &name() const noexcept { return name_; }

protected:
  void require_context(bool has_context) const {
    if (!has_context)
      throw UsageError(name_ + ": backward() without a retained forward context");
  }

  std::string name_;
};

template <typename T> using LayerPtr = std::unique_ptr<Layer<T>>;

inline constexpr double kInitStd = 0.02;

template <typename T> void fill_normal(Tensor<T> &t, Rng &rng, double stddev) {
  for (auto &v : t.vec())
    v = static_cast<T>(rng.normal(0.0, stddev));
}

} // namespace reidaug::nn
