#pragma once

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "conv.hpp"
#include "layer.hpp"

namespace reidaug::nn {

namespace detail {

/// Splits NCHW (or NC) into (batch, channels, plane size).
inline void channel_layout(const Shape &s, const std::string &node, std::size_t &n, std::size_t &c,
                           std::size_t &plane) {
  if (s.size() != 2 && s.size() != 4)
    throw ShapeError(node, "rank", "expected NC or NCHW, got " + shape_str(s));
  n = s[0];
  c = s[1];
  plane = s.size() == 4 ? s[2] * s[3] : 1;
}

} // namespace detail

/**
 * Per-channel batch normalization over (N, H, W).
 * Training mode normalizes with batch statistics and updates running
 * estimates (unbiased variance); eval mode uses the running estimates.
 */
template <typename T> class BatchNorm final : public Layer<T> {
public:
  BatchNorm(std::string name, std::size_t channels, double eps = 1e-5, double momentum = 0.1)
      : Layer<T>(std::move(name)), channels_(channels), eps_(eps), momentum_(momentum),
        gamma_(this->name_ + ".gamma", Tensor<T>({channels}, T{1})),
        beta_(this->name_ + ".beta", Tensor<T>({channels}, T{0})), running_mean_({channels}, T{0}),
        running_var_({channels}, T{1}) {
    if (!(eps > 0.0))
      throw ArgumentError(this->name_ + ": epsilon must be > 0");
    if (!(momentum >= 0.0 && momentum <= 1.0))
      throw ArgumentError(this->name_ + ": momentum must be in [0,1]");
  }

  OpKind kind() const override { return OpKind::batch_norm; }
  std::string descriptor() const override { return "batch_norm(" + std::to_string(channels_) + ")"; }
  std::vector<Parameter<T> *> parameters() override { return {&gamma_, &beta_}; }
  std::vector<Buffer<T>> buffers() override {
    return {{this->name_ + ".running_mean", &running_mean_}, {this->name_ + ".running_var", &running_var_}};
  }
  void reset_parameters(Rng &) override {
    gamma_.value.fill(T{1});
    beta_.value.fill(T{0});
    running_mean_.fill(T{0});
    running_var_.fill(T{1});
  }

  Parameter<T> &gamma() noexcept { return gamma_; }
  Parameter<T> &beta() noexcept { return beta_; }
  const Tensor<T> &running_mean() const noexcept { return running_mean_; }
  const Tensor<T> &running_var() const noexcept { return running_var_; }

  Tensor<T> forward(const Tensor<T> &x, Mode mode) override {
    std::size_t n, c, plane;
    detail::channel_layout(x.shape(), this->name_, n, c, plane);
    if (c != channels_)
      throw ShapeError(this->name_, "channels", "expected " + std::to_string(channels_) + ", got " + std::to_string(c));
    const std::size_t m = n * plane;
    if (mode == Mode::train && m < 2)
      throw ShapeError(this->name_, "batch", "training-mode statistics need more than one value per channel");
    xhat_ = Tensor<T>(x.shape());
    inv_std_.assign(c, T{0});
    Tensor<T> y(x.shape());
    for (std::size_t ch = 0; ch < c; ++ch) {
      T mean, var;
      if (mode == Mode::train) {
        double s = 0.0;
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t i = 0; i < plane; ++i)
            s += x[(b * c + ch) * plane + i];
        const double mu = s / static_cast<double>(m);
        double ss = 0.0;
        for (std::size_t b = 0; b < n; ++b)
          for (std::size_t i = 0; i < plane; ++i) {
            const double d = x[(b * c + ch) * plane + i] - mu;
            ss += d * d;
          }
        mean = static_cast<T>(mu);
        var = static_cast<T>(ss / static_cast<double>(m));
        const T unbiased = static_cast<T>(ss / static_cast<double>(m - 1));
        running_mean_[ch] = static_cast<T>((1.0 - momentum_) * running_mean_[ch] + momentum_ * mean);
        running_var_[ch] = static_cast<T>((1.0 - momentum_) * running_var_[ch] + momentum_ * unbiased);
      } else {
        mean = running_mean_[ch];
        var = running_var_[ch];
      }
      const T inv = static_cast<T>(1.0 / std::sqrt(static_cast<double>(var) + eps_));
      inv_std_[ch] = inv;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < plane; ++i) {
          const std::size_t k = (b * c + ch) * plane + i;
          xhat_[k] = (x[k] - mean) * inv;
          y[k] = gamma_.value[ch] * xhat_[k] + beta_.value[ch];
        }
    }
    mode_ = mode;
    has_context_ = true;
    return y;
  }

  Tensor<T> backward(const Tensor<T> &gy) override {
    this->require_context(has_context_);
    xhat_.check_same(gy, this->name_);
    std::size_t n, c, plane;
    detail::channel_layout(gy.shape(), this->name_, n, c, plane);
    const std::size_t m = n * plane;
    Tensor<T> gx(gy.shape());
    for (std::size_t ch = 0; ch < c; ++ch) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < plane; ++i) {
          const std::size_t k = (b * c + ch) * plane + i;
          sum_g += gy[k];
          sum_gx += static_cast<double>(gy[k]) * xhat_[k];
        }
      gamma_.grad[ch] += static_cast<T>(sum_gx);
      beta_.grad[ch] += static_cast<T>(sum_g);
      const double gamma = gamma_.value[ch], inv = inv_std_[ch];
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < plane; ++i) {
          const std::size_t k = (b * c + ch) * plane + i;
          if (mode_ == Mode::train) {
            const double dxhat = gy[k] * gamma;
            gx[k] = static_cast<T>(inv / static_cast<double>(m) *
                                   (static_cast<double>(m) * dxhat - sum_g * gamma - xhat_[k] * sum_gx * gamma));
          } else {
            gx[k] = static_cast<T>(gy[k] * gamma * inv);
          }
        }
    }
    has_context_ = false;
    return gx;
  }

private:
  std::size_t channels_;
  double eps_;
  double momentum_;
  Parameter<T> gamma_;
  Parameter<T> beta_;
  Tensor<T> running_mean_;
  Tensor<T> running_var_;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
  Mode mode_ = Mode::train;
  bool has_context_ = false;
};

/// Parametric ReLU with one learnable slope per channel.
template <typename T> class PReLU final : public Layer<T> {
public:
  PReLU(std::string name, std::size_t channels, T init = T(0.25))
      : Layer<T>(std::move(name)), init_(init), slope_(this->name_ + ".slope", Tensor<T>({channels}, init)) {}

  OpKind kind() const override { return OpKind::prelu; }
  std::string descriptor() const override { return "prelu(" + std::to_string(slope_.value.size()) + ")"; }
  std::vector<Parameter<T> *> parameters() override { return {&slope_}; }
  void reset_parameters(Rng &) override { slope_.value.fill(init_); }
  Parameter<T> &slope() noexcept { return slope_; }

  Tensor<T> forward(const Tensor<T> &x, Mode) override {
    std::size_t n, c, plane;
    detail::channel_layout(x.shape(), this->name_, n, c, plane);
    if (c != slope_.value.size())
      throw ShapeError(this->name_, "channels",
                       "expected " + std::to_string(slope_.value.size()) + ", got " + std::to_string(c));
    Tensor<T> y(x.shape());
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < plane; ++i) {
          const std::size_t k = (b * c + ch) * plane + i;
          y[k] = x[k] > T{0} ? x[k] : slope_.value[ch] * x[k];
        }
    input_ = x;
    has_context_ = true;
    return y;
  }

  Tensor<T> backward(const Tensor<T> &gy) override {
    this->require_context(has_context_);
    input_.check_same(gy, this->name_);
    std::size_t n, c, plane;
    detail::channel_layout(gy.shape(), this->name_, n, c, plane);
    Tensor<T> gx(gy.shape());
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < plane; ++i) {
          const std::size_t k = (b * c + ch) * plane + i;
          if (input_[k] > T{0}) {
            gx[k] = gy[k];
          } else {
            gx[k] = slope_.value[ch] * gy[k];
            slope_.grad[ch] += gy[k] * input_[k];
          }
        }
    has_context_ = false;
    return gx;
  }

private:
  T init_;
  Parameter<T> slope_;
  Tensor<T> input_;
  bool has_context_ = false;
};

/// Elementwise logistic function.
template <typename T> class Sigmoid final : public Layer<T> {
public:
  explicit Sigmoid(std::string name) : Layer<T>(std::move(name)) {}
  OpKind kind() const override { return OpKind::sigmoid; }
  std::string descriptor() const override { return "sigmoid"; }

  static T apply(T v) {
    // Split by sign so exp never overflows.
    if (v >= T{0})
      return T{1} / (T{1} + std::exp(-v));
    const T e = std::exp(v);
    return e / (T{1} + e);
  }

  Tensor<T> forward(const Tensor<T> &x, Mode) override {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
      y[i] = apply(x[i]);
    output_ = y;
    has_context_ = true;
    return y;
  }

  Tensor<T> backward(const Tensor<T> &gy) override {
    this->require_context(has_context_);
    output_.check_same(gy, this->name_);
    Tensor<T> gx(gy.shape());
    for (std::size_t i = 0; i < gy.size(); ++i)
      gx[i] = gy[i] * output_[i] * (T{1} - output_[i]);
    has_context_ = false;
    return gx;
  }

private:
  Tensor<T> output_;
  bool has_context_ = false;
};

template <typename T> class Tanh final : public Layer<T> {
public:
  explicit Tanh(std::string name) : Layer<T>(std::move(name)) {}
  OpKind kind() const override { return OpKind::tanh; }
  std::string descriptor() const override { return "tanh"; }

  Tensor<T> forward(const Tensor<T> &x, Mode) override {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
      y[i] = std::tanh(x[i]);
    output_ = y;
    has_context_ = true;
    return y;
  }

  Tensor<T> backward(const Tensor<T> &gy) override {
    this->require_context(has_context_);
    output_.check_same(gy, this->name_);
    Tensor<T> gx(gy.shape());
    for (std::size_t i = 0; i < gy.size(); ++i)
      gx[i] = gy[i] * (T{1} - output_[i] * output_[i]);
    has_context_ = false;
    return gx;
  }

private:
  Tensor<T> output_;
  bool has_context_ = false;
};

/**
 * Inverted dropout: in training, zeroes each unit with probability p and
 * scales survivors by 1/(1-p). Identity in eval mode.
 */
template <typename T> class Dropout final : public Layer<T> {
public:
  Dropout(std::string name, double p, std::uint64_t seed = 0) : Layer<T>(std::move(name)), p_(p), rng_(seed) {
    if (!(p >= 0.0 && p < 1.0))
      throw ArgumentError(this->name_ + ": dropout probability must be in [0,1)");
  }

  OpKind kind() const override { return OpKind::dropout; }
  std::string descriptor() const override { return "dropout(" + std::to_string(p_) + ")"; }
  double probability() const noexcept { return p_; }

  /// Selects the RNG substream for subsequent masks.
  void reseed(std::uint64_t seed) { rng_ = Rng(seed); }

  Tensor<T> forward(const Tensor<T> &x, Mode mode) override {
    mask_ = Tensor<T>(x.shape(), T{1});
    if (mode == Mode::train && p_ > 0.0) {
      const T keep_scale = static_cast<T>(1.0 / (1.0 - p_));
      for (auto &m : mask_.vec())
        m = rng_.uniform() < p_ ? T{0} : keep_scale;
    }
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i)
      y[i] = x[i] * mask_[i];
    has_context_ = true;
    return y;
  }

  Tensor<T> backward(const Tensor<T> &gy) override {
    this->require_context(has_context_);
    mask_.check_same(gy, this->name_);
    Tensor<T> gx(gy.shape());
    for (std::size_t i = 0; i < gy.size(); ++i)
      gx[i] = gy[i] * mask_[i];
    has_context_ = false;
    return gx;
  }

private:
  double p_;
  Rng rng_;
  Tensor<T> mask_;
  bool has_context_ = false;
};

/// y = x W^T + b with W (out, in). Inputs of rank > 2 are flattened per sample.
template <typename T> class Linear final : public Layer<T> {
public:
  Linear(std::string name, std::size_t in_features, std::size_t out_features)
      : Layer<T>(std::move(name)), in_(in_features), out_(out_features),
        weight_(this->name_ + ".weight", Tensor<T>({out_features, in_features})),
        bias_(this->name_ + ".bias", Tensor<T>({out_features})) {
    if (in_features == 0 || out_features == 0)
      throw ArgumentError(this->name_ + ": feature counts must be positive");
  }

  OpKind kind() const override { return OpKind::fully_connected; }
  std::string descriptor() const override {
    return "fully_connected(" + std::to_string(in_) + "->" + std::to_string(out_) + ")";
  }
  std::vector<Parameter<T> *> parameters() override { return {&weight_, &bias_}; }
  void reset_parameters(Rng &rng) override {
    fill_normal(weight_.value, rng, kInitStd);
    bias_.value.fill(T{0});
  }
  Parameter<T> &weight() noexcept { return weight_; }
  Parameter<T> &bias() noexcept { return bias_; }
  std::size_t out_features() const noexcept { return out_; }

  Tensor<T> forward(const Tensor<T> &x, Mode) override {
    if (x.rank() < 2)
      throw ShapeError(this->name_, "rank", "expected a batch, got " + shape_str(x.shape()));
    const std::size_t n = x.dim(0);
    if (x.size() / n != in_)
      throw ShapeError(this->name_, "features",
                       "expected " + std::to_string(in_) + " per sample, got " + shape_str(x.shape()));
    Tensor<T> y({n, out_});
    ConstMatMap<T> xm(x.data(), n, in_);
    MatMap<T> ym(y.data(), n, out_);
    ym.noalias() = xm * ConstMatMap<T>(weight_.value.data(), out_, in_).transpose();
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t o = 0; o < out_; ++o)
        ym(b, o) += bias_.value[o];
    input_ = x;
    has_context_ = true;
    return y;
  }

  Tensor<T> backward(const Tensor<T> &gy) override {
    this->require_context(has_context_);
    const std::size_t n = input_.dim(0);
    if (gy.shape() != Shape{n, out_})
      throw ShapeError(this->name_, "grad_out", shape_str(gy.shape()));
    ConstMatMap<T> g(gy.data(), n, out_);
    ConstMatMap<T> xm(input_.data(), n, in_);
    MatMap<T>(weight_.grad.data(), out_, in_).noalias() += g.transpose() * xm;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t o = 0; o < out_; ++o)
        bias_.grad[o] += g(b, o);
    Tensor<T> gx(input_.shape());
    MatMap<T>(gx.data(), n, in_).noalias() = g * ConstMatMap<T>(weight_.value.data(), out_, in_);
    has_context_ = false;
    return gx;
  }

private:
  std::size_t in_, out_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  Tensor<T> input_;
  bool has_context_ = false;
};

/// (N, C, H, W) -> (N, C) by spatial averaging.
template <typename T> class GlobalAvgPool final : public Layer<T> {
public:
  explicit GlobalAvgPool(std::string name) : Layer<T>(std::move(name)) {}
  OpKind kind() const override { return OpKind::global_avg_pool; }
  std::string descriptor() const override { return "global_avg_pool"; }

  Tensor<T> forward(const Tensor<T> &x, Mode) override {
    if (x.rank() != 4)
      throw ShapeError(this->name_, "rank", "expected NCHW, got " + shape_str(x.shape()));
    in_shape_ = x.shape();
    const std::size_t n = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
    Tensor<T> y({n, c});
    for (std::size_t k = 0; k < n * c; ++k) {
      T acc{0};
      for (std::size_t i = 0; i < plane; ++i)
        acc += x[k * plane + i];
      y[k] = acc / static_cast<T>(plane);
    }
    has_context_ = true;
    return y;
  }

  Tensor<T> backward(const Tensor<T> &gy) override {
    this->require_context(has_context_);
    const std::size_t n = in_shape_[0], c = in_shape_[1], plane = in_shape_[2] * in_shape_[3];
    if (gy.shape() != Shape{n, c})
      throw ShapeError(this->name_, "grad_out", shape_str(gy.shape()));
    Tensor<T> gx(in_shape_);
    for (std::size_t k = 0; k < n * c; ++k)
      for (std::size_t i = 0; i < plane; ++i)
        gx[k * plane + i] = gy[k] / static_cast<T>(plane);
    has_context_ = false;
    return gx;
  }

private:
  Shape in_shape_;
  bool has_context_ = false;
};

// ---------------------------------------------------------------------------
// Channel concatenation (skip connections, conditional discriminator input)
// ---------------------------------------------------------------------------

template <typename T> Tensor<T> concat_channels(const Tensor<T> &a, const Tensor<T> &b) {
  if (a.rank() != 4 || b.rank() != 4)
    throw ShapeError("concat_channels", "rank", shape_str(a.shape()) + " + " + shape_str(b.shape()));
  if (a.dim(0) != b.dim(0))
    throw ShapeError("concat_channels", "batch", shape_str(a.shape()) + " + " + shape_str(b.shape()));
  if (a.dim(2) != b.dim(2))
    throw ShapeError("concat_channels", "height", shape_str(a.shape()) + " + " + shape_str(b.shape()));
  if (a.dim(3) != b.dim(3))
    throw ShapeError("concat_channels", "width", shape_str(a.shape()) + " + " + shape_str(b.shape()));
  const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), plane = a.dim(2) * a.dim(3);
  Tensor<T> y({n, ca + cb, a.dim(2), a.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(a.data() + i * ca * plane, ca * plane, y.data() + i * (ca + cb) * plane);
    std::copy_n(b.data() + i * cb * plane, cb * plane, y.data() + i * (ca + cb) * plane + ca * plane);
  }
  return y;
}

/// Backward of concat_channels: splits a gradient into its first `ca` channels and the rest.
template <typename T> std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T> &g, std::size_t ca) {
  if (g.rank() != 4 || ca > g.dim(1))
    throw ShapeError("split_channels", "channels", shape_str(g.shape()));
  const std::size_t n = g.dim(0), c = g.dim(1), cb = c - ca, plane = g.dim(2) * g.dim(3);
  Tensor<T> a({n, ca, g.dim(2), g.dim(3)}), b({n, cb, g.dim(2), g.dim(3)});
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(g.data() + i * c * plane, ca * plane, a.data() + i * ca * plane);
    std::copy_n(g.data() + i * c * plane + ca * plane, cb * plane, b.data() + i * cb * plane);
  }
  return {std::move(a), std::move(b)};
}

// ---------------------------------------------------------------------------
// Sequential container
// ---------------------------------------------------------------------------

template <typename T> class Sequential {
public:
  Sequential() = default;
  Sequential(Sequential &&) noexcept = default;
  Sequential &operator=(Sequential &&) noexcept = default;

  template <typename L, typename... Args> L &add(Args &&...args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L &ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor<T> forward(Tensor<T> x, Mode mode) {
    for (auto &l : layers_)
      x = l->forward(x, mode);
    return x;
  }

  Tensor<T> backward(Tensor<T> g) {
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
      g = (*it)->backward(g);
    return g;
  }

  std::vector<Parameter<T> *> parameters() {
    std::vector<Parameter<T> *> out;
    for (auto &l : layers_)
      for (auto *p : l->parameters())
        out.push_back(p);
    return out;
  }

  std::vector<Buffer<T>> buffers() {
    std::vector<Buffer<T>> out;
    for (auto &l : layers_)
      for (auto b : l->buffers())
        out.push_back(b);
    return out;
  }

  void reset_parameters(Rng &rng) {
    for (auto &l : layers_)
      l->reset_parameters(rng);
  }

  std::string descriptor() const {
    std::string d = "[";
    for (std::size_t i = 0; i < layers_.size(); ++i)
      d += (i ? "," : "") + layers_[i]->descriptor();
    return d + "]";
  }

  std::size_t size() const noexcept { return layers_.size(); }
  Layer<T> &operator[](std::size_t i) { return *layers_[i]; }

private:
  std::vector<LayerPtr<T>> layers_;
};

template <typename T> void zero_grad(const std::vector<Parameter<T> *> &params) {
  for (auto *p : params)
    p->zero_grad();
}

} // namespace reidaug::nn
