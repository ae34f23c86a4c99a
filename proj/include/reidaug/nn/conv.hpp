#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "layer.hpp"

namespace reidaug::nn {

template <typename T> using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T> using MatMap = Eigen::Map<RowMat<T>>;
template <typename T> using ConstMatMap = Eigen::Map<const RowMat<T>>;

/// Geometry of a strided convolution from a C x H x W plane set to Ho x Wo.
struct ConvGeometry {
  std::size_t channels, height, width;
  std::size_t kernel, stride, pad;
  std::size_t out_h, out_w;

  std::size_t col_rows() const { return channels * kernel * kernel; }
  std::size_t col_cols() const { return out_h * out_w; }
};

/// floor((in + 2 pad - kernel) / stride) + 1, or 0 when the kernel does not fit.
inline std::size_t conv_out_dim(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  if (in + 2 * pad < kernel)
    return 0;
  return (in + 2 * pad - kernel) / stride + 1;
}

/// (in - 1) stride - 2 pad + kernel; inverse of conv_out_dim for exact fits.
inline std::size_t conv_transpose_out_dim(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t pad) {
  const std::size_t full = (in - 1) * stride + kernel;
  return full > 2 * pad ? full - 2 * pad : 0;
}

template <typename T> void im2col(const T *img, const ConvGeometry &g, T *col) {
  const std::size_t cols = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ky = 0; ky < g.kernel; ++ky)
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        T *row = col + ((c * g.kernel + ky) * g.kernel + kx) * cols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<std::ptrdiff_t>(g.height) &&
                                ix < static_cast<std::ptrdiff_t>(g.width);
            row[oy * g.out_w + ox] = inside ? img[(c * g.height + iy) * g.width + ix] : T{0};
          }
        }
      }
}

/// Adjoint of im2col: scatters-adds columns back onto the image planes.
template <typename T> void col2im(const T *col, const ConvGeometry &g, T *img) {
  const std::size_t cols = g.col_cols();
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t ky = 0; ky < g.kernel; ++ky)
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const T *row = col + ((c * g.kernel + ky) * g.kernel + kx) * cols;
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.height))
            continue;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.width))
              continue;
            img[(c * g.height + iy) * g.width + ix] += row[oy * g.out_w + ox];
          }
        }
      }
}

struct ConvOptions {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 0;
  bool bias = true;

  void validate(const std::string &node) const {
    if (in_channels == 0 || out_channels == 0 || kernel == 0)
      throw ArgumentError(node + ": channels and kernel must be positive");
    if (stride < 1)
      throw ArgumentError(node + ": stride must be >= 1");
  }
};

inline std::string conv_descriptor(const char *kind, const ConvOptions &o) {
  return std::string(kind) + "(" + std::to_string(o.in_channels) + "->" + std::to_string(o.out_channels) +
         ",k" + std::to_string(o.kernel) + ",s" + std::to_string(o.stride) + ",p" + std::to_string(o.pad) +
         (o.bias ? ",b" : "") + ")";
}

/// 2-D convolution, weight (out, in, k, k).
template <typename T> class Conv2d final : public Layer<T> {
public:
  Conv2d(std::string name, ConvOptions opts)
      : Layer<T>(std::move(name)), opts_(opts),
        weight_(this->name_ + ".weight", Tensor<T>({opts.out_channels, opts.in_channels, opts.kernel, opts.kernel})),
        bias_(this->name_ + ".bias", Tensor<T>({opts.bias ? opts.out_channels : 0})) {
    opts_.validate(this->name_);
  }

  OpKind kind() const override { return OpKind::conv2d; }
  std::string descriptor() const override { return conv_descriptor("conv2d", opts_); }
  const ConvOptions &options() const noexcept { return opts_; }

  std::vector<Parameter<T> *> parameters() override {
    if (opts_.bias)
      return {&weight_, &bias_};
    return {&weight_};
  }
  Parameter<T> &weight() noexcept { return weight_; }
  Parameter<T> &bias() noexcept { return bias_; }

  void reset_parameters(Rng &rng) override {
    fill_normal(weight_.value, rng, kInitStd);
    bias_.value.fill(T{0});
  }

  ConvGeometry geometry(const Shape &in) const {
    if (in.size() != 4)
      throw ShapeError(this->name_, "rank", "expected NCHW, got " + shape_str(in));
    if (in[1] != opts_.in_channels)
      throw ShapeError(this->name_, "channels",
                       "expected " + std::to_string(opts_.in_channels) + ", got " + std::to_string(in[1]));
    ConvGeometry g{in[1], in[2], in[3], opts_.kernel, opts_.stride, opts_.pad,
                   conv_out_dim(in[2], opts_.kernel, opts_.stride, opts_.pad),
                   conv_out_dim(in[3], opts_.kernel, opts_.stride, opts_.pad)};
    if (g.out_h == 0)
      throw ShapeError(this->name_, "height", "kernel larger than padded input " + shape_str(in));
    if (g.out_w == 0)
      throw ShapeError(this->name_, "width", "kernel larger than padded input " + shape_str(in));
    return g;
  }

  Tensor<T> forward(const Tensor<T> &x, Mode) override {
    const ConvGeometry g = geometry(x.shape());
    const std::size_t n = x.dim(0), cout = opts_.out_channels;
    const std::size_t rows = g.col_rows(), cols = g.col_cols();
    cols_.assign(n * rows * cols, T{0});
    Tensor<T> y({n, cout, g.out_h, g.out_w});
    ConstMatMap<T> w(weight_.value.data(), cout, rows);
    for (std::size_t b = 0; b < n; ++b) {
      T *col = cols_.data() + b * rows * cols;
      im2col(x.data() + b * g.channels * g.height * g.width, g, col);
      MatMap<T> out(y.data() + b * cout * cols, cout, cols);
      out.noalias() = w * ConstMatMap<T>(col, rows, cols);
      if (opts_.bias)
        for (std::size_t o = 0; o < cout; ++o)
          out.row(o).array() += bias_.value[o];
    }
    geom_ = g;
    in_shape_ = x.shape();
    has_context_ = true;
    return y;
  }

  Tensor<T> backward(const Tensor<T> &gy) override {
    this->require_context(has_context_);
    const ConvGeometry g = geom_;
    const std::size_t n = in_shape_[0], cout = opts_.out_channels;
    const std::size_t rows = g.col_rows(), cols = g.col_cols();
    if (gy.shape() != Shape{n, cout, g.out_h, g.out_w})
      throw ShapeError(this->name_, "grad_out", shape_str(gy.shape()));
    Tensor<T> gx(in_shape_);
    ConstMatMap<T> w(weight_.value.data(), cout, rows);
    MatMap<T> gw(weight_.grad.data(), cout, rows);
    std::vector<T> gcol(rows * cols);
    for (std::size_t b = 0; b < n; ++b) {
      ConstMatMap<T> go(gy.data() + b * cout * cols, cout, cols);
      ConstMatMap<T> col(cols_.data() + b * rows * cols, rows, cols);
      gw.noalias() += go * col.transpose();
      if (opts_.bias)
        for (std::size_t o = 0; o < cout; ++o)
          bias_.grad[o] += go.row(o).sum();
      MatMap<T>(gcol.data(), rows, cols).noalias() = w.transpose() * go;
      col2im(gcol.data(), g, gx.data() + b * g.channels * g.height * g.width);
    }
    has_context_ = false;
    return gx;
  }

private:
  ConvOptions opts_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  std::vector<T> cols_;
  ConvGeometry geom_{};
  Shape in_shape_;
  bool has_context_ = false;
};

/// Transposed convolution (fractionally strided), weight (in, out, k, k).
template <typename T> class ConvTranspose2d final : public Layer<T> {
public:
  ConvTranspose2d(std::string name, ConvOptions opts)
      : Layer<T>(std::move(name)), opts_(opts),
        weight_(this->name_ + ".weight", Tensor<T>({opts.in_channels, opts.out_channels, opts.kernel, opts.kernel})),
        bias_(this->name_ + ".bias", Tensor<T>({opts.bias ? opts.out_channels : 0})) {
    opts_.validate(this->name_);
  }

  OpKind kind() const override { return OpKind::conv2d_transpose; }
  std::string descriptor() const override { return conv_descriptor("conv2d_transpose", opts_); }
  const ConvOptions &options() const noexcept { return opts_; }

  std::vector<Parameter<T> *> parameters() override {
    if (opts_.bias)
      return {&weight_, &bias_};
    return {&weight_};
  }
  Parameter<T> &weight() noexcept { return weight_; }
  Parameter<T> &bias() noexcept { return bias_; }

  void reset_parameters(Rng &rng) override {
    fill_normal(weight_.value, rng, kInitStd);
    bias_.value.fill(T{0});
  }

  /// Geometry of the *output* plane set, viewed as the input of the adjoint convolution.
  ConvGeometry geometry(const Shape &in) const {
    if (in.size() != 4)
      throw ShapeError(this->name_, "rank", "expected NCHW, got " + shape_str(in));
    if (in[1] != opts_.in_channels)
      throw ShapeError(this->name_, "channels",
                       "expected " + std::to_string(opts_.in_channels) + ", got " + std::to_string(in[1]));
    const std::size_t oh = conv_transpose_out_dim(in[2], opts_.kernel, opts_.stride, opts_.pad);
    const std::size_t ow = conv_transpose_out_dim(in[3], opts_.kernel, opts_.stride, opts_.pad);
    if (oh == 0)
      throw ShapeError(this->name_, "height", "padding consumes the output for input " + shape_str(in));
    if (ow == 0)
      throw ShapeError(this->name_, "width", "padding consumes the output for input " + shape_str(in));
    return {opts_.out_channels, oh, ow, opts_.kernel, opts_.stride, opts_.pad, in[2], in[3]};
  }

  Tensor<T> forward(const Tensor<T> &x, Mode) override {
    const ConvGeometry g = geometry(x.shape());
    const std::size_t n = x.dim(0), cin = opts_.in_channels, cout = opts_.out_channels;
    const std::size_t rows = g.col_rows(), cols = g.col_cols(); // cols = input plane size
    Tensor<T> y({n, cout, g.height, g.width});
    ConstMatMap<T> w(weight_.value.data(), cin, rows);
    std::vector<T> col(rows * cols);
    for (std::size_t b = 0; b < n; ++b) {
      ConstMatMap<T> xb(x.data() + b * cin * cols, cin, cols);
      MatMap<T>(col.data(), rows, cols).noalias() = w.transpose() * xb;
      T *yb = y.data() + b * cout * g.height * g.width;
      col2im(col.data(), g, yb);
      if (opts_.bias)
        for (std::size_t o = 0; o < cout; ++o) {
          T *plane = yb + o * g.height * g.width;
          for (std::size_t i = 0; i < g.height * g.width; ++i)
            plane[i] += bias_.value[o];
        }
    }
    input_ = x;
    geom_ = g;
    has_context_ = true;
    return y;
  }

  Tensor<T> backward(const Tensor<T> &gy) override {
    this->require_context(has_context_);
    const ConvGeometry g = geom_;
    const std::size_t n = input_.dim(0), cin = opts_.in_channels, cout = opts_.out_channels;
    const std::size_t rows = g.col_rows(), cols = g.col_cols();
    if (gy.shape() != Shape{n, cout, g.height, g.width})
      throw ShapeError(this->name_, "grad_out", shape_str(gy.shape()));
    Tensor<T> gx(input_.shape());
    ConstMatMap<T> w(weight_.value.data(), cin, rows);
    MatMap<T> gw(weight_.grad.data(), cin, rows);
    std::vector<T> gcol(rows * cols);
    for (std::size_t b = 0; b < n; ++b) {
      const T *gyb = gy.data() + b * cout * g.height * g.width;
      im2col(gyb, g, gcol.data());
      ConstMatMap<T> gc(gcol.data(), rows, cols);
      ConstMatMap<T> xb(input_.data() + b * cin * cols, cin, cols);
      MatMap<T>(gx.data() + b * cin * cols, cin, cols).noalias() = w * gc;
      gw.noalias() += xb * gc.transpose();
      if (opts_.bias)
        for (std::size_t o = 0; o < cout; ++o) {
          const T *plane = gyb + o * g.height * g.width;
          T acc{0};
          for (std::size_t i = 0; i < g.height * g.width; ++i)
            acc += plane[i];
          bias_.grad[o] += acc;
        }
    }
    has_context_ = false;
    return gx;
  }

private:
  ConvOptions opts_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  Tensor<T> input_;
  ConvGeometry geom_{};
  bool has_context_ = false;
};

} // namespace reidaug::nn
