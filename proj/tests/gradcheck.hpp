#pragma once

// Finite-difference gradient checking for every differentiable operator, in double precision.
// Shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "reidaug/nn/conv.hpp"
#include "reidaug/nn/layers.hpp"
#include "reidaug/nn/loss.hpp"

namespace reidaug::testing {

using nn::Tensor;

inline double relative_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-8});
}

inline Tensor<double> random_tensor(const nn::Shape &s, Rng &rng, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(s);
  for (auto &v : t.vec())
    v = rng.uniform(lo, hi);
  return t;
}

inline double dot(const Tensor<double> &a, const Tensor<double> &b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    acc += a[i] * b[i];
  return acc;
}

/// Worst relative error between `analytic` and central differences of `loss` w.r.t. `x`.
/// At most `max_probe` elements are probed (chosen at random for large tensors).
inline double check_tensor(const std::function<double()> &loss, Tensor<double> &x, const Tensor<double> &analytic,
                           Rng &rng, std::size_t max_probe = 48, double h = 1e-6) {
  std::vector<std::size_t> idx(x.size());
  for (std::size_t i = 0; i < idx.size(); ++i)
    idx[i] = i;
  if (idx.size() > max_probe) {
    rng.shuffle(idx);
    idx.resize(max_probe);
  }
  double worst = 0.0;
  for (std::size_t i : idx) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = loss();
    x[i] = saved - h;
    const double down = loss();
    x[i] = saved;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * h)));
  }
  return worst;
}

/// Checks input and parameter gradients of a layer against L = <g, layer(x)> for a random g.
/// `before_forward` runs ahead of every forward pass (used to pin dropout masks).
inline double check_layer(nn::Layer<double> &layer, Tensor<double> x, nn::Mode mode, Rng &rng,
                          const std::function<void()> &before_forward = [] {}) {
  before_forward();
  const auto y = layer.forward(x, mode);
  const auto g = random_tensor(y.shape(), rng);
  auto params = layer.parameters();
  nn::zero_grad(params);
  const auto dx = layer.backward(g);
  auto loss = [&] {
    before_forward();
    return dot(g, layer.forward(x, mode));
  };
  double worst = check_tensor(loss, x, dx, rng);
  for (auto *p : params) {
    const Tensor<double> grad = p->grad;
    worst = std::max(worst, check_tensor(loss, p->value, grad, rng));
  }
  return worst;
}

inline std::size_t pick(Rng &rng, std::size_t lo, std::size_t hi) {
  return static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
}

/// Worst relative error per operator over `shapes` random configurations each.
inline std::map<nn::OpKind, double> gradient_suite(std::uint64_t seed, int shapes) {
  using namespace nn;
  Rng rng(seed);
  std::map<OpKind, double> worst;
  auto record = [&](OpKind k, double e) { worst[k] = std::max(worst[k], e); };

  for (int t = 0; t < shapes; ++t) {
    const std::size_t n = pick(rng, 1, 3), cin = pick(rng, 1, 3), cout = pick(rng, 1, 3);
    {
      ConvOptions o{cin, cout, pick(rng, 1, 4), pick(rng, 1, 2), pick(rng, 0, 1), rng.uniform() < 0.7};
      const std::size_t hmin = o.kernel > 2 * o.pad ? o.kernel - 2 * o.pad : 1;
      Conv2d<double> conv("conv", o);
      conv.reset_parameters(rng);
      fill_normal(conv.weight().value, rng, 0.5);
      fill_normal(conv.bias().value, rng, 0.5);
      record(OpKind::conv2d,
             check_layer(conv, random_tensor({n, cin, pick(rng, hmin, hmin + 4), pick(rng, hmin, hmin + 4)}, rng),
                         Mode::train, rng));
    }
    {
      ConvOptions o{cin, cout, pick(rng, 1, 4), pick(rng, 1, 2), 0, rng.uniform() < 0.7};
      o.pad = o.kernel > 1 ? pick(rng, 0, 1) : 0;
      ConvTranspose2d<double> convt("convt", o);
      fill_normal(convt.weight().value, rng, 0.5);
      fill_normal(convt.bias().value, rng, 0.5);
      record(OpKind::conv2d_transpose,
             check_layer(convt, random_tensor({n, cin, pick(rng, 2, 4), pick(rng, 2, 4)}, rng), Mode::train, rng));
    }
    {
      const std::size_t c = pick(rng, 1, 3);
      BatchNorm<double> bn("bn", c);
      bn.gamma().value = random_tensor({c}, rng, 0.5, 1.5);
      bn.beta().value = random_tensor({c}, rng);
      const nn::Shape s = rng.uniform() < 0.5 ? nn::Shape{pick(rng, 2, 4), c, pick(rng, 1, 3), pick(rng, 1, 3)}
                                              : nn::Shape{pick(rng, 3, 6), c};
      record(OpKind::batch_norm, check_layer(bn, random_tensor(s, rng, -2.0, 2.0), Mode::train, rng));
      record(OpKind::batch_norm, check_layer(bn, random_tensor(s, rng, -2.0, 2.0), Mode::eval, rng));
    }
    {
      const std::size_t c = pick(rng, 1, 3);
      PReLU<double> act("prelu", c);
      act.slope().value = random_tensor({c}, rng, 0.05, 0.5);
      auto x = random_tensor({n, c, pick(rng, 1, 3), pick(rng, 1, 3)}, rng);
      for (auto &v : x.vec()) // keep probes away from the kink
        v = std::copysign(std::abs(v) + 0.05, v);
      record(OpKind::prelu, check_layer(act, x, Mode::train, rng));
    }
    {
      const nn::Shape s{n, cin, pick(rng, 1, 4), pick(rng, 1, 4)};
      Sigmoid<double> sg("sigmoid");
      record(OpKind::sigmoid, check_layer(sg, random_tensor(s, rng, -4, 4), Mode::train, rng));
      Tanh<double> th("tanh");
      record(OpKind::tanh, check_layer(th, random_tensor(s, rng, -2, 2), Mode::train, rng));
      GlobalAvgPool<double> gap("gap");
      record(OpKind::global_avg_pool, check_layer(gap, random_tensor(s, rng), Mode::train, rng));
      Dropout<double> dr("dropout", rng.uniform(0.1, 0.7));
      const std::uint64_t mask_seed = rng.next_u64();
      record(OpKind::dropout,
             check_layer(dr, random_tensor(s, rng), Mode::train, rng, [&] { dr.reseed(mask_seed); }));
    }
    {
      const std::size_t in = pick(rng, 1, 6), out = pick(rng, 1, 5);
      Linear<double> fc("fc", in, out);
      fill_normal(fc.weight().value, rng, 0.5);
      fill_normal(fc.bias().value, rng, 0.5);
      record(OpKind::fully_connected, check_layer(fc, random_tensor({n, in}, rng), Mode::train, rng));
    }
    {
      const std::size_t h = pick(rng, 1, 3), w = pick(rng, 1, 3);
      auto a = random_tensor({n, cin, h, w}, rng), b = random_tensor({n, cout, h, w}, rng);
      const auto g = random_tensor({n, cin + cout, h, w}, rng);
      const auto [ga, gb] = split_channels(g, cin);
      auto loss = [&] { return dot(g, concat_channels(a, b)); };
      record(OpKind::concat_channels, std::max(check_tensor(loss, a, ga, rng), check_tensor(loss, b, gb, rng)));
    }
    {
      const std::size_t k = pick(rng, 2, 6);
      auto logits = random_tensor({n, k}, rng, -3, 3);
      std::vector<int> labels(n);
      for (auto &l : labels)
        l = static_cast<int>(pick(rng, 0, k - 1));
      const auto r = softmax_cross_entropy(logits, labels);
      auto loss = [&] { return static_cast<double>(softmax_cross_entropy(logits, labels).value); };
      record(OpKind::softmax_cross_entropy, check_tensor(loss, logits, r.grad, rng));
    }
    {
      const nn::Shape s{n, cin, pick(rng, 1, 3), pick(rng, 1, 3)};
      auto pred = random_tensor(s, rng);
      const auto target = random_tensor(s, rng);
      const auto r = mse(pred, target);
      auto loss = [&] { return static_cast<double>(mse(pred, target).value); };
      record(OpKind::mse, check_tensor(loss, pred, r.grad, rng));
    }
    {
      const std::size_t b = pick(rng, 1, 8);
      auto pred = random_tensor({b, 1}, rng, 0.05, 0.95);
      std::vector<double> labels(b);
      for (auto &u : labels)
        u = rng.uniform() < 0.5 ? 0.0 : 1.0;
      const auto r = bce(pred, labels);
      auto loss = [&] { return static_cast<double>(bce(pred, labels).value); };
      record(OpKind::bce, check_tensor(loss, pred, r.grad, rng));
    }
  }
  return worst;
}

inline const std::vector<nn::OpKind> &all_op_kinds() {
  using nn::OpKind;
  static const std::vector<OpKind> kinds{
      OpKind::conv2d,          OpKind::conv2d_transpose, OpKind::batch_norm,      OpKind::prelu,
      OpKind::sigmoid,         OpKind::tanh,             OpKind::dropout,         OpKind::fully_connected,
      OpKind::global_avg_pool, OpKind::concat_channels,  OpKind::softmax_cross_entropy, OpKind::mse,
      OpKind::bce};
  return kinds;
}

} // namespace reidaug::testing
