#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "layer.hpp"

namespace reidaug::nn {

enum class OptimizerKind { sgd_momentum, adam };

namespace detail {
template <typename T> void check_slots(std::vector<Tensor<T>> &slots, const std::vector<Parameter<T> *> &params) {
  if (slots.empty()) {
    for (auto *p : params)
      slots.emplace_back(p->value.shape());
    return;
  }
  if (slots.size() != params.size())
    throw ShapeError("optimizer", "parameter count",
                     std::to_string(slots.size()) + " slots vs " + std::to_string(params.size()) + " params");
  for (std::size_t i = 0; i < params.size(); ++i)
    if (slots[i].shape() != params[i]->value.shape())
      throw ShapeError("optimizer", params[i]->name, shape_str(slots[i].shape()) + " vs " +
                                                         shape_str(params[i]->value.shape()));
}

template <typename T> void check_grads(const std::vector<Parameter<T> *> &params) {
  for (auto *p : params)
    if (p->grad.shape() != p->value.shape())
      throw ShapeError("optimizer", p->name, "grad " + shape_str(p->grad.shape()));
}
} // namespace detail

/**
 * SGD with heavy-ball momentum. Weight decay is coupled as an L2 term:
 * g' = g + decay * w;  v = mu * v + g';  w -= lr * v.
 */
template <typename T> class Sgd {
public:
  struct Options {
    double lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 5e-4;
  };

  explicit Sgd(Options o) : opts_(o) {
    if (!(o.lr > 0.0))
      throw ArgumentError("Sgd: learning rate must be > 0");
    if (o.momentum < 0.0 || o.weight_decay < 0.0)
      throw ArgumentError("Sgd: momentum and weight decay must be >= 0");
  }

  static constexpr OptimizerKind kind = OptimizerKind::sgd_momentum;

  void step(const std::vector<Parameter<T> *> &params) {
    detail::check_grads(params);
    detail::check_slots(velocity_, params);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto &w = params[i]->value;
      const auto &g = params[i]->grad;
      auto &v = velocity_[i];
      for (std::size_t k = 0; k < w.size(); ++k) {
        const double gk = static_cast<double>(g[k]) + opts_.weight_decay * w[k];
        v[k] = static_cast<T>(opts_.momentum * v[k] + gk);
        w[k] = static_cast<T>(w[k] - opts_.lr * v[k]);
      }
    }
  }

  double learning_rate() const noexcept { return opts_.lr; }
  void set_learning_rate(double lr) {
    if (!(lr > 0.0))
      throw ArgumentError("Sgd: learning rate must be > 0");
    opts_.lr = lr;
  }
  const Options &options() const noexcept { return opts_; }
  std::vector<Tensor<T>> &velocity() noexcept { return velocity_; }

private:
  Options opts_;
  std::vector<Tensor<T>> velocity_;
};

/// Adam with bias-corrected moments.
template <typename T> class Adam {
public:
  struct Options {
    double lr = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
  };

  explicit Adam(Options o) : opts_(o) {
    if (!(o.lr > 0.0))
      throw ArgumentError("Adam: learning rate must be > 0");
    if (!(o.beta1 >= 0.0 && o.beta1 < 1.0 && o.beta2 >= 0.0 && o.beta2 < 1.0))
      throw ArgumentError("Adam: betas must be in [0,1)");
  }

  static constexpr OptimizerKind kind = OptimizerKind::adam;

  void step(const std::vector<Parameter<T> *> &params) {
    detail::check_grads(params);
    detail::check_slots(m_, params);
    detail::check_slots(v_, params);
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto &w = params[i]->value;
      const auto &g = params[i]->grad;
      for (std::size_t k = 0; k < w.size(); ++k) {
        const double gk = static_cast<double>(g[k]) + opts_.weight_decay * w[k];
        const double m = opts_.beta1 * m_[i][k] + (1.0 - opts_.beta1) * gk;
        const double v = opts_.beta2 * v_[i][k] + (1.0 - opts_.beta2) * gk * gk;
        m_[i][k] = static_cast<T>(m);
        v_[i][k] = static_cast<T>(v);
        w[k] = static_cast<T>(w[k] - opts_.lr * (m / c1) / (std::sqrt(v / c2) + opts_.eps));
      }
    }
  }

  double learning_rate() const noexcept { return opts_.lr; }
  const Options &options() const noexcept { return opts_; }
  long step_count() const noexcept { return t_; }
  void set_step_count(long t) { t_ = t; }
  std::vector<Tensor<T>> &first_moment() noexcept { return m_; }
  std::vector<Tensor<T>> &second_moment() noexcept { return v_; }

private:
  Options opts_;
  std::vector<Tensor<T>> m_, v_;
  long t_ = 0;
};

} // namespace reidaug::nn
