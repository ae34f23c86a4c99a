#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "data.hpp"
#include "errors.hpp"
#include "image_io.hpp"
#include "nn/checkpoint.hpp"
#include "nn/layers.hpp"
#include "nn/loss.hpp"
#include "nn/optim.hpp"
#include "nn/preprocess.hpp"
#include "occlude.hpp"
#include "rng.hpp"

namespace reidaug::gan {

using nn::Mode;
using nn::Tensor;

enum class OutputActivation { tanh_scaled, sigmoid_scaled };
enum class AdversarialMode { saturating, non_saturating };

struct GeneratorConfig {
  std::size_t depth = 3;
  std::size_t base_channels = 16;
  OutputActivation output_activation = OutputActivation::tanh_scaled;
};

inline std::size_t level_channels(std::size_t base, std::size_t level) {
  return base << std::min<std::size_t>(level, 3);
}

/**
 * U-Net generator.
 *
 * Encoder level i halves the resolution (conv k4 s2 p1, batch norm except at
 * level 0, PReLU). Decoder level i doubles it back (transposed conv k4 s2 p1,
 * batch norm, PReLU) and concatenates the encoder features of the resolution
 * it lands on; the top level concatenates the input image itself. A 3x3 conv
 * and the output activation produce three channels.
 */
template <typename T> class UNetGenerator {
public:
  explicit UNetGenerator(GeneratorConfig cfg) : cfg_(cfg), head_("g.head", head_options(cfg)) {
    if (cfg.depth < 1 || cfg.base_channels < 1)
      throw ArgumentError("UNetGenerator: depth and base_channels must be >= 1");
    const std::size_t d = cfg.depth, base = cfg.base_channels;
    for (std::size_t i = 0; i < d; ++i) {
      const std::string p = "g.enc" + std::to_string(i);
      const std::size_t cin = i == 0 ? 3 : level_channels(base, i - 1);
      const std::size_t cout = level_channels(base, i);
      nn::Sequential<T> block;
      block.template add<nn::Conv2d<T>>(p + ".conv", nn::ConvOptions{cin, cout, 4, 2, 1, true});
      if (i > 0)
        block.template add<nn::BatchNorm<T>>(p + ".bn", cout);
      block.template add<nn::PReLU<T>>(p + ".act", cout);
      enc_.push_back(std::move(block));
    }
    dec_.resize(d);
    up_channels_.resize(d);
    for (std::size_t i = d; i-- > 0;) {
      const std::string p = "g.dec" + std::to_string(i);
      const std::size_t cin = i == d - 1 ? level_channels(base, d - 1) : 2 * level_channels(base, i);
      const std::size_t cout = i == 0 ? base : level_channels(base, i - 1);
      up_channels_[i] = cout;
      dec_[i].template add<nn::ConvTranspose2d<T>>(p + ".deconv", nn::ConvOptions{cin, cout, 4, 2, 1, true});
      dec_[i].template add<nn::BatchNorm<T>>(p + ".bn", cout);
      dec_[i].template add<nn::PReLU<T>>(p + ".act", cout);
    }
    if (cfg.output_activation == OutputActivation::tanh_scaled)
      out_act_ = std::make_unique<nn::Tanh<T>>("g.out");
    else
      out_act_ = std::make_unique<nn::Sigmoid<T>>("g.out");
  }

  UNetGenerator(UNetGenerator &&) noexcept = default;
  UNetGenerator &operator=(UNetGenerator &&) noexcept = default;

  const GeneratorConfig &config() const noexcept { return cfg_; }
  std::size_t divisor() const noexcept { return std::size_t{1} << cfg_.depth; }

  nn::PixelScaling scaling() const {
    return cfg_.output_activation == OutputActivation::tanh_scaled ? nn::PixelScaling::symmetric()
                                                                   : nn::PixelScaling::unit();
  }

  void check_input(std::size_t channels, std::size_t height, std::size_t width) const {
    if (channels != 3)
      throw ArgumentError("generator: expected 3 input channels, got " + std::to_string(channels));
    if (height == 0 || height % divisor() != 0)
      throw ArgumentError("generator: H not divisible by " + std::to_string(divisor()) + " (H=" +
                          std::to_string(height) + ")");
    if (width == 0 || width % divisor() != 0)
      throw ArgumentError("generator: W not divisible by " + std::to_string(divisor()) + " (W=" +
                          std::to_string(width) + ")");
  }

  /// x: (N, 3, H, W) in network scale.
  Tensor<T> forward(const Tensor<T> &x, Mode mode) {
    if (x.rank() != 4)
      throw ArgumentError("generator: expected NCHW input");
    check_input(x.dim(1), x.dim(2), x.dim(3));
    const std::size_t d = cfg_.depth;
    enc_out_.assign(d, Tensor<T>{});
    Tensor<T> h = x;
    for (std::size_t i = 0; i < d; ++i) {
      h = enc_[i].forward(h, mode);
      enc_out_[i] = h;
    }
    for (std::size_t i = d; i-- > 0;) {
      Tensor<T> up = dec_[i].forward(h, mode);
      h = nn::concat_channels(up, i > 0 ? enc_out_[i - 1] : x);
    }
    enc_out_.back() = Tensor<T>{}; // only skip sources are needed later
    has_context_ = true;
    return out_act_->forward(head_.forward(h, mode), mode);
  }

  /// Returns the gradient w.r.t. the input image batch.
  Tensor<T> backward(const Tensor<T> &gy) {
    if (!has_context_)
      throw UsageError("generator: backward() without a retained forward context");
    const std::size_t d = cfg_.depth;
    Tensor<T> g = head_.backward(out_act_->backward(gy));
    std::vector<Tensor<T>> skip_grad(d);
    Tensor<T> g_input_skip;
    for (std::size_t i = 0; i < d; ++i) {
      auto [g_up, g_skip] = nn::split_channels(g, up_channels_[i]);
      if (i > 0)
        skip_grad[i - 1] = std::move(g_skip);
      else
        g_input_skip = std::move(g_skip);
      g = dec_[i].backward(g_up);
    }
    for (std::size_t i = d; i-- > 0;) {
      if (i + 1 < d)
        g += skip_grad[i];
      g = enc_[i].backward(g);
    }
    g += g_input_skip;
    has_context_ = false;
    return g;
  }

  std::vector<nn::Parameter<T> *> parameters() {
    std::vector<nn::Parameter<T> *> out;
    for (auto &b : enc_)
      for (auto *p : b.parameters())
        out.push_back(p);
    for (std::size_t i = dec_.size(); i-- > 0;)
      for (auto *p : dec_[i].parameters())
        out.push_back(p);
    for (auto *p : head_.parameters())
      out.push_back(p);
    return out;
  }

  std::vector<nn::Buffer<T>> buffers() {
    std::vector<nn::Buffer<T>> out;
    for (auto &b : enc_)
      for (auto buf : b.buffers())
        out.push_back(buf);
    for (std::size_t i = dec_.size(); i-- > 0;)
      for (auto buf : dec_[i].buffers())
        out.push_back(buf);
    return out;
  }

  void reset_parameters(Rng &rng) {
    for (auto &b : enc_)
      b.reset_parameters(rng);
    for (std::size_t i = dec_.size(); i-- > 0;)
      dec_[i].reset_parameters(rng);
    head_.reset_parameters(rng);
  }

  std::string descriptor() const {
    std::string s = "unet(depth=" + std::to_string(cfg_.depth) + ",base=" + std::to_string(cfg_.base_channels) +
                    ",out=" + (cfg_.output_activation == OutputActivation::tanh_scaled ? "tanh" : "sigmoid") + ")";
    for (const auto &b : enc_)
      s += b.descriptor();
    for (std::size_t i = dec_.size(); i-- > 0;)
      s += dec_[i].descriptor();
    return s + head_.descriptor();
  }

  /// Number of skip connections (one per resolution level).
  std::size_t skip_count() const noexcept { return cfg_.depth; }

private:
  static nn::ConvOptions head_options(const GeneratorConfig &cfg) {
    return {cfg.base_channels + 3, 3, 3, 1, 1, true};
  }

  GeneratorConfig cfg_;
  std::vector<nn::Sequential<T>> enc_;
  std::vector<nn::Sequential<T>> dec_; // dec_[i] lands on resolution level i
  std::vector<std::size_t> up_channels_;
  nn::Conv2d<T> head_;
  std::unique_ptr<nn::Layer<T>> out_act_;
  std::vector<Tensor<T>> enc_out_;
  bool has_context_ = false;
};

struct DiscriminatorConfig {
  std::size_t base_channels = 16;
  bool conditional = true;
};

inline constexpr std::size_t kDiscriminatorStages = 5;
inline constexpr double kProbEps = 1e-7;

/**
 * Five conv stages with PReLU (batch norm from the second stage on), global
 * average pooling, a linear unit and a sigmoid. Stages downsample by 2 while
 * the feature map is at least 4 pixels on each side, then keep resolution.
 * Outputs are clamped into [1e-7, 1 - 1e-7] so they stay strictly inside (0,1).
 */
template <typename T> class Discriminator {
public:
  Discriminator(DiscriminatorConfig cfg, std::size_t height, std::size_t width)
      : cfg_(cfg), height_(height), width_(width), sigmoid_("d.out") {
    if (cfg.base_channels < 1)
      throw ArgumentError("Discriminator: base_channels must be >= 1");
    std::size_t cin = input_channels(), h = height, w = width;
    for (std::size_t s = 0; s < kDiscriminatorStages; ++s) {
      const std::string p = "d.stage" + std::to_string(s);
      const std::size_t cout = level_channels(cfg.base_channels, s);
      const bool down = s + 1 < kDiscriminatorStages && h >= 4 && w >= 4;
      const nn::ConvOptions opts = down ? nn::ConvOptions{cin, cout, 4, 2, 1, true}
                                        : nn::ConvOptions{cin, cout, 3, 1, 1, true};
      body_.template add<nn::Conv2d<T>>(p + ".conv", opts);
      if (s > 0)
        body_.template add<nn::BatchNorm<T>>(p + ".bn", cout);
      body_.template add<nn::PReLU<T>>(p + ".act", cout);
      if (down) {
        h /= 2;
        w /= 2;
      }
      cin = cout;
    }
    body_.template add<nn::GlobalAvgPool<T>>("d.pool");
    body_.template add<nn::Linear<T>>("d.fc", cin, 1);
  }

  Discriminator(Discriminator &&) noexcept = default;
  Discriminator &operator=(Discriminator &&) noexcept = default;

  const DiscriminatorConfig &config() const noexcept { return cfg_; }
  std::size_t input_channels() const noexcept { return cfg_.conditional ? 6 : 3; }

  /// Builds the discriminator input for a candidate given its condition image.
  Tensor<T> assemble(const Tensor<T> &condition, const Tensor<T> &candidate) const {
    if (!cfg_.conditional)
      return candidate;
    return nn::concat_channels(condition, candidate);
  }

  /// Gradient w.r.t. the candidate part of an assembled input.
  Tensor<T> candidate_grad(const Tensor<T> &g_input) const {
    if (!cfg_.conditional)
      return g_input;
    return nn::split_channels(g_input, 3).second;
  }

  /// (N, C, H, W) -> (N, 1) probabilities.
  Tensor<T> forward(const Tensor<T> &x, Mode mode) {
    if (x.rank() != 4 || x.dim(2) != height_ || x.dim(3) != width_)
      throw ShapeError("discriminator", "input", "expected (N," + std::to_string(input_channels()) + "," +
                                                     std::to_string(height_) + "," + std::to_string(width_) +
                                                     "), got " + nn::shape_str(x.shape()));
    Tensor<T> p = sigmoid_.forward(body_.forward(x, mode), mode);
    const T lo = static_cast<T>(kProbEps), hi = static_cast<T>(1.0 - kProbEps);
    for (auto &v : p.vec())
      v = std::clamp(v, lo, hi);
    return p;
  }

  Tensor<T> backward(const Tensor<T> &gy) { return body_.backward(sigmoid_.backward(gy)); }

  std::vector<nn::Parameter<T> *> parameters() { return body_.parameters(); }
  std::vector<nn::Buffer<T>> buffers() { return body_.buffers(); }
  void reset_parameters(Rng &rng) { body_.reset_parameters(rng); }

  std::string descriptor() const {
    return std::string("discriminator(") + (cfg_.conditional ? "conditional" : "unconditional") + "," +
           std::to_string(height_) + "x" + std::to_string(width_) + ")" + body_.descriptor() + "sigmoid";
  }

private:
  DiscriminatorConfig cfg_;
  std::size_t height_, width_;
  nn::Sequential<T> body_;
  nn::Sigmoid<T> sigmoid_;
};

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

/// Mean squared error over all C*H*W elements.
inline double euclidean_loss(const ImageTensor &generated, const ImageTensor &original) {
  if (!generated.same_shape(original))
    throw ArgumentError("euclidean_loss: shape mismatch");
  if (generated.size() == 0)
    throw ArgumentError("euclidean_loss: empty images");
  double acc = 0.0;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    const double d = static_cast<double>(generated.pixels()[i]) - original.pixels()[i];
    acc += d * d;
  }
  return acc / static_cast<double>(generated.size());
}

/// Binary cross-entropy of discriminator scores; labels 1 = real, 0 = generated.
inline double discriminator_loss(std::span<const double> preds, std::span<const int> labels) {
  if (preds.size() != labels.size())
    throw ArgumentError("discriminator_loss: preds and labels differ in length");
  Tensor<double> p({preds.size()}, std::vector<double>(preds.begin(), preds.end()));
  std::vector<double> u;
  for (int l : labels) {
    if (l != 0 && l != 1)
      throw ArgumentError("discriminator_loss: labels must be 0 or 1");
    u.push_back(l);
  }
  return nn::bce(p, u).value;
}

/**
 * Generator adversarial term from discriminator scores on generated images.
 * saturating: mean log(1 - D); non_saturating: -mean log D.
 */
template <typename T> nn::LossResult<T> adversarial_loss(const Tensor<T> &scores, AdversarialMode mode) {
  if (scores.empty())
    throw ArgumentError("adversarial_loss: empty batch");
  const double n = static_cast<double>(scores.size());
  nn::LossResult<T> r;
  r.grad = Tensor<T>(scores.shape());
  double acc = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    double p = scores[i];
    if (p < kProbEps || p > 1.0 - kProbEps) {
      p = std::clamp(p, kProbEps, 1.0 - kProbEps);
      ++r.clamped;
    }
    if (mode == AdversarialMode::saturating) {
      acc += std::log1p(-p);
      r.grad[i] = static_cast<T>(-1.0 / (1.0 - p) / n);
    } else {
      acc -= std::log(p);
      r.grad[i] = static_cast<T>(-1.0 / p / n);
    }
  }
  r.value = static_cast<T>(acc / n);
  return r;
}

inline double adversarial_loss(std::span<const double> scores, AdversarialMode mode) {
  return adversarial_loss(Tensor<double>({scores.size()}, std::vector<double>(scores.begin(), scores.end())), mode)
      .value;
}

/// Scores generated images with D (eval mode) and returns the adversarial term.
template <typename T>
double generator_adversarial_loss(Discriminator<T> &d, const ImageTensor &occluded, const ImageTensor &generated,
                                  AdversarialMode mode) {
  if (!occluded.same_shape(generated))
    throw ArgumentError("generator_adversarial_loss: occluded and generated differ in shape");
  auto cond = nn::images_to_batch<T>({&occluded});
  auto cand = nn::images_to_batch<T>({&generated});
  return adversarial_loss(d.forward(d.assemble(cond, cand), Mode::eval), mode).value;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct GanTrainConfig {
  int epochs = 20;
  std::size_t batch_size = 8;
  double learning_rate = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double lambda_l2 = 100.0; // weight of the Euclidean reconstruction term
  double lambda_adv = 1.0;
  AdversarialMode adversarial_mode = AdversarialMode::non_saturating;
  bool resample_occlusion = true; // fresh rectangles every epoch
  std::size_t image_height = 0;   // 0 keeps the corpus resolution
  std::size_t image_width = 0;
  GeneratorConfig generator{};
  DiscriminatorConfig discriminator{};
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1)
      throw ArgumentError("GanTrainConfig: epochs must be >= 1");
    if (batch_size < 1)
      throw ArgumentError("GanTrainConfig: batch_size must be >= 1");
    if (!(learning_rate > 0.0))
      throw ArgumentError("GanTrainConfig: learning_rate must be > 0");
    if (lambda_l2 < 0.0 || lambda_adv < 0.0 || (lambda_l2 == 0.0 && lambda_adv == 0.0))
      throw ArgumentError("GanTrainConfig: lambdas must be >= 0 and not both 0");
    if ((image_height == 0) != (image_width == 0))
      throw ArgumentError("GanTrainConfig: set both image_height and image_width, or neither");
  }
};

struct GanEpochLog {
  int epoch = 0;
  double d_loss = 0.0;
  double g_adv_loss = 0.0;
  double g_l2_loss = 0.0;
  bool operator==(const GanEpochLog &) const = default;
};

inline std::string format_gan_log(const std::vector<GanEpochLog> &log) {
  std::string out = "epoch,d_loss,g_adv_loss,g_l2_loss\n";
  char buf[160];
  for (const auto &e : log) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g\n", e.epoch, e.d_loss, e.g_adv_loss, e.g_l2_loss);
    out += buf;
  }
  return out;
}

/// Resizes every sample to (h, w); identity when already that size.
inline Dataset resized(const Dataset &ds, std::size_t h, std::size_t w) {
  if (h == 0)
    return ds;
  Dataset out = ds;
  for (auto &s : out.samples)
    s.pixels = io::resize(s.pixels, h, w);
  return out;
}

template <typename T> struct GanModel {
  UNetGenerator<T> generator;
  Discriminator<T> discriminator;
};

/**
 * Alternating conditional-GAN optimization with per-epoch RNG substreams,
 * so a run resumed from an epoch checkpoint reproduces the original.
 */
template <typename T> class GanTrainer {
public:
  GanTrainer(GanTrainConfig cfg, std::size_t height, std::size_t width)
      : cfg_(std::move(cfg)), model_{UNetGenerator<T>(cfg_.generator), Discriminator<T>(cfg_.discriminator, height, width)},
        g_opt_(adam_options()), d_opt_(adam_options()) {
    cfg_.validate();
    model_.generator.check_input(3, height, width);
    Rng init = Rng::substream(cfg_.seed, {0x6a11, 0});
    model_.generator.reset_parameters(init);
    model_.discriminator.reset_parameters(init);
  }

  const GanTrainConfig &config() const noexcept { return cfg_; }
  GanModel<T> &model() noexcept { return model_; }
  int epochs_done() const noexcept { return epochs_done_; }
  const std::vector<GanEpochLog> &log() const noexcept { return log_; }

  /// Runs one epoch over `train` (already at the GAN resolution).
  GanEpochLog run_epoch(const Dataset &train, const OcclusionConfig &occ, const ChannelStats &stats) {
    const int epoch = epochs_done_ + 1;
    const auto pairs = occlude_dataset(train, occ, stats, cfg_.resample_occlusion ? static_cast<std::uint64_t>(epoch) : 0);
    std::vector<std::size_t> order(pairs.size());
    for (std::size_t i = 0; i < order.size(); ++i)
      order[i] = i;
    Rng shuffle = Rng::substream(cfg_.seed, {0x6a12, static_cast<std::uint64_t>(epoch)});
    shuffle.shuffle(order);

    const auto scaling = model_.generator.scaling();
    double d_sum = 0.0, adv_sum = 0.0, l2_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg_.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg_.batch_size);
      std::vector<const ImageTensor *> occ_px, real_px;
      for (std::size_t k = start; k < end; ++k) {
        occ_px.push_back(&pairs[order[k]].occluded);
        real_px.push_back(&pairs[order[k]].original);
      }
      const auto occluded = nn::images_to_batch<T>(occ_px, scaling);
      const auto real = nn::images_to_batch<T>(real_px, scaling);
      const auto stats_b = train_step(occluded, real);
      const double b = static_cast<double>(end - start);
      d_sum += stats_b.d_loss * b;
      adv_sum += stats_b.g_adv_loss * b;
      l2_sum += stats_b.g_l2_loss * b;
    }
    const double n = static_cast<double>(order.size());
    GanEpochLog entry{epoch, d_sum / n, adv_sum / n, l2_sum / n};
    if (!std::isfinite(entry.d_loss) || !std::isfinite(entry.g_adv_loss) || !std::isfinite(entry.g_l2_loss)) {
      if (last_good_)
        restore(*last_good_);
      throw TrainingAborted("GAN training produced a non-finite loss in epoch " + std::to_string(epoch), epoch);
    }
    epochs_done_ = epoch;
    log_.push_back(entry);
    last_good_ = state();
    return entry;
  }

  /// One alternating D/G update on a batch in network scale.
  GanEpochLog train_step(const Tensor<T> &occluded, const Tensor<T> &real) {
    auto &G = model_.generator;
    auto &D = model_.discriminator;
    const std::size_t n = occluded.dim(0);
    GanEpochLog out;

    const auto g_params = G.parameters();
    const auto d_params = D.parameters();
    Tensor<T> fake = G.forward(occluded, Mode::train);

    if (cfg_.lambda_adv > 0.0) {
      nn::zero_grad(d_params);
      const std::vector<T> ones(n, T{1}), zeros(n, T{0});
      auto real_loss = nn::bce(D.forward(D.assemble(occluded, real), Mode::train), ones);
      real_loss.grad *= T(0.5);
      D.backward(real_loss.grad);
      auto fake_loss = nn::bce(D.forward(D.assemble(occluded, fake), Mode::train), zeros);
      fake_loss.grad *= T(0.5);
      D.backward(fake_loss.grad);
      d_opt_.step(d_params);
      out.d_loss = 0.5 * (static_cast<double>(real_loss.value) + fake_loss.value);
    }

    nn::zero_grad(g_params);
    auto l2 = nn::mse(fake, real);
    Tensor<T> g_fake = l2.grad;
    g_fake *= static_cast<T>(cfg_.lambda_l2);
    out.g_l2_loss = l2.value;
    if (cfg_.lambda_adv > 0.0) {
      auto adv = adversarial_loss(D.forward(D.assemble(occluded, fake), Mode::train), cfg_.adversarial_mode);
      adv.grad *= static_cast<T>(cfg_.lambda_adv);
      g_fake += D.candidate_grad(D.backward(adv.grad));
      out.g_adv_loss = adv.value;
    }
    G.backward(g_fake);
    g_opt_.step(g_params);
    return out;
  }

  /// Full training state: both networks, optimizer moments, epoch counter.
  nn::Checkpoint state() {
    nn::Checkpoint ck(model_.generator.descriptor() + "|" + model_.discriminator.descriptor());
    nn::store_state(ck, model_.generator.parameters(), model_.generator.buffers());
    nn::store_state(ck, model_.discriminator.parameters(), model_.discriminator.buffers());
    store_adam(ck, "opt.g", g_opt_, model_.generator.parameters());
    store_adam(ck, "opt.d", d_opt_, model_.discriminator.parameters());
    ck.put("meta.epoch", Tensor<double>({1}, {static_cast<double>(epochs_done_)}));
    std::vector<double> flat;
    for (const auto &e : log_)
      flat.insert(flat.end(), {static_cast<double>(e.epoch), e.d_loss, e.g_adv_loss, e.g_l2_loss});
    ck.put("meta.log", Tensor<double>({log_.size(), 4}, flat));
    return ck;
  }

  void restore(const nn::Checkpoint &ck) {
    ck.expect_descriptor(model_.generator.descriptor() + "|" + model_.discriminator.descriptor());
    nn::restore_state(ck, model_.generator.parameters(), model_.generator.buffers());
    nn::restore_state(ck, model_.discriminator.parameters(), model_.discriminator.buffers());
    restore_adam(ck, "opt.g", g_opt_, model_.generator.parameters());
    restore_adam(ck, "opt.d", d_opt_, model_.discriminator.parameters());
    epochs_done_ = static_cast<int>(ck.get<double>("meta.epoch")[0]);
    const auto flat = ck.get<double>("meta.log");
    log_.clear();
    for (std::size_t i = 0; i + 3 < flat.size(); i += 4)
      log_.push_back({static_cast<int>(flat[i]), flat[i + 1], flat[i + 2], flat[i + 3]});
  }

private:
  typename nn::Adam<T>::Options adam_options() const {
    typename nn::Adam<T>::Options o;
    o.lr = cfg_.learning_rate;
    o.beta1 = cfg_.adam_beta1;
    o.beta2 = cfg_.adam_beta2;
    return o;
  }

  static void store_adam(nn::Checkpoint &ck, const std::string &prefix, nn::Adam<T> &opt,
                         const std::vector<nn::Parameter<T> *> &params) {
    ck.put(prefix + ".t", Tensor<double>({1}, {static_cast<double>(opt.step_count())}));
    if (opt.step_count() == 0)
      return;
    for (std::size_t i = 0; i < params.size(); ++i) {
      ck.put(prefix + ".m." + params[i]->name, opt.first_moment()[i]);
      ck.put(prefix + ".v." + params[i]->name, opt.second_moment()[i]);
    }
  }

  static void restore_adam(const nn::Checkpoint &ck, const std::string &prefix, nn::Adam<T> &opt,
                           const std::vector<nn::Parameter<T> *> &params) {
    const long t = static_cast<long>(ck.get<double>(prefix + ".t")[0]);
    opt.set_step_count(t);
    opt.first_moment().clear();
    opt.second_moment().clear();
    if (t == 0)
      return;
    for (auto *p : params) {
      opt.first_moment().push_back(ck.get<T>(prefix + ".m." + p->name));
      opt.second_moment().push_back(ck.get<T>(prefix + ".v." + p->name));
    }
  }

  GanTrainConfig cfg_;
  GanModel<T> model_;
  nn::Adam<T> g_opt_;
  nn::Adam<T> d_opt_;
  int epochs_done_ = 0;
  std::vector<GanEpochLog> log_;
  std::optional<nn::Checkpoint> last_good_;
};

template <typename T> struct GanResult {
  GanModel<T> model;
  std::vector<GanEpochLog> log;
};

using EpochCallback = std::function<void(int epoch)>;

/**
 * Trains the de-occlusion GAN on `train`. `on_epoch` runs after every epoch
 * (checkpointing hook). With lambda_adv == 0 the discriminator is never updated.
 */
template <typename T = float>
GanResult<T> train_gan(const Dataset &train, const OcclusionConfig &occ, const ChannelStats &stats,
                       const GanTrainConfig &cfg, const std::function<void(GanTrainer<T> &)> &on_epoch = {}) {
  cfg.validate();
  if (train.empty())
    throw ArgumentError("train_gan: empty training set");
  const Dataset work = resized(train, cfg.image_height, cfg.image_width);
  const auto &ref = work.samples.front().pixels;
  GanTrainer<T> trainer(cfg, ref.height(), ref.width());
  while (trainer.epochs_done() < cfg.epochs) {
    trainer.run_epoch(work, occ, stats);
    if (on_epoch)
      on_epoch(trainer);
  }
  return {std::move(trainer.model()), trainer.log()};
}

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// Maps occluded pairs to restored images (same order, same shape as the inputs).
using Restorer = std::function<std::vector<ImageTensor>(const std::vector<OccludedPair> &)>;

/// Runs G in eval mode over batches; resizes to (work_h, work_w) and back when set.
template <typename T>
std::vector<ImageTensor> deocclude(UNetGenerator<T> &g, const std::vector<OccludedPair> &pairs, std::size_t work_h = 0,
                                   std::size_t work_w = 0, std::size_t batch = 16) {
  std::vector<ImageTensor> out;
  out.reserve(pairs.size());
  const auto scaling = g.scaling();
  for (std::size_t start = 0; start < pairs.size(); start += batch) {
    const std::size_t end = std::min(pairs.size(), start + batch);
    std::vector<ImageTensor> inputs;
    for (std::size_t i = start; i < end; ++i)
      inputs.push_back(work_h ? io::resize(pairs[i].occluded, work_h, work_w) : pairs[i].occluded);
    std::vector<const ImageTensor *> ptrs;
    for (const auto &im : inputs)
      ptrs.push_back(&im);
    const auto y = g.forward(nn::images_to_batch<T>(ptrs, scaling), Mode::eval);
    for (std::size_t i = start; i < end; ++i) {
      auto img = nn::batch_to_image(y, i - start, scaling);
      const auto &src = pairs[i].occluded;
      out.push_back(work_h ? io::resize(img, src.height(), src.width()) : std::move(img));
    }
  }
  return out;
}

template <typename T> Restorer make_restorer(UNetGenerator<T> &g, std::size_t work_h = 0, std::size_t work_w = 0) {
  return [&g, work_h, work_w](const std::vector<OccludedPair> &pairs) { return deocclude(g, pairs, work_h, work_w); };
}

/// Ablation stub: returns each pair's ground-truth original.
inline Restorer original_passthrough() {
  return [](const std::vector<OccludedPair> &pairs) {
    std::vector<ImageTensor> out;
    for (const auto &p : pairs)
      out.push_back(p.original);
    return out;
  };
}

/// Occlusion stream used at generation time; disjoint from the training streams.
inline std::uint64_t generation_seed(std::uint64_t seed) { return substream_seed(seed, {0x9e4e}); }

/**
 * Re-occludes every image with fresh rectangles (variant `variant`) and
 * restores it. Outputs carry source=generated plus the source labels.
 */
inline Dataset generate_deoccluded(const Restorer &restore, const Dataset &images, const OcclusionConfig &occ,
                                   const ChannelStats &stats, std::uint64_t seed, std::uint64_t variant = 0) {
  OcclusionConfig gen_cfg = occ;
  gen_cfg.seed = generation_seed(seed);
  const auto pairs = occlude_dataset(images, gen_cfg, stats, variant);
  auto restored = restore(pairs);
  if (restored.size() != pairs.size())
    throw ArgumentError("generate_deoccluded: restorer returned a different number of images");
  Dataset out{{}, images.split, images.name + "-generated"};
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    PersonImage p;
    p.pixels = std::move(restored[i]);
    if (!p.pixels.same_shape(images.samples[i].pixels))
      throw ArgumentError("generate_deoccluded: restorer changed the image shape");
    p.pixels.clamp_to_range();
    p.identity = images.samples[i].identity;
    p.camera = images.samples[i].camera;
    p.source = Source::generated;
    p.origin_path = images.samples[i].origin_path;
    out.samples.push_back(std::move(p));
  }
  return out;
}

/// Mean reconstruction MSE (network scale) of G in eval mode over fixed pairs.
template <typename T> double reconstruction_loss(UNetGenerator<T> &g, const std::vector<OccludedPair> &pairs) {
  const auto scaling = g.scaling();
  double acc = 0.0;
  for (std::size_t start = 0; start < pairs.size(); start += 16) {
    const std::size_t end = std::min(pairs.size(), start + 16);
    std::vector<const ImageTensor *> occ, orig;
    for (std::size_t i = start; i < end; ++i) {
      occ.push_back(&pairs[i].occluded);
      orig.push_back(&pairs[i].original);
    }
    const auto y = g.forward(nn::images_to_batch<T>(occ, scaling), Mode::eval);
    acc += nn::mse(y, nn::images_to_batch<T>(orig, scaling)).value * static_cast<double>(end - start);
  }
  return acc / static_cast<double>(pairs.size());
}

} // namespace reidaug::gan
