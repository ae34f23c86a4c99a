#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "data.hpp"
#include "errors.hpp"
#include "image_io.hpp"
#include "nn/checkpoint.hpp"
#include "nn/layers.hpp"
#include "nn/loss.hpp"
#include "nn/optim.hpp"
#include "nn/preprocess.hpp"

namespace reidaug::baseline {

using nn::Mode;
using nn::Tensor;

/// Row i is the descriptor of sample i.
using EmbeddingMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Contiguous class indices <-> dataset identities.
class ClassMap {
public:
  ClassMap() = default;
  explicit ClassMap(std::vector<int> identities) : class_to_id_(std::move(identities)) {
    std::sort(class_to_id_.begin(), class_to_id_.end());
    class_to_id_.erase(std::unique(class_to_id_.begin(), class_to_id_.end()), class_to_id_.end());
    for (std::size_t k = 0; k < class_to_id_.size(); ++k)
      id_to_class_[class_to_id_[k]] = static_cast<int>(k);
  }

  static ClassMap from_dataset(const Dataset &ds) { return ClassMap(ds.identities()); }

  std::size_t size() const noexcept { return class_to_id_.size(); }
  int identity(int cls) const { return class_to_id_.at(static_cast<std::size_t>(cls)); }
  int class_index(int identity) const {
    auto it = id_to_class_.find(identity);
    if (it == id_to_class_.end())
      throw ArgumentError("ClassMap: unknown identity " + std::to_string(identity));
    return it->second;
  }
  const std::vector<int> &identities() const noexcept { return class_to_id_; }

private:
  std::vector<int> class_to_id_;
  std::map<int, int> id_to_class_;
};

struct ClassifierConfig {
  std::vector<std::size_t> stage_channels{16, 32, 64, 64};
  std::size_t feature_dim = 64;
  double dropout = 0.5;
  std::size_t input_height = 32;
  std::size_t input_width = 16;
};

/**
 * Identity classifier: conv stages (3x3, stride 2 after the first, batch norm,
 * PReLU), global average pooling, a descriptor FC, then batch norm, PReLU,
 * dropout and the identity FC. The descriptor is the output of the descriptor FC.
 */
template <typename T> class ClassifierNet {
public:
  ClassifierNet(ClassifierConfig cfg, std::size_t n_classes, std::uint64_t dropout_seed = 0)
      : cfg_(std::move(cfg)), n_classes_(n_classes) {
    if (cfg_.stage_channels.empty() || cfg_.feature_dim == 0)
      throw ArgumentError("ClassifierNet: need at least one stage and a positive feature_dim");
    if (n_classes < 2)
      throw ArgumentError("ClassifierNet: need at least 2 identities");
    std::size_t cin = 3;
    for (std::size_t s = 0; s < cfg_.stage_channels.size(); ++s) {
      const std::string p = "c.stage" + std::to_string(s);
      const std::size_t cout = cfg_.stage_channels[s];
      backbone_.template add<nn::Conv2d<T>>(p + ".conv", nn::ConvOptions{cin, cout, 3, s == 0 ? 1u : 2u, 1, false});
      backbone_.template add<nn::BatchNorm<T>>(p + ".bn", cout);
      backbone_.template add<nn::PReLU<T>>(p + ".act", cout);
      cin = cout;
    }
    backbone_.template add<nn::GlobalAvgPool<T>>("c.pool");
    backbone_.template add<nn::Linear<T>>("c.descriptor", cin, cfg_.feature_dim);
    head_.template add<nn::BatchNorm<T>>("c.head.bn", cfg_.feature_dim);
    head_.template add<nn::PReLU<T>>("c.head.act", cfg_.feature_dim);
    dropout_ = &head_.template add<nn::Dropout<T>>("c.head.dropout", cfg_.dropout, dropout_seed);
    head_.template add<nn::Linear<T>>("c.classifier", cfg_.feature_dim, n_classes);
  }

  ClassifierNet(ClassifierNet &&) noexcept = default;
  ClassifierNet &operator=(ClassifierNet &&) noexcept = default;

  const ClassifierConfig &config() const noexcept { return cfg_; }
  std::size_t n_classes() const noexcept { return n_classes_; }
  std::size_t feature_dim() const noexcept { return cfg_.feature_dim; }
  nn::Dropout<T> &dropout() noexcept { return *dropout_; }

  /// Descriptor batch (N, feature_dim).
  Tensor<T> features(const Tensor<T> &x, Mode mode) { return backbone_.forward(x, mode); }

  /// Logits (N, n_classes); retains context for backward().
  Tensor<T> forward(const Tensor<T> &x, Mode mode) { return head_.forward(backbone_.forward(x, mode), mode); }

  Tensor<T> backward(const Tensor<T> &g) { return backbone_.backward(head_.backward(g)); }

  std::vector<nn::Parameter<T> *> parameters() {
    auto out = backbone_.parameters();
    for (auto *p : head_.parameters())
      out.push_back(p);
    return out;
  }
  std::vector<nn::Buffer<T>> buffers() {
    auto out = backbone_.buffers();
    for (auto b : head_.buffers())
      out.push_back(b);
    return out;
  }
  void reset_parameters(Rng &rng) {
    backbone_.reset_parameters(rng);
    head_.reset_parameters(rng);
  }

  std::string descriptor() const {
    return "classifier(" + std::to_string(cfg_.input_height) + "x" + std::to_string(cfg_.input_width) + ",classes=" +
           std::to_string(n_classes_) + ")" + backbone_.descriptor() + head_.descriptor();
  }

private:
  ClassifierConfig cfg_;
  std::size_t n_classes_;
  nn::Sequential<T> backbone_;
  nn::Sequential<T> head_;
  nn::Dropout<T> *dropout_ = nullptr;
};

struct BaselineTrainConfig {
  int epochs = 70;
  std::size_t batch_size = 32;
  double learning_rate = 0.01;
  int lr_step_epochs = 30; // multiply by lr_decay after every lr_step_epochs epochs
  double lr_decay = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  ClassifierConfig net{};
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1)
      throw ArgumentError("BaselineTrainConfig: epochs must be >= 1");
    if (batch_size < 2)
      throw ArgumentError("BaselineTrainConfig: batch_size must be >= 2");
    if (!(learning_rate > 0.0))
      throw ArgumentError("BaselineTrainConfig: learning rate must be > 0");
    if (lr_step_epochs < 1 || !(lr_decay > 0.0))
      throw ArgumentError("BaselineTrainConfig: bad learning-rate schedule");
    if (!(net.dropout >= 0.0 && net.dropout < 1.0))
      throw ArgumentError("BaselineTrainConfig: dropout must be in [0,1)");
  }
};

/// Step schedule: epochs are 1-based, decay applied at epochs step+1, 2*step+1, ...
inline double learning_rate_at(const BaselineTrainConfig &cfg, int epoch) {
  const int drops = (epoch - 1) / cfg.lr_step_epochs;
  return cfg.learning_rate * std::pow(cfg.lr_decay, drops);
}

struct BaselineEpochLog {
  int epoch = 0;
  double learning_rate = 0.0;
  double loss = 0.0;
  double accuracy = 0.0;
  bool operator==(const BaselineEpochLog &) const = default;
};

inline std::string format_baseline_log(const std::vector<BaselineEpochLog> &log) {
  std::string out = "epoch,lr,loss,accuracy\n";
  char buf[160];
  for (const auto &e : log) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g\n", e.epoch, e.learning_rate, e.loss, e.accuracy);
    out += buf;
  }
  return out;
}

template <typename T> struct TrainedClassifier {
  ClassifierNet<T> net;
  ClassMap classes;
  std::vector<BaselineEpochLog> log;
};

namespace detail {
inline void check_input_size(const ClassifierConfig &cfg, const ImageTensor &img) {
  if (img.channels() != 3 || img.height() != cfg.input_height || img.width() != cfg.input_width)
    throw ArgumentError("classifier expects 3x" + std::to_string(cfg.input_height) + "x" +
                        std::to_string(cfg.input_width) + " images, got " + std::to_string(img.channels()) + "x" +
                        std::to_string(img.height()) + "x" + std::to_string(img.width()));
}
} // namespace detail

/**
 * Softmax identity classification with SGD-momentum and a step learning-rate
 * schedule. Junk samples are dropped; identities map to classes 0..K-1 in
 * ascending identity order.
 */
template <typename T = float>
TrainedClassifier<T> train_classifier(const Dataset &train_in, const BaselineTrainConfig &cfg) {
  cfg.validate();
  const Dataset train = train_in.without_junk();
  if (train.empty())
    throw ArgumentError("train_classifier: no trainable samples");
  ClassMap classes = ClassMap::from_dataset(train);
  if (classes.size() < 2)
    throw ArgumentError("train_classifier: need at least 2 identities, got " + std::to_string(classes.size()));
  for (const auto &s : train.samples)
    detail::check_input_size(cfg.net, s.pixels);

  ClassifierNet<T> net(cfg.net, classes.size());
  Rng init = Rng::substream(cfg.seed, {0xba5e, 0});
  net.reset_parameters(init);
  nn::Sgd<T> opt({cfg.learning_rate, cfg.momentum, cfg.weight_decay});
  const auto params = net.parameters();

  std::vector<int> labels(train.size());
  for (std::size_t i = 0; i < train.size(); ++i)
    labels[i] = classes.class_index(train.samples[i].identity);

  std::vector<BaselineEpochLog> log;
  nn::Checkpoint last_good("last-good");
  nn::store_state(last_good, params, net.buffers());
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const double lr = learning_rate_at(cfg, epoch);
    opt.set_learning_rate(lr);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = Rng::substream(cfg.seed, {0xba5e, 1, static_cast<std::uint64_t>(epoch)});
    shuffle.shuffle(order);

    double loss_sum = 0.0;
    std::size_t correct = 0, seen = 0, batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      std::size_t end = std::min(order.size(), start + cfg.batch_size);
      if (end - start < 2) // batch norm needs two samples; fold a trailing singleton away
        break;
      std::vector<const ImageTensor *> px;
      std::vector<int> y;
      for (std::size_t k = start; k < end; ++k) {
        px.push_back(&train.samples[order[k]].pixels);
        y.push_back(labels[order[k]]);
      }
      net.dropout().reseed(substream_seed(cfg.seed, {0xba5e, 2, static_cast<std::uint64_t>(epoch), batch_index}));
      nn::zero_grad(params);
      const auto logits = net.forward(nn::images_to_batch<T>(px), Mode::train);
      auto loss = nn::softmax_cross_entropy(logits, y);
      net.backward(loss.grad);
      opt.step(params);
      const std::size_t k = logits.dim(1);
      for (std::size_t b = 0; b < y.size(); ++b) {
        const T *row = logits.data() + b * k;
        if (static_cast<int>(std::max_element(row, row + k) - row) == y[b])
          ++correct;
      }
      loss_sum += static_cast<double>(loss.value) * static_cast<double>(y.size());
      seen += y.size();
    }
    BaselineEpochLog entry{epoch, lr, loss_sum / static_cast<double>(seen),
                           static_cast<double>(correct) / static_cast<double>(seen)};
    if (!std::isfinite(entry.loss)) {
      nn::restore_state(last_good, params, net.buffers());
      throw TrainingAborted("classifier training produced a non-finite loss in epoch " + std::to_string(epoch), epoch);
    }
    log.push_back(entry);
    last_good = nn::Checkpoint("last-good");
    nn::store_state(last_good, params, net.buffers());
  }
  return {std::move(net), std::move(classes), std::move(log)};
}

/// Eval-mode descriptors, one row per sample, batch by batch.
template <typename T>
EmbeddingMatrix extract_features(ClassifierNet<T> &net, const Dataset &ds, std::size_t batch = 64) {
  EmbeddingMatrix out(static_cast<Eigen::Index>(ds.size()), static_cast<Eigen::Index>(net.feature_dim()));
  for (std::size_t start = 0; start < ds.size(); start += batch) {
    const std::size_t end = std::min(ds.size(), start + batch);
    std::vector<const ImageTensor *> px;
    for (std::size_t i = start; i < end; ++i) {
      detail::check_input_size(net.config(), ds.samples[i].pixels);
      px.push_back(&ds.samples[i].pixels);
    }
    const auto f = net.features(nn::images_to_batch<T>(px), Mode::eval);
    for (std::size_t i = start; i < end; ++i)
      for (std::size_t j = 0; j < net.feature_dim(); ++j)
        out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f[(i - start) * net.feature_dim() + j];
  }
  return out;
}

/// Classifier checkpoint: all parameters and batch-norm statistics.
template <typename T> nn::Checkpoint classifier_checkpoint(ClassifierNet<T> &net) {
  nn::Checkpoint ck(net.descriptor());
  nn::store_state(ck, net.parameters(), net.buffers());
  return ck;
}

template <typename T> void load_classifier(ClassifierNet<T> &net, const nn::Checkpoint &ck) {
  ck.expect_descriptor(net.descriptor());
  nn::restore_state(ck, net.parameters(), net.buffers());
}

} // namespace reidaug::baseline
