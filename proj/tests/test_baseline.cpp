#include <gtest/gtest.h>

#include "reidaug/baseline.hpp"

using namespace reidaug;
using namespace reidaug::baseline;

namespace {

BaselineTrainConfig quick_config(int epochs = 40) {
  BaselineTrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.net.stage_channels = {8, 16, 16};
  cfg.net.feature_dim = 32;
  cfg.net.input_height = 32;
  cfg.net.input_width = 16;
  cfg.seed = 1;
  return cfg;
}

} // namespace

TEST(Schedule, StepDecay) {
  BaselineTrainConfig cfg;
  EXPECT_DOUBLE_EQ(learning_rate_at(cfg, 1), 0.01);
  EXPECT_DOUBLE_EQ(learning_rate_at(cfg, 30), 0.01);
  EXPECT_NEAR(learning_rate_at(cfg, 31), 0.001, 1e-15);
  EXPECT_NEAR(learning_rate_at(cfg, 60), 0.001, 1e-15);
  EXPECT_NEAR(learning_rate_at(cfg, 61), 1e-4, 1e-16);
}

TEST(ClassMapTest, ContiguousAscendingAndRoundTrip) {
  ClassMap m({42, 7, 7, 1000});
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m.class_index(7), 0);
  EXPECT_EQ(m.class_index(42), 1);
  EXPECT_EQ(m.identity(2), 1000);
  for (int k = 0; k < 3; ++k)
    EXPECT_EQ(m.class_index(m.identity(k)), k);
  const ClassMap again(m.identities());
  EXPECT_EQ(again.identities(), m.identities());
  EXPECT_THROW(m.class_index(5), ArgumentError);
}

TEST(Training, RejectsSingleIdentityAndBadInputs) {
  const auto one = synth_corpus(1, 6, 32, 16, 0);
  EXPECT_THROW(train_classifier(one, quick_config(1)), ArgumentError);
  const auto wrong_size = synth_corpus(3, 2, 24, 16, 0);
  EXPECT_THROW(train_classifier(wrong_size, quick_config(1)), ArgumentError);
  auto cfg = quick_config(1);
  cfg.batch_size = 1;
  EXPECT_THROW(cfg.validate(), ArgumentError);
  cfg = quick_config(1);
  cfg.learning_rate = 0.0;
  EXPECT_THROW(cfg.validate(), ArgumentError);
}

TEST(Training, JunkSamplesAreIgnored) {
  auto ds = synth_corpus(3, 4, 32, 16, 2);
  ds.samples[0].identity = kJunkIdentity;
  const auto r = train_classifier(ds, quick_config(1));
  EXPECT_EQ(r.classes.size(), 3u);
  for (int id : r.classes.identities())
    EXPECT_NE(id, kJunkIdentity);
}

TEST(Training, FitsSmallSyntheticSet) {
  const auto ds = synth_corpus(8, 8, 32, 16, 3);
  const auto r = train_classifier(ds, quick_config(40));
  ASSERT_EQ(r.log.size(), 40u);
  EXPECT_GT(r.log.back().accuracy, 0.9);
  EXPECT_LT(r.log.back().loss, r.log.front().loss);
}

TEST(Training, DeterministicAndSeedSensitive) {
  const auto ds = synth_corpus(4, 5, 32, 16, 4);
  const auto a = train_classifier(ds, quick_config(3));
  const auto b = train_classifier(ds, quick_config(3));
  EXPECT_EQ(a.log, b.log);
  auto other = quick_config(3);
  other.seed = 2;
  EXPECT_NE(train_classifier(ds, other).log, a.log);
  EXPECT_EQ(format_baseline_log(a.log).substr(0, 23), "epoch,lr,loss,accuracy\n");
}

TEST(Features, EvalDescriptorsAreBitIdenticalAcrossCallsAndBatching) {
  const auto ds = synth_corpus(4, 5, 32, 16, 5);
  auto r = train_classifier(ds, quick_config(2));
  const auto f1 = extract_features(r.net, ds);
  const auto f2 = extract_features(r.net, ds);
  const auto f3 = extract_features(r.net, ds, 3);
  EXPECT_EQ(f1.rows(), 20);
  EXPECT_EQ(f1.cols(), 32);
  EXPECT_TRUE(f1 == f2);
  EXPECT_TRUE(f1.isApprox(f3, 1e-5));
}

TEST(Features, CheckpointRoundTripReproducesDescriptors) {
  const auto ds = synth_corpus(3, 4, 32, 16, 6);
  auto r = train_classifier(ds, quick_config(2));
  const auto bytes = classifier_checkpoint(r.net).serialize();
  ClassifierNet<float> fresh(quick_config().net, r.classes.size());
  load_classifier(fresh, nn::Checkpoint::deserialize(bytes));
  EXPECT_TRUE(extract_features(r.net, ds) == extract_features(fresh, ds));
  ClassifierNet<float> wrong(quick_config().net, r.classes.size() + 1);
  EXPECT_THROW(load_classifier(wrong, nn::Checkpoint::deserialize(bytes)), IoError);
}

TEST(Optimization, OneSgdStepDecreasesLoss) {
  ClassifierConfig net_cfg{{4, 8}, 8, 0.0, 16, 8};
  ClassifierNet<double> net(net_cfg, 3);
  Rng rng(7);
  net.reset_parameters(rng);
  const auto ds = synth_corpus(3, 2, 16, 8, 7);
  std::vector<const ImageTensor *> px;
  std::vector<int> y;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    px.push_back(&ds.samples[i].pixels);
    y.push_back(static_cast<int>(i / 2));
  }
  const auto x = nn::images_to_batch<double>(px);
  nn::Sgd<double> opt({0.01, 0.9, 0.0});
  nn::zero_grad(net.parameters());
  auto loss = nn::softmax_cross_entropy(net.forward(x, nn::Mode::train), y);
  net.backward(loss.grad);
  opt.step(net.parameters());
  const auto after = nn::softmax_cross_entropy(net.forward(x, nn::Mode::train), y);
  EXPECT_LT(after.value, loss.value);
}
