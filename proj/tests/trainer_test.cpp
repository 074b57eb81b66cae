// Copyright 2026 The Countnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "countnet/arch.hpp"
#include "countnet/trainer.hpp"
#include "grad_check.hpp"

namespace countnet {
namespace {

using Mat = Eigen::MatrixXd;
using gradcheck::grad_check;
using gradcheck::GradCheck;
using gradcheck::toy_conv;
using gradcheck::toy_dense;

TEST(Surrogate, SigmoidValues) {
  EXPECT_DOUBLE_EQ(surrogate_sigmoid(0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(surrogate_sigmoid(0, 7.0), 0.5);
  EXPECT_GT(surrogate_sigmoid(1, 50.0), 1 - 1e-12);
  EXPECT_LT(surrogate_sigmoid(-1, 50.0), 1e-12);
}

TEST(Surrogate, DreluValues) {
  EXPECT_DOUBLE_EQ(surrogate_drelu(2.0, 4), 0.0);  // kink at lambda / 2
  EXPECT_DOUBLE_EQ(surrogate_drelu(6.0, 4), 1.0);  // 3 lambda / 2
  EXPECT_DOUBLE_EQ(surrogate_drelu(-10.0, 4), 0.0);
  EXPECT_DOUBLE_EQ(surrogate_drelu(96.0, 64), 1.0);
}

TEST(Surrogate, DerivativesMatchFiniteDifferences) {
  const double h = 1e-6;
  for (double x : {-3.0, -0.4, 0.0, 0.7, 2.5}) {
    for (double s : {0.1, 1.0, 4.0}) {
      const double fd =
          (surrogate_sigmoid(x + h, s) - surrogate_sigmoid(x - h, s)) / (2 * h);
      EXPECT_NEAR(surrogate_sigmoid_grad(x, s), fd, 1e-7);
    }
  }
  for (double x : {-3.0, 0.3, 5.0, 17.0, 100.0}) {
    const double fd = (surrogate_drelu(x + h, 4) - surrogate_drelu(x - h, 4)) / (2 * h);
    EXPECT_NEAR(surrogate_drelu_grad(x, 4), fd, 1e-7);
  }
}

TEST(Quantize, RoundingAndClamps) {
  EXPECT_EQ(quantize_weight(0.5), 1);
  EXPECT_EQ(quantize_weight(-0.5), -1);
  EXPECT_EQ(quantize_weight(0.49), 0);
  EXPECT_EQ(quantize_weight(2.5), 3);
  EXPECT_EQ(quantize_weight(300.0), 127);
  EXPECT_EQ(quantize_weight(-300.0), -128);
  EXPECT_EQ(quantize_threshold(-2.0), 0);
  EXPECT_EQ(quantize_threshold(7.6), 8);
  EXPECT_EQ(quantize_threshold(1e9), 127);
  const std::vector<double> v = {0.5, -0.5, 300.0};
  EXPECT_EQ(quantize<double>(std::span<const double>(v)),
            (std::vector<int8_t>{1, -1, 127}));
}

TEST(Loss, UniformLogits) {
  const Mat logits = Mat::Zero(10, 4);
  const std::vector<int32_t> labels = {0, 3, 9, 5};
  EXPECT_NEAR(loss<double>(logits, labels, {}, 1.0), std::log(10.0), 1e-12);
}

TEST(Loss, PenaltyOnlyOnNegativeThresholds) {
  const Mat logits = Mat::Zero(2, 1);
  const std::vector<int32_t> labels = {0};
  ShadowLayer<double> l;
  l.theta = Eigen::VectorXd::Constant(3, 0.0);
  l.theta << 0.0, 2.0, 5.0;
  EXPECT_NEAR(loss<double>(logits, labels, {l}, 1.0), std::log(2.0), 1e-12);
  l.theta << -1.5, 2.0, -0.5;
  EXPECT_NEAR(loss<double>(logits, labels, {l}, 2.0), std::log(2.0) + 4.0, 1e-12);
}

TEST(GradientCheck, DenseBinary) {
  TrainConfig cfg;
  cfg.sigmoid_steepness = 0.3;
  cfg.logit_scale = 0.02;
  const GradCheck g = grad_check(toy_dense(ActivationKind::binary()), cfg, 1);
  EXPECT_LE(g.worst, 1e-4);
  EXPECT_TRUE(g.informative()) << g.resolved << " resolved, " << g.flat << " flat, " << g.checked << " checked";
  EXPECT_EQ(g.skipped, 0u);
}

TEST(GradientCheck, DenseDrelu) {
  TrainConfig cfg;
  cfg.logit_scale = 0.02;
  const GradCheck g = grad_check(toy_dense(ActivationKind::drelu(2)), cfg, 2);
  EXPECT_LE(g.worst, 1e-4);
  EXPECT_TRUE(g.informative()) << g.resolved << " resolved, " << g.flat << " flat, " << g.checked << " checked";
  EXPECT_LT(g.skipped * 10, g.checked);
}

TEST(GradientCheck, ConvBinary) {
  TrainConfig cfg;
  cfg.sigmoid_steepness = 0.3;
  cfg.logit_scale = 0.02;
  const GradCheck g = grad_check(toy_conv(ActivationKind::binary()), cfg, 3);
  EXPECT_LE(g.worst, 1e-4);
  EXPECT_TRUE(g.informative()) << g.resolved << " resolved, " << g.flat << " flat, " << g.checked << " checked";
  EXPECT_EQ(g.skipped, 0u);
}

TEST(GradientCheck, ConvDrelu) {
  TrainConfig cfg;
  cfg.logit_scale = 0.02;
  const GradCheck g = grad_check(toy_conv(ActivationKind::drelu(2)), cfg, 4);
  EXPECT_LE(g.worst, 1e-4);
  EXPECT_TRUE(g.informative()) << g.resolved << " resolved, " << g.flat << " flat, " << g.checked << " checked";
  EXPECT_LT(g.skipped * 10, g.checked);
}

// Two clusters separated along the first half of the inputs.
Batch<double> separable_batch() {
  Batch<double> b;
  b.inputs = Mat::Zero(8, 40);
  Rng rng = make_rng(5, "separable");
  for (Eigen::Index c = 0; c < 40; ++c) {
    const int32_t label = static_cast<int32_t>(c % 2);
    for (Eigen::Index r = 0; r < 8; ++r) {
      const bool hot = (r < 4) == (label == 0);
      b.inputs(r, c) = hot ? 1.0 : (uniform_index(rng, 4) == 0 ? 1.0 : 0.0);
    }
    b.labels.push_back(label);
  }
  return b;
}

NetworkSpec toy_separable(ActivationKind act) {
  NetworkSpec s;
  s.layers = {LayerSpec::dense(8, 6, act), LayerSpec::dense(6, 2, act)};
  s.num_classes = 2;
  return s;
}

TEST(TrainStep, LossDecreasesOnSeparableProblem) {
  for (const ActivationKind act :
       {ActivationKind::drelu(4), ActivationKind::binary()}) {
    TrainConfig cfg;
    cfg.learning_rate = 0.5;
    cfg.sigmoid_steepness = 0.1;
    auto ck = init_checkpoint<double>(toy_separable(act), 3);
    const Batch<double> b = separable_batch();
    std::vector<double> losses;
    for (int i = 0; i < 50; ++i) losses.push_back(train_step(ck, b, cfg).loss);
    double first = 0, last = 0;
    for (int i = 0; i < 10; ++i) {
      first += losses[i];
      last += losses[40 + i];
    }
    EXPECT_LT(last, first) << "activation binary=" << act.is_binary();
    EXPECT_LT(losses.back(), losses.front());
  }
}

TEST(TrainStep, ZeroLearningRateKeepsParams) {
  TrainConfig cfg;
  cfg.learning_rate = 0;
  auto ck = init_checkpoint<double>(toy_separable(ActivationKind::drelu(4)), 3);
  const auto before = ck.shadow;
  const auto q = ck.quantized;
  for (int i = 0; i < 3; ++i) train_step(ck, separable_batch(), cfg);
  for (size_t k = 0; k < before.size(); ++k) {
    EXPECT_EQ(ck.shadow[k].weights, before[k].weights);
    EXPECT_EQ(ck.shadow[k].theta, before[k].theta);
  }
  EXPECT_EQ(ck.quantized, q);
}

TEST(TrainStep, InvariantsAfterEveryStep) {
  TrainConfig cfg;
  cfg.learning_rate = 2.0;
  cfg.bias_penalty_weight = 0.0;
  auto ck = init_checkpoint<float>(toy_separable(ActivationKind::binary()), 8);
  Batch<float> b;
  const auto bd = separable_batch();
  b.inputs = bd.inputs.cast<float>();
  b.labels = bd.labels;
  bool saw_negative_shadow_theta = false;
  for (int i = 0; i < 60; ++i) {
    train_step(ck, b, cfg);
    for (size_t k = 0; k < ck.shadow.size(); ++k) {
      ASSERT_EQ(detail::quantize_layer(ck.shadow[k]), ck.quantized.layers[k]);
      for (int8_t t : ck.quantized.layers[k].theta) ASSERT_GE(t, 0);
      ASSERT_LE(ck.shadow[k].weights.maxCoeff(), 127.0f);
      ASSERT_GE(ck.shadow[k].weights.minCoeff(), -128.0f);
      saw_negative_shadow_theta |= ck.shadow[k].theta.minCoeff() < 0;
    }
    ASSERT_NO_THROW(ck.model().validate());
  }
  (void)saw_negative_shadow_theta;
}

TEST(TrainStep, DeterministicAndCheckpointRoundTrip) {
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  auto run = [&]() {
    auto ck = init_checkpoint<float>(toy_separable(ActivationKind::drelu(2)), 4);
    Batch<float> b;
    const auto bd = separable_batch();
    b.inputs = bd.inputs.cast<float>();
    b.labels = bd.labels;
    for (int i = 0; i < 7; ++i) train_step(ck, b, cfg);
    return ck;
  };
  const std::string a = checkpoint_to_string(run());
  const std::string b = checkpoint_to_string(run());
  EXPECT_EQ(a, b);
  const auto back = checkpoint_from_string<float>(a);
  EXPECT_EQ(checkpoint_to_string(back), a);
  EXPECT_EQ(back.step, 7);
  EXPECT_THROW(checkpoint_from_string<double>(a), VersionError);
  EXPECT_THROW(checkpoint_from_string<float>(a.substr(0, a.size() / 2)),
               ParseError);
}

TEST(TrainStep, CheckpointRejectsStaleQuantization) {
  auto ck = init_checkpoint<float>(toy_separable(ActivationKind::drelu(2)), 4);
  ck.shadow[0].weights(0, 0) += 3.0f;
  EXPECT_THROW(checkpoint_from_string<float>(checkpoint_to_string(ck)),
               InvariantError);
}

TEST(Init, RangeAndDeterminism) {
  const NetworkSpec spec = toy_dense(ActivationKind::binary());
  const auto a = init_checkpoint<float>(spec, 1);
  const auto b = init_checkpoint<float>(spec, 1);
  const auto c = init_checkpoint<float>(spec, 2);
  EXPECT_EQ(a.quantized, b.quantized);
  EXPECT_NE(a.quantized, c.quantized);
  const double bound = 128.0 / std::sqrt(6.0);
  EXPECT_LE(a.shadow[0].weights.cwiseAbs().maxCoeff(), bound);
  EXPECT_EQ(a.shadow[0].theta.sum(), 0.0f);
}

std::vector<LabeledImage> synthetic_images(size_t n, uint64_t seed) {
  Rng rng = make_rng(seed, "images");
  std::vector<LabeledImage> v(n);
  for (auto& im : v) {
    im.label = static_cast<uint8_t>(uniform_index(rng, 10));
    for (auto& p : im.pixels) p = static_cast<uint8_t>(uniform_index(rng, 256));
  }
  return v;
}

TEST(Fit, ZeroEpochsReturnsInitialModel) {
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 12;
  const NetworkSpec spec = parse_arch("784-16-10", ActivationKind::drelu(64));
  const auto imgs = synthetic_images(20, 1);
  const auto res = fit<float>(spec, cfg, imgs, imgs);
  EXPECT_EQ(res.epochs_run, 0);
  EXPECT_EQ(res.best_model, init_checkpoint<float>(spec, 12).model());
  EXPECT_NO_THROW(res.best_model.validate());
}

TEST(Fit, TwoEpochsAreReproducible) {
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 10;
  cfg.learning_rate = 0.05;
  const NetworkSpec spec = parse_arch("784-12-10", ActivationKind::binary());
  const auto imgs = synthetic_images(30, 2);
  const auto a = fit<float>(spec, cfg, imgs, imgs);
  const auto b = fit<float>(spec, cfg, imgs, imgs);
  EXPECT_EQ(a.best_model, b.best_model);
  EXPECT_EQ(a.history.size(), 2u);
  EXPECT_EQ(checkpoint_to_string(a.checkpoint), checkpoint_to_string(b.checkpoint));
}

TEST(Fit, RejectsNonMnistInput) {
  TrainConfig cfg;
  const auto imgs = synthetic_images(2, 3);
  EXPECT_THROW(fit<float>(toy_dense(ActivationKind::binary()), cfg, imgs, imgs),
               ShapeError);
}

}  // namespace
}  // namespace countnet
