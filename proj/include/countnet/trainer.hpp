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

// Training with integer forward passes and surrogate backward passes.
//
// Shadow parameters are kept in the same units as the int8 forward
// parameters. Each step runs the quantized network with discrete
// activations, then recomputes every layer's drive (W a - theta) with the
// shadow parameters, feeding it the discrete activations of the layer below.
// The surrogate activation only supplies the derivative. Logits for the
// cross-entropy loss are logit_scale times the final drive.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "countnet/core_types.hpp"
#include "countnet/frame_model.hpp"
#include "countnet/mnist.hpp"
#include "countnet/model_io.hpp"
#include "countnet/rng.hpp"
#include "json.hpp"

namespace countnet {

inline double surrogate_sigmoid(double x, double steepness) {
  return 1.0 / (1.0 + std::exp(-steepness * x));
}

inline double surrogate_sigmoid_grad(double x, double steepness) {
  const double s = surrogate_sigmoid(x, steepness);
  return steepness * s * (1.0 - s);
}

// Shifted, scaled ReLU standing in for the discretized ReLU.
inline double surrogate_drelu(double x, int32_t lambda) {
  const double v = x / lambda - 0.5;
  return v > 0.0 ? v : 0.0;
}

inline double surrogate_drelu_grad(double x, int32_t lambda) {
  return x / lambda - 0.5 > 0.0 ? 1.0 / lambda : 0.0;
}

inline int32_t round_half_away(double v) {
  return static_cast<int32_t>(v < 0 ? -std::floor(-v + 0.5)
                                    : std::floor(v + 0.5));
}

inline int8_t quantize_weight(double v) {
  if (!(v == v)) return 0;
  const double r = std::clamp(v, -1e6, 1e6);
  return static_cast<int8_t>(
      std::clamp(round_half_away(r), kWeightMin, kWeightMax));
}

inline int8_t quantize_threshold(double v) {
  if (!(v == v)) return 0;
  const double r = std::clamp(v, -1e6, 1e6);
  return static_cast<int8_t>(std::clamp(round_half_away(r), 0, kWeightMax));
}

template <typename T>
std::vector<int8_t> quantize(std::span<const T> shadow, bool threshold = false) {
  std::vector<int8_t> out(shadow.size());
  for (size_t i = 0; i < shadow.size(); ++i) {
    out[i] = threshold ? quantize_threshold(shadow[i]) : quantize_weight(shadow[i]);
  }
  return out;
}

struct TrainConfig {
  // Shadow parameters live in integer units, so Adam steps are ten times
  // those of a unit-scale parameterization.
  double learning_rate = 0.05;
  int32_t batch_size = 200;
  int32_t epochs = 40;
  // Stop as soon as validation error is at or below this (0 disables).
  double target_val_error = 0.0;
  // Epochs without validation improvement before reporting divergence.
  int32_t patience = 0;
  // Drives are sums of int8 weights, so the sigmoid is widened to match.
  double sigmoid_steepness = 0.1;
  double bias_penalty_weight = 1.0;
  double logit_scale = 1.0 / 32.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  // Offset used when flooring real-valued drelu arguments.
  double drelu_epsilon = 1e-6;
  uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate >= 0)) throw InvariantError("learning_rate must be >= 0");
    if (batch_size < 1) throw InvariantError("batch_size must be >= 1");
    if (!(sigmoid_steepness > 0)) {
      throw InvariantError("sigmoid_steepness must be > 0");
    }
    if (epochs < 0) throw InvariantError("epochs must be >= 0");
  }
};

inline double default_learning_rate(const NetworkSpec& spec) {
  for (const auto& l : spec.layers) {
    if (l.kind == LayerKind::kConv2D) return 0.1;
  }
  return 0.05;
}

// Forward behaviour of the trainer's network.
enum class ForwardMode {
  kDiscrete,   // quantized params, discrete activations (training)
  kSurrogate,  // shadow params, surrogate activations everywhere (grad checks)
};

template <typename Scalar>
struct ShadowLayer {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  // Dense: out x in. Conv2D: maps x (in_channels * k * k).
  Matrix weights;
  Vector theta;  // one per output unit
};

template <typename Scalar>
struct TrainerCheckpoint {
  NetworkSpec spec;
  std::vector<ShadowLayer<Scalar>> shadow;
  std::vector<ShadowLayer<Scalar>> adam_m;
  std::vector<ShadowLayer<Scalar>> adam_v;
  int64_t step = 0;
  QuantizedParams quantized;

  Model model() const { return {spec, quantized}; }
};

namespace detail {

template <typename Scalar>
ShadowLayer<Scalar> zero_layer_like(const ShadowLayer<Scalar>& l) {
  ShadowLayer<Scalar> z;
  z.weights.setZero(l.weights.rows(), l.weights.cols());
  z.theta.setZero(l.theta.size());
  return z;
}

// Writes an Eigen weight matrix in file order (row-major).
template <typename Scalar>
std::vector<Scalar> weights_file_order(
    const typename ShadowLayer<Scalar>::Matrix& w) {
  std::vector<Scalar> out(static_cast<size_t>(w.size()));
  size_t i = 0;
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    for (Eigen::Index c = 0; c < w.cols(); ++c) out[i++] = w(r, c);
  }
  return out;
}

template <typename Scalar>
LayerParams quantize_layer(const ShadowLayer<Scalar>& l) {
  const auto w = weights_file_order<Scalar>(l.weights);
  LayerParams p;
  p.weights = quantize<Scalar>(std::span<const Scalar>(w));
  p.theta = quantize<Scalar>(
      std::span<const Scalar>(l.theta.data(), static_cast<size_t>(l.theta.size())),
      true);
  return p;
}

inline Eigen::Index weight_rows(const LayerSpec& l) {
  return l.kind == LayerKind::kDense ? static_cast<Eigen::Index>(l.out_size())
                                     : l.channels;
}

inline Eigen::Index weight_cols(const LayerSpec& l) {
  return l.kind == LayerKind::kDense
             ? static_cast<Eigen::Index>(l.in_size())
             : static_cast<Eigen::Index>(l.in_channels()) * l.kernel_size *
                   l.kernel_size;
}

}  // namespace detail

template <typename Scalar>
void requantize(TrainerCheckpoint<Scalar>& ck) {
  ck.quantized.layers.clear();
  for (const auto& l : ck.shadow) {
    ck.quantized.layers.push_back(detail::quantize_layer(l));
  }
}

// Uniform init U(-a, a) with a = 128 / sqrt(fan_in); thresholds start at 0.
template <typename Scalar>
TrainerCheckpoint<Scalar> init_checkpoint(const NetworkSpec& spec,
                                          uint64_t seed) {
  spec.validate();
  TrainerCheckpoint<Scalar> ck;
  ck.spec = spec;
  Rng rng = make_rng(seed, "init");
  for (const auto& l : spec.layers) {
    ShadowLayer<Scalar> s;
    const auto rows = detail::weight_rows(l), cols = detail::weight_cols(l);
    const double a = 128.0 / std::sqrt(static_cast<double>(cols));
    s.weights.resize(rows, cols);
    // Row-major draw order so the file layout is the draw order.
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        s.weights(r, c) = static_cast<Scalar>((2.0 * uniform_unit(rng) - 1.0) * a);
      }
    }
    s.theta.setZero(static_cast<Eigen::Index>(l.out_size()));
    ck.adam_m.push_back(detail::zero_layer_like(s));
    ck.adam_v.push_back(detail::zero_layer_like(s));
    ck.shadow.push_back(std::move(s));
  }
  requantize(ck);
  return ck;
}

// A batch of integer inputs with labels; columns are samples.
template <typename Scalar>
struct Batch {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> inputs;
  std::vector<int32_t> labels;
};

template <typename Scalar>
class TrainerNetwork {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  TrainerNetwork(const TrainerCheckpoint<Scalar>& ck, const TrainConfig& cfg)
      : ck_(&ck), cfg_(cfg) {}

  struct Result {
    double loss = 0;  // cross-entropy + bias penalty
    double cross_entropy = 0;
    // Samples the quantized discrete network classifies correctly
    // (kDiscrete only).
    size_t correct = 0;
    std::vector<ShadowLayer<Scalar>> grads;
  };

  // Loss and gradients w.r.t. the shadow parameters for one batch.
  Result loss_and_grad(const Batch<Scalar>& batch, ForwardMode mode) const {
    const auto& spec = ck_->spec;
    const size_t n = spec.layers.size();
    const Eigen::Index bsz = batch.inputs.cols();
    size_t correct = 0;
    // acts[k] is the input of layer k; drives[k] its shadow drive.
    std::vector<Matrix> acts(n + 1), drives(n);
    acts[0] = batch.inputs;
    for (size_t k = 0; k < n; ++k) {
      const auto& l = spec.layers[k];
      drives[k] = apply(k, ck_->shadow[k].weights, ck_->shadow[k].theta, acts[k]);
      if (k + 1 == n) {
        if (mode == ForwardMode::kDiscrete) {
          const Matrix q =
              apply(k, quantized_weights(k), quantized_theta(k), acts[k]);
          for (Eigen::Index b = 0; b < bsz; ++b) {
            Eigen::Index arg;
            q.col(b).maxCoeff(&arg);
            if (arg == batch.labels[b]) ++correct;
          }
        }
        break;
      }
      if (mode == ForwardMode::kSurrogate) {
        acts[k + 1] = drives[k].unaryExpr(
            [&](Scalar x) { return static_cast<Scalar>(surrogate(l.activation, x)); });
      } else {
        const Matrix q =
            apply(k, quantized_weights(k), quantized_theta(k), acts[k]);
        acts[k + 1] = q.unaryExpr(
            [&](Scalar x) { return static_cast<Scalar>(discrete(l.activation, x)); });
      }
    }
    // Softmax cross-entropy on scaled final drives.
    const Scalar scale = static_cast<Scalar>(cfg_.logit_scale);
    Matrix logits = drives[n - 1] * scale;
    Matrix delta(logits.rows(), bsz);
    double ce = 0;
    for (Eigen::Index b = 0; b < bsz; ++b) {
      const Scalar mx = logits.col(b).maxCoeff();
      Vector e = (logits.col(b).array() - mx).exp().matrix();
      const Scalar sum = e.sum();
      ce += -(static_cast<double>(logits(batch.labels[b], b) - mx) -
              std::log(static_cast<double>(sum)));
      delta.col(b) = e / sum;
      delta(batch.labels[b], b) -= 1;
    }
    ce /= static_cast<double>(bsz);
    delta *= scale / static_cast<Scalar>(bsz);

    Result r;
    r.cross_entropy = ce;
    r.loss = ce;
    r.correct = correct;
    r.grads.resize(n);
    for (size_t k = n; k-- > 0;) {
      auto& g = r.grads[k];
      const bool need_input_grad = k > 0;
      Matrix dinput;
      backward(k, delta, acts[k], g, need_input_grad ? &dinput : nullptr);
      // Bias penalty: weight * sum(max(0, -theta)).
      const auto& theta = ck_->shadow[k].theta;
      for (Eigen::Index i = 0; i < theta.size(); ++i) {
        if (theta[i] < 0) {
          r.loss += cfg_.bias_penalty_weight * -static_cast<double>(theta[i]);
          g.theta[i] -= static_cast<Scalar>(cfg_.bias_penalty_weight);
        }
      }
      if (!need_input_grad) break;
      const auto& prev = spec.layers[k - 1];
      delta = dinput.cwiseProduct(drives[k - 1].unaryExpr([&](Scalar x) {
        return static_cast<Scalar>(surrogate_grad(prev.activation, x));
      }));
    }
    return r;
  }

  // Final-layer drive of the quantized discrete network.
  Matrix logits(const Matrix& inputs) const {
    const size_t n = ck_->spec.layers.size();
    Matrix a = inputs;
    for (size_t k = 0; k < n; ++k) {
      Matrix q = apply(k, quantized_weights(k), quantized_theta(k), a);
      if (k + 1 == n) return q;
      const auto& act = ck_->spec.layers[k].activation;
      a = q.unaryExpr(
          [&](Scalar x) { return static_cast<Scalar>(discrete(act, x)); });
    }
    return a;
  }

  void refresh_quantized() {
    qw_.clear();
    qt_.clear();
    for (size_t k = 0; k < ck_->spec.layers.size(); ++k) {
      const auto& p = ck_->quantized.layers[k];
      const auto& s = ck_->shadow[k];
      Matrix w(s.weights.rows(), s.weights.cols());
      for (Eigen::Index r = 0; r < w.rows(); ++r) {
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
          w(r, c) = p.weights[static_cast<size_t>(r * w.cols() + c)];
        }
      }
      Vector t(s.theta.size());
      for (Eigen::Index i = 0; i < t.size(); ++i) t[i] = p.theta[i];
      qw_.push_back(std::move(w));
      qt_.push_back(std::move(t));
    }
  }

 private:
  const Matrix& quantized_weights(size_t k) const { return qw_.at(k); }
  const Vector& quantized_theta(size_t k) const { return qt_.at(k); }

  double surrogate(const ActivationKind& a, double x) const {
    return a.is_binary() ? surrogate_sigmoid(x, cfg_.sigmoid_steepness)
                         : surrogate_drelu(x, a.lambda_step);
  }
  double surrogate_grad(const ActivationKind& a, double x) const {
    return a.is_binary() ? surrogate_sigmoid_grad(x, cfg_.sigmoid_steepness)
                         : surrogate_drelu_grad(x, a.lambda_step);
  }
  // x is an integer-valued drive (x - theta already applied).
  double discrete(const ActivationKind& a, double x) const {
    if (a.is_binary()) return x > 0.5 ? 1.0 : 0.0;
    const double q = std::floor((x + cfg_.drelu_epsilon) / a.lambda_step);
    return q > 0 ? q : 0.0;
  }

  // Drive W * a - theta for layer k, one column per sample.
  Matrix apply(size_t k, const Matrix& w, const Vector& theta,
               const Matrix& a) const {
    const auto& l = ck_->spec.layers[k];
    Matrix x;
    if (l.kind == LayerKind::kDense) {
      x.noalias() = w * a;
    } else {
      x.resize(static_cast<Eigen::Index>(l.out_size()), a.cols());
      const Eigen::Index positions = l.out_shape[1] * l.out_shape[2];
      Matrix cols;
      for (Eigen::Index b = 0; b < a.cols(); ++b) {
        im2col(l, a.col(b).data(), cols);
        Eigen::Map<Matrix> out(x.col(b).data(), positions, l.channels);
        out.noalias() = cols.transpose() * w.transpose();
      }
    }
    x.colwise() -= theta;
    return x;
  }

  // Accumulates parameter gradients of layer k from delta (d loss / d drive)
  // and optionally the gradient w.r.t. the layer input.
  void backward(size_t k, const Matrix& delta, const Matrix& a,
                ShadowLayer<Scalar>& g, Matrix* dinput) const {
    const auto& l = ck_->spec.layers[k];
    const auto& w = ck_->shadow[k].weights;
    g.theta = -delta.rowwise().sum();
    if (l.kind == LayerKind::kDense) {
      g.weights.noalias() = delta * a.transpose();
      if (dinput) dinput->noalias() = w.transpose() * delta;
      return;
    }
    const Eigen::Index positions = l.out_shape[1] * l.out_shape[2];
    g.weights.setZero(w.rows(), w.cols());
    if (dinput) dinput->setZero(a.rows(), a.cols());
    Matrix cols, dcols;
    for (Eigen::Index b = 0; b < a.cols(); ++b) {
      im2col(l, a.col(b).data(), cols);
      Eigen::Map<const Matrix> d(delta.col(b).data(), positions, l.channels);
      g.weights.noalias() += d.transpose() * cols.transpose();
      if (dinput) {
        dcols.noalias() = w.transpose() * d.transpose();
        col2im_add(l, dcols, dinput->col(b).data());
      }
    }
    // Thresholds within a feature map share one averaged gradient.
    for (int32_t o = 0; o < l.channels; ++o) {
      auto seg = g.theta.segment(o * positions, positions);
      seg.setConstant(seg.mean());
    }
  }

  static void im2col(const LayerSpec& l, const Scalar* in, Matrix& cols) {
    const int32_t c_in = l.in_channels(), h = l.in_shape[1], w = l.in_shape[2];
    const int32_t k = l.kernel_size, oh = l.out_shape[1], ow = l.out_shape[2];
    cols.resize(static_cast<Eigen::Index>(c_in) * k * k,
                static_cast<Eigen::Index>(oh) * ow);
    for (int32_t c = 0; c < c_in; ++c) {
      for (int32_t ky = 0; ky < k; ++ky) {
        for (int32_t kx = 0; kx < k; ++kx) {
          const Eigen::Index row = (c * k + ky) * k + kx;
          for (int32_t oy = 0; oy < oh; ++oy) {
            for (int32_t ox = 0; ox < ow; ++ox) {
              cols(row, oy * ow + ox) = in[(c * h + oy + ky) * w + ox + kx];
            }
          }
        }
      }
    }
  }

  static void col2im_add(const LayerSpec& l, const Matrix& cols, Scalar* out) {
    const int32_t c_in = l.in_channels(), h = l.in_shape[1], w = l.in_shape[2];
    const int32_t k = l.kernel_size, oh = l.out_shape[1], ow = l.out_shape[2];
    for (int32_t c = 0; c < c_in; ++c) {
      for (int32_t ky = 0; ky < k; ++ky) {
        for (int32_t kx = 0; kx < k; ++kx) {
          const Eigen::Index row = (c * k + ky) * k + kx;
          for (int32_t oy = 0; oy < oh; ++oy) {
            for (int32_t ox = 0; ox < ow; ++ox) {
              out[(c * h + oy + ky) * w + ox + kx] += cols(row, oy * ow + ox);
            }
          }
        }
      }
    }
  }

  const TrainerCheckpoint<Scalar>* ck_;
  TrainConfig cfg_;
  std::vector<Matrix> qw_;
  std::vector<Vector> qt_;
};

// Mean softmax cross-entropy of logits (one column per sample) plus the
// hinge penalty on negative shadow thresholds.
template <typename Scalar>
double loss(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& logits,
            std::span<const int32_t> labels,
            const std::vector<ShadowLayer<Scalar>>& shadow,
            double bias_penalty_weight) {
  double ce = 0;
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    const double mx = static_cast<double>(logits.col(b).maxCoeff());
    double sum = 0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
      sum += std::exp(static_cast<double>(logits(i, b)) - mx);
    }
    ce -= static_cast<double>(logits(labels[b], b)) - mx - std::log(sum);
  }
  ce /= static_cast<double>(logits.cols());
  double penalty = 0;
  for (const auto& l : shadow) {
    for (Eigen::Index i = 0; i < l.theta.size(); ++i) {
      if (l.theta[i] < 0) penalty -= static_cast<double>(l.theta[i]);
    }
  }
  return ce + bias_penalty_weight * penalty;
}

struct StepStats {
  double loss = 0;
  size_t correct = 0;
};

// One Adam update of the shadow parameters followed by re-quantization.
// Reports the batch loss and accuracy before the update.
template <typename Scalar>
StepStats train_step(TrainerCheckpoint<Scalar>& ck, const Batch<Scalar>& batch,
                  const TrainConfig& cfg) {
  TrainerNetwork<Scalar> net(ck, cfg);
  net.refresh_quantized();
  auto r = net.loss_and_grad(batch, ForwardMode::kDiscrete);
  ++ck.step;
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(ck.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(ck.step));
  const Scalar lr = static_cast<Scalar>(cfg.learning_rate);
  auto adam = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = static_cast<Scalar>(b1) * m + static_cast<Scalar>(1 - b1) * g;
    v = static_cast<Scalar>(b2) * v +
        static_cast<Scalar>(1 - b2) * g.cwiseProduct(g);
    param.array() -= lr * (m.array() / static_cast<Scalar>(c1)) /
                     ((v.array() / static_cast<Scalar>(c2)).sqrt() +
                      static_cast<Scalar>(cfg.adam_epsilon));
  };
  for (size_t k = 0; k < ck.shadow.size(); ++k) {
    auto& s = ck.shadow[k];
    adam(s.weights, ck.adam_m[k].weights, ck.adam_v[k].weights, r.grads[k].weights);
    adam(s.theta, ck.adam_m[k].theta, ck.adam_v[k].theta, r.grads[k].theta);
    // Shadow weights stay within the representable range.
    s.weights = s.weights.cwiseMax(static_cast<Scalar>(kWeightMin))
                    .cwiseMin(static_cast<Scalar>(kWeightMax));
  }
  requantize(ck);
  return {r.loss, r.correct};
}

template <typename Scalar>
Batch<Scalar> make_batch(std::span<const LabeledImage> images,
                         std::span<const size_t> indices) {
  Batch<Scalar> b;
  b.inputs.resize(static_cast<Eigen::Index>(kImagePixels),
                  static_cast<Eigen::Index>(indices.size()));
  for (size_t i = 0; i < indices.size(); ++i) {
    const auto& img = images[indices[i]];
    for (size_t p = 0; p < kImagePixels; ++p) {
      b.inputs(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(i)) =
          img.pixels[p] >= 128 ? Scalar(1) : Scalar(0);
    }
    b.labels.push_back(img.label);
  }
  return b;
}

// Classification error of the integer frame model on binarized images.
inline double frame_error(const Model& m, std::span<const LabeledImage> images) {
  if (images.empty()) return 0.0;
  size_t wrong = 0;
  for (const auto& img : images) {
    const auto x = binarize(img);
    if (predict(m, x) != img.label) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(images.size());
}

struct EpochStats {
  int32_t epoch = 0;
  double mean_loss = 0;
  double train_error = 0;  // running error of the discrete forward pass
  double val_error = 0;
};

template <typename Scalar>
struct FitResult {
  Model best_model;
  double best_val_error = 1.0;
  int32_t best_epoch = 0;
  int32_t epochs_run = 0;
  bool reached_target = false;
  bool diverged = false;
  std::vector<EpochStats> history;
  TrainerCheckpoint<Scalar> checkpoint;
};

template <typename Scalar = float>
FitResult<Scalar> fit(const NetworkSpec& spec, const TrainConfig& cfg,
                      std::span<const LabeledImage> train,
                      std::span<const LabeledImage> val,
                      const std::function<void(const EpochStats&)>& on_epoch = {}) {
  cfg.validate();
  if (spec.input_size() != kImagePixels) {
    throw ShapeError("network input must have 784 units for MNIST");
  }
  FitResult<Scalar> res;
  res.checkpoint = init_checkpoint<Scalar>(spec, cfg.seed);
  auto& ck = res.checkpoint;
  res.best_model = ck.model();
  res.best_val_error = frame_error(res.best_model, val);
  std::vector<size_t> order(train.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  int32_t since_best = 0;
  for (int32_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng rng = make_rng(cfg.seed, "shuffle", static_cast<uint64_t>(epoch));
    shuffle(order, rng);
    EpochStats st;
    st.epoch = epoch;
    size_t batches = 0, wrong = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t len = std::min<size_t>(cfg.batch_size, order.size() - start);
      const auto batch = make_batch<Scalar>(
          train, std::span<const size_t>(order.data() + start, len));
      const StepStats step = train_step(ck, batch, cfg);
      st.mean_loss += step.loss;
      wrong += len - step.correct;
      ++batches;
    }
    st.mean_loss /= static_cast<double>(std::max<size_t>(batches, 1));
    st.train_error = static_cast<double>(wrong) /
                     static_cast<double>(std::max<size_t>(order.size(), 1));
    const Model current = ck.model();
    st.val_error = frame_error(current, val);
    res.history.push_back(st);
    res.epochs_run = epoch;
    if (on_epoch) on_epoch(st);
    if (st.val_error < res.best_val_error || res.best_epoch == 0) {
      res.best_val_error = st.val_error;
      res.best_model = current;
      res.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (cfg.target_val_error > 0 && st.val_error <= cfg.target_val_error) {
      res.reached_target = true;
      break;
    }
    if (cfg.patience > 0 && since_best >= cfg.patience) {
      res.diverged = true;
      break;
    }
  }
  return res;
}

// Checkpoint file: the model's layer list plus shadow parameters, Adam
// moments and the step count. Floats are written with round-trip precision.
template <typename Scalar>
std::string checkpoint_to_string(const TrainerCheckpoint<Scalar>& ck) {
  using nlohmann::json;
  auto arr = [](const auto& v) { return json(v).dump(); };
  auto layer_arrays = [&](const ShadowLayer<Scalar>& l, const char* prefix) {
    const auto w = detail::weights_file_order<Scalar>(l.weights);
    std::vector<Scalar> t(l.theta.data(), l.theta.data() + l.theta.size());
    return ",\n\"" + std::string(prefix) + "weights\":" + arr(w) + ",\n\"" +
           prefix + "theta\":" + arr(t);
  };
  std::string s = "{\n\"version\":" + std::to_string(kModelFormatVersion) +
                  ",\n\"kind\":\"checkpoint\",\n\"scalar_bits\":" +
                  std::to_string(sizeof(Scalar) * 8) +
                  ",\n\"step\":" + std::to_string(ck.step) + ",\n\"layers\":[\n";
  for (size_t k = 0; k < ck.spec.layers.size(); ++k) {
    const auto& p = ck.quantized.layers[k];
    s += "{" + layer_header_text(ck.spec.layers[k]);
    s += ",\n\"weights\":" + detail::int_array_text(p.weights);
    s += ",\n\"theta\":" + detail::int_array_text(p.theta);
    s += layer_arrays(ck.shadow[k], "shadow_");
    s += layer_arrays(ck.adam_m[k], "adam_m_");
    s += layer_arrays(ck.adam_v[k], "adam_v_");
    s += k + 1 < ck.spec.layers.size() ? "},\n" : "}\n";
  }
  return s + "]\n}\n";
}

template <typename Scalar>
TrainerCheckpoint<Scalar> checkpoint_from_string(const std::string& text) {
  using nlohmann::json;
  try {
    const json j = json::parse(text);
    if (j.at("version").get<int>() != kModelFormatVersion ||
        j.at("kind").get<std::string>() != "checkpoint") {
      throw VersionError("not a version-1 trainer checkpoint");
    }
    if (j.at("scalar_bits").get<size_t>() != sizeof(Scalar) * 8) {
      throw VersionError("checkpoint scalar width mismatch");
    }
    TrainerCheckpoint<Scalar> ck;
    ck.step = j.at("step").get<int64_t>();
    for (const auto& lj : j.at("layers")) {
      const LayerSpec l = layer_spec_from_json(lj);
      ck.spec.layers.push_back(l);
      auto read = [&](const char* prefix) {
        ShadowLayer<Scalar> s;
        const auto w =
            lj.at(std::string(prefix) + "weights").get<std::vector<Scalar>>();
        const auto t =
            lj.at(std::string(prefix) + "theta").get<std::vector<Scalar>>();
        const auto rows = detail::weight_rows(l), cols = detail::weight_cols(l);
        if (w.size() != static_cast<size_t>(rows * cols) ||
            t.size() != l.out_size()) {
          throw ShapeError("checkpoint array size mismatch");
        }
        s.weights.resize(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r) {
          for (Eigen::Index c = 0; c < cols; ++c) {
            s.weights(r, c) = w[static_cast<size_t>(r * cols + c)];
          }
        }
        s.theta = Eigen::Map<const typename ShadowLayer<Scalar>::Vector>(
            t.data(), static_cast<Eigen::Index>(t.size()));
        return s;
      };
      ck.shadow.push_back(read("shadow_"));
      ck.adam_m.push_back(read("adam_m_"));
      ck.adam_v.push_back(read("adam_v_"));
      LayerParams p;
      p.weights = detail::int8_array_from_json(lj.at("weights"), "weights",
                                               kWeightMin);
      p.theta = detail::int8_array_from_json(lj.at("theta"), "theta", 0);
      ck.quantized.layers.push_back(std::move(p));
    }
    ck.spec.num_classes =
        ck.spec.layers.empty()
            ? 0
            : static_cast<int32_t>(ck.spec.layers.back().out_size());
    validate_params(ck.spec, ck.quantized);
    ck.spec.validate();
    for (size_t k = 0; k < ck.shadow.size(); ++k) {
      if (detail::quantize_layer(ck.shadow[k]) != ck.quantized.layers[k]) {
        throw InvariantError("checkpoint: quantize(shadow) != forward params");
      }
    }
    return ck;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

}  // namespace countnet
