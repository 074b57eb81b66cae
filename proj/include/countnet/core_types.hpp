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

#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <type_traits>
#include <vector>

#include "countnet/error.hpp"

namespace countnet {

constexpr int32_t kWeightMin = -128;
constexpr int32_t kWeightMax = 127;

enum class ActivationType { kBinary, kDiscretizedRelu };

// Binary step, or discretized ReLU with an integer step size.
struct ActivationKind {
  ActivationType type = ActivationType::kBinary;
  int32_t lambda_step = 1;  // only meaningful for kDiscretizedRelu

  static ActivationKind binary() { return {ActivationType::kBinary, 1}; }
  static ActivationKind drelu(int32_t lambda) {
    return {ActivationType::kDiscretizedRelu, lambda};
  }

  bool is_binary() const { return type == ActivationType::kBinary; }
  bool is_drelu() const { return type == ActivationType::kDiscretizedRelu; }

  void validate() const {
    if (is_drelu() && lambda_step < 1) {
      throw InvariantError("drelu lambda must be >= 1, got " +
                           std::to_string(lambda_step));
    }
  }

  friend bool operator==(const ActivationKind& a, const ActivationKind& b) {
    if (a.type != b.type) return false;
    return a.is_binary() || a.lambda_step == b.lambda_step;
  }
};

enum class LayerKind { kDense, kConv2D };

using Shape = std::vector<int32_t>;

inline size_t shape_size(const Shape& s) {
  if (s.empty()) return 0;
  return std::accumulate(s.begin(), s.end(), size_t{1},
                         [](size_t acc, int32_t d) {
                           return acc * static_cast<size_t>(d < 0 ? 0 : d);
                         });
}

inline std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

// One layer. Conv2D layers are valid (no padding), stride 1, with shapes
// laid out as [channels, height, width].
struct LayerSpec {
  LayerKind kind = LayerKind::kDense;
  Shape in_shape;
  Shape out_shape;
  int32_t kernel_size = 0;  // Conv2D only
  int32_t channels = 0;     // Conv2D only: number of output feature maps
  ActivationKind activation;

  size_t in_size() const { return shape_size(in_shape); }
  size_t out_size() const { return shape_size(out_shape); }
  int32_t in_channels() const {
    return kind == LayerKind::kConv2D ? in_shape.at(0) : 0;
  }

  // Dense: out*in, target-major. Conv2D: [channels][in_channels][k][k].
  size_t weight_count() const {
    if (kind == LayerKind::kDense) return in_size() * out_size();
    return static_cast<size_t>(channels) * in_channels() * kernel_size *
           kernel_size;
  }

  static LayerSpec dense(size_t in, size_t out, ActivationKind act) {
    LayerSpec l;
    l.kind = LayerKind::kDense;
    l.in_shape = {static_cast<int32_t>(in)};
    l.out_shape = {static_cast<int32_t>(out)};
    l.activation = act;
    return l;
  }

  static LayerSpec conv2d(Shape in, int32_t maps, int32_t kernel,
                          ActivationKind act) {
    LayerSpec l;
    l.kind = LayerKind::kConv2D;
    l.kernel_size = kernel;
    l.channels = maps;
    if (in.size() == 3) {
      l.out_shape = {maps, in[1] - kernel + 1, in[2] - kernel + 1};
    }
    l.in_shape = std::move(in);
    l.activation = act;
    return l;
  }

  void validate() const {
    activation.validate();
    if (in_size() == 0 || out_size() == 0) {
      throw ShapeError("layer has an empty shape: in " + shape_string(in_shape) +
                       " out " + shape_string(out_shape));
    }
    if (kind == LayerKind::kDense) {
      if (out_shape.size() != 1) {
        throw ShapeError("dense out_shape must be rank 1, got " +
                         shape_string(out_shape));
      }
      return;
    }
    if (in_shape.size() != 3 || out_shape.size() != 3) {
      throw ShapeError("conv2d shapes must be [c,h,w]");
    }
    if (kernel_size < 1 || channels < 1) {
      throw ShapeError("conv2d needs kernel_size >= 1 and channels >= 1");
    }
    const Shape expect = {channels, in_shape[1] - kernel_size + 1,
                          in_shape[2] - kernel_size + 1};
    if (expect[1] < 1 || expect[2] < 1 || out_shape != expect) {
      throw ShapeError("conv2d out_shape " + shape_string(out_shape) +
                       " does not match valid convolution " +
                       shape_string(expect));
    }
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct NetworkSpec {
  std::vector<LayerSpec> layers;
  int32_t num_classes = 0;

  size_t input_size() const { return layers.empty() ? 0 : layers[0].in_size(); }

  void validate() const {
    if (layers.empty()) throw ShapeError("network has no layers");
    for (size_t k = 0; k < layers.size(); ++k) {
      layers[k].validate();
      if (k + 1 < layers.size() &&
          layers[k].out_size() != layers[k + 1].in_size()) {
        throw ShapeError("layer " + std::to_string(k) + " out_shape " +
                         shape_string(layers[k].out_shape) +
                         " does not feed layer " + std::to_string(k + 1) +
                         " in_shape " + shape_string(layers[k + 1].in_shape));
      }
      if (k + 1 < layers.size() && layers[k + 1].kind == LayerKind::kConv2D &&
          layers[k].out_shape != layers[k + 1].in_shape) {
        throw ShapeError("conv2d layer " + std::to_string(k + 1) +
                         " needs in_shape equal to the previous out_shape");
      }
    }
    if (layers.back().out_size() != static_cast<size_t>(num_classes)) {
      throw ShapeError("final layer size " +
                       std::to_string(layers.back().out_size()) +
                       " != num_classes " + std::to_string(num_classes));
    }
  }

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

// Forward-pass parameters of one layer. Thresholds are per output unit.
struct LayerParams {
  std::vector<int8_t> weights;
  std::vector<int8_t> theta;

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct QuantizedParams {
  std::vector<LayerParams> layers;

  friend bool operator==(const QuantizedParams&,
                         const QuantizedParams&) = default;
};

inline void validate_params(const NetworkSpec& spec,
                            const QuantizedParams& params) {
  if (params.layers.size() != spec.layers.size()) {
    throw ShapeError("params have " + std::to_string(params.layers.size()) +
                     " layers, spec has " + std::to_string(spec.layers.size()));
  }
  for (size_t k = 0; k < spec.layers.size(); ++k) {
    const auto& l = spec.layers[k];
    const auto& p = params.layers[k];
    if (p.weights.size() != l.weight_count()) {
      throw ShapeError("layer " + std::to_string(k) + ": expected " +
                       std::to_string(l.weight_count()) + " weights, got " +
                       std::to_string(p.weights.size()));
    }
    if (p.theta.size() != l.out_size()) {
      throw ShapeError("layer " + std::to_string(k) + ": expected " +
                       std::to_string(l.out_size()) + " thresholds, got " +
                       std::to_string(p.theta.size()));
    }
    for (int8_t t : p.theta) {
      if (t < 0) {
        throw InvariantError("layer " + std::to_string(k) +
                             ": negative threshold " + std::to_string(t));
      }
    }
  }
}

struct Model {
  NetworkSpec spec;
  QuantizedParams params;

  void validate() const {
    spec.validate();
    validate_params(spec, params);
  }

  friend bool operator==(const Model&, const Model&) = default;
};

// Operation counts charged by the integer engines. Layer indices in the
// per-layer vectors follow spec.layers; input-layer events are not counted
// in events_emitted.
struct OpLedger {
  uint64_t additions = 0;
  uint64_t comparisons = 0;
  uint64_t events_emitted = 0;
  uint64_t multiplications = 0;
  std::vector<uint64_t> per_input_event_additions;
  std::vector<uint64_t> additions_per_layer;
  std::vector<uint64_t> events_per_layer;

  void reset(size_t num_layers) {
    *this = OpLedger{};
    additions_per_layer.assign(num_layers, 0);
    events_per_layer.assign(num_layers, 0);
  }
};

// 32-bit accumulation with an overflow trap.
inline int32_t checked_add(int32_t a, int32_t b) {
  int32_t out;
  if (__builtin_add_overflow(a, b, &out)) {
    throw OverflowError("32-bit accumulator overflow: " + std::to_string(a) +
                        " + " + std::to_string(b));
  }
  return out;
}

inline int32_t checked_sub(int32_t a, int32_t b) {
  int32_t out;
  if (__builtin_sub_overflow(a, b, &out)) {
    throw OverflowError("32-bit accumulator overflow: " + std::to_string(a) +
                        " - " + std::to_string(b));
  }
  return out;
}

inline int32_t narrow_to_i32(int64_t v) {
  if (v < std::numeric_limits<int32_t>::min() ||
      v > std::numeric_limits<int32_t>::max()) {
    throw OverflowError("value " + std::to_string(v) +
                        " does not fit a 32-bit accumulator");
  }
  return static_cast<int32_t>(v);
}

}  // namespace countnet
