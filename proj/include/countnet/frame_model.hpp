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

// Frame-based integer forward pass. This is the reference semantics the
// event runtime has to reproduce, so it works directly from the dense weight
// layout and never touches the lowered synapse tables.

#pragma once

#include <cstdint>
#include <span>
#include <type_traits>
#include <vector>

#include "countnet/core_types.hpp"

namespace countnet {

inline int32_t binary_step(int64_t x) { return x > 0 ? 1 : 0; }

// Mathematical floor division for b > 0.
inline int64_t floor_div(int64_t a, int64_t b) {
  const int64_t q = a / b;
  return (a % b != 0 && a < 0) ? q - 1 : q;
}

// Discretized ReLU of the net input x against threshold theta with step
// lambda: max(0, floor((x - theta) / lambda)).
inline int32_t drelu(int64_t x, int64_t theta, int32_t lambda) {
  if (lambda < 1) throw InvariantError("drelu lambda must be >= 1");
  const int64_t q = floor_div(x - theta, lambda);
  return q > 0 ? narrow_to_i32(q) : 0;
}

inline int32_t activate(const ActivationKind& a, int64_t x, int64_t theta) {
  return a.is_binary() ? binary_step(x - theta) : drelu(x, theta, a.lambda_step);
}

struct LayerActivation {
  std::vector<int32_t> net_input;  // W * y_prev, threshold not subtracted
  std::vector<int32_t> output;
};

struct ActivationRecord {
  std::vector<LayerActivation> layers;

  const std::vector<int32_t>& output() const { return layers.back().output; }
};

static_assert(std::is_integral_v<decltype(LayerActivation::net_input)::value_type>);
static_assert(std::is_integral_v<decltype(LayerParams::weights)::value_type>);

namespace detail {

// Adds W*y into x. When `ledger` is set, charges y_j additions for every
// nonzero weight leaving source j.
inline void accumulate_dense(const LayerSpec& l, const LayerParams& p,
                             std::span<const int32_t> y,
                             std::vector<int64_t>& x, OpLedger* ledger,
                             size_t layer) {
  const size_t in = l.in_size(), out = l.out_size();
  std::vector<size_t> active;
  for (size_t j = 0; j < in; ++j) {
    if (y[j] != 0) active.push_back(j);
  }
  uint64_t adds = 0;
  for (size_t k = 0; k < out; ++k) {
    const int8_t* row = p.weights.data() + k * in;
    int64_t acc = 0;
    for (size_t j : active) {
      const int8_t w = row[j];
      if (w == 0) continue;
      acc += int64_t{w} * y[j];
      adds += static_cast<uint64_t>(y[j] < 0 ? -int64_t{y[j]} : y[j]);
    }
    x[k] = acc;
  }
  if (ledger) {
    ledger->additions += adds;
    ledger->additions_per_layer[layer] += adds;
  }
}

inline void accumulate_conv2d(const LayerSpec& l, const LayerParams& p,
                              std::span<const int32_t> y,
                              std::vector<int64_t>& x, OpLedger* ledger,
                              size_t layer) {
  const int32_t in_c = l.in_shape[0], in_h = l.in_shape[1],
                in_w = l.in_shape[2];
  const int32_t out_h = l.out_shape[1], out_w = l.out_shape[2];
  const int32_t k = l.kernel_size;
  uint64_t adds = 0;
  for (int32_t o = 0; o < l.channels; ++o) {
    for (int32_t oy = 0; oy < out_h; ++oy) {
      for (int32_t ox = 0; ox < out_w; ++ox) {
        int64_t acc = 0;
        for (int32_t c = 0; c < in_c; ++c) {
          for (int32_t ky = 0; ky < k; ++ky) {
            for (int32_t kx = 0; kx < k; ++kx) {
              const int32_t v = y[(c * in_h + oy + ky) * in_w + ox + kx];
              const int8_t w = p.weights[((o * in_c + c) * k + ky) * k + kx];
              if (v == 0 || w == 0) continue;
              acc += int64_t{w} * v;
              adds += static_cast<uint64_t>(v < 0 ? -int64_t{v} : v);
            }
          }
        }
        x[(o * out_h + oy) * out_w + ox] = acc;
      }
    }
  }
  if (ledger) {
    ledger->additions += adds;
    ledger->additions_per_layer[layer] += adds;
  }
}

}  // namespace detail

// Runs every layer on an integer input. The ledger, when given, is charged
// with the addition count of the additive cost model.
inline ActivationRecord forward(const Model& m, std::span<const int32_t> input,
                                OpLedger* ledger = nullptr) {
  const auto& layers = m.spec.layers;
  if (layers.empty()) throw ShapeError("network has no layers");
  if (input.size() != layers[0].in_size()) {
    throw ShapeError("input has " + std::to_string(input.size()) +
                     " entries, layer 0 expects " +
                     std::to_string(layers[0].in_size()));
  }
  for (int32_t v : input) {
    if (v < 0) throw InvariantError("frame input entries must be >= 0");
  }
  if (ledger && ledger->additions_per_layer.size() != layers.size()) {
    ledger->reset(layers.size());
  }
  ActivationRecord rec;
  rec.layers.resize(layers.size());
  std::span<const int32_t> y = input;
  for (size_t k = 0; k < layers.size(); ++k) {
    const auto& l = layers[k];
    const auto& p = m.params.layers[k];
    std::vector<int64_t> x(l.out_size(), 0);
    if (l.kind == LayerKind::kDense) {
      detail::accumulate_dense(l, p, y, x, ledger, k);
    } else {
      detail::accumulate_conv2d(l, p, y, x, ledger, k);
    }
    auto& out = rec.layers[k];
    out.net_input.resize(x.size());
    out.output.resize(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
      out.net_input[i] = narrow_to_i32(x[i]);
      out.output[i] = activate(l.activation, x[i], p.theta[i]);
    }
    y = out.output;
  }
  return rec;
}

// Class decision from a forward record. DiscretizedReLU output layers: argmax
// of y, ties broken by the drive x - theta. Binary output layers: argmax of
// x - theta. Remaining ties go to the lowest index.
inline int32_t predict_from_record(const Model& m, const ActivationRecord& rec) {
  const auto& last = rec.layers.back();
  const auto& theta = m.params.layers.back().theta;
  const bool use_output = m.spec.layers.back().activation.is_drelu();
  int32_t best = 0;
  for (size_t i = 1; i < last.output.size(); ++i) {
    const int64_t drive_i = int64_t{last.net_input[i]} - theta[i];
    const int64_t drive_b = int64_t{last.net_input[best]} - theta[best];
    if (use_output) {
      if (last.output[i] > last.output[best] ||
          (last.output[i] == last.output[best] && drive_i > drive_b)) {
        best = static_cast<int32_t>(i);
      }
    } else if (drive_i > drive_b) {
      best = static_cast<int32_t>(i);
    }
  }
  return best;
}

inline int32_t predict(const Model& m, std::span<const int32_t> input) {
  return predict_from_record(m, forward(m, input));
}

}  // namespace countnet
