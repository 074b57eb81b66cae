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
#include <span>
#include <vector>

#include "countnet/core_types.hpp"

namespace countnet {

struct Synapse {
  uint32_t target;
  int32_t weight;
};

// Fan-out of every source unit of one layer in CSR form. Zero weights are
// dropped: delivering 0 cannot change any counter.
struct SynapseTable {
  std::vector<uint32_t> offsets;  // size num_sources + 1
  std::vector<Synapse> synapses;

  size_t num_sources() const { return offsets.empty() ? 0 : offsets.size() - 1; }

  std::span<const Synapse> fan_out(size_t source) const {
    return {synapses.data() + offsets[source],
            synapses.data() + offsets[source + 1]};
  }
};

inline SynapseTable lower_dense(const LayerSpec& spec, const LayerParams& p) {
  const size_t in = spec.in_size(), out = spec.out_size();
  SynapseTable t;
  t.offsets.reserve(in + 1);
  t.offsets.push_back(0);
  for (size_t j = 0; j < in; ++j) {
    for (size_t k = 0; k < out; ++k) {
      const int8_t w = p.weights[k * in + j];
      if (w != 0) t.synapses.push_back({static_cast<uint32_t>(k), w});
    }
    t.offsets.push_back(static_cast<uint32_t>(t.synapses.size()));
  }
  return t;
}

inline SynapseTable lower_conv2d(const LayerSpec& spec, const LayerParams& p) {
  const int32_t in_c = spec.in_shape[0], in_h = spec.in_shape[1],
                in_w = spec.in_shape[2];
  const int32_t out_h = spec.out_shape[1], out_w = spec.out_shape[2];
  const int32_t k = spec.kernel_size, maps = spec.channels;
  SynapseTable t;
  t.offsets.reserve(spec.in_size() + 1);
  t.offsets.push_back(0);
  for (int32_t c = 0; c < in_c; ++c) {
    for (int32_t iy = 0; iy < in_h; ++iy) {
      for (int32_t ix = 0; ix < in_w; ++ix) {
        for (int32_t o = 0; o < maps; ++o) {
          for (int32_t ky = 0; ky < k; ++ky) {
            const int32_t oy = iy - ky;
            if (oy < 0 || oy >= out_h) continue;
            for (int32_t kx = 0; kx < k; ++kx) {
              const int32_t ox = ix - kx;
              if (ox < 0 || ox >= out_w) continue;
              const int8_t w = p.weights[((o * in_c + c) * k + ky) * k + kx];
              if (w == 0) continue;
              t.synapses.push_back(
                  {static_cast<uint32_t>((o * out_h + oy) * out_w + ox), w});
            }
          }
        }
        t.offsets.push_back(static_cast<uint32_t>(t.synapses.size()));
      }
    }
  }
  return t;
}

// A model with every layer lowered to an explicit synapse table, the form
// consumed by the event runtime.
struct LoweredNetwork {
  Model model;
  std::vector<SynapseTable> tables;

  const NetworkSpec& spec() const { return model.spec; }
  size_t num_layers() const { return tables.size(); }
};

inline LoweredNetwork lower(Model model) {
  model.validate();
  LoweredNetwork net;
  for (size_t k = 0; k < model.spec.layers.size(); ++k) {
    const auto& l = model.spec.layers[k];
    net.tables.push_back(l.kind == LayerKind::kDense
                             ? lower_dense(l, model.params.layers[k])
                             : lower_conv2d(l, model.params.layers[k]));
  }
  net.model = std::move(model);
  return net;
}

}  // namespace countnet
