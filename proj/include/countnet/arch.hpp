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

#include <charconv>
#include <cmath>
#include <string>
#include <string_view>
#include <vector>

#include "countnet/core_types.hpp"

namespace countnet {

namespace detail {

inline bool parse_positive(std::string_view s, int32_t& out) {
  if (s.empty()) return false;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && out > 0;
}

}  // namespace detail

// Parses architecture strings such as "784-300-100-10" (dense widths) or
// "784-12c5-12c7-10" (NcK: N feature maps with KxK kernels). A square input
// size feeding a conv layer is reshaped to [1, s, s]. Every layer gets
// `activation`.
inline NetworkSpec parse_arch(std::string_view arch, ActivationKind activation) {
  std::vector<std::string_view> tokens;
  size_t start = 0;
  while (true) {
    const size_t dash = arch.find('-', start);
    tokens.push_back(arch.substr(start, dash - start));
    if (dash == std::string_view::npos) break;
    start = dash + 1;
  }
  if (tokens.size() < 2) {
    throw ParseError("architecture '" + std::string(arch) +
                     "' needs an input size and at least one layer");
  }
  int32_t input = 0;
  if (!detail::parse_positive(tokens[0], input)) {
    throw ParseError("bad architecture token '" + std::string(tokens[0]) + "'");
  }
  NetworkSpec spec;
  Shape shape = {input};
  for (size_t i = 1; i < tokens.size(); ++i) {
    const std::string_view tok = tokens[i];
    const size_t c = tok.find('c');
    if (c == std::string_view::npos) {
      int32_t width = 0;
      if (!detail::parse_positive(tok, width)) {
        throw ParseError("bad architecture token '" + std::string(tok) + "'");
      }
      LayerSpec l = LayerSpec::dense(shape_size(shape), width, activation);
      l.in_shape = shape;
      spec.layers.push_back(l);
      shape = l.out_shape;
      continue;
    }
    int32_t maps = 0, kernel = 0;
    if (!detail::parse_positive(tok.substr(0, c), maps) ||
        !detail::parse_positive(tok.substr(c + 1), kernel)) {
      throw ParseError("bad architecture token '" + std::string(tok) + "'");
    }
    if (shape.size() == 1) {
      const auto side = static_cast<int32_t>(std::lround(std::sqrt(shape[0])));
      if (side * side != shape[0]) {
        throw ParseError("conv token '" + std::string(tok) +
                         "' needs a square input, got " +
                         std::to_string(shape[0]));
      }
      shape = {1, side, side};
    }
    if (shape[1] - kernel + 1 < 1 || shape[2] - kernel + 1 < 1) {
      throw ParseError("conv token '" + std::string(tok) +
                       "' kernel larger than input " + shape_string(shape));
    }
    LayerSpec l = LayerSpec::conv2d(shape, maps, kernel, activation);
    spec.layers.push_back(l);
    shape = l.out_shape;
  }
  if (spec.layers.back().kind != LayerKind::kDense) {
    throw ParseError("architecture must end with a dense output layer");
  }
  spec.num_classes = static_cast<int32_t>(spec.layers.back().out_size());
  spec.validate();
  return spec;
}

}  // namespace countnet
