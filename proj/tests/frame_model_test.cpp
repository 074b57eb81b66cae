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

#include <string>
#include <vector>

#include "countnet/equivalence.hpp"
#include "countnet/frame_model.hpp"
#include "countnet/model_io.hpp"
#include "countnet/rng.hpp"
#include "countnet/synapse_table.hpp"

namespace countnet {
namespace {

// Oracle for drelu: feed the net input one unit at a time into a counter
// with wrap-around at lambda and count the net number of wraps.
int64_t drelu_by_simulation(int64_t x, int64_t theta, int64_t lambda) {
  int64_t c = -theta, z = 0;
  const int64_t step = x >= 0 ? 1 : -1;
  for (int64_t i = 0; i != x; i += step) {
    c += step;
    while (c >= lambda) {
      c -= lambda;
      ++z;
    }
    while (z > 0 && c < 0) {
      c += lambda;
      --z;
    }
  }
  return z;
}

TEST(Activation, BinaryStep) {
  EXPECT_EQ(binary_step(1), 1);
  EXPECT_EQ(binary_step(0), 0);
  EXPECT_EQ(binary_step(-5), 0);
  EXPECT_EQ(activate(ActivationKind::binary(), 3, 3), 0);
  EXPECT_EQ(activate(ActivationKind::binary(), 4, 3), 1);
}

TEST(Activation, FloorDiv) {
  EXPECT_EQ(floor_div(7, 2), 3);
  EXPECT_EQ(floor_div(-7, 2), -4);
  EXPECT_EQ(floor_div(-8, 2), -4);
  EXPECT_EQ(floor_div(0, 3), 0);
}

TEST(Activation, DreluExamples) {
  EXPECT_EQ(drelu(10, 2, 4), 2);
  EXPECT_EQ(drelu(5, 2, 4), 0);
  EXPECT_EQ(drelu(6, 2, 4), 1);
  EXPECT_EQ(drelu(-100, 0, 4), 0);
  EXPECT_THROW(drelu(1, 0, 0), InvariantError);
}

TEST(Activation, DreluMatchesCounterSimulation) {
  for (int64_t lambda : {1, 2, 3, 4, 7, 64}) {
    for (int64_t theta = 0; theta <= 20; theta += 3) {
      for (int64_t x = -150; x <= 150; ++x) {
        ASSERT_EQ(drelu(x, theta, static_cast<int32_t>(lambda)),
                  drelu_by_simulation(x, theta, lambda))
            << "x " << x << " theta " << theta << " lambda " << lambda;
      }
    }
  }
}

// Property: both activations are non-decreasing in x and non-increasing in
// theta.
TEST(Activation, Monotone) {
  Rng rng = make_rng(7, "monotone");
  for (int i = 0; i < 5000; ++i) {
    const int64_t x = static_cast<int64_t>(uniform_index(rng, 2001)) - 1000;
    const int64_t theta = static_cast<int64_t>(uniform_index(rng, 128));
    const int32_t lambda = 1 + static_cast<int32_t>(uniform_index(rng, 100));
    const int64_t dx = static_cast<int64_t>(uniform_index(rng, 50));
    for (const ActivationKind a :
         {ActivationKind::binary(), ActivationKind::drelu(lambda)}) {
      ASSERT_LE(activate(a, x, theta), activate(a, x + dx, theta));
      ASSERT_GE(activate(a, x, theta), activate(a, x, theta + dx));
    }
  }
}

// With lambda = 1 drelu is the plain rectifier, which is strictly more
// expressive than the step: x - theta = 3 yields 3, not 1.
TEST(Activation, LambdaOneIsNotBinary) {
  EXPECT_EQ(drelu(5, 2, 1), 3);
  EXPECT_EQ(binary_step(5 - 2), 1);
  for (int64_t x = -20; x <= 20; ++x) {
    EXPECT_EQ(drelu(x, 0, 1), std::max<int64_t>(0, x));
  }
}

TEST(Forward, GoldenModel) {
  const Model m = load_model(std::string(COUNTNET_FIXTURES) + "/golden_model.json");
  const std::vector<int32_t> in = {1, 1, 1};
  const ActivationRecord r = forward(m, in);
  EXPECT_EQ(r.layers[0].net_input, (std::vector<int32_t>{4, 1}));
  EXPECT_EQ(r.layers[0].output, (std::vector<int32_t>{1, 1}));
  EXPECT_EQ(r.layers[1].net_input, (std::vector<int32_t>{4, 2}));
  EXPECT_EQ(r.layers[1].output, (std::vector<int32_t>{2, 0}));
  EXPECT_EQ(predict(m, in), 0);
}

TEST(Forward, RejectsBadInput) {
  const Model m = load_model(std::string(COUNTNET_FIXTURES) + "/golden_model.json");
  EXPECT_THROW(forward(m, std::vector<int32_t>{1, 1}), ShapeError);
  EXPECT_THROW(forward(m, std::vector<int32_t>{1, -1, 1}), InvariantError);
}

TEST(Predict, TieBreaks) {
  Model m;
  m.spec.layers = {LayerSpec::dense(2, 3, ActivationKind::drelu(4))};
  m.spec.num_classes = 3;
  // x = [5, 7, 7], theta = [0, 0, 1]: y = [1, 1, 1], drives [5, 7, 6].
  m.params.layers = {{{5, 0, 7, 0, 7, 0}, {0, 0, 1}}};
  EXPECT_EQ(predict(m, std::vector<int32_t>{1, 0}), 1);
  // Full tie falls to the lowest index.
  m.params.layers = {{{5, 0, 5, 0, 5, 0}, {0, 0, 0}}};
  EXPECT_EQ(predict(m, std::vector<int32_t>{1, 0}), 0);
  // Binary output: argmax of the drive even when all outputs are 0.
  m.spec.layers[0].activation = ActivationKind::binary();
  m.params.layers = {{{-3, 0, -1, 0, -2, 0}, {0, 0, 0}}};
  EXPECT_EQ(predict(m, std::vector<int32_t>{1, 0}), 1);
}

TEST(Forward, ConvMatchesBruteForce) {
  SizeLimits limits;
  limits.conv_probability = 1.0;
  int convs = 0;
  for (uint64_t seed = 0; seed < 60; ++seed) {
    const DiffCase c = gen_random_case(seed, limits);
    const Model& m = c.model;
    const auto rec = forward(m, c.input);
    std::vector<int32_t> y = c.input;
    for (size_t k = 0; k < m.spec.layers.size(); ++k) {
      const auto& l = m.spec.layers[k];
      const auto& p = m.params.layers[k];
      std::vector<int64_t> x(l.out_size(), 0);
      if (l.kind == LayerKind::kConv2D) {
        ++convs;
        const int C = l.in_shape[0], H = l.in_shape[1], W = l.in_shape[2];
        const int K = l.kernel_size, OH = l.out_shape[1], OW = l.out_shape[2];
        for (int o = 0; o < l.channels; ++o)
          for (int i = 0; i < OH; ++i)
            for (int j = 0; j < OW; ++j)
              for (int ch = 0; ch < C; ++ch)
                for (int a = 0; a < K; ++a)
                  for (int b = 0; b < K; ++b)
                    x[(o * OH + i) * OW + j] +=
                        int64_t{p.weights[((o * C + ch) * K + a) * K + b]} *
                        y[(ch * H + i + a) * W + j + b];
      } else {
        const size_t in = l.in_size();
        for (size_t o = 0; o < l.out_size(); ++o)
          for (size_t j = 0; j < in; ++j)
            x[o] += int64_t{p.weights[o * in + j]} * y[j];
      }
      std::vector<int32_t> out(x.size());
      for (size_t i = 0; i < x.size(); ++i) {
        ASSERT_EQ(rec.layers[k].net_input[i], x[i]) << "seed " << seed;
        out[i] = activate(l.activation, x[i], p.theta[i]);
      }
      ASSERT_EQ(rec.layers[k].output, out);
      y = out;
    }
  }
  EXPECT_GT(convs, 20);
}

// The ledger charges |y_j| additions per nonzero synapse leaving j.
TEST(Forward, LedgerCountsSynapticAdditions) {
  SizeLimits limits;
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const DiffCase c = gen_random_case(seed, limits);
    OpLedger ledger;
    const auto rec = forward(c.model, c.input, &ledger);
    const LoweredNetwork net = lower(c.model);
    uint64_t expect = 0;
    std::vector<int32_t> y = c.input;
    for (size_t k = 0; k < net.tables.size(); ++k) {
      for (size_t j = 0; j < y.size(); ++j) {
        expect += static_cast<uint64_t>(std::abs(y[j])) *
                  net.tables[k].fan_out(j).size();
      }
      y = rec.layers[k].output;
    }
    ASSERT_EQ(ledger.additions, expect) << "seed " << seed;
    EXPECT_EQ(ledger.multiplications, 0u);
  }
}

}  // namespace
}  // namespace countnet
