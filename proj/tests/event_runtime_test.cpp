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

#include <sstream>
#include <string>
#include <vector>

#include "countnet/event_runtime.hpp"
#include "countnet/frame_model.hpp"
#include "countnet/model_io.hpp"

namespace countnet {
namespace {

TEST(BasicUpdate, Sequence) {
  const std::vector<int8_t> theta = {1};
  CounterState s = CounterState::init(theta);
  OpLedger ledger;
  EXPECT_EQ(basic_update(s, 0, 2, &ledger), 1);
  EXPECT_EQ(s.c[0], 1);
  EXPECT_EQ(basic_update(s, 0, -2, &ledger), -1);
  EXPECT_EQ(s.c[0], -1);
  EXPECT_EQ(ledger.additions, 2u);
  EXPECT_EQ(ledger.comparisons, 4u);
}

TEST(BasicUpdate, NullUpdate) {
  const std::vector<int8_t> theta = {0};
  CounterState s = CounterState::init(theta);
  EXPECT_EQ(basic_update(s, 0, 0), 0);
  EXPECT_EQ(s.c[0], 0);
  // Staying positive emits nothing either.
  EXPECT_EQ(basic_update(s, 0, 3), 1);
  EXPECT_EQ(basic_update(s, 0, 3), 0);
}

TEST(BasicUpdate, OverflowTraps) {
  CounterState s;
  s.c = {INT32_MAX - 1};
  EXPECT_THROW(basic_update(s, 0, 5), OverflowError);
}

TEST(ExtendedUpdate, Sequence) {
  const std::vector<int8_t> theta = {0};
  ExtendedCounterState s = ExtendedCounterState::init(theta);
  OpLedger ledger;
  EXPECT_EQ(extended_update(s, 0, 2, 3, &ledger), 1);
  EXPECT_EQ(s.c[0], 1);
  EXPECT_EQ(s.z[0], 1);
  EXPECT_EQ(ledger.additions, 2u);  // input + one wrap
  EXPECT_EQ(extended_update(s, 0, 2, -2, &ledger), -1);
  EXPECT_EQ(s.c[0], 1);
  EXPECT_EQ(s.z[0], 0);
  EXPECT_EQ(ledger.additions, 4u);
}

TEST(ExtendedUpdate, MultipleEmissions) {
  const std::vector<int8_t> theta = {0};
  ExtendedCounterState s = ExtendedCounterState::init(theta);
  EXPECT_EQ(extended_update(s, 0, 2, 5), 2);
  EXPECT_EQ(s.c[0], 1);
  EXPECT_EQ(s.z[0], drelu(5, 0, 2));
  EXPECT_THROW(extended_update(s, 0, 0, 1), InvariantError);
}

TEST(ExtendedUpdate, NeverBelowZeroWithoutLevels) {
  const std::vector<int8_t> theta = {5};
  ExtendedCounterState s = ExtendedCounterState::init(theta);
  EXPECT_EQ(extended_update(s, 0, 4, -10), 0);
  EXPECT_EQ(s.c[0], -15);
  EXPECT_EQ(s.z[0], 0);
}

Model golden() {
  return load_model(std::string(COUNTNET_FIXTURES) + "/golden_model.json");
}

EventStream stream_of(size_t n, std::vector<std::pair<uint32_t, uint32_t>> tu) {
  EventStream s;
  s.input_size = n;
  for (auto [t, u] : tu) s.events.push_back({t, u, 1});
  return s;
}

TEST(Runtime, EmptyStream) {
  const LoweredNetwork net = lower(golden());
  const RuntimeOutput out = run_stream(net, stream_of(3, {}));
  EXPECT_EQ(out.accumulators, (std::vector<int32_t>{0, 0}));
  EXPECT_EQ(out.ledger.additions, 0u);
  EXPECT_EQ(out.ledger.events_emitted, 0u);
}

TEST(Runtime, GoldenMatchesFrame) {
  const Model m = golden();
  const LoweredNetwork net = lower(m);
  const RuntimeOutput out =
      run_stream(net, stream_of(3, {{0, 2}, {1, 0}, {2, 1}}), true);
  EXPECT_EQ(out.accumulators, forward(m, std::vector<int32_t>{1, 1, 1}).output());
  EXPECT_EQ(readout(out.accumulators), std::optional<int32_t>(0));
  EXPECT_EQ(out.ledger.multiplications, 0u);
}

// Two events in one timestep to the same target are summed first: unit 0
// (+2) and unit 1 (-1) into neuron 0 with theta 1 give one +1 update of
// net +1, so neuron 0 never fires. Delivered separately, it fires and
// retracts.
TEST(Runtime, SimultaneousEventsSummed) {
  Model m;
  m.spec.layers = {LayerSpec::dense(2, 1, ActivationKind::binary())};
  m.spec.num_classes = 1;
  m.params.layers = {{{2, -1}, {1}}};
  const LoweredNetwork net = lower(m);
  const RuntimeOutput together = run_stream(net, stream_of(2, {{0, 0}, {0, 1}}));
  EXPECT_EQ(together.accumulators[0], 0);
  EXPECT_EQ(together.ledger.events_emitted, 0u);
  // Summing the two deliveries costs one addition, the update one more.
  EXPECT_EQ(together.ledger.additions, 2u);
  const RuntimeOutput apart = run_stream(net, stream_of(2, {{0, 0}, {1, 1}}));
  EXPECT_EQ(apart.accumulators[0], 0);
  EXPECT_EQ(apart.ledger.events_emitted, 2u);
}

TEST(Runtime, NegativeInputEvents) {
  const Model m = golden();
  const LoweredNetwork net = lower(m);
  EventStream s = stream_of(3, {{0, 0}, {1, 1}, {2, 2}, {3, 0}});
  s.events[3].sign = -1;
  const RuntimeOutput out = run_stream(net, s);
  EXPECT_EQ(out.accumulators, forward(m, std::vector<int32_t>{0, 1, 1}).output());
}

TEST(Runtime, RejectsMismatchedStream) {
  const LoweredNetwork net = lower(golden());
  EXPECT_THROW(run_stream(net, stream_of(4, {{0, 0}})), ShapeError);
}

TEST(Runtime, TraceCsv) {
  const LoweredNetwork net = lower(golden());
  const RuntimeOutput out = run_stream(net, stream_of(3, {{0, 0}}), true);
  ASSERT_FALSE(out.trace.empty());
  EXPECT_EQ(out.trace[0].layer, 0u);
  std::ostringstream os;
  write_trace_csv(os, out.trace);
  const std::string csv = os.str();
  EXPECT_EQ(csv.rfind("timestep,layer,unit,sign\n", 0), 0u);
  EXPECT_NE(csv.find("0,0,0,1\n"), std::string::npos);
  const RuntimeOutput quiet = run_stream(net, stream_of(3, {{0, 0}}), false);
  EXPECT_TRUE(quiet.trace.empty());
}

TEST(Runtime, PerStepLedger) {
  const LoweredNetwork net = lower(golden());
  EventRuntime rt(net);
  rt.run(stream_of(3, {{0, 0}, {1, 1}, {2, 2}}));
  const auto& per = rt.ledger().per_input_event_additions;
  ASSERT_EQ(per.size(), 3u);
  EXPECT_EQ(per[0] + per[1] + per[2], rt.ledger().additions);
  EXPECT_EQ(rt.steps(), 3u);
  rt.reset();
  EXPECT_EQ(rt.ledger().additions, 0u);
  EXPECT_EQ(rt.accumulators()[0], 0);
}

TEST(Readout, Conventions) {
  EXPECT_EQ(readout(std::vector<int32_t>{0, 0, 2, 0}), std::optional<int32_t>(2));
  EXPECT_EQ(readout(std::vector<int32_t>{0, 0, 0}), std::nullopt);
  EXPECT_EQ(readout(std::vector<int32_t>{-1, -2}), std::nullopt);
  EXPECT_EQ(readout(std::vector<int32_t>{3, 1, 3}), std::nullopt);
  EXPECT_EQ(readout(std::vector<int32_t>{3, 1, 4}), std::optional<int32_t>(2));
  EXPECT_EQ(readout(std::vector<int32_t>{3, 3, 4}), std::optional<int32_t>(2));
}

}  // namespace
}  // namespace countnet
