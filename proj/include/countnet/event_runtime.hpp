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

// Event-driven execution of a lowered network with counter neurons.
//
// Basic neurons (binary layers) hold one counter c, initialized at -theta,
// and emit +1 when c turns positive and -1 when it falls back to <= 0.
// Extended neurons (discretized-ReLU layers) additionally hold the emitted
// level z; c wraps by lambda on every emission so that it stays in [0, lambda)
// while z > 0. Every emitted event is delivered to the fan-out of its source
// before the next external input is consumed.

#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "countnet/core_types.hpp"
#include "countnet/events.hpp"
#include "countnet/synapse_table.hpp"

namespace countnet {

// The only arithmetic available to the event data path. Every operation is
// charged to the ledger; there is deliberately no multiply.
class CounterAlu {
 public:
  explicit CounterAlu(OpLedger* ledger) : ledger_(ledger) {}

  int32_t add(int32_t a, int32_t b, size_t layer) {
    charge_add(layer);
    return checked_add(a, b);
  }
  int32_t sub(int32_t a, int32_t b, size_t layer) {
    charge_add(layer);
    return checked_sub(a, b);
  }
  bool greater(int32_t a, int32_t b) {
    charge_cmp();
    return a > b;
  }
  bool less(int32_t a, int32_t b) {
    charge_cmp();
    return a < b;
  }

 private:
  void charge_add(size_t layer) {
    if (!ledger_) return;
    ++ledger_->additions;
    if (layer < ledger_->additions_per_layer.size()) {
      ++ledger_->additions_per_layer[layer];
    }
  }
  void charge_cmp() {
    if (ledger_) ++ledger_->comparisons;
  }

  OpLedger* ledger_;
};

template <typename T>
concept Multiplies = requires(T t) { t.mul(1, 1, size_t{0}); };
static_assert(!Multiplies<CounterAlu>);

struct CounterState {
  std::vector<int32_t> c;

  static CounterState init(std::span<const int8_t> theta) {
    CounterState s;
    for (int8_t t : theta) s.c.push_back(-int32_t{t});
    return s;
  }
};

struct ExtendedCounterState {
  std::vector<int32_t> c;
  std::vector<int32_t> z;

  static ExtendedCounterState init(std::span<const int8_t> theta) {
    ExtendedCounterState s;
    for (int8_t t : theta) s.c.push_back(-int32_t{t});
    s.z.assign(theta.size(), 0);
    return s;
  }
};

// Basic counter neuron update. Returns +1, -1, or 0 (no event).
inline int8_t basic_update(std::vector<int32_t>& c, size_t neuron, int32_t inp,
                           CounterAlu& alu, size_t layer = 0) {
  const int32_t prev = c[neuron];
  c[neuron] = alu.add(prev, inp, layer);
  const bool was_positive = alu.greater(prev, 0);
  const bool is_positive = alu.greater(c[neuron], 0);
  if (!was_positive && is_positive) return 1;
  if (was_positive && !is_positive) return -1;
  return 0;
}

inline int8_t basic_update(CounterState& s, size_t neuron, int32_t inp,
                           OpLedger* ledger = nullptr) {
  CounterAlu alu(ledger);
  return basic_update(s.c, neuron, inp, alu);
}

// Extended counter neuron update. Returns the signed number of events
// emitted: k > 0 means k events of +1, k < 0 means |k| events of -1. One
// update never emits both signs.
inline int32_t extended_update(std::vector<int32_t>& c, std::vector<int32_t>& z,
                               size_t neuron, int32_t lambda, int32_t inp,
                               CounterAlu& alu, size_t layer = 0) {
  int32_t& cv = c[neuron];
  int32_t& zv = z[neuron];
  cv = alu.add(cv, inp, layer);
  int32_t emitted = 0;
  while (!alu.less(cv, lambda)) {
    cv = alu.sub(cv, lambda, layer);
    ++zv;
    ++emitted;
  }
  while (alu.greater(zv, 0) && alu.less(cv, 0)) {
    cv = alu.add(cv, lambda, layer);
    --zv;
    --emitted;
  }
  return emitted;
}

inline int32_t extended_update(ExtendedCounterState& s, size_t neuron,
                               int32_t lambda, int32_t inp,
                               OpLedger* ledger = nullptr) {
  if (lambda < 1) throw InvariantError("extended update needs lambda >= 1");
  CounterAlu alu(ledger);
  return extended_update(s.c, s.z, neuron, lambda, inp, alu);
}

// Layer 0 of the trace is the input layer; layer k+1 is network layer k.
struct TraceRow {
  uint32_t t;
  uint32_t layer;
  uint32_t unit;
  int8_t sign;
};

inline void write_trace_csv(std::ostream& os, std::span<const TraceRow> rows) {
  os << "timestep,layer,unit,sign\n";
  for (const auto& r : rows) {
    os << r.t << ',' << r.layer << ',' << r.unit << ',' << int{r.sign} << '\n';
  }
}

struct RuntimeOptions {
  bool record_trace = false;
};

struct RuntimeOutput {
  std::vector<int32_t> accumulators;
  OpLedger ledger;
  std::vector<TraceRow> trace;
};

class EventRuntime {
 public:
  explicit EventRuntime(const LoweredNetwork& net, RuntimeOptions opts = {})
      : net_(&net), opts_(opts) {
    reset();
  }

  void reset() {
    const auto& spec = net_->spec();
    const size_t n = spec.layers.size();
    c_.assign(n, {});
    z_.assign(n, {});
    positive_.assign(n, {});
    negative_.assign(n, {});
    for (size_t k = 0; k < n; ++k) {
      const auto& theta = net_->model.params.layers[k].theta;
      c_[k].resize(theta.size());
      for (size_t i = 0; i < theta.size(); ++i) c_[k][i] = -int32_t{theta[i]};
      z_[k].assign(theta.size(), 0);
      positive_[k].assign(theta.size(), 0);
      negative_[k].assign(theta.size(), 0);
    }
    acc_.assign(spec.layers.back().out_size(), 0);
    ledger_.reset(n);
    trace_.clear();
    pending_.assign(spec.layers[0].out_size(), 0);
    touched_flag_.assign(spec.layers[0].out_size(), 0);
    steps_ = 0;
  }

  // Delivers one timestep worth of simultaneous input events; inputs to the
  // same first-layer neuron are summed before its update. The resulting
  // cascade is drained before returning.
  void deliver_step(std::span<const InputEvent> step) {
    const uint64_t adds_before = ledger_.additions;
    CounterAlu alu(&ledger_);
    const auto& table = net_->tables[0];
    touched_.clear();
    for (const auto& e : step) {
      if (e.unit >= table.num_sources()) {
        throw ShapeError("input event addresses unit " +
                         std::to_string(e.unit));
      }
      if (opts_.record_trace) trace_.push_back({e.t, 0, e.unit, e.sign});
      now_ = e.t;
      for (const Synapse& s : table.fan_out(e.unit)) {
        if (!touched_flag_[s.target]) {
          touched_flag_[s.target] = 1;
          touched_.push_back(s.target);
          pending_[s.target] = e.sign > 0 ? s.weight : -s.weight;
        } else if (e.sign > 0) {
          pending_[s.target] = alu.add(pending_[s.target], s.weight, 0);
        } else {
          pending_[s.target] = alu.sub(pending_[s.target], s.weight, 0);
        }
      }
    }
    for (uint32_t target : touched_) {
      update(0, target, pending_[target], alu);
      touched_flag_[target] = 0;
    }
    drain(alu);
    ledger_.per_input_event_additions.push_back(ledger_.additions - adds_before);
    ++steps_;
  }

  void run(const EventStream& stream) {
    if (stream.input_size != net_->spec().input_size()) {
      throw ShapeError("stream input size " + std::to_string(stream.input_size) +
                       " != network input size " +
                       std::to_string(net_->spec().input_size()));
    }
    stream.for_each_step(
        [this](std::span<const InputEvent> step) { deliver_step(step); });
  }

  std::span<const int32_t> accumulators() const { return acc_; }
  const OpLedger& ledger() const { return ledger_; }
  const std::vector<TraceRow>& trace() const { return trace_; }
  size_t steps() const { return steps_; }

  std::span<const int32_t> counters(size_t layer) const { return c_[layer]; }
  std::span<const int32_t> levels(size_t layer) const { return z_[layer]; }
  std::span<const int32_t> positive_emissions(size_t layer) const {
    return positive_[layer];
  }
  std::span<const int32_t> negative_emissions(size_t layer) const {
    return negative_[layer];
  }

  RuntimeOutput output() const { return {acc_, ledger_, trace_}; }

 private:
  struct InternalEvent {
    uint32_t layer;  // network layer of the emitting neuron
    uint32_t unit;
    int8_t sign;
  };

  void update(size_t layer, uint32_t unit, int32_t inp, CounterAlu& alu) {
    const auto& act = net_->spec().layers[layer].activation;
    int32_t emitted;
    if (act.is_binary()) {
      emitted = basic_update(c_[layer], unit, inp, alu, layer);
    } else {
      emitted = extended_update(c_[layer], z_[layer], unit, act.lambda_step,
                                inp, alu, layer);
    }
    const int8_t sign = emitted > 0 ? 1 : -1;
    const int32_t count = emitted > 0 ? emitted : -emitted;
    for (int32_t i = 0; i < count; ++i) emit(layer, unit, sign);
  }

  void emit(size_t layer, uint32_t unit, int8_t sign) {
    ++ledger_.events_emitted;
    ++ledger_.events_per_layer[layer];
    (sign > 0 ? positive_ : negative_)[layer][unit] += 1;
    if (opts_.record_trace) {
      trace_.push_back({now_, static_cast<uint32_t>(layer + 1), unit, sign});
    }
    if (layer + 1 == net_->num_layers()) {
      acc_[unit] += sign;
    } else {
      queue_.push_back({static_cast<uint32_t>(layer), unit, sign});
    }
  }

  void drain(CounterAlu& alu) {
    while (!queue_.empty()) {
      const InternalEvent ev = queue_.front();
      queue_.pop_front();
      const size_t target_layer = ev.layer + 1;
      for (const Synapse& s : net_->tables[target_layer].fan_out(ev.unit)) {
        update(target_layer, s.target, ev.sign > 0 ? s.weight : -s.weight, alu);
      }
    }
  }

  const LoweredNetwork* net_;
  RuntimeOptions opts_;
  std::vector<std::vector<int32_t>> c_, z_, positive_, negative_;
  std::vector<int32_t> acc_;
  OpLedger ledger_;
  std::vector<TraceRow> trace_;
  std::deque<InternalEvent> queue_;
  std::vector<int32_t> pending_;
  std::vector<uint8_t> touched_flag_;
  std::vector<uint32_t> touched_;
  uint32_t now_ = 0;
  size_t steps_ = 0;
};

inline RuntimeOutput run_stream(const LoweredNetwork& net,
                                const EventStream& stream,
                                bool record_trace = false) {
  stream.validate();
  EventRuntime rt(net, {record_trace});
  rt.run(stream);
  return rt.output();
}

// Argmax of the output accumulators; nullopt ("undecided") when the maximum
// is shared or no accumulator is positive.
inline std::optional<int32_t> readout(std::span<const int32_t> acc) {
  std::optional<int32_t> best;
  int32_t best_value = 0;
  bool shared = false;
  for (size_t i = 0; i < acc.size(); ++i) {
    if (acc[i] > best_value) {
      best = static_cast<int32_t>(i);
      best_value = acc[i];
      shared = false;
    } else if (best && acc[i] == best_value) {
      shared = true;
    }
  }
  if (shared) return std::nullopt;
  return best;
}

}  // namespace countnet
