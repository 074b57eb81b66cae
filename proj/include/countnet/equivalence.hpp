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

// Randomized differential testing of the event runtime against the frame
// model. For any network, input and event order, the quiescent output
// accumulators must equal the frame outputs exactly.

#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "countnet/event_runtime.hpp"
#include "countnet/events.hpp"
#include "countnet/frame_model.hpp"
#include "countnet/mnist.hpp"
#include "countnet/model_io.hpp"
#include "countnet/rng.hpp"
#include "countnet/synapse_table.hpp"

namespace countnet {

struct SizeLimits {
  int32_t min_layers = 2;
  int32_t max_layers = 4;
  int32_t max_width = 32;
  int32_t max_theta = 32;
  int32_t max_input_value = 3;
  double conv_probability = 0.25;
  double zero_theta_probability = 0.1;
  // Cap on the worst-case additions of one event run. Uniform int8 weights
  // grow activity geometrically with depth (especially for lambda = 1), so
  // larger cases are thinned or redrawn.
  double max_additions = 2e7;
  int32_t max_attempts = 256;
};

enum class NeuronModel { kAny, kBasic, kExtended };

inline constexpr int32_t kCaseLambdas[] = {1, 2, 4, 64};

struct DiffCase {
  uint64_t seed = 0;
  Model model;
  std::vector<int32_t> input;
};

struct CheckReport {
  bool pass = true;
  bool outputs_match = true;     // accumulators == frame outputs, every order
  bool orders_agree = true;      // accumulators identical across orders
  bool alternation_ok = true;    // basic neurons never repeat a sign
  bool bookkeeping_ok = true;    // extended z == emissions == drelu(x)
  bool counters_ok = true;       // final counters == net input - theta
  bool audit_ok = true;          // additions fully accounted, no multiplies
  std::vector<int32_t> frame_output;
  std::vector<std::vector<int32_t>> event_outputs;
  std::vector<EventStream> streams;
  std::string message;
};

inline bool uses_model(const Model& m, NeuronModel which) {
  for (const auto& l : m.spec.layers) {
    if (which == NeuronModel::kBasic && l.activation.is_binary()) return true;
    if (which == NeuronModel::kExtended && l.activation.is_drelu()) return true;
  }
  return false;
}

namespace detail {

inline DiffCase draw_case(uint64_t seed, uint64_t attempt,
                          const SizeLimits& limits, NeuronModel model) {
  Rng rng = make_rng(seed, "case", attempt);
  auto uniform = [&](int32_t lo, int32_t hi) {
    return lo + static_cast<int32_t>(
                    uniform_index(rng, static_cast<uint64_t>(hi - lo + 1)));
  };
  DiffCase c;
  c.seed = seed;
  bool extended = model == NeuronModel::kExtended;
  if (model == NeuronModel::kAny) extended = uniform(0, 1) == 1;
  auto pick_activation = [&]() {
    if (!extended) return ActivationKind::binary();
    return ActivationKind::drelu(kCaseLambdas[uniform(0, 3)]);
  };
  const int32_t n_layers = uniform(limits.min_layers, limits.max_layers);
  NetworkSpec& spec = c.model.spec;
  Shape shape;
  if (uniform_unit(rng) < limits.conv_probability) {
    const int32_t side = uniform(4, 7), in_c = uniform(1, 2);
    shape = {in_c, side, side};
    spec.layers.push_back(LayerSpec::conv2d(shape, uniform(1, 3),
                                            uniform(1, 3), pick_activation()));
    shape = spec.layers.back().out_shape;
  } else {
    shape = {uniform(1, limits.max_width)};
  }
  while (static_cast<int32_t>(spec.layers.size()) < n_layers) {
    const int32_t width = uniform(1, limits.max_width);
    LayerSpec l = LayerSpec::dense(shape_size(shape), width, pick_activation());
    l.in_shape = shape;
    spec.layers.push_back(l);
    shape = l.out_shape;
  }
  spec.num_classes = static_cast<int32_t>(shape_size(shape));
  const bool zero_theta = uniform_unit(rng) < limits.zero_theta_probability;
  for (const auto& l : spec.layers) {
    LayerParams p;
    for (size_t i = 0; i < l.weight_count(); ++i) {
      p.weights.push_back(static_cast<int8_t>(uniform(kWeightMin, kWeightMax)));
    }
    for (size_t i = 0; i < l.out_size(); ++i) {
      p.theta.push_back(
          static_cast<int8_t>(zero_theta ? 0 : uniform(0, limits.max_theta)));
    }
    c.model.params.layers.push_back(std::move(p));
  }
  const bool binary_input = uniform(0, 1) == 1;
  const int32_t hi = binary_input ? 1 : limits.max_input_value;
  for (size_t i = 0; i < spec.input_size(); ++i) c.input.push_back(uniform(0, hi));
  c.model.validate();
  return c;
}

// Ordering-independent upper bound on the additions an event run of the case
// can charge. A delivery of weight w makes an extended neuron wrap at most
// |w| / lambda + 1 times and a basic neuron emit at most once, so the
// events of each neuron are bounded by its inputs' bounds. Returns infinity
// when a counter could leave the 32-bit range.
inline double addition_bound(const Model& m, const std::vector<int32_t>& input) {
  const LoweredNetwork net = lower(m);
  std::vector<double> events(input.begin(), input.end());
  for (double& e : events) e = std::abs(e);
  double adds = 0;
  for (size_t k = 0; k < net.tables.size(); ++k) {
    const auto& act = m.spec.layers[k].activation;
    std::vector<double> next(m.spec.layers[k].out_size(), 0.0);
    std::vector<double> swing(next.size(), 128.0);
    for (size_t j = 0; j < events.size(); ++j) {
      if (events[j] == 0) continue;
      for (const Synapse& s : net.tables[k].fan_out(j)) {
        adds += events[j];
        swing[s.target] += events[j] * std::abs(s.weight);
        const double per = act.is_binary()
                               ? 1.0
                               : std::abs(s.weight) / static_cast<double>(act.lambda_step) + 1.0;
        next[s.target] += events[j] * per;
      }
    }
    for (double w : swing) {
      if (w >= 1073741824.0) return std::numeric_limits<double>::infinity();
    }
    if (act.is_drelu()) {
      for (double e : next) adds += e;
    }
    events = std::move(next);
  }
  return adds;
}

}  // namespace detail

// Deterministic random case for `seed`. Cases whose addition bound exceeds
// limits.max_additions have input entries zeroed at random until they fit; a
// case that only fits with an all-zero input is redrawn.
inline DiffCase gen_random_case(uint64_t seed, const SizeLimits& limits = {},
                                NeuronModel model = NeuronModel::kAny) {
  DiffCase c;
  for (int32_t attempt = 0; attempt < std::max(limits.max_attempts, 1); ++attempt) {
    c = detail::draw_case(seed, static_cast<uint64_t>(attempt), limits, model);
    Rng rng = make_rng(seed, "thin", static_cast<uint64_t>(attempt));
    std::vector<size_t> active;
    for (size_t i = 0; i < c.input.size(); ++i) {
      if (c.input[i] != 0) active.push_back(i);
    }
    if (active.empty()) return c;
    shuffle(active, rng);
    for (;;) {
      if (detail::addition_bound(c.model, c.input) <= limits.max_additions) {
        return c;
      }
      if (active.empty()) break;
      // Zero out half of the remaining active inputs (at least one).
      const size_t drop = std::max<size_t>(1, active.size() / 2);
      for (size_t i = 0; i < drop; ++i) {
        c.input[active.back()] = 0;
        active.pop_back();
      }
      if (active.empty()) break;
    }
  }
  std::fill(c.input.begin(), c.input.end(), 0);
  return c;
}

// Ordering i of a case: a seeded permutation of the input events. Every
// third ordering groups runs of consecutive events into shared timesteps to
// exercise simultaneous-input summation.
inline EventStream case_stream(const DiffCase& c, uint64_t seed, size_t index) {
  EventStream s = stream_pixels(c.input, derive_seed(seed, "order", index));
  if (index % 3 == 2) {
    Rng rng = make_rng(seed, "group", index);
    uint32_t t = 0;
    for (size_t i = 0; i < s.events.size(); ++i) {
      if (i > 0 && uniform_index(rng, 3) != 0) ++t;
      s.events[i].t = t;
    }
  }
  return s;
}

namespace detail {

inline void fail(CheckReport& r, bool& flag, const std::string& msg) {
  if (flag) r.message += msg + "\n";
  flag = false;
  r.pass = false;
}

}  // namespace detail

// Runs the frame model once and the event runtime once per ordering, and
// checks every equivalence property on the quiescent state and the traces.
inline CheckReport check_case(const DiffCase& c, size_t n_orderings = 3,
                              uint64_t order_seed = 0) {
  CheckReport r;
  const ActivationRecord frame = forward(c.model, c.input);
  r.frame_output = frame.output();
  const LoweredNetwork net = lower(c.model);
  const auto& spec = c.model.spec;
  for (size_t o = 0; o < n_orderings; ++o) {
    EventStream stream = case_stream(c, order_seed ^ c.seed, o);
    EventRuntime rt(net, {true});
    rt.run(stream);
    const std::vector<int32_t> acc(rt.accumulators().begin(),
                                   rt.accumulators().end());
    if (acc != r.frame_output) {
      detail::fail(r, r.outputs_match,
                   "ordering " + std::to_string(o) +
                       ": accumulators differ from frame output");
    }
    if (!r.event_outputs.empty() && acc != r.event_outputs.front()) {
      detail::fail(r, r.orders_agree, "orderings disagree");
    }
    r.event_outputs.push_back(acc);

    // Per-neuron last sign from the trace.
    std::vector<std::vector<int8_t>> last(spec.layers.size());
    for (size_t k = 0; k < spec.layers.size(); ++k) {
      last[k].assign(spec.layers[k].out_size(), 0);
    }
    uint64_t expected_adds = 0;
    std::vector<uint64_t> delivered_per_step;
    for (const auto& row : rt.trace()) {
      const size_t src_layer = row.layer;  // trace layer == index of next table
      if (src_layer < net.tables.size()) {
        expected_adds += net.tables[src_layer].fan_out(row.unit).size();
      }
      if (row.layer == 0) continue;
      int8_t& prev = last[row.layer - 1][row.unit];
      if (spec.layers[row.layer - 1].activation.is_binary() && prev == row.sign) {
        detail::fail(r, r.alternation_ok,
                     "basic neuron " + std::to_string(row.layer - 1) + ":" +
                         std::to_string(row.unit) + " repeated sign " +
                         std::to_string(row.sign));
      }
      prev = row.sign;
    }
    for (size_t k = 0; k < spec.layers.size(); ++k) {
      const auto& l = spec.layers[k];
      const auto& theta = c.model.params.layers[k].theta;
      const auto& rec = frame.layers[k];
      const auto cs = rt.counters(k);
      const auto zs = rt.levels(k);
      const auto pos = rt.positive_emissions(k);
      const auto neg = rt.negative_emissions(k);
      for (size_t i = 0; i < l.out_size(); ++i) {
        const int64_t drive = int64_t{rec.net_input[i]} - theta[i];
        if (l.activation.is_binary()) {
          if (cs[i] != drive) {
            detail::fail(r, r.counters_ok, "basic counter != net input - theta");
          }
          if (pos[i] - neg[i] != rec.output[i]) {
            detail::fail(r, r.outputs_match, "basic emissions != frame output");
          }
          continue;
        }
        const int32_t lambda = l.activation.lambda_step;
        expected_adds += static_cast<uint64_t>(pos[i]) + neg[i];
        if (int64_t{cs[i]} + int64_t{lambda} * zs[i] != drive) {
          detail::fail(r, r.counters_ok, "extended c + lambda z != drive");
        }
        if (zs[i] != pos[i] - neg[i] ||
            zs[i] != drelu(rec.net_input[i], theta[i], lambda)) {
          detail::fail(r, r.bookkeeping_ok,
                       "extended z mismatch at layer " + std::to_string(k) +
                           " unit " + std::to_string(i));
        }
        if (cs[i] >= lambda || (zs[i] > 0 && cs[i] < 0) || zs[i] < 0) {
          detail::fail(r, r.bookkeeping_ok, "extended state not quiescent");
        }
      }
    }
    const OpLedger& ledger = rt.ledger();
    if (ledger.multiplications != 0 || ledger.additions != expected_adds) {
      detail::fail(r, r.audit_ok,
                   "ledger additions " + std::to_string(ledger.additions) +
                       " != accounted " + std::to_string(expected_adds));
    }
    r.streams.push_back(std::move(stream));
  }
  return r;
}

// Removes output layer, hidden units and input events while `still_fails`
// keeps returning true.
inline DiffCase shrink_case(DiffCase c,
                            const std::function<bool(const DiffCase&)>& still_fails) {
  auto try_take = [&](DiffCase candidate) {
    try {
      candidate.model.validate();
    } catch (const Error&) {
      return false;
    }
    if (!still_fails(candidate)) return false;
    c = std::move(candidate);
    return true;
  };
  bool progress = true;
  while (progress) {
    progress = false;
    // Drop the final layer.
    while (c.model.spec.layers.size() > 1) {
      DiffCase d = c;
      d.model.spec.layers.pop_back();
      d.model.params.layers.pop_back();
      d.model.spec.num_classes =
          static_cast<int32_t>(d.model.spec.layers.back().out_size());
      if (!try_take(std::move(d))) break;
      progress = true;
    }
    // Drop units of dense layers whose consumer is dense (or absent).
    for (size_t k = 0; k < c.model.spec.layers.size(); ++k) {
      for (size_t unit = c.model.spec.layers[k].out_size(); unit-- > 0;) {
        const auto& l = c.model.spec.layers[k];
        if (l.kind != LayerKind::kDense || l.out_size() <= 1) break;
        const bool has_next = k + 1 < c.model.spec.layers.size();
        if (has_next && c.model.spec.layers[k + 1].kind != LayerKind::kDense) break;
        DiffCase d = c;
        auto& dl = d.model.spec.layers[k];
        auto& dp = d.model.params.layers[k];
        const size_t in = dl.in_size();
        dp.weights.erase(dp.weights.begin() + unit * in,
                         dp.weights.begin() + (unit + 1) * in);
        dp.theta.erase(dp.theta.begin() + unit);
        dl.out_shape = {static_cast<int32_t>(dl.out_size() - 1)};
        if (has_next) {
          auto& nl = d.model.spec.layers[k + 1];
          auto& np = d.model.params.layers[k + 1];
          const size_t old_in = nl.in_size();
          std::vector<int8_t> w;
          for (size_t row = 0; row < nl.out_size(); ++row) {
            for (size_t j = 0; j < old_in; ++j) {
              if (j != unit) w.push_back(np.weights[row * old_in + j]);
            }
          }
          np.weights = std::move(w);
          nl.in_shape = dl.out_shape;
        } else {
          d.model.spec.num_classes = static_cast<int32_t>(dl.out_size());
        }
        if (try_take(std::move(d))) progress = true;
      }
    }
    // Remove input events one at a time.
    for (size_t u = 0; u < c.input.size(); ++u) {
      while (c.input[u] > 0) {
        DiffCase d = c;
        --d.input[u];
        if (!try_take(std::move(d))) break;
        progress = true;
      }
    }
  }
  return c;
}

// Writes model.json, stream_<i>.json and report.txt into `dir` for replay
// with the CLI.
inline void write_failure_report(const std::string& dir, const DiffCase& c,
                                 const CheckReport& r) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  save_model(c.model, (fs::path(dir) / "model.json").string());
  for (size_t i = 0; i < r.streams.size(); ++i) {
    save_stream(r.streams[i],
                (fs::path(dir) / ("stream_" + std::to_string(i) + ".json")).string());
  }
  std::ostringstream ss;
  ss << "seed " << c.seed << "\n" << r.message;
  ss << "frame output:";
  for (int32_t v : r.frame_output) ss << ' ' << v;
  ss << "\n";
  for (size_t i = 0; i < r.event_outputs.size(); ++i) {
    ss << "ordering " << i << " accumulators:";
    for (int32_t v : r.event_outputs[i]) ss << ' ' << v;
    ss << "\n";
  }
  write_text_file((fs::path(dir) / "report.txt").string(), ss.str());
}

struct SuiteResult {
  size_t cases = 0;
  size_t failures = 0;
  size_t basic_cases = 0;
  size_t extended_cases = 0;
  CheckReport aggregate;  // flags AND-ed over all cases
  std::vector<DiffCase> failing;
};

// Runs `cases` generated cases with the given neuron model and orderings.
inline SuiteResult run_equivalence_suite(size_t cases, size_t orderings,
                                         uint64_t seed, NeuronModel model,
                                         const SizeLimits& limits = {}) {
  SuiteResult s;
  for (size_t i = 0; i < cases; ++i) {
    const DiffCase c = gen_random_case(derive_seed(seed, "suite", i), limits, model);
    const CheckReport r = check_case(c, orderings, seed);
    ++s.cases;
    if (uses_model(c.model, NeuronModel::kBasic)) ++s.basic_cases;
    if (uses_model(c.model, NeuronModel::kExtended)) ++s.extended_cases;
    auto& a = s.aggregate;
    a.outputs_match &= r.outputs_match;
    a.orders_agree &= r.orders_agree;
    a.alternation_ok &= r.alternation_ok;
    a.bookkeeping_ok &= r.bookkeeping_ok;
    a.counters_ok &= r.counters_ok;
    a.audit_ok &= r.audit_ok;
    if (!r.pass) {
      a.pass = false;
      ++s.failures;
      if (s.failing.size() < 5) s.failing.push_back(c);
    }
  }
  return s;
}

}  // namespace countnet
