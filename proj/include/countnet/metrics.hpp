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

// Streaming benchmarks: how quickly the event network agrees with the frame
// network while an image is presented one pixel per timestep, and how many
// additions each input event triggers.

#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "countnet/event_runtime.hpp"
#include "countnet/frame_model.hpp"
#include "countnet/mnist.hpp"
#include "countnet/rng.hpp"
#include "json.hpp"

namespace countnet {

// Event-by-event record of one streamed input. Index k of the per-step
// vectors is the state after k input events (k = 0 is the initial state).
struct InputRun {
  size_t length = 0;
  int32_t label = 0;
  int32_t frame_class = 0;
  std::vector<uint8_t> frame_match;    // accumulators == frame output
  std::vector<uint8_t> readout_match;  // readout == frame class
  std::vector<uint8_t> label_match;    // readout == label
  std::vector<uint64_t> adds;          // additions triggered by event k (k >= 1)
  uint64_t ledger_additions = 0;

  // Smallest k from which `flags` stays set through the end, if any.
  static std::optional<size_t> stable_from(const std::vector<uint8_t>& flags) {
    if (flags.empty() || !flags.back()) return std::nullopt;
    size_t k = flags.size() - 1;
    while (k > 0 && flags[k - 1]) --k;
    return k;
  }
};

struct ClassificationCurve {
  std::vector<double> frac_frame_match;
  std::vector<double> frac_label_match;
};

struct OpsCurve {
  std::vector<double> mean_adds_this_event;  // index 0 unused (always 0)
  std::vector<double> mean_cum_adds;
};

struct CurveSet {
  ClassificationCurve classification;
  OpsCurve ops;
  std::vector<InputRun> runs;
  uint64_t seed = 0;
};

// Streams one encoded input and records agreement and cost after each event.
inline InputRun stream_and_record(const LoweredNetwork& net,
                                  const std::vector<int32_t>& encoded,
                                  int32_t label, uint64_t order_seed) {
  const auto& model = net.model;
  const ActivationRecord frame = forward(model, encoded);
  const std::vector<int32_t>& target = frame.output();
  InputRun run;
  run.label = label;
  run.frame_class = predict_from_record(model, frame);
  const EventStream stream = stream_pixels(encoded, order_seed);
  run.length = stream.events.size();
  EventRuntime rt(net);
  auto record = [&](uint64_t adds) {
    const auto acc = rt.accumulators();
    run.frame_match.push_back(std::equal(acc.begin(), acc.end(), target.begin(),
                                         target.end()));
    const auto r = readout(acc);
    run.readout_match.push_back(r && *r == run.frame_class);
    run.label_match.push_back(r && *r == label);
    run.adds.push_back(adds);
  };
  record(0);
  for (const auto& e : stream.events) {
    const uint64_t before = rt.ledger().additions;
    rt.deliver_step(std::span<const InputEvent>(&e, 1));
    record(rt.ledger().additions - before);
  }
  run.ledger_additions = rt.ledger().additions;
  return run;
}

// Aggregates runs into curves. Runs shorter than k contribute their final
// state to the fractions at k and their total to the cumulative additions;
// the per-event additions average only runs that have an event k.
inline CurveSet aggregate_runs(std::vector<InputRun> runs) {
  CurveSet cs;
  size_t max_len = 0;
  for (const auto& r : runs) max_len = std::max(max_len, r.length);
  const double n = static_cast<double>(std::max<size_t>(runs.size(), 1));
  auto& cl = cs.classification;
  auto& ops = cs.ops;
  cl.frac_frame_match.assign(max_len + 1, 0);
  cl.frac_label_match.assign(max_len + 1, 0);
  ops.mean_adds_this_event.assign(max_len + 1, 0);
  ops.mean_cum_adds.assign(max_len + 1, 0);
  std::vector<size_t> active(max_len + 1, 0);
  for (const auto& r : runs) {
    uint64_t cum = 0;
    for (size_t k = 0; k <= max_len; ++k) {
      const size_t i = std::min(k, r.length);
      if (k >= 1 && k <= r.length) {
        cum += r.adds[k];
        ops.mean_adds_this_event[k] += static_cast<double>(r.adds[k]);
        ++active[k];
      }
      cl.frac_frame_match[k] += r.frame_match[i];
      cl.frac_label_match[k] += r.label_match[i];
      ops.mean_cum_adds[k] += static_cast<double>(cum);
    }
  }
  for (size_t k = 0; k <= max_len; ++k) {
    cl.frac_frame_match[k] /= n;
    cl.frac_label_match[k] /= n;
    ops.mean_cum_adds[k] /= n;
    if (active[k]) ops.mean_adds_this_event[k] /= static_cast<double>(active[k]);
  }
  cs.runs = std::move(runs);
  return cs;
}

// Streams every image (binarized, seeded random pixel order) through the
// network.
inline CurveSet curve_for_model(const LoweredNetwork& net,
                                std::span<const LabeledImage> images,
                                uint64_t seed) {
  std::vector<InputRun> runs;
  runs.reserve(images.size());
  for (size_t i = 0; i < images.size(); ++i) {
    runs.push_back(stream_and_record(net, binarize(images[i]), images[i].label,
                                     derive_seed(seed, "order", i)));
  }
  CurveSet cs = aggregate_runs(std::move(runs));
  cs.seed = seed;
  return cs;
}

// Seeded subset of `count` distinct indices (all when count >= n).
inline std::vector<LabeledImage> seeded_subset(std::span<const LabeledImage> images,
                                               size_t count, uint64_t seed) {
  std::vector<size_t> idx(images.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng = make_rng(seed, "subset");
  shuffle(idx, rng);
  idx.resize(std::min(count, idx.size()));
  std::vector<LabeledImage> out;
  out.reserve(idx.size());
  for (size_t i : idx) out.push_back(images[i]);
  return out;
}

struct Crossing {
  double event_index = 0;
  double cum_adds = 0;
};

struct EfficiencySummary {
  // (fraction level, mean cumulative additions at its first crossing)
  std::vector<std::pair<double, double>> points;
  std::optional<Crossing> crossing;  // at `level`
  double level = 0.99;
  double max_fraction = 0;
};

// First crossing of `level` by `fraction`, linearly interpolated between the
// bracketing event indices, together with the interpolated cumulative
// additions.
inline std::optional<Crossing> find_crossing(std::span<const double> fraction,
                                             std::span<const double> cum_adds,
                                             double level) {
  for (size_t k = 0; k < fraction.size(); ++k) {
    if (fraction[k] < level) continue;
    if (k == 0) return Crossing{0.0, cum_adds.empty() ? 0.0 : cum_adds[0]};
    const double f0 = fraction[k - 1], f1 = fraction[k];
    const double t = (level - f0) / (f1 - f0);
    const double a0 = cum_adds[k - 1], a1 = cum_adds[k];
    return Crossing{static_cast<double>(k - 1) + t, a0 + t * (a1 - a0)};
  }
  return std::nullopt;
}

inline EfficiencySummary efficiency_summary(const CurveSet& cs,
                                            double level = 0.99) {
  const auto& f = cs.classification.frac_frame_match;
  const auto& a = cs.ops.mean_cum_adds;
  EfficiencySummary s;
  s.level = level;
  for (double v : f) s.max_fraction = std::max(s.max_fraction, v);
  for (int pct = 5; pct <= 100; pct += 5) {
    const double lv = pct == 100 ? 1.0 : pct / 100.0;
    if (auto c = find_crossing(f, a, lv)) s.points.emplace_back(lv, c->cum_adds);
  }
  if (auto c = find_crossing(f, a, 0.99)) s.points.emplace_back(0.99, c->cum_adds);
  std::sort(s.points.begin(), s.points.end());
  s.crossing = find_crossing(f, a, level);
  return s;
}

// Mean additions per event over the first and the last quarter of each
// stream, averaged over streams with at least four events.
struct QuartileAdds {
  double first = 0;
  double last = 0;
  size_t streams = 0;
};

inline QuartileAdds quartile_additions(const CurveSet& cs) {
  QuartileAdds q;
  for (const auto& r : cs.runs) {
    if (r.length < 4) continue;
    const size_t quarter = (r.length + 3) / 4;
    double first = 0, last = 0;
    for (size_t k = 1; k <= quarter; ++k) first += static_cast<double>(r.adds[k]);
    for (size_t k = r.length - quarter + 1; k <= r.length; ++k) {
      last += static_cast<double>(r.adds[k]);
    }
    q.first += first / static_cast<double>(quarter);
    q.last += last / static_cast<double>(quarter);
    ++q.streams;
  }
  if (q.streams) {
    q.first /= static_cast<double>(q.streams);
    q.last /= static_cast<double>(q.streams);
  }
  return q;
}

// One row per event index; `bin` > 1 keeps every bin-th row (plus the last).
inline void write_curves_csv(std::ostream& os, const CurveSet& cs,
                             size_t bin = 1) {
  os << "k,frac_frame_match,frac_label_match,mean_adds_this_event,mean_cum_adds\n";
  const auto& cl = cs.classification;
  const size_t n = cl.frac_frame_match.size();
  if (bin == 0) bin = 1;
  for (size_t k = 0; k < n; ++k) {
    if (k % bin != 0 && k + 1 != n) continue;
    os << k << ',' << cl.frac_frame_match[k] << ',' << cl.frac_label_match[k]
       << ',' << cs.ops.mean_adds_this_event[k] << ',' << cs.ops.mean_cum_adds[k]
       << '\n';
  }
}

inline nlohmann::json summary_json(const CurveSet& cs,
                                   const EfficiencySummary& s) {
  nlohmann::json j;
  j["seed"] = cs.seed;
  j["inputs"] = cs.runs.size();
  j["level"] = s.level;
  j["max_fraction"] = s.max_fraction;
  if (s.crossing) {
    j["crossing"] = {{"event_index", s.crossing->event_index},
                     {"mean_cum_adds", s.crossing->cum_adds}};
  } else {
    j["crossing"] = "not reached";
  }
  j["points"] = nlohmann::json::array();
  for (const auto& [f, a] : s.points) {
    j["points"].push_back({{"fraction", f}, {"mean_cum_adds", a}});
  }
  const auto& f = cs.classification.frac_frame_match;
  j["terminal_frac_frame_match"] = f.empty() ? 0.0 : f.back();
  const auto& l = cs.classification.frac_label_match;
  j["terminal_frac_label_match"] = l.empty() ? 0.0 : l.back();
  size_t early = 0;
  for (const auto& r : cs.runs) {
    const auto k = InputRun::stable_from(r.readout_match);
    if (k && *k < r.length) ++early;
  }
  j["frac_readout_stable_before_end"] =
      cs.runs.empty() ? 0.0
                      : static_cast<double>(early) / static_cast<double>(cs.runs.size());
  const auto q = quartile_additions(cs);
  j["quartile_adds"] = {{"first", q.first}, {"last", q.last}};
  return j;
}

}  // namespace countnet
