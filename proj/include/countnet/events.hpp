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
#include <string>
#include <vector>

#include "countnet/core_types.hpp"
#include "countnet/model_io.hpp"
#include "json.hpp"

namespace countnet {

struct InputEvent {
  uint32_t t = 0;
  uint32_t unit = 0;
  int8_t sign = 1;

  friend bool operator==(const InputEvent&, const InputEvent&) = default;
};

// Events ordered by timestep. Events sharing a timestep are simultaneous.
struct EventStream {
  std::vector<InputEvent> events;
  size_t input_size = 0;

  void validate() const {
    for (size_t i = 0; i < events.size(); ++i) {
      const auto& e = events[i];
      if (e.unit >= input_size) {
        throw ShapeError("event " + std::to_string(i) + " addresses unit " +
                         std::to_string(e.unit) + " of " +
                         std::to_string(input_size));
      }
      if (e.sign != 1 && e.sign != -1) {
        throw InvariantError("event sign must be +1 or -1");
      }
      if (i > 0 && e.t < events[i - 1].t) {
        throw InvariantError("event timesteps must be non-decreasing");
      }
    }
  }

  // Net signed event count per input unit: the frame-model input this
  // stream encodes.
  std::vector<int32_t> net_counts() const {
    std::vector<int32_t> v(input_size, 0);
    for (const auto& e : events) v[e.unit] += e.sign;
    return v;
  }

  // Calls fn(span) once per timestep group, in order.
  template <typename Fn>
  void for_each_step(Fn&& fn) const {
    size_t i = 0;
    while (i < events.size()) {
      size_t j = i + 1;
      while (j < events.size() && events[j].t == events[i].t) ++j;
      fn(std::span<const InputEvent>(events.data() + i, j - i));
      i = j;
    }
  }

  friend bool operator==(const EventStream&, const EventStream&) = default;
};

// Replay file: {"version":1,"input_size":N,"events":[[t,unit,sign],...]}.
inline std::string stream_to_string(const EventStream& s) {
  std::string out = "{\"version\":" + std::to_string(kModelFormatVersion) +
                    ",\"input_size\":" + std::to_string(s.input_size) +
                    ",\"events\":[";
  for (size_t i = 0; i < s.events.size(); ++i) {
    const auto& e = s.events[i];
    if (i) out += ',';
    out += "[" + std::to_string(e.t) + "," + std::to_string(e.unit) + "," +
           std::to_string(e.sign) + "]";
  }
  return out + "]}\n";
}

inline EventStream stream_from_string(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw VersionError("stream file: unsupported version");
    }
    EventStream s;
    s.input_size = j.at("input_size").get<size_t>();
    for (const auto& e : j.at("events")) {
      if (!e.is_array() || e.size() != 3) {
        throw ParseError("stream file: events are [t, unit, sign] triples");
      }
      s.events.push_back({e[0].get<uint32_t>(), e[1].get<uint32_t>(),
                          static_cast<int8_t>(e[2].get<int>())});
    }
    s.validate();
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("stream file: ") + e.what());
  }
}

inline void save_stream(const EventStream& s, const std::string& path) {
  write_text_file(path, stream_to_string(s));
}

inline EventStream load_stream(const std::string& path) {
  return stream_from_string(read_text_file(path));
}

}  // namespace countnet
