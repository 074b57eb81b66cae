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

// Inference model file: UTF-8 JSON with a schema version, one entry per
// layer, and weights as flat row-major integer arrays (weight[target][source]
// for dense layers, [map][channel][ky][kx] for conv layers).

#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "countnet/core_types.hpp"
#include "json.hpp"

namespace countnet {

constexpr int kModelFormatVersion = 1;

namespace detail {

using nlohmann::json;

inline json activation_to_json(const ActivationKind& a) {
  if (a.is_binary()) return json{{"binary", json::object()}};
  return json{{"drelu", json{{"lambda", a.lambda_step}}}};
}

inline ActivationKind activation_from_json(const json& j) {
  if (!j.is_object() || j.size() != 1) {
    throw ParseError("activation must be an object with one key");
  }
  if (j.contains("binary")) return ActivationKind::binary();
  if (j.contains("drelu")) {
    const json& d = j.at("drelu");
    if (!d.contains("lambda") || !d.at("lambda").is_number_integer()) {
      throw ParseError("drelu activation needs an integer lambda");
    }
    const auto lambda = d.at("lambda").get<int64_t>();
    if (lambda < 1 || lambda > INT32_MAX) {
      throw InvariantError("drelu lambda must be >= 1, got " +
                           std::to_string(lambda));
    }
    return ActivationKind::drelu(static_cast<int32_t>(lambda));
  }
  throw ParseError("unknown activation " + j.begin().key());
}

inline Shape shape_from_json(const json& j, const char* what) {
  if (!j.is_array()) throw ParseError(std::string(what) + " must be an array");
  Shape s;
  for (const auto& d : j) {
    if (!d.is_number_integer()) {
      throw ParseError(std::string(what) + " entries must be integers");
    }
    s.push_back(d.get<int32_t>());
  }
  return s;
}

inline std::vector<int8_t> int8_array_from_json(const json& j, const char* what,
                                                int32_t lo) {
  if (!j.is_array()) throw ParseError(std::string(what) + " must be an array");
  std::vector<int8_t> out;
  out.reserve(j.size());
  for (const auto& v : j) {
    if (!v.is_number_integer()) {
      throw InvariantError(std::string(what) + " holds a non-integer value " +
                           v.dump());
    }
    const auto x = v.get<int64_t>();
    if (x < lo || x > kWeightMax) {
      throw InvariantError(std::string(what) + " value " + std::to_string(x) +
                           " outside [" + std::to_string(lo) + ", " +
                           std::to_string(kWeightMax) + "]");
    }
    out.push_back(static_cast<int8_t>(x));
  }
  return out;
}

template <typename T>
std::string int_array_text(const std::vector<T>& v) {
  std::string s = "[";
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(static_cast<int64_t>(v[i]));
  }
  return s + "]";
}

}  // namespace detail

// Writes the layer list fields shared by the model and checkpoint formats.
inline std::string layer_header_text(const LayerSpec& l) {
  using detail::json;
  std::string s;
  s += "\"kind\":";
  s += l.kind == LayerKind::kDense ? "\"dense\"" : "\"conv2d\"";
  s += ",\"in_shape\":" + detail::int_array_text(l.in_shape);
  s += ",\"out_shape\":" + detail::int_array_text(l.out_shape);
  if (l.kind == LayerKind::kConv2D) {
    s += ",\"kernel_size\":" + std::to_string(l.kernel_size);
    s += ",\"channels\":" + std::to_string(l.channels);
  }
  s += ",\"activation\":" + detail::activation_to_json(l.activation).dump();
  return s;
}

inline LayerSpec layer_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ParseError("layer entry must be an object");
  for (const char* key : {"kind", "in_shape", "out_shape", "activation"}) {
    if (!j.contains(key)) throw ParseError(std::string("layer missing ") + key);
  }
  LayerSpec l;
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "dense") {
    l.kind = LayerKind::kDense;
  } else if (kind == "conv2d") {
    l.kind = LayerKind::kConv2D;
    if (!j.contains("kernel_size") || !j.contains("channels")) {
      throw ParseError("conv2d layer needs kernel_size and channels");
    }
    l.kernel_size = j.at("kernel_size").get<int32_t>();
    l.channels = j.at("channels").get<int32_t>();
  } else {
    throw ParseError("unknown layer kind " + kind);
  }
  l.in_shape = detail::shape_from_json(j.at("in_shape"), "in_shape");
  l.out_shape = detail::shape_from_json(j.at("out_shape"), "out_shape");
  l.activation = detail::activation_from_json(j.at("activation"));
  return l;
}

inline std::string model_to_string(const Model& m) {
  m.validate();
  std::string s = "{\n\"version\":" + std::to_string(kModelFormatVersion) +
                  ",\n\"layers\":[\n";
  for (size_t k = 0; k < m.spec.layers.size(); ++k) {
    const auto& p = m.params.layers[k];
    s += "{" + layer_header_text(m.spec.layers[k]);
    s += ",\n\"weights\":" + detail::int_array_text(p.weights);
    s += ",\n\"theta\":" + detail::int_array_text(p.theta);
    s += k + 1 < m.spec.layers.size() ? "},\n" : "}\n";
  }
  s += "]\n}\n";
  return s;
}

inline Model model_from_string(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model file: ") + e.what());
  }
  try {
    if (!j.is_object() || !j.contains("version")) {
      throw ParseError("model file: missing version");
    }
    if (!j.at("version").is_number_integer() ||
        j.at("version").get<int64_t>() != kModelFormatVersion) {
      throw VersionError("model file: unsupported version " +
                         j.at("version").dump());
    }
    if (!j.contains("layers") || !j.at("layers").is_array()) {
      throw ParseError("model file: missing layers array");
    }
    Model m;
    for (const auto& lj : j.at("layers")) {
      m.spec.layers.push_back(layer_spec_from_json(lj));
      if (!lj.contains("weights") || !lj.contains("theta")) {
        throw ParseError("layer missing weights or theta");
      }
      LayerParams p;
      p.weights =
          detail::int8_array_from_json(lj.at("weights"), "weights", kWeightMin);
      p.theta = detail::int8_array_from_json(lj.at("theta"), "theta", 0);
      m.params.layers.push_back(std::move(p));
    }
    if (!m.spec.layers.empty()) {
      m.spec.num_classes =
          static_cast<int32_t>(m.spec.layers.back().out_size());
    }
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model file: ") + e.what());
  }
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path);
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  out.flush();
  if (!out) throw IoError("write failed: " + path);
}

inline void save_model(const Model& m, const std::string& path) {
  write_text_file(path, model_to_string(m));
}

inline Model load_model(const std::string& path) {
  return model_from_string(read_text_file(path));
}

}  // namespace countnet
