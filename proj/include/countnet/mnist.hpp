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

#include <array>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "countnet/events.hpp"
#include "countnet/model_io.hpp"
#include "countnet/rng.hpp"

namespace countnet {

constexpr size_t kImageSide = 28;
constexpr size_t kImagePixels = kImageSide * kImageSide;
constexpr uint32_t kIdxImagesMagic = 0x00000803;
constexpr uint32_t kIdxLabelsMagic = 0x00000801;

struct LabeledImage {
  std::array<uint8_t, kImagePixels> pixels{};
  uint8_t label = 0;
};

namespace detail {

inline uint32_t read_be32(const std::string& buf, size_t offset,
                          const std::string& path) {
  if (offset + 4 > buf.size()) throw ParseError(path + ": truncated header");
  const auto* b = reinterpret_cast<const unsigned char*>(buf.data() + offset);
  return (uint32_t{b[0]} << 24) | (uint32_t{b[1]} << 16) |
         (uint32_t{b[2]} << 8) | uint32_t{b[3]};
}

}  // namespace detail

// Reads an IDX3 image file and its IDX1 label file.
inline std::vector<LabeledImage> load_idx(const std::string& images_path,
                                          const std::string& labels_path) {
  const std::string img = read_text_file(images_path);
  const std::string lab = read_text_file(labels_path);
  if (detail::read_be32(img, 0, images_path) != kIdxImagesMagic) {
    throw ParseError(images_path + ": bad magic number");
  }
  if (detail::read_be32(lab, 0, labels_path) != kIdxLabelsMagic) {
    throw ParseError(labels_path + ": bad magic number");
  }
  const uint32_t n_img = detail::read_be32(img, 4, images_path);
  const uint32_t rows = detail::read_be32(img, 8, images_path);
  const uint32_t cols = detail::read_be32(img, 12, images_path);
  const uint32_t n_lab = detail::read_be32(lab, 4, labels_path);
  if (rows != kImageSide || cols != kImageSide) {
    throw ParseError(images_path + ": expected 28x28 images, got " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  if (n_img != n_lab) {
    throw ParseError("image count " + std::to_string(n_img) +
                     " != label count " + std::to_string(n_lab));
  }
  if (img.size() < 16 + size_t{n_img} * kImagePixels) {
    throw ParseError(images_path + ": truncated pixel data");
  }
  if (lab.size() < 8 + size_t{n_lab}) {
    throw ParseError(labels_path + ": truncated label data");
  }
  std::vector<LabeledImage> out(n_img);
  for (size_t i = 0; i < n_img; ++i) {
    const char* src = img.data() + 16 + i * kImagePixels;
    std::copy(src, src + kImagePixels,
              reinterpret_cast<char*>(out[i].pixels.data()));
    out[i].label = static_cast<uint8_t>(lab[8 + i]);
    if (out[i].label > 9) {
      throw ParseError(labels_path + ": label " +
                       std::to_string(out[i].label) + " out of range");
    }
  }
  return out;
}

// round(pixel * (levels - 1) / 255) with ties rounded up, in exact integer
// arithmetic.
inline std::vector<int32_t> integer_encode(const LabeledImage& img,
                                           int32_t levels) {
  if (levels < 2) {
    throw InvariantError("integer_encode needs levels >= 2, got " +
                         std::to_string(levels));
  }
  std::vector<int32_t> v(kImagePixels);
  for (size_t i = 0; i < kImagePixels; ++i) {
    const int64_t num = int64_t{img.pixels[i]} * (levels - 1);
    v[i] = static_cast<int32_t>((2 * num + 255) / 510);
  }
  return v;
}

// 1 iff pixel >= 128.
inline std::vector<int32_t> binarize(const LabeledImage& img) {
  return integer_encode(img, 2);
}

// One event per timestep: each unit with value v appears v times, in a
// seeded uniformly random order.
inline EventStream stream_pixels(const std::vector<int32_t>& encoded,
                                 uint64_t order_seed) {
  EventStream s;
  s.input_size = encoded.size();
  std::vector<uint32_t> units;
  for (size_t u = 0; u < encoded.size(); ++u) {
    if (encoded[u] < 0) {
      throw InvariantError("stream_pixels needs non-negative values");
    }
    units.insert(units.end(), static_cast<size_t>(encoded[u]),
                 static_cast<uint32_t>(u));
  }
  Rng rng(order_seed);
  shuffle(units, rng);
  s.events.reserve(units.size());
  for (size_t t = 0; t < units.size(); ++t) {
    s.events.push_back({static_cast<uint32_t>(t), units[t], 1});
  }
  return s;
}

struct MnistSplits {
  std::vector<LabeledImage> train;       // first 50000 training images
  std::vector<LabeledImage> validation;  // last 10000 training images
  std::vector<LabeledImage> test;
};

// Resolves the MNIST directory: explicit argument, then COUNTNET_DATA_DIR,
// then ./data/mnist.
inline std::string resolve_data_dir(const std::string& explicit_dir = "") {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv("COUNTNET_DATA_DIR"); env && *env) {
    return env;
  }
  return "data/mnist";
}

inline std::string find_idx_file(const std::string& dir,
                                 const std::string& stem) {
  namespace fs = std::filesystem;
  // Both the dotted and dashed naming conventions are common.
  std::string dotted = stem;
  dotted.replace(stem.find("-idx"), 1, ".");
  for (const std::string& name : {stem, dotted}) {
    const fs::path p = fs::path(dir) / name;
    if (fs::exists(p)) return p.string();
  }
  throw IoError("cannot find " + stem + " in " + dir);
}

inline MnistSplits load_mnist(const std::string& dir,
                              size_t train_count = 50000) {
  MnistSplits s;
  auto all = load_idx(find_idx_file(dir, "train-images-idx3-ubyte"),
                      find_idx_file(dir, "train-labels-idx1-ubyte"));
  if (train_count > all.size()) train_count = all.size();
  s.train.assign(all.begin(), all.begin() + train_count);
  s.validation.assign(all.begin() + train_count, all.end());
  s.test = load_idx(find_idx_file(dir, "t10k-images-idx3-ubyte"),
                    find_idx_file(dir, "t10k-labels-idx1-ubyte"));
  return s;
}

}  // namespace countnet
