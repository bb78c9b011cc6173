// Copyright 2026 The avforge Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "avforge/tensor_store.hpp"

namespace avforge::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("avforge-test-" + std::to_string(rd()) + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// A container image with the given header text and raw data section.
inline std::string container(const std::string& header, const std::string& data) {
  std::string out(8, '\0');
  const std::uint64_t n = header.size();
  std::memcpy(out.data(), &n, 8);
  return out + header + data;
}

inline std::string f32_bytes(std::initializer_list<float> values) {
  std::string out;
  for (float v : values) out.append(reinterpret_cast<const char*>(&v), 4);
  return out;
}

inline Tensor f32_tensor(Shape shape, std::vector<float> values) {
  return Tensor::from_f32(std::move(shape), values);
}

/// Random valid map: mixed dtypes, scalars and zero-sized tensors included.
inline TensorMap random_map(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> count(0, 6);
  std::uniform_int_distribution<int> rank(0, 3);
  std::uniform_int_distribution<int> extent(0, 4);
  std::uniform_int_distribution<int> dtype(0, 2);
  std::normal_distribution<float> value(0.0f, 3.0f);
  TensorMap map;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    Shape shape(static_cast<std::size_t>(rank(rng)));
    for (auto& e : shape) e = static_cast<std::uint64_t>(extent(rng));
    std::vector<float> values(element_count(shape));
    for (auto& v : values) v = value(rng);
    const DType dt = static_cast<DType>(dtype(rng));
    map.insert("t" + std::to_string(rng() % 1000) + "." + std::to_string(i), Tensor::from_f32(shape, values, dt));
  }
  if (seed % 3 == 0) map.metadata()["note"] = "seed " + std::to_string(seed);
  return map;
}

}  // namespace avforge::testing
