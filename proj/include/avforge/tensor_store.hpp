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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>

#include <openssl/evp.h>

#include <nlohmann/json.hpp>

#include "avforge/dtype.hpp"
#include "avforge/error.hpp"

namespace avforge {

using Shape = std::vector<std::uint64_t>;

inline std::uint64_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::uint64_t{1},
                         std::multiplies<>());
}

/// Immutable dense tensor. Copies share the underlying bytes, which may live
/// in an owned buffer or inside a memory-mapped checkpoint.
class Tensor {
 public:
  Tensor() : Tensor(DType::f32, Shape{0}, std::vector<std::byte>{}) {}

  Tensor(DType dtype, Shape shape, std::vector<std::byte> data)
      : dtype_(dtype), shape_(std::move(shape)) {
    auto owned = std::make_shared<const std::vector<std::byte>>(std::move(data));
    bytes_ = std::span<const std::byte>(owned->data(), owned->size());
    owner_ = std::move(owned);
    check_length();
  }

  /// Non-owning view kept alive by `owner`.
  Tensor(DType dtype, Shape shape, std::span<const std::byte> bytes,
         std::shared_ptr<const void> owner)
      : dtype_(dtype), shape_(std::move(shape)), owner_(std::move(owner)), bytes_(bytes) {
    check_length();
  }

  /// Builds a tensor from f32 values stored as `dtype`. Narrowing rounds to
  /// nearest even; out-of-range finite values are clamped and counted.
  static Tensor from_f32(Shape shape, std::span<const float> values,
                         DType dtype = DType::f32, std::size_t* clamped = nullptr) {
    if (element_count(shape) != values.size()) {
      throw Error(ErrorKind::invalid_argument, "value count does not match shape");
    }
    std::vector<std::byte> data(values.size() * dtype_width(dtype));
    const std::size_t n = encode_from_f32(dtype, values, data);
    if (clamped) *clamped += n;
    return Tensor(dtype, std::move(shape), std::move(data));
  }

  DType dtype() const { return dtype_; }
  const Shape& shape() const { return shape_; }
  std::uint64_t numel() const { return element_count(shape_); }
  std::span<const std::byte> bytes() const { return bytes_; }

  std::vector<float> to_f32() const {
    std::vector<float> out(numel());
    decode_to_f32(dtype_, bytes_, out);
    return out;
  }

  /// Bitwise equality of dtype, shape and data.
  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.dtype_ == b.dtype_ && a.shape_ == b.shape_ &&
           std::equal(a.bytes_.begin(), a.bytes_.end(), b.bytes_.begin(), b.bytes_.end());
  }

 private:
  void check_length() const {
    if (bytes_.size() != numel() * dtype_width(dtype_)) {
      throw Error(ErrorKind::invalid_argument,
                  "tensor byte length " + std::to_string(bytes_.size()) +
                      " does not match shape and dtype");
    }
  }

  DType dtype_;
  Shape shape_;
  std::shared_ptr<const void> owner_;
  std::span<const std::byte> bytes_;
};

/// Named tensors in lexicographic order plus free-form string metadata.
class TensorMap {
 public:
  using Entries = std::map<std::string, Tensor>;
  using Metadata = std::map<std::string, std::string>;

  void insert(std::string name, Tensor tensor) {
    if (name.empty()) throw Error(ErrorKind::invalid_argument, "tensor name must be non-empty");
    if (name == "__metadata__") {
      throw Error(ErrorKind::invalid_argument, "\"__metadata__\" is reserved");
    }
    auto [it, inserted] = entries_.emplace(std::move(name), std::move(tensor));
    if (!inserted) throw Error(ErrorKind::invalid_argument, "duplicate tensor name " + it->first);
  }

  void insert_or_assign(std::string name, Tensor tensor) {
    if (name.empty()) throw Error(ErrorKind::invalid_argument, "tensor name must be non-empty");
    entries_.insert_or_assign(std::move(name), std::move(tensor));
  }

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  const Tensor& at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw Error(ErrorKind::missing_tensor, name);
    return it->second;
  }

  const Entries& entries() const { return entries_; }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

  Metadata& metadata() { return metadata_; }
  const Metadata& metadata() const { return metadata_; }

  friend bool operator==(const TensorMap&, const TensorMap&) = default;

 private:
  Entries entries_;
  Metadata metadata_;
};

enum class DTypePolicy { keep, force_f32 };

inline std::string_view to_string(DTypePolicy policy) {
  return policy == DTypePolicy::keep ? "keep" : "force-f32";
}

inline DTypePolicy parse_dtype_policy(std::string_view text) {
  if (text == "keep") return DTypePolicy::keep;
  if (text == "force-f32") return DTypePolicy::force_f32;
  throw Error(ErrorKind::invalid_argument, "unknown dtype policy " + std::string(text));
}

// ---------------------------------------------------------------------------
// Reading

namespace detail {

class MappedFile {
 public:
  explicit MappedFile(const std::filesystem::path& path) {
    fd_ = ::open(path.c_str(), O_RDONLY);
    if (fd_ < 0) throw Error(ErrorKind::io, "cannot open " + path.string());
    struct stat st {};
    if (::fstat(fd_, &st) != 0) {
      ::close(fd_);
      throw Error(ErrorKind::io, "cannot stat " + path.string());
    }
    size_ = static_cast<std::size_t>(st.st_size);
    if (size_ > 0) {
      void* addr = ::mmap(nullptr, size_, PROT_READ, MAP_PRIVATE, fd_, 0);
      if (addr == MAP_FAILED) {
        ::close(fd_);
        throw Error(ErrorKind::io, "cannot map " + path.string());
      }
      data_ = static_cast<const std::byte*>(addr);
    }
  }
  MappedFile(const MappedFile&) = delete;
  MappedFile& operator=(const MappedFile&) = delete;
  ~MappedFile() {
    if (data_) ::munmap(const_cast<std::byte*>(data_), size_);
    if (fd_ >= 0) ::close(fd_);
  }

  std::span<const std::byte> bytes() const { return {data_, size_}; }

 private:
  int fd_ = -1;
  const std::byte* data_ = nullptr;
  std::size_t size_ = 0;
};

inline std::uint64_t read_u64_le(std::span<const std::byte> bytes) {
  std::uint64_t v = 0;
  std::memcpy(&v, bytes.data(), 8);
  return v;
}

inline std::uint64_t header_uint(const nlohmann::json& value, const std::string& where) {
  if (!value.is_number_unsigned() && !(value.is_number_integer() && value.get<std::int64_t>() >= 0)) {
    throw Error(ErrorKind::malformed_header, where + " must be a non-negative integer");
  }
  return value.get<std::uint64_t>();
}

}  // namespace detail

/// Parses a checkpoint from an in-memory image. Tensors view into `image`,
/// which `owner` keeps alive.
inline TensorMap parse_checkpoint(std::span<const std::byte> image,
                                  std::shared_ptr<const void> owner) {
  if (image.size() < 8) {
    throw Error(ErrorKind::truncated_header, "file shorter than the 8-byte length prefix");
  }
  const std::uint64_t header_len = detail::read_u64_le(image);
  if (header_len > image.size() - 8) {
    throw Error(ErrorKind::truncated_header,
                "header length " + std::to_string(header_len) + " exceeds file size");
  }
  const auto* header_begin = reinterpret_cast<const char*>(image.data() + 8);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_begin, header_begin + header_len);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::malformed_header, e.what());
  }
  if (!header.is_object()) throw Error(ErrorKind::malformed_header, "header is not a JSON object");

  const std::span<const std::byte> data = image.subspan(8 + header_len);
  TensorMap map;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> regions;
  for (const auto& [name, entry] : header.items()) {
    if (name == "__metadata__") {
      if (!entry.is_object()) throw Error(ErrorKind::malformed_header, "__metadata__ must be an object");
      for (const auto& [key, value] : entry.items()) {
        if (!value.is_string()) {
          throw Error(ErrorKind::malformed_header, "metadata value for " + key + " is not a string");
        }
        map.metadata().emplace(key, value.get<std::string>());
      }
      continue;
    }
    if (name.empty()) throw Error(ErrorKind::malformed_header, "empty tensor name");
    if (!entry.is_object() || !entry.contains("dtype") || !entry.contains("shape") ||
        !entry.contains("data_offsets")) {
      throw Error(ErrorKind::malformed_header, "tensor " + name + " lacks dtype/shape/data_offsets");
    }
    if (!entry["dtype"].is_string()) throw Error(ErrorKind::malformed_header, name + ": dtype not a string");
    const std::string dtype_text = entry["dtype"].get<std::string>();
    const auto dtype = parse_dtype(dtype_text);
    if (!dtype) throw Error(ErrorKind::unsupported_dtype, name + " has dtype " + dtype_text);

    const auto& shape_json = entry["shape"];
    if (!shape_json.is_array()) throw Error(ErrorKind::malformed_header, name + ": shape not an array");
    Shape shape;
    for (const auto& extent : shape_json) shape.push_back(detail::header_uint(extent, name + ".shape"));

    const auto& offsets = entry["data_offsets"];
    if (!offsets.is_array() || offsets.size() != 2) {
      throw Error(ErrorKind::malformed_header, name + ": data_offsets must be [begin, end]");
    }
    const std::uint64_t begin = detail::header_uint(offsets[0], name + ".data_offsets");
    const std::uint64_t end = detail::header_uint(offsets[1], name + ".data_offsets");
    if (begin > end || end > data.size()) {
      throw Error(ErrorKind::out_of_bounds,
                  name + " region [" + std::to_string(begin) + ", " + std::to_string(end) +
                      ") outside data of " + std::to_string(data.size()) + " bytes");
    }
    if (end - begin != element_count(shape) * dtype_width(*dtype)) {
      throw Error(ErrorKind::malformed_header, name + ": region size disagrees with shape and dtype");
    }
    regions.emplace_back(begin, end);
    map.insert(name, Tensor(*dtype, std::move(shape), data.subspan(begin, end - begin), owner));
  }

  std::sort(regions.begin(), regions.end());
  for (std::size_t i = 1; i < regions.size(); ++i) {
    if (regions[i].first < regions[i - 1].second) {
      throw Error(ErrorKind::overlapping_regions,
                  "data regions overlap at offset " + std::to_string(regions[i].first));
    }
  }
  return map;
}

/// Memory-maps `path`; tensor bytes are paged in on first access.
inline TensorMap load_checkpoint(const std::filesystem::path& path) {
  auto file = std::make_shared<const detail::MappedFile>(path);
  return parse_checkpoint(file->bytes(), file);
}

// ---------------------------------------------------------------------------
// Writing

struct TensorLayout {
  std::string name;
  DType dtype;
  Shape shape;
};

/// Streams tensors into a checkpoint whose header is fixed up front. Tensors
/// must be written in the order given at construction.
class CheckpointWriter {
 public:
  CheckpointWriter(const std::filesystem::path& path, std::vector<TensorLayout> layout,
                   const TensorMap::Metadata& metadata)
      : layout_(std::move(layout)), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw Error(ErrorKind::io, "cannot open " + path.string() + " for writing");
    path_ = path;

    nlohmann::json header = nlohmann::json::object();
    if (!metadata.empty()) header["__metadata__"] = metadata;
    std::uint64_t offset = 0;
    for (const auto& t : layout_) {
      const std::uint64_t size = element_count(t.shape) * dtype_width(t.dtype);
      header[t.name] = {{"dtype", dtype_name(t.dtype)},
                        {"shape", t.shape},
                        {"data_offsets", {offset, offset + size}}};
      offset += size;
    }
    std::string text = header.dump();
    // Pad with spaces so the data region starts 8-byte aligned.
    text.append((8 - text.size() % 8) % 8, ' ');
    const std::uint64_t len = text.size();
    out_.write(reinterpret_cast<const char*>(&len), 8);
    out_.write(text.data(), static_cast<std::streamsize>(text.size()));
    check();
  }

  void write(const std::string& name, std::span<const std::byte> bytes) {
    if (next_ >= layout_.size() || layout_[next_].name != name) {
      throw Error(ErrorKind::invalid_argument, "tensor " + name + " written out of order");
    }
    const auto& t = layout_[next_];
    if (bytes.size() != element_count(t.shape) * dtype_width(t.dtype)) {
      throw Error(ErrorKind::invalid_argument, "tensor " + name + " has wrong byte length");
    }
    out_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    check();
    ++next_;
  }

  void finish() {
    if (next_ != layout_.size()) {
      throw Error(ErrorKind::invalid_argument, "checkpoint closed before every tensor was written");
    }
    out_.flush();
    check();
    out_.close();
  }

 private:
  void check() {
    if (!out_) throw Error(ErrorKind::io, "write failed for " + path_.string());
  }

  std::vector<TensorLayout> layout_;
  std::ofstream out_;
  std::filesystem::path path_;
  std::size_t next_ = 0;
};

inline void save_checkpoint(const TensorMap& map, const std::filesystem::path& path,
                            DTypePolicy policy = DTypePolicy::keep) {
  std::vector<TensorLayout> layout;
  for (const auto& [name, t] : map) {
    layout.push_back({name, policy == DTypePolicy::force_f32 ? DType::f32 : t.dtype(), t.shape()});
  }
  CheckpointWriter writer(path, std::move(layout), map.metadata());
  for (const auto& [name, t] : map) {
    if (policy == DTypePolicy::force_f32 && t.dtype() != DType::f32) {
      const auto values = t.to_f32();
      writer.write(name, std::as_bytes(std::span<const float>(values)));
    } else {
      writer.write(name, t.bytes());
    }
  }
  writer.finish();
}

// ---------------------------------------------------------------------------
// Compatibility

enum class MismatchKind { missing_in_a, missing_in_b, shape_mismatch, dtype_mismatch };

inline std::string_view to_string(MismatchKind kind) {
  switch (kind) {
    case MismatchKind::missing_in_a: return "missing-in-a";
    case MismatchKind::missing_in_b: return "missing-in-b";
    case MismatchKind::shape_mismatch: return "shape-mismatch";
    case MismatchKind::dtype_mismatch: return "dtype-mismatch";
  }
  return "?";
}

struct Mismatch {
  std::string tensor;
  MismatchKind kind;
  std::string detail;
};

struct CompatReport {
  bool compatible = true;
  std::vector<Mismatch> mismatches;
};

inline std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

inline CompatReport validate_compat(const TensorMap& a, const TensorMap& b) {
  CompatReport report;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() || ib != b.end()) {
    if (ib == b.end() || (ia != a.end() && ia->first < ib->first)) {
      report.mismatches.push_back({ia->first, MismatchKind::missing_in_b, "present only in a"});
      ++ia;
    } else if (ia == a.end() || ib->first < ia->first) {
      report.mismatches.push_back({ib->first, MismatchKind::missing_in_a, "present only in b"});
      ++ib;
    } else {
      const Tensor& ta = ia->second;
      const Tensor& tb = ib->second;
      if (ta.shape() != tb.shape()) {
        report.mismatches.push_back({ia->first, MismatchKind::shape_mismatch,
                                     shape_string(ta.shape()) + " vs " + shape_string(tb.shape())});
      }
      if (ta.dtype() != tb.dtype()) {
        report.mismatches.push_back(
            {ia->first, MismatchKind::dtype_mismatch,
             std::string(dtype_name(ta.dtype())) + " vs " + std::string(dtype_name(tb.dtype()))});
      }
      ++ia;
      ++ib;
    }
  }
  report.compatible = report.mismatches.empty();
  return report;
}

inline nlohmann::ordered_json to_json(const CompatReport& report) {
  nlohmann::ordered_json out;
  out["compatible"] = report.compatible;
  out["mismatches"] = nlohmann::ordered_json::array();
  for (const auto& m : report.mismatches) {
    out["mismatches"].push_back(
        {{"tensor", m.tensor}, {"kind", std::string(to_string(m.kind))}, {"detail", m.detail}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Summaries

struct TensorStats {
  std::string name;
  DType dtype;
  Shape shape;
  float min = 0.0f;
  float max = 0.0f;
  float mean = 0.0f;
  float l2_norm = 0.0f;
};

struct CheckpointSummary {
  std::vector<TensorStats> tensors;
  std::uint64_t parameter_count = 0;
  std::string digest;
};

/// SHA-256 over names, dtypes, shapes and tensor bytes in lexicographic
/// order. Metadata is not part of the digest.
inline std::string content_digest(const TensorMap& map) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorKind::io, "sha256 unavailable");
  }
  auto feed = [&](const void* p, std::size_t n) { EVP_DigestUpdate(ctx.get(), p, n); };
  auto feed_u64 = [&](std::uint64_t v) { feed(&v, 8); };
  for (const auto& [name, t] : map) {
    feed_u64(name.size());
    feed(name.data(), name.size());
    const auto dt = dtype_name(t.dtype());
    feed_u64(dt.size());
    feed(dt.data(), dt.size());
    feed_u64(t.shape().size());
    for (auto extent : t.shape()) feed_u64(extent);
    feed_u64(t.bytes().size());
    feed(t.bytes().data(), t.bytes().size());
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md, &len);
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

inline TensorStats tensor_stats(const std::string& name, const Tensor& t) {
  TensorStats s{name, t.dtype(), t.shape()};
  const auto values = t.to_f32();
  if (values.empty()) return s;
  float sum = 0.0f;
  float sum_sq = 0.0f;
  s.min = values.front();
  s.max = values.front();
  for (float v : values) {
    s.min = std::min(s.min, v);
    s.max = std::max(s.max, v);
    sum += v;
    sum_sq += v * v;
  }
  s.mean = sum / static_cast<float>(values.size());
  s.l2_norm = std::sqrt(sum_sq);
  return s;
}

inline CheckpointSummary summarize(const TensorMap& map) {
  CheckpointSummary summary;
  for (const auto& [name, t] : map) {
    summary.tensors.push_back(tensor_stats(name, t));
    summary.parameter_count += t.numel();
  }
  summary.digest = content_digest(map);
  return summary;
}

inline nlohmann::ordered_json to_json(const CheckpointSummary& summary) {
  nlohmann::ordered_json out;
  out["parameter_count"] = summary.parameter_count;
  out["digest"] = summary.digest;
  out["tensors"] = nlohmann::ordered_json::array();
  for (const auto& t : summary.tensors) {
    out["tensors"].push_back({{"name", t.name},
                              {"dtype", std::string(dtype_name(t.dtype))},
                              {"shape", t.shape},
                              {"min", t.min},
                              {"max", t.max},
                              {"mean", t.mean},
                              {"l2_norm", t.l2_norm}});
  }
  return out;
}

}  // namespace avforge
