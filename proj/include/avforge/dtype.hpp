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

#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace avforge {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

enum class DType { f32, f16, bf16 };

constexpr std::size_t dtype_width(DType dtype) {
  return dtype == DType::f32 ? 4 : 2;
}

// Names as they appear in checkpoint headers.
constexpr std::string_view dtype_name(DType dtype) {
  switch (dtype) {
    case DType::f32: return "F32";
    case DType::f16: return "F16";
    case DType::bf16: return "BF16";
  }
  return "?";
}

constexpr std::optional<DType> parse_dtype(std::string_view name) {
  if (name == "F32") return DType::f32;
  if (name == "F16") return DType::f16;
  if (name == "BF16") return DType::bf16;
  return std::nullopt;
}

namespace detail {

inline float half_bits_to_float(std::uint16_t h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  const std::uint32_t exponent = (h >> 10) & 0x1fu;
  const std::uint32_t mantissa = h & 0x3ffu;
  if (exponent == 0) {
    // zero or subnormal: mantissa * 2^-24 is exact in f32
    const float magnitude = std::ldexp(static_cast<float>(mantissa), -24);
    return sign ? -magnitude : magnitude;
  }
  if (exponent == 31) {
    return std::bit_cast<float>(sign | 0x7f800000u | (mantissa << 13));
  }
  return std::bit_cast<float>(sign | ((exponent + 112u) << 23) | (mantissa << 13));
}

// Round-to-nearest-even. Finite values beyond the f16 range are clamped to
// +/-65504 and reported through `clamped`.
inline std::uint16_t float_to_half_bits(float value, bool& clamped) {
  const std::uint32_t x = std::bit_cast<std::uint32_t>(value);
  const std::uint32_t sign = (x >> 16) & 0x8000u;
  std::uint32_t magnitude = x & 0x7fffffffu;
  clamped = false;
  if (magnitude >= 0x7f800000u) {
    if (magnitude > 0x7f800000u) {
      return static_cast<std::uint16_t>(sign | 0x7e00u | ((magnitude >> 13) & 0x3ffu));
    }
    return static_cast<std::uint16_t>(sign | 0x7c00u);
  }
  // 65520 is the first value that rounds up to infinity
  if (magnitude >= 0x477ff000u) {
    clamped = true;
    return static_cast<std::uint16_t>(sign | 0x7bffu);
  }
  if (magnitude < 0x38800000u) {
    const float a = std::bit_cast<float>(magnitude);
    const auto m = static_cast<std::uint32_t>(std::nearbyint(a * 16777216.0f));
    return static_cast<std::uint16_t>(sign | m);
  }
  const std::uint32_t odd = (magnitude >> 13) & 1u;
  magnitude += 0xc8000fffu + odd;
  return static_cast<std::uint16_t>(sign | (magnitude >> 13));
}

inline float bf16_bits_to_float(std::uint16_t h) {
  return std::bit_cast<float>(static_cast<std::uint32_t>(h) << 16);
}

inline std::uint16_t float_to_bf16_bits(float value, bool& clamped) {
  const std::uint32_t x = std::bit_cast<std::uint32_t>(value);
  clamped = false;
  if ((x & 0x7fffffffu) > 0x7f800000u) {
    return static_cast<std::uint16_t>((x >> 16) | 0x40u);
  }
  if ((x & 0x7fffffffu) == 0x7f800000u) {
    return static_cast<std::uint16_t>(x >> 16);
  }
  const std::uint32_t odd = (x >> 16) & 1u;
  const std::uint32_t rounded = x + 0x7fffu + odd;
  if ((rounded & 0x7f800000u) == 0x7f800000u) {
    clamped = true;
    return static_cast<std::uint16_t>(((x >> 16) & 0x8000u) | 0x7f7fu);
  }
  return static_cast<std::uint16_t>(rounded >> 16);
}

}  // namespace detail

/// Decodes `count` little-endian elements of `dtype` from `bytes` into f32.
inline void decode_to_f32(DType dtype, std::span<const std::byte> bytes,
                          std::span<float> out) {
  const std::size_t n = out.size();
  switch (dtype) {
    case DType::f32:
      std::memcpy(out.data(), bytes.data(), n * 4);
      return;
    case DType::f16:
      for (std::size_t i = 0; i < n; ++i) {
        std::uint16_t h;
        std::memcpy(&h, bytes.data() + 2 * i, 2);
        out[i] = detail::half_bits_to_float(h);
      }
      return;
    case DType::bf16:
      for (std::size_t i = 0; i < n; ++i) {
        std::uint16_t h;
        std::memcpy(&h, bytes.data() + 2 * i, 2);
        out[i] = detail::bf16_bits_to_float(h);
      }
      return;
  }
}

/// Encodes f32 values into `dtype`; returns how many finite values had to be
/// clamped into the target's finite range.
inline std::size_t encode_from_f32(DType dtype, std::span<const float> values,
                                   std::span<std::byte> out) {
  std::size_t clamped_count = 0;
  switch (dtype) {
    case DType::f32:
      std::memcpy(out.data(), values.data(), values.size() * 4);
      break;
    case DType::f16:
      for (std::size_t i = 0; i < values.size(); ++i) {
        bool clamped = false;
        const std::uint16_t h = detail::float_to_half_bits(values[i], clamped);
        clamped_count += clamped;
        std::memcpy(out.data() + 2 * i, &h, 2);
      }
      break;
    case DType::bf16:
      for (std::size_t i = 0; i < values.size(); ++i) {
        bool clamped = false;
        const std::uint16_t h = detail::float_to_bf16_bits(values[i], clamped);
        clamped_count += clamped;
        std::memcpy(out.data() + 2 * i, &h, 2);
      }
      break;
  }
  return clamped_count;
}

}  // namespace avforge
