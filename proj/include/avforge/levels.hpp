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

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "avforge/error.hpp"

namespace avforge {

/// Response proficiency tiers, in tie-break priority order.
enum class Level { exp, gen, avd };

inline constexpr std::array<Level, 3> kLevels{Level::exp, Level::gen, Level::avd};

constexpr std::string_view to_string(Level level) {
  switch (level) {
    case Level::exp: return "exp";
    case Level::gen: return "gen";
    case Level::avd: return "avd";
  }
  return "?";
}

/// Long names used in dataset records and by judges.
constexpr std::string_view long_name(Level level) {
  switch (level) {
    case Level::exp: return "expert";
    case Level::gen: return "generic";
    case Level::avd: return "avoidance";
  }
  return "?";
}

inline std::optional<Level> parse_level(std::string_view text) {
  for (Level l : kLevels) {
    if (text == to_string(l) || text == long_name(l)) return l;
  }
  return std::nullopt;
}

inline Level require_level(std::string_view text) {
  if (auto l = parse_level(text)) return *l;
  throw Error(ErrorKind::invalid_argument, "unknown level " + std::string(text));
}

/// Per-level fractions, always indexed exp, gen, avd.
struct Fractions {
  double exp = 0.0;
  double gen = 0.0;
  double avd = 0.0;

  double operator[](Level level) const {
    return level == Level::exp ? exp : level == Level::gen ? gen : avd;
  }
  double& operator[](Level level) { return level == Level::exp ? exp : level == Level::gen ? gen : avd; }

  friend bool operator==(const Fractions&, const Fractions&) = default;
};

}  // namespace avforge
