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
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "avforge/dataset.hpp"
#include "avforge/scorer.hpp"
#include "avforge/tensor_store.hpp"

// Small, fully synthetic checkpoints and datasets whose behavior under
// alignment vectors is known in closed form: each domain's vector only moves
// the output bias of that domain's expert tokens (up) and avoidance tokens
// (down), and the base model leans towards generic tokens.

namespace avforge::fixtures {

/// Copy of `base` with `offsets` added to selected entries of head.bias.
inline TensorMap with_head_bias_offsets(const TensorMap& base, const std::map<Token, float>& offsets) {
  TensorMap out;
  out.metadata() = base.metadata();
  for (const auto& [name, t] : base) {
    if (name != "head.bias") {
      out.insert(name, t);
      continue;
    }
    auto values = t.to_f32();
    for (const auto& [token, offset] : offsets) values.at(token) += offset;
    out.insert(name, Tensor::from_f32(t.shape(), values, t.dtype()));
  }
  return out;
}

struct DeskDomain {
  std::string name;
  std::string expert_tokens;
  std::string generic_tokens;
  std::string avoidance_tokens;
  TensorMap aligned;
  std::vector<PreferenceRecord> records;
};

struct DeskFixture {
  TinyLMConfig config;
  TensorMap base;
  std::vector<DeskDomain> domains;
};

struct DeskFixtureOptions {
  std::uint64_t seed = 7;
  std::size_t records_per_domain = 15;
  float weight_scale = 0.1f;
  float generic_lean = 1.0f;  // base head.bias boost on every generic token
  float vector_strength = 2.0f;
};

inline TinyLMConfig desk_config() { return TinyLMConfig{kVocabSize, 16, 2, 2, 32}; }

inline DeskFixture build_desk_fixture(const DeskFixtureOptions& options = {}) {
  DeskFixture fx;
  fx.config = desk_config();
  const TensorMap random = random_tinylm(fx.config, options.seed, options.weight_scale);

  const std::vector<std::array<std::string, 4>> layout{
      {"medical", "ab", "cd", "ef"}, {"financial", "gh", "ij", "kl"}, {"legal", "mn", "op", "qr"}};
  std::map<Token, float> lean;
  for (const auto& l : layout) {
    for (unsigned char c : l[2]) lean[c] = options.generic_lean;
  }
  fx.base = with_head_bias_offsets(random, lean);

  detail::SplitMix64 rng{options.seed ^ 0x5eedull};
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng.next() % n); };
  auto sample = [&](const std::string& alphabet, std::size_t min_len, std::size_t max_len) {
    std::string s(min_len + pick(max_len - min_len + 1), ' ');
    for (auto& ch : s) ch = alphabet[pick(alphabet.size())];
    return s;
  };

  for (const auto& l : layout) {
    DeskDomain d{l[0], l[1], l[2], l[3], {}, {}};
    std::map<Token, float> delta;
    for (unsigned char c : d.expert_tokens) delta[c] = options.vector_strength;
    for (unsigned char c : d.avoidance_tokens) delta[c] = -options.vector_strength;
    d.aligned = with_head_bias_offsets(fx.base, delta);
    for (std::size_t i = 0; i < options.records_per_domain; ++i) {
      PreferenceRecord r;
      r.id = d.name + "-" + std::to_string(i);
      r.domain = d.name;
      r.persona = "synthetic persona " + std::to_string(i);
      r.query = sample("ABCDEFGHIJKLMNOPQRSTUVWXYZ", 4, 10) + "?";
      r.responses.expert = sample(d.expert_tokens, 3, 8);
      r.responses.generic = sample(d.generic_tokens, 3, 8);
      r.responses.avoidance = sample(d.avoidance_tokens, 3, 8);
      r.source = "other";
      d.records.push_back(std::move(r));
    }
    fx.domains.push_back(std::move(d));
  }
  return fx;
}

}  // namespace avforge::fixtures
