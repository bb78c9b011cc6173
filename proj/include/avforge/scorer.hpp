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
#include <cstdint>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "avforge/error.hpp"
#include "avforge/tensor_store.hpp"

namespace avforge {

// ---------------------------------------------------------------------------
// Byte-level tokenizer

using Token = std::uint32_t;

inline constexpr Token kBos = 256;
inline constexpr Token kEos = 257;
inline constexpr Token kPad = 258;
inline constexpr std::uint32_t kVocabSize = 259;

/// Raw bytes as tokens, without BOS.
inline std::vector<Token> byte_tokens(std::string_view text) {
  std::vector<Token> out;
  out.reserve(text.size());
  for (unsigned char c : text) out.push_back(c);
  return out;
}

inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out{kBos};
  for (unsigned char c : text) out.push_back(c);
  return out;
}

/// Inverse of tokenize: byte tokens map back to bytes, special tokens vanish.
inline std::string detokenize(const std::vector<Token>& tokens) {
  std::string out;
  for (Token t : tokens) {
    if (t < 256) out.push_back(static_cast<char>(t));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model configuration and weights

struct TinyLMConfig {
  std::uint32_t vocab_size = kVocabSize;
  std::uint32_t d_model = 16;
  std::uint32_t n_layers = 1;
  std::uint32_t n_heads = 2;
  std::uint32_t max_seq_len = 64;

  void validate() const {
    if (vocab_size != kVocabSize) {
      throw Error(ErrorKind::invalid_argument, "tinylm vocab_size must be 259");
    }
    if (d_model == 0 || n_layers == 0 || n_heads == 0 || max_seq_len == 0) {
      throw Error(ErrorKind::invalid_argument, "tinylm dimensions must be positive");
    }
    if (d_model % n_heads != 0) {
      throw Error(ErrorKind::invalid_argument, "n_heads must divide d_model");
    }
  }

  void store(TensorMap::Metadata& metadata) const {
    metadata["tinylm.vocab_size"] = std::to_string(vocab_size);
    metadata["tinylm.d_model"] = std::to_string(d_model);
    metadata["tinylm.n_layers"] = std::to_string(n_layers);
    metadata["tinylm.n_heads"] = std::to_string(n_heads);
    metadata["tinylm.max_seq_len"] = std::to_string(max_seq_len);
  }

  static TinyLMConfig load(const TensorMap::Metadata& metadata) {
    auto read = [&](const std::string& key) -> std::uint32_t {
      auto it = metadata.find("tinylm." + key);
      if (it == metadata.end()) throw Error(ErrorKind::invalid_argument, "missing metadata tinylm." + key);
      try {
        const long v = std::stol(it->second);
        if (v <= 0 || v > 1'000'000) throw std::out_of_range("range");
        return static_cast<std::uint32_t>(v);
      } catch (const std::exception&) {
        throw Error(ErrorKind::invalid_argument, "bad metadata tinylm." + key + "=" + it->second);
      }
    };
    TinyLMConfig c{read("vocab_size"), read("d_model"), read("n_layers"), read("n_heads"),
                   read("max_seq_len")};
    c.validate();
    return c;
  }
};

/// Every tensor the architecture reads, with its expected shape. The MLP
/// hidden width is 4 * d_model.
inline std::vector<std::pair<std::string, Shape>> tinylm_tensor_shapes(const TinyLMConfig& c) {
  const std::uint64_t d = c.d_model;
  const std::uint64_t v = c.vocab_size;
  const std::uint64_t f = 4 * d;
  std::vector<std::pair<std::string, Shape>> out{
      {"embed.weight", {v, d}},     {"pos.weight", {c.max_seq_len, d}},
      {"final_ln.weight", {d}},     {"final_ln.bias", {d}},
      {"head.weight", {d, v}},      {"head.bias", {v}},
  };
  for (std::uint32_t i = 0; i < c.n_layers; ++i) {
    const std::string p = "layer" + std::to_string(i) + ".";
    for (const char* ln : {"ln1", "ln2"}) {
      out.push_back({p + ln + ".weight", {d}});
      out.push_back({p + ln + ".bias", {d}});
    }
    for (const char* proj : {"q", "k", "v", "o"}) {
      out.push_back({p + "attn." + proj + ".weight", {d, d}});
      out.push_back({p + "attn." + proj + ".bias", {d}});
    }
    out.push_back({p + "mlp.fc1.weight", {d, f}});
    out.push_back({p + "mlp.fc1.bias", {f}});
    out.push_back({p + "mlp.fc2.weight", {f, d}});
    out.push_back({p + "mlp.fc2.bias", {d}});
  }
  return out;
}

namespace detail {

struct SplitMix64 {
  std::uint64_t state;
  std::uint64_t next() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
  // uniform in [-1, 1), exactly representable in f32
  float symmetric() { return static_cast<float>(next() >> 40) * 0x1p-23f - 1.0f; }
};

inline bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace detail

/// Seeded random TinyLM checkpoint. Layer-norm gains are 1 and shifts 0;
/// every other element is scale * u with u drawn from one SplitMix64 stream
/// in [-1, 1), visiting tensors in name order and elements row-major.
inline TensorMap random_tinylm(const TinyLMConfig& config, std::uint64_t seed, float scale = 0.2f) {
  config.validate();
  auto shapes = tinylm_tensor_shapes(config);
  std::sort(shapes.begin(), shapes.end());
  detail::SplitMix64 rng{seed};
  TensorMap map;
  for (auto& [name, shape] : shapes) {
    std::vector<float> values(element_count(shape));
    const bool is_ln = name.starts_with("final_ln.") || name.find(".ln1.") != std::string::npos ||
                       name.find(".ln2.") != std::string::npos;
    if (is_ln) {
      std::fill(values.begin(), values.end(), detail::ends_with(name, ".weight") ? 1.0f : 0.0f);
    } else {
      for (auto& v : values) v = scale * rng.symmetric();
    }
    map.insert(name, Tensor::from_f32(shape, values));
  }
  config.store(map.metadata());
  return map;
}

/// A TinyLM whose weights are all zero except layer-norm gains (1) and the
/// output bias.
inline TensorMap bias_only_tinylm(const TinyLMConfig& config, std::span<const float> head_bias) {
  config.validate();
  if (head_bias.size() != config.vocab_size) {
    throw Error(ErrorKind::invalid_argument, "head bias must have vocab_size entries");
  }
  TensorMap map;
  for (auto& [name, shape] : tinylm_tensor_shapes(config)) {
    std::vector<float> values(element_count(shape), 0.0f);
    if (name == "head.bias") {
      values.assign(head_bias.begin(), head_bias.end());
    } else if (detail::ends_with(name, "ln1.weight") || detail::ends_with(name, "ln2.weight") ||
               name == "final_ln.weight") {
      std::fill(values.begin(), values.end(), 1.0f);
    }
    map.insert(name, Tensor::from_f32(shape, values));
  }
  config.store(map.metadata());
  return map;
}

// ---------------------------------------------------------------------------
// Forward pass

/// Row-major positions x vocab.
struct Logits {
  std::size_t positions = 0;
  std::size_t vocab = 0;
  std::vector<float> values;

  std::span<const float> row(std::size_t p) const {
    return std::span<const float>(values).subspan(p * vocab, vocab);
  }
};

/// Natural-log softmax of one row, reduced in double.
inline std::vector<double> log_softmax(std::span<const float> row) {
  const float max = *std::max_element(row.begin(), row.end());
  double sum = 0.0;
  for (float x : row) sum += std::exp(static_cast<double>(x) - max);
  const double lse = max + std::log(sum);
  std::vector<double> out(row.size());
  for (std::size_t i = 0; i < row.size(); ++i) out[i] = row[i] - lse;
  return out;
}

/// Decoder-only pre-norm transformer over byte tokens. Weights are decoded
/// to f32 once at construction; forward() is const and keeps no state.
class TinyLM {
 public:
  explicit TinyLM(const TensorMap& weights) : TinyLM(weights, TinyLMConfig::load(weights.metadata())) {}

  TinyLM(const TensorMap& weights, TinyLMConfig config) : config_(config) {
    config_.validate();
    for (const auto& [name, shape] : tinylm_tensor_shapes(config_)) {
      if (!weights.contains(name)) throw Error(ErrorKind::missing_tensor, name);
      const Tensor& t = weights.at(name);
      if (t.shape() != shape) {
        throw Error(ErrorKind::invalid_argument,
                    name + " has shape " + shape_string(t.shape()) + ", expected " + shape_string(shape));
      }
    }
    auto get = [&](const std::string& name) { return weights.at(name).to_f32(); };
    embed_ = get("embed.weight");
    pos_ = get("pos.weight");
    final_ln_w_ = get("final_ln.weight");
    final_ln_b_ = get("final_ln.bias");
    head_w_ = get("head.weight");
    head_b_ = get("head.bias");
    for (std::uint32_t i = 0; i < config_.n_layers; ++i) {
      const std::string p = "layer" + std::to_string(i) + ".";
      layers_.push_back({get(p + "ln1.weight"), get(p + "ln1.bias"), get(p + "ln2.weight"),
                         get(p + "ln2.bias"), get(p + "attn.q.weight"), get(p + "attn.q.bias"),
                         get(p + "attn.k.weight"), get(p + "attn.k.bias"), get(p + "attn.v.weight"),
                         get(p + "attn.v.bias"), get(p + "attn.o.weight"), get(p + "attn.o.bias"),
                         get(p + "mlp.fc1.weight"), get(p + "mlp.fc1.bias"),
                         get(p + "mlp.fc2.weight"), get(p + "mlp.fc2.bias")});
    }
  }

  const TinyLMConfig& config() const { return config_; }

  Logits forward(std::span<const Token> tokens) const {
    const std::size_t n = tokens.size();
    const std::size_t d = config_.d_model;
    if (n == 0) throw Error(ErrorKind::invalid_argument, "empty token sequence");
    if (n > config_.max_seq_len) {
      throw Error(ErrorKind::sequence_too_long,
                  std::to_string(n) + " tokens exceed max_seq_len " + std::to_string(config_.max_seq_len));
    }
    std::vector<float> x(n * d);
    for (std::size_t t = 0; t < n; ++t) {
      if (tokens[t] >= config_.vocab_size) throw Error(ErrorKind::invalid_argument, "token out of range");
      for (std::size_t j = 0; j < d; ++j) x[t * d + j] = embed_[tokens[t] * d + j] + pos_[t * d + j];
    }
    std::vector<float> h(n * d);
    for (const auto& layer : layers_) {
      layer_norm(x, layer.ln1_w, layer.ln1_b, h);
      const auto attended = attention(h, layer, n);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += attended[i];
      layer_norm(x, layer.ln2_w, layer.ln2_b, h);
      auto hidden = linear(h, n, d, layer.fc1_w, layer.fc1_b);
      for (auto& v : hidden) v = gelu(v);
      const auto mlp = linear(hidden, n, 4 * d, layer.fc2_w, layer.fc2_b);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += mlp[i];
    }
    layer_norm(x, final_ln_w_, final_ln_b_, h);
    Logits out;
    out.positions = n;
    out.vocab = config_.vocab_size;
    out.values = linear(h, n, d, head_w_, head_b_);
    return out;
  }

 private:
  struct Layer {
    std::vector<float> ln1_w, ln1_b, ln2_w, ln2_b;
    std::vector<float> q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b;
    std::vector<float> fc1_w, fc1_b, fc2_w, fc2_b;
  };

  static constexpr float kLayerNormEps = 1e-5f;

  static float gelu(float v) {
    return 0.5f * v * (1.0f + std::erf(v * 0.70710678118654752f));
  }

  void layer_norm(const std::vector<float>& in, const std::vector<float>& gain,
                  const std::vector<float>& shift, std::vector<float>& out) const {
    const std::size_t d = config_.d_model;
    for (std::size_t row = 0; row < in.size() / d; ++row) {
      const float* src = in.data() + row * d;
      float mean = 0.0f;
      for (std::size_t j = 0; j < d; ++j) mean += src[j];
      mean /= static_cast<float>(d);
      float var = 0.0f;
      for (std::size_t j = 0; j < d; ++j) var += (src[j] - mean) * (src[j] - mean);
      var /= static_cast<float>(d);
      const float inv = 1.0f / std::sqrt(var + kLayerNormEps);
      for (std::size_t j = 0; j < d; ++j) out[row * d + j] = (src[j] - mean) * inv * gain[j] + shift[j];
    }
  }

  // y[rows x cols] = x[rows x inner] * w[inner x cols] + b
  static std::vector<float> linear(const std::vector<float>& x, std::size_t rows, std::size_t inner,
                                   const std::vector<float>& w, const std::vector<float>& b) {
    const std::size_t cols = b.size();
    std::vector<float> y(rows * cols);
    for (std::size_t r = 0; r < rows; ++r) {
      float* out = y.data() + r * cols;
      std::copy(b.begin(), b.end(), out);
      for (std::size_t k = 0; k < inner; ++k) {
        const float xv = x[r * inner + k];
        const float* wr = w.data() + k * cols;
        for (std::size_t c = 0; c < cols; ++c) out[c] += xv * wr[c];
      }
    }
    return y;
  }

  std::vector<float> attention(const std::vector<float>& h, const Layer& layer, std::size_t n) const {
    const std::size_t d = config_.d_model;
    const std::size_t heads = config_.n_heads;
    const std::size_t hd = d / heads;
    const auto q = linear(h, n, d, layer.q_w, layer.q_b);
    const auto k = linear(h, n, d, layer.k_w, layer.k_b);
    const auto v = linear(h, n, d, layer.v_w, layer.v_b);
    const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
    std::vector<float> mixed(n * d, 0.0f);
    std::vector<float> weights(n);
    for (std::size_t head = 0; head < heads; ++head) {
      const std::size_t off = head * hd;
      for (std::size_t t = 0; t < n; ++t) {
        float max = -INFINITY;
        for (std::size_t s = 0; s <= t; ++s) {
          float dot = 0.0f;
          for (std::size_t j = 0; j < hd; ++j) dot += q[t * d + off + j] * k[s * d + off + j];
          weights[s] = dot * scale;
          max = std::max(max, weights[s]);
        }
        float total = 0.0f;
        for (std::size_t s = 0; s <= t; ++s) {
          weights[s] = std::exp(weights[s] - max);
          total += weights[s];
        }
        for (std::size_t s = 0; s <= t; ++s) {
          const float a = weights[s] / total;
          for (std::size_t j = 0; j < hd; ++j) mixed[t * d + off + j] += a * v[s * d + off + j];
        }
      }
    }
    return linear(mixed, n, d, layer.o_w, layer.o_b);
  }

  TinyLMConfig config_;
  std::vector<float> embed_, pos_, final_ln_w_, final_ln_b_, head_w_, head_b_;
  std::vector<Layer> layers_;
};

// ---------------------------------------------------------------------------
// Scoring and generation

struct ScoredCompletion {
  std::vector<double> token_logprobs;
  double mean_logprob = 0.0;
  std::size_t token_count = 0;

  static ScoredCompletion from_logprobs(std::vector<double> logprobs) {
    if (logprobs.empty()) throw Error(ErrorKind::malformed_response, "no completion tokens scored");
    ScoredCompletion out;
    out.token_count = logprobs.size();
    out.mean_logprob = std::accumulate(logprobs.begin(), logprobs.end(), 0.0) /
                       static_cast<double>(logprobs.size());
    out.token_logprobs = std::move(logprobs);
    return out;
  }
};

/// Log-probability of each completion token given everything before it;
/// prompt tokens are context only.
inline ScoredCompletion score_completion(const TinyLM& model, std::string_view prompt,
                                         std::string_view completion) {
  if (completion.empty()) throw Error(ErrorKind::empty_completion, "completion must be non-empty");
  std::vector<Token> tokens = tokenize(prompt);
  const std::size_t prompt_len = tokens.size();
  for (Token t : byte_tokens(completion)) tokens.push_back(t);
  if (tokens.size() > model.config().max_seq_len) {
    throw Error(ErrorKind::sequence_too_long,
                std::to_string(tokens.size()) + " tokens exceed max_seq_len " +
                    std::to_string(model.config().max_seq_len));
  }
  const Logits logits = model.forward(tokens);
  std::vector<double> logprobs;
  logprobs.reserve(tokens.size() - prompt_len);
  for (std::size_t p = prompt_len; p < tokens.size(); ++p) {
    logprobs.push_back(log_softmax(logits.row(p - 1))[tokens[p]]);
  }
  return ScoredCompletion::from_logprobs(std::move(logprobs));
}

/// Greedy decoding, ties to the lowest token id. Any special token (EOS,
/// BOS or PAD) ends the generation. The prompt plus all but the last new
/// token must fit in max_seq_len.
inline std::string generate(const TinyLM& model, std::string_view prompt, std::size_t max_new_tokens) {
  if (max_new_tokens == 0) throw Error(ErrorKind::invalid_argument, "max_new_tokens must be >= 1");
  std::vector<Token> tokens = tokenize(prompt);
  if (tokens.size() + max_new_tokens - 1 > model.config().max_seq_len) {
    throw Error(ErrorKind::sequence_too_long, "prompt plus max_new_tokens exceeds max_seq_len");
  }
  std::string out;
  for (std::size_t step = 0; step < max_new_tokens; ++step) {
    const Logits logits = model.forward(tokens);
    const auto row = logits.row(logits.positions - 1);
    const auto best = static_cast<Token>(std::max_element(row.begin(), row.end()) - row.begin());
    if (best >= 256) break;
    out.push_back(static_cast<char>(best));
    tokens.push_back(best);
  }
  return out;
}

/// Anything that can assign a mean log-probability to a completion.
class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual ScoredCompletion score(const std::string& prompt, const std::string& completion) const = 0;
};

class TinyScorer : public Scorer {
 public:
  explicit TinyScorer(const TensorMap& weights) : model_(weights) {}
  explicit TinyScorer(TinyLM model) : model_(std::move(model)) {}

  ScoredCompletion score(const std::string& prompt, const std::string& completion) const override {
    return score_completion(model_, prompt, completion);
  }

  const TinyLM& model() const { return model_; }

 private:
  TinyLM model_;
};

}  // namespace avforge
