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

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avforge/error.hpp"
#include "avforge/log.hpp"
#include "avforge/parallel.hpp"
#include "avforge/tensor_store.hpp"

namespace avforge {

/// Raised when two checkpoints cannot be combined element-wise.
class IncompatibleError : public Error {
 public:
  explicit IncompatibleError(CompatReport report)
      : Error(ErrorKind::incompatible, describe(report)), report_(std::move(report)) {}

  const CompatReport& report() const { return report_; }

 private:
  static std::string describe(const CompatReport& report) {
    std::string s = std::to_string(report.mismatches.size()) + " mismatch(es)";
    if (!report.mismatches.empty()) {
      const auto& m = report.mismatches.front();
      s += ", first: " + m.tensor + " (" + std::string(to_string(m.kind)) + ")";
    }
    return s;
  }

  CompatReport report_;
};

struct Provenance {
  std::string base_digest;
  std::string aligned_digest;
  std::string domain;
  std::string created_at;
};

/// Parameter-wise difference between an aligned checkpoint and its base.
struct AlignmentVector {
  TensorMap delta;
  Provenance provenance;
};

namespace metadata_keys {
inline constexpr const char* domain = "av.domain";
inline constexpr const char* base_digest = "av.base_digest";
inline constexpr const char* aligned_digest = "av.aligned_digest";
inline constexpr const char* created_at = "av.created_at";
}  // namespace metadata_keys

/// Checkpoint form of an AV: the delta tensors plus av.* metadata.
inline TensorMap to_checkpoint(const AlignmentVector& av) {
  TensorMap out = av.delta;
  out.metadata()[metadata_keys::domain] = av.provenance.domain;
  out.metadata()[metadata_keys::base_digest] = av.provenance.base_digest;
  out.metadata()[metadata_keys::aligned_digest] = av.provenance.aligned_digest;
  out.metadata()[metadata_keys::created_at] = av.provenance.created_at;
  return out;
}

inline AlignmentVector from_checkpoint(TensorMap map) {
  AlignmentVector av;
  auto take = [&](const char* key) {
    auto it = map.metadata().find(key);
    if (it == map.metadata().end()) return std::string();
    std::string value = it->second;
    map.metadata().erase(it);
    return value;
  };
  av.provenance.domain = take(metadata_keys::domain);
  av.provenance.base_digest = take(metadata_keys::base_digest);
  av.provenance.aligned_digest = take(metadata_keys::aligned_digest);
  av.provenance.created_at = take(metadata_keys::created_at);
  av.delta = std::move(map);
  return av;
}

inline void save_alignment_vector(const AlignmentVector& av, const std::filesystem::path& path) {
  save_checkpoint(to_checkpoint(av), path, DTypePolicy::keep);
}

inline AlignmentVector load_alignment_vector(const std::filesystem::path& path) {
  return from_checkpoint(load_checkpoint(path));
}

namespace detail {

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void require_compatible(const TensorMap& a, const TensorMap& b) {
  CompatReport report = validate_compat(a, b);
  if (!report.compatible) throw IncompatibleError(std::move(report));
}

struct WeightedDelta {
  const TensorMap* delta;
  float coefficient;
};

// base + sum_k c_k * delta_k for one tensor, accumulated in f32 in term
// order. Zero-coefficient terms are skipped so that they cannot flip the
// sign of a negative zero.
inline Tensor merge_one(const std::string& name, const Tensor& base,
                        std::span<const WeightedDelta> terms, DType out_dtype,
                        std::size_t& clamped) {
  std::vector<float> acc = base.to_f32();
  std::vector<float> delta(acc.size());
  for (const auto& term : terms) {
    if (term.coefficient == 0.0f) continue;
    const Tensor& d = term.delta->at(name);
    decode_to_f32(d.dtype(), d.bytes(), delta);
    const float c = term.coefficient;
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += c * delta[i];
  }
  return Tensor::from_f32(base.shape(), acc, out_dtype, &clamped);
}

inline void warn_clamped(std::size_t clamped, std::string_view what) {
  if (clamped > 0) {
    logger().warn("{}: {} element(s) clamped to the target dtype's finite range", what, clamped);
  }
}

}  // namespace detail

/// delta = f32(aligned) - f32(base), stored in each tensor's source dtype.
inline AlignmentVector extract_av(const TensorMap& aligned, const TensorMap& base,
                                  std::string domain) {
  detail::require_compatible(aligned, base);
  AlignmentVector av;
  std::size_t clamped = 0;
  for (const auto& [name, b] : base) {
    const auto a_values = aligned.at(name).to_f32();
    auto values = b.to_f32();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = a_values[i] - values[i];
    av.delta.insert(name, Tensor::from_f32(b.shape(), values, b.dtype(), &clamped));
  }
  detail::warn_clamped(clamped, "extract");
  av.provenance = {content_digest(base), content_digest(aligned), std::move(domain),
                   detail::utc_timestamp()};
  return av;
}

struct MergeTerm {
  AlignmentVector vector;
  double coefficient = 0.0;
};

struct MergeSpec {
  TensorMap base;
  std::vector<MergeTerm> terms;
  DTypePolicy output_dtype_policy = DTypePolicy::keep;
};

inline void validate_merge_spec(const MergeSpec& spec) {
  if (spec.terms.empty()) throw Error(ErrorKind::invalid_argument, "merge needs at least one term");
  for (const auto& term : spec.terms) {
    if (!std::isfinite(term.coefficient)) {
      throw Error(ErrorKind::invalid_argument, "coefficient must be finite");
    }
    if (std::abs(term.coefficient) > 2.0) {
      logger().warn("coefficient {} for domain '{}' is outside [-2, 2]", term.coefficient,
                    term.vector.provenance.domain);
    }
    detail::require_compatible(spec.base, term.vector.delta);
  }
}

/// base + sum of coefficient * delta over all terms. Tensors are merged
/// independently on up to `workers` threads; the result does not depend on
/// scheduling.
inline TensorMap apply_multi(const MergeSpec& spec, std::size_t workers = 1) {
  validate_merge_spec(spec);
  std::vector<detail::WeightedDelta> terms;
  for (const auto& t : spec.terms) {
    terms.push_back({&t.vector.delta, static_cast<float>(t.coefficient)});
  }
  std::vector<const std::pair<const std::string, Tensor>*> items;
  for (const auto& item : spec.base) items.push_back(&item);
  std::vector<Tensor> merged(items.size());
  std::vector<std::size_t> clamped(items.size(), 0);
  parallel_for(items.size(), workers, [&](std::size_t i) {
    const auto& [name, base] = *items[i];
    const DType out = spec.output_dtype_policy == DTypePolicy::force_f32 ? DType::f32 : base.dtype();
    merged[i] = detail::merge_one(name, base, terms, out, clamped[i]);
  });
  TensorMap result;
  result.metadata() = spec.base.metadata();
  for (std::size_t i = 0; i < items.size(); ++i) result.insert(items[i]->first, std::move(merged[i]));
  detail::warn_clamped(std::accumulate(clamped.begin(), clamped.end(), std::size_t{0}), "merge");
  return result;
}

inline TensorMap apply_av(const TensorMap& base, const AlignmentVector& av, double lambda,
                          DTypePolicy policy = DTypePolicy::keep) {
  MergeSpec spec{base, {{av, lambda}}, policy};
  return apply_multi(spec);
}

/// Same arithmetic as apply_multi, but each output tensor is written to
/// `path` as soon as it is computed. With memory-mapped inputs the resident
/// set stays near `workers` x largest tensor x (1 + terms).
inline void apply_multi_to_file(const MergeSpec& spec, const std::filesystem::path& path,
                                std::size_t workers = 1) {
  validate_merge_spec(spec);
  std::vector<detail::WeightedDelta> terms;
  for (const auto& t : spec.terms) {
    terms.push_back({&t.vector.delta, static_cast<float>(t.coefficient)});
  }
  const bool widen = spec.output_dtype_policy == DTypePolicy::force_f32;
  std::vector<const std::pair<const std::string, Tensor>*> items;
  std::vector<TensorLayout> layout;
  for (const auto& item : spec.base) {
    items.push_back(&item);
    layout.push_back({item.first, widen ? DType::f32 : item.second.dtype(), item.second.shape()});
  }
  CheckpointWriter writer(path, std::move(layout), spec.base.metadata());
  workers = std::max<std::size_t>(workers, 1);
  std::size_t total_clamped = 0;
  for (std::size_t start = 0; start < items.size(); start += workers) {
    const std::size_t batch = std::min(workers, items.size() - start);
    std::vector<Tensor> merged(batch);
    std::vector<std::size_t> clamped(batch, 0);
    parallel_for(batch, workers, [&](std::size_t j) {
      const auto& [name, base] = *items[start + j];
      merged[j] = detail::merge_one(name, base, terms, widen ? DType::f32 : base.dtype(), clamped[j]);
    });
    for (std::size_t j = 0; j < batch; ++j) {
      writer.write(items[start + j]->first, merged[j].bytes());
      total_clamped += clamped[j];
    }
  }
  writer.finish();
  detail::warn_clamped(total_clamped, "merge");
}

// ---------------------------------------------------------------------------
// Recipe files

struct RecipeTerm {
  std::filesystem::path vector;
  double coefficient = 0.0;
};

struct Recipe {
  std::filesystem::path base;
  std::vector<RecipeTerm> terms;
  std::filesystem::path output;
  DTypePolicy dtype_policy = DTypePolicy::keep;
};

/// Relative paths inside a recipe resolve against the recipe's directory.
inline Recipe parse_recipe(const nlohmann::json& doc, const std::filesystem::path& base_dir = {}) {
  auto fail = [](const std::string& what) { return Error(ErrorKind::recipe_parse, what); };
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  if (!doc.is_object()) throw fail("recipe must be a JSON object");
  for (const char* key : {"base", "terms", "output"}) {
    if (!doc.contains(key)) throw fail(std::string("missing key \"") + key + "\"");
  }
  if (!doc["base"].is_string()) throw fail("\"base\" must be a string");
  if (!doc["output"].is_string()) throw fail("\"output\" must be a string");
  if (!doc["terms"].is_array() || doc["terms"].empty()) throw fail("\"terms\" must be a non-empty array");

  Recipe recipe;
  recipe.base = resolve(doc["base"].get<std::string>());
  recipe.output = resolve(doc["output"].get<std::string>());
  for (const auto& term : doc["terms"]) {
    if (!term.is_object() || !term.contains("vector") || !term["vector"].is_string() ||
        !term.contains("coefficient") || !term["coefficient"].is_number()) {
      throw fail("each term needs a string \"vector\" and a numeric \"coefficient\"");
    }
    recipe.terms.push_back({resolve(term["vector"].get<std::string>()), term["coefficient"].get<double>()});
  }
  if (doc.contains("dtype_policy")) {
    if (!doc["dtype_policy"].is_string()) throw fail("\"dtype_policy\" must be a string");
    const auto policy = doc["dtype_policy"].get<std::string>();
    if (policy != "keep" && policy != "force-f32") throw fail("unknown dtype_policy " + policy);
    recipe.dtype_policy = parse_dtype_policy(policy);
  }
  return recipe;
}

inline Recipe load_recipe(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot read recipe " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::recipe_parse, e.what());
  }
  return parse_recipe(doc, path.parent_path());
}

/// Executes a recipe with streamed output and returns the output's digest.
inline std::string run_recipe(const Recipe& recipe, std::size_t workers = 1) {
  MergeSpec spec;
  spec.base = load_checkpoint(recipe.base);
  spec.output_dtype_policy = recipe.dtype_policy;
  for (const auto& term : recipe.terms) {
    spec.terms.push_back({load_alignment_vector(term.vector), term.coefficient});
  }
  apply_multi_to_file(spec, recipe.output, workers);
  return content_digest(load_checkpoint(recipe.output));
}

}  // namespace avforge
