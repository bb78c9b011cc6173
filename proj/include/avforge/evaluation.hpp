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

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avforge/dataset.hpp"
#include "avforge/error.hpp"
#include "avforge/levels.hpp"
#include "avforge/parallel.hpp"
#include "avforge/scorer.hpp"

namespace avforge {

enum class Dominance { exp, gen, avd, none };

constexpr std::string_view to_string(Dominance d) {
  switch (d) {
    case Dominance::exp: return "exp";
    case Dominance::gen: return "gen";
    case Dominance::avd: return "avd";
    case Dominance::none: return "none";
  }
  return "?";
}

constexpr Dominance dominance_of(Level level) {
  return level == Level::exp ? Dominance::exp : level == Level::gen ? Dominance::gen : Dominance::avd;
}

/// The level whose fraction is the unique strict maximum and exceeds 1/3.
inline Dominance dominant_level(const Fractions& fractions) {
  Level best = Level::exp;
  for (Level l : kLevels) {
    if (fractions[l] > fractions[best]) best = l;
  }
  for (Level l : kLevels) {
    if (l != best && fractions[l] == fractions[best]) return Dominance::none;
  }
  return fractions[best] > 1.0 / 3.0 ? dominance_of(best) : Dominance::none;
}

/// Highest mean log-prob wins; exact ties resolve exp > gen > avd.
inline Level winning_level(const Fractions& mean_logprobs) {
  Level best = Level::exp;
  for (Level l : kLevels) {
    if (mean_logprobs[l] > mean_logprobs[best]) best = l;
  }
  return best;
}

struct SampleResult {
  std::string sample_id;
  Level winner = Level::exp;
  Fractions mean_logprobs;  // per-level mean token log-prob, not fractions
};

struct EvalReport {
  std::string domain;
  std::size_t n_samples = 0;
  Fractions fractions;
  Dominance dominant = Dominance::none;
  // Corpus-level average of each level's per-sample mean log-prob.
  Fractions corpus_mean_logprobs;
  std::vector<SampleResult> per_sample;
};

/// Builds the report from already-scored samples.
inline EvalReport tally(std::string domain, std::vector<SampleResult> samples) {
  EvalReport report;
  report.domain = std::move(domain);
  report.n_samples = samples.size();
  if (samples.empty()) throw Error(ErrorKind::invalid_argument, "cannot tally an empty dataset");
  std::map<Level, std::size_t> wins;
  for (const auto& s : samples) {
    ++wins[s.winner];
    for (Level l : kLevels) report.corpus_mean_logprobs[l] += s.mean_logprobs[l];
  }
  const double n = static_cast<double>(samples.size());
  for (Level l : kLevels) {
    report.fractions[l] = static_cast<double>(wins[l]) / n;
    report.corpus_mean_logprobs[l] /= n;
  }
  report.dominant = dominant_level(report.fractions);
  report.per_sample = std::move(samples);
  return report;
}

/// Scores all three responses of every record and counts which level the
/// model prefers. Any scoring failure aborts the whole evaluation.
inline EvalReport preference_accuracy(const Scorer& scorer, const std::vector<PreferenceRecord>& dataset,
                                      std::string domain = {}, std::size_t workers = 1) {
  if (dataset.empty()) throw Error(ErrorKind::invalid_argument, "dataset is empty");
  if (domain.empty()) domain = dataset.front().domain;
  std::vector<SampleResult> samples(dataset.size());
  parallel_for(dataset.size(), workers, [&](std::size_t i) {
    const auto& record = dataset[i];
    SampleResult& s = samples[i];
    s.sample_id = record.id;
    for (Level l : kLevels) {
      try {
        s.mean_logprobs[l] = scorer.score(record.query, record.responses[l]).mean_logprob;
      } catch (const std::exception& e) {
        throw Error(ErrorKind::scorer_failed, "sample " + record.id + ": " + e.what());
      }
    }
    s.winner = winning_level(s.mean_logprobs);
  });
  return tally(std::move(domain), std::move(samples));
}

inline nlohmann::ordered_json to_json(const Fractions& f) {
  return {{"exp", f.exp}, {"gen", f.gen}, {"avd", f.avd}};
}

inline Fractions fractions_from_json(const nlohmann::json& j) {
  return {j.at("exp").get<double>(), j.at("gen").get<double>(), j.at("avd").get<double>()};
}

inline nlohmann::ordered_json to_json(const EvalReport& r, bool include_samples = true) {
  nlohmann::ordered_json out;
  out["domain"] = r.domain;
  out["n_samples"] = r.n_samples;
  out["fractions"] = to_json(r.fractions);
  out["dominant"] = std::string(to_string(r.dominant));
  out["corpus_mean_logprobs"] = to_json(r.corpus_mean_logprobs);
  if (include_samples) {
    out["per_sample"] = nlohmann::ordered_json::array();
    for (const auto& s : r.per_sample) {
      out["per_sample"].push_back({{"sample_id", s.sample_id},
                                   {"winner", std::string(to_string(s.winner))},
                                   {"mean_logprobs", to_json(s.mean_logprobs)}});
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inter-annotator agreement

/// Cohen's kappa between two annotators over the same items. When chance
/// agreement is 1 (both annotators used one identical label throughout) the
/// result is 1 by convention.
template <typename Label>
double cohen_kappa(const std::vector<Label>& a, const std::vector<Label>& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::invalid_argument, "label lists differ in length");
  if (a.empty()) throw Error(ErrorKind::invalid_argument, "label lists are empty");
  std::map<Label, std::size_t> count_a;
  std::map<Label, std::size_t> count_b;
  std::size_t agree = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ++count_a[a[i]];
    ++count_b[b[i]];
    agree += a[i] == b[i];
  }
  const double n = static_cast<double>(a.size());
  const double observed = static_cast<double>(agree) / n;
  // Products are summed as integers so that kappa(a, b) == kappa(b, a)
  // holds exactly.
  std::uint64_t chance_pairs = 0;
  for (const auto& [label, na] : count_a) {
    auto it = count_b.find(label);
    if (it != count_b.end()) chance_pairs += static_cast<std::uint64_t>(na) * it->second;
  }
  const double expected = static_cast<double>(chance_pairs) / (n * n);
  if (expected == 1.0) return 1.0;
  return (observed - expected) / (1.0 - expected);
}

// ---------------------------------------------------------------------------
// Judge-annotated generation accuracy

/// Classifies a generated response into one of the offered labels.
class Judge {
 public:
  virtual ~Judge() = default;
  virtual std::string judge(const std::string& query, const std::string& response,
                            const std::vector<std::string>& labels) = 0;
};

struct JudgedSample {
  std::string sample_id;
  std::optional<Level> label;
  std::string raw_label;
  std::string error;
};

struct JudgeReport {
  std::size_t n = 0;  // successfully judged samples
  std::size_t errors = 0;
  Fractions fractions;
  std::vector<JudgedSample> samples;
};

/// Generates a response per query, asks the judge for its level and tallies
/// the labels. Failed or unparseable judgements are counted as errors and
/// left out of the fractions.
inline JudgeReport judge_accuracy(Judge& judge, const std::function<std::string(const std::string&)>& respond,
                                  const std::vector<PreferenceRecord>& dataset) {
  const std::vector<std::string> labels{"expert", "generic", "avoidance"};
  JudgeReport report;
  std::map<Level, std::size_t> counts;
  for (const auto& record : dataset) {
    JudgedSample s{record.id, std::nullopt, {}, {}};
    try {
      const std::string response = respond(record.query);
      s.raw_label = judge.judge(record.query, response, labels);
      for (Level l : kLevels) {
        if (s.raw_label == long_name(l)) s.label = l;
      }
      if (!s.label) s.error = "unknown label '" + s.raw_label + "'";
    } catch (const std::exception& e) {
      s.error = e.what();
    }
    if (s.label) {
      ++counts[*s.label];
      ++report.n;
    } else {
      ++report.errors;
    }
    report.samples.push_back(std::move(s));
  }
  if (report.n > 0) {
    for (Level l : kLevels) report.fractions[l] = static_cast<double>(counts[l]) / static_cast<double>(report.n);
  }
  return report;
}

inline JudgeReport judge_accuracy(Judge& judge, const TinyLM& model, const std::vector<PreferenceRecord>& dataset,
                                  std::size_t max_new_tokens) {
  return judge_accuracy(
      judge, [&](const std::string& query) { return generate(model, query, max_new_tokens); }, dataset);
}

inline nlohmann::ordered_json to_json(const JudgeReport& r) {
  nlohmann::ordered_json out;
  out["n"] = r.n;
  out["errors"] = r.errors;
  out["fractions"] = {{"expert", r.fractions.exp}, {"generic", r.fractions.gen}, {"avoidance", r.fractions.avd}};
  out["samples"] = nlohmann::ordered_json::array();
  for (const auto& s : r.samples) {
    nlohmann::ordered_json j{{"sample_id", s.sample_id}, {"label", s.raw_label}};
    if (!s.error.empty()) j["error"] = s.error;
    out["samples"].push_back(std::move(j));
  }
  return out;
}

}  // namespace avforge
