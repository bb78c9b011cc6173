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

#include <algorithm>
#include <map>
#include <random>

#include <gtest/gtest.h>

#include "avforge/evaluation.hpp"

using namespace avforge;

namespace {

// Looks up fixed mean log-probs by completion text.
class TableScorer : public Scorer {
 public:
  explicit TableScorer(std::map<std::string, double> table) : table_(std::move(table)) {}

  ScoredCompletion score(const std::string&, const std::string& completion) const override {
    auto it = table_.find(completion);
    if (it == table_.end()) throw Error(ErrorKind::remote_failed, "no entry for " + completion);
    return ScoredCompletion::from_logprobs({it->second});
  }

 private:
  std::map<std::string, double> table_;
};

PreferenceRecord record(const std::string& id) {
  PreferenceRecord r;
  r.id = id;
  r.domain = "medical";
  r.query = "q" + id;
  r.responses = {id + "/exp", id + "/gen", id + "/avd"};
  return r;
}

// Ten samples. Winners by hand: s0-s4 exp, s5-s7 gen, s8-s9 avd, where s4
// is an exact three-way tie (exp by rule) and s7 ties gen with avd.
struct WinnerTable {
  std::vector<PreferenceRecord> records;
  std::map<std::string, double> scores;
};

WinnerTable winner_table() {
  const double rows[10][3] = {
      {-1.0, -2.0, -3.0}, {-0.5, -0.9, -0.7}, {-2.0, -4.0, -2.5}, {-1.1, -1.2, -1.3}, {-3.0, -3.0, -3.0},
      {-2.0, -1.0, -3.0}, {-5.0, -0.1, -0.2}, {-9.0, -4.0, -4.0}, {-3.0, -2.0, -1.0}, {-0.3, -0.2, -0.1},
  };
  WinnerTable t;
  for (int i = 0; i < 10; ++i) {
    const std::string id = "s" + std::to_string(i);
    t.records.push_back(record(id));
    t.scores[id + "/exp"] = rows[i][0];
    t.scores[id + "/gen"] = rows[i][1];
    t.scores[id + "/avd"] = rows[i][2];
  }
  return t;
}

}  // namespace

TEST(PreferenceAccuracy, MatchesHandCountedWinnerTable) {
  const auto t = winner_table();
  const EvalReport r = preference_accuracy(TableScorer(t.scores), t.records);
  EXPECT_EQ(r.n_samples, 10u);
  EXPECT_EQ(r.fractions, (Fractions{0.5, 0.3, 0.2}));
  EXPECT_EQ(r.dominant, Dominance::exp);
  const std::vector<Level> winners{Level::exp, Level::exp, Level::exp, Level::exp, Level::exp,
                                   Level::gen, Level::gen, Level::gen, Level::avd, Level::avd};
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(r.per_sample[i].winner, winners[i]) << i;
  EXPECT_EQ(r.per_sample[4].mean_logprobs, (Fractions{-3.0, -3.0, -3.0}));
  EXPECT_EQ(r.domain, "medical");
}

TEST(PreferenceAccuracy, ConstantWinner) {
  std::vector<PreferenceRecord> records;
  std::map<std::string, double> scores;
  for (int i = 0; i < 10; ++i) {
    records.push_back(record("r" + std::to_string(i)));
    scores["r" + std::to_string(i) + "/exp"] = -1;
    scores["r" + std::to_string(i) + "/gen"] = -2;
    scores["r" + std::to_string(i) + "/avd"] = -3;
  }
  EXPECT_EQ(preference_accuracy(TableScorer(scores), records).fractions, (Fractions{1.0, 0.0, 0.0}));
}

TEST(PreferenceAccuracy, ScorerFailureNamesTheSample) {
  auto t = winner_table();
  t.scores.erase("s6/gen");
  try {
    preference_accuracy(TableScorer(t.scores), t.records, "", 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::scorer_failed);
    EXPECT_NE(std::string(e.what()).find("sample s6"), std::string::npos) << e.what();
  }
  EXPECT_THROW(preference_accuracy(TableScorer(t.scores), {}), Error);
}

TEST(PreferenceAccuracy, InvariantUnderPermutationAndShift) {
  auto t = winner_table();
  const Fractions reference = preference_accuracy(TableScorer(t.scores), t.records).fractions;
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    std::shuffle(t.records.begin(), t.records.end(), rng);
    const EvalReport r = preference_accuracy(TableScorer(t.scores), t.records, "", 1 + trial % 3);
    EXPECT_EQ(r.fractions, reference);
    EXPECT_EQ(r.dominant, dominant_level(reference));
  }
  // Adding one constant to a sample's three scores keeps its winner.
  auto shifted = t.scores;
  for (const auto& rec : t.records) {
    const double c = rec.id == "s3" ? 7.25 : -0.5;
    for (const char* lvl : {"/exp", "/gen", "/avd"}) shifted[rec.id + lvl] += c;
  }
  EXPECT_EQ(preference_accuracy(TableScorer(shifted), t.records).fractions, reference);
}

TEST(PreferenceAccuracy, FractionsSumToOne) {
  const auto t = winner_table();
  const auto r = preference_accuracy(TableScorer(t.scores), t.records);
  EXPECT_NEAR(r.fractions.exp + r.fractions.gen + r.fractions.avd, 1.0, 1e-9);
}

TEST(DominantLevel, Rule) {
  EXPECT_EQ(dominant_level({0.12, 0.42, 0.46}), Dominance::avd);
  EXPECT_EQ(dominant_level({1.0 / 3, 1.0 / 3, 1.0 / 3}), Dominance::none);
  EXPECT_EQ(dominant_level({0.34, 0.33, 0.33}), Dominance::exp);
  EXPECT_EQ(dominant_level({0.4, 0.4, 0.2}), Dominance::none);
  EXPECT_EQ(dominant_level({0.0, 0.5, 0.5}), Dominance::none);
  EXPECT_EQ(dominant_level({0.0, 1.0, 0.0}), Dominance::gen);
}

TEST(WinningLevel, TieBreakOrder) {
  EXPECT_EQ(winning_level({-1, -1, -1}), Level::exp);
  EXPECT_EQ(winning_level({-2, -1, -1}), Level::gen);
  EXPECT_EQ(winning_level({-2, -3, -1}), Level::avd);
}

TEST(CohenKappa, WorkedExample) {
  const std::vector<char> a{'E', 'E', 'G', 'A'};
  const std::vector<char> b{'E', 'G', 'G', 'A'};
  // p_o = 3/4, p_e = (2*1 + 1*2 + 1*1) / 16 = 5/16, kappa = (12/16 - 5/16) / (11/16)
  EXPECT_NEAR(cohen_kappa(a, b), 7.0 / 11.0, 1e-12);
}

TEST(CohenKappa, PerfectAgreementAndDegenerateCase) {
  const std::vector<std::string> a{"exp", "gen", "avd", "gen"};
  EXPECT_EQ(cohen_kappa(a, a), 1.0);
  const std::vector<int> single(5, 2);
  EXPECT_EQ(cohen_kappa(single, single), 1.0);
  EXPECT_THROW(cohen_kappa(std::vector<int>{1}, std::vector<int>{1, 2}), Error);
  EXPECT_THROW(cohen_kappa(std::vector<int>{}, std::vector<int>{}), Error);
}

TEST(CohenKappa, IndependentLabelsAreNearZero) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> label(0, 2);
  std::vector<int> a(10000);
  std::vector<int> b(10000);
  for (auto& x : a) x = label(rng);
  for (auto& x : b) x = label(rng);
  EXPECT_LT(std::abs(cohen_kappa(a, b)), 0.1);
}

TEST(CohenKappa, IsExactlySymmetric) {
  std::mt19937_64 rng(9);
  std::uniform_int_distribution<int> label(0, 3);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> a(1 + trial * 7);
    std::vector<int> b(a.size());
    for (auto& x : a) x = label(rng);
    for (auto& x : b) x = label(rng);
    ASSERT_EQ(cohen_kappa(a, b), cohen_kappa(b, a));
  }
}

namespace {

class ScriptedJudge : public Judge {
 public:
  explicit ScriptedJudge(std::function<std::string(const std::string&)> reply) : reply_(std::move(reply)) {}
  std::string judge(const std::string&, const std::string& response, const std::vector<std::string>& labels) override {
    EXPECT_EQ(labels, (std::vector<std::string>{"expert", "generic", "avoidance"}));
    return reply_(response);
  }

 private:
  std::function<std::string(const std::string&)> reply_;
};

std::vector<PreferenceRecord> records(int n) {
  std::vector<PreferenceRecord> out;
  for (int i = 0; i < n; ++i) out.push_back(record("j" + std::to_string(i)));
  return out;
}

}  // namespace

TEST(JudgeAccuracy, ConstantJudge) {
  ScriptedJudge judge([](const std::string&) { return "expert"; });
  const auto r = judge_accuracy(judge, [](const std::string& q) { return "answer to " + q; }, records(20));
  EXPECT_EQ(r.n, 20u);
  EXPECT_EQ(r.errors, 0u);
  EXPECT_EQ(r.fractions, (Fractions{1.0, 0.0, 0.0}));
}

TEST(JudgeAccuracy, UnknownLabelsAndFailuresAreExcluded) {
  int call = 0;
  ScriptedJudge judge([&](const std::string&) -> std::string {
    switch (call++ % 4) {
      case 0: return "generic";
      case 1: return "meh";
      case 2: throw Error(ErrorKind::remote_failed, "down");
      default: return "avoidance";
    }
  });
  const auto r = judge_accuracy(judge, [](const std::string& q) { return q; }, records(8));
  EXPECT_EQ(r.n, 4u);
  EXPECT_EQ(r.errors, 4u);
  EXPECT_EQ(r.fractions, (Fractions{0.0, 0.5, 0.5}));
  EXPECT_EQ(r.samples[1].raw_label, "meh");
  EXPECT_FALSE(r.samples[1].label.has_value());
  EXPECT_NE(r.samples[2].error.find("down"), std::string::npos);
}

TEST(JudgeAccuracy, UsesGreedyGenerationFromTinyModel) {
  std::vector<float> bias(kVocabSize, 0.0f);
  bias['y'] = 4.0f;
  const TinyLM model(bias_only_tinylm(TinyLMConfig{kVocabSize, 8, 1, 2, 32}, bias));
  std::vector<std::string> seen;
  ScriptedJudge judge([&](const std::string& response) {
    seen.push_back(response);
    return "generic";
  });
  const auto r = judge_accuracy(judge, model, records(3), 4);
  EXPECT_EQ(seen, std::vector<std::string>(3, "yyyy"));
  EXPECT_EQ(r.fractions, (Fractions{0.0, 1.0, 0.0}));
}

TEST(EvalReportJson, StableKeyOrder) {
  const auto t = winner_table();
  const auto j = to_json(preference_accuracy(TableScorer(t.scores), t.records));
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"domain", "n_samples", "fractions", "dominant", "corpus_mean_logprobs",
                                            "per_sample"}));
  EXPECT_EQ(j["dominant"], "exp");
  EXPECT_EQ(fractions_from_json(j["fractions"]), (Fractions{0.5, 0.3, 0.2}));
}
