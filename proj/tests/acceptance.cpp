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

// Acceptance suite. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "avforge/dataset.hpp"
#include "avforge/editing.hpp"
#include "avforge/evaluation.hpp"
#include "avforge/fixtures.hpp"
#include "avforge/search.hpp"
#include "support.hpp"

using namespace avforge;

namespace {

using Clock = std::chrono::steady_clock;

struct Check {
  bool ok = true;
  std::ostringstream why;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) why << what;
    ok = ok && cond;
  }
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

float max_abs_diff(const TensorMap& a, const TensorMap& b) {
  float worst = 0.0f;
  for (const auto& [name, t] : a) {
    const auto x = t.to_f32();
    const auto y = b.at(name).to_f32();
    for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(x[i] - y[i]));
  }
  return worst;
}

// Random f32 map with values on a 1/256 lattice, so sums stay exact.
TensorMap lattice_map(std::mt19937_64& rng, int range) {
  std::uniform_int_distribution<int> step(-range, range);
  TensorMap m;
  const std::vector<Shape> shapes{{4, 8}, {16}, {}, {2, 3, 2}};
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    std::vector<float> v(element_count(shapes[i]));
    for (auto& x : v) x = static_cast<float>(step(rng)) / 256.0f;
    m.insert("layer" + std::to_string(i), Tensor::from_f32(shapes[i], v));
  }
  return m;
}

TensorMap add_maps(const TensorMap& a, const TensorMap& b) {
  TensorMap out;
  for (const auto& [name, t] : a) {
    auto x = t.to_f32();
    const auto y = b.at(name).to_f32();
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
    out.insert(name, Tensor::from_f32(t.shape(), x, t.dtype()));
  }
  return out;
}

std::pair<TensorMap, TensorMap> random_pair(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> value(0.0f, 1.0f);
  TensorMap base;
  TensorMap aligned;
  const std::vector<Shape> shapes{{3, 4}, {5}, {}, {0, 2}};
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    std::vector<float> b(element_count(shapes[i]));
    std::vector<float> a(b.size());
    for (auto& v : b) v = value(rng);
    for (std::size_t k = 0; k < a.size(); ++k) a[k] = b[k] + 0.1f * value(rng);
    base.insert("t" + std::to_string(i), Tensor::from_f32(shapes[i], b));
    aligned.insert("t" + std::to_string(i), Tensor::from_f32(shapes[i], a));
  }
  return {base, aligned};
}

const fixtures::DeskFixture& desk() {
  static const fixtures::DeskFixture fx = fixtures::build_desk_fixture();
  return fx;
}

AlignmentVector desk_vector(std::size_t d) {
  return extract_av(desk().domains[d].aligned, desk().base, desk().domains[d].name);
}

// Mean log-prob of the expert completions of a domain's records.
double expert_mean(const TensorMap& weights, const std::vector<PreferenceRecord>& records) {
  const TinyLM model(weights);
  double total = 0.0;
  for (const auto& r : records) total += score_completion(model, r.query, r.responses.expert).mean_logprob;
  return total / static_cast<double>(records.size());
}

Check av_recovery() {
  Check c;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(11);
  const TensorMap base = lattice_map(rng, 512);
  const TensorMap delta = lattice_map(rng, 64);
  const TensorMap aligned = add_maps(base, delta);
  const AlignmentVector av = extract_av(aligned, base, "medical");
  c.expect(av.delta == delta, "extracted delta differs from the constructed one");
  const double s = seconds_since(t0);
  c.expect(s < 1.0, "took " + std::to_string(s) + " s");
  return c;
}

Check merge_identities() {
  Check c;
  const auto t0 = Clock::now();
  const auto [base, aligned] = random_pair(5);
  const AlignmentVector v = extract_av(aligned, base, "legal");
  c.expect(apply_av(base, v, 0.0) == base, "lambda 0 is not the identity; ");
  c.expect(max_abs_diff(apply_av(base, v, 1.0), aligned) <= 1e-6f, "lambda 1 does not recover aligned; ");
  for (double lambda : {-1.0, -0.3, 0.7}) {
    c.expect(apply_multi({base, {{v, lambda}}, DTypePolicy::keep}) == apply_av(base, v, lambda),
             "single-term multi differs at lambda " + std::to_string(lambda) + "; ");
  }
  const double s = seconds_since(t0);
  c.expect(s < 1.0, "took " + std::to_string(s) + " s");
  return c;
}

Check additivity_permutation() {
  Check c;
  for (std::uint64_t seed = 0; seed < 100 && c.ok; ++seed) {
    std::mt19937_64 rng(seed + 1000);
    std::uniform_real_distribution<double> coef(-2.0, 2.0);
    const auto [base, a1] = random_pair(seed);
    const auto a2 = random_pair(seed + 500).second;
    const auto a3 = random_pair(seed + 900).second;
    const auto v1 = extract_av(a1, base, "a");
    const auto v2 = extract_av(a2, base, "b");
    const auto v3 = extract_av(a3, base, "c");
    const double l1 = coef(rng);
    const double l2 = coef(rng);
    const double l3 = coef(rng);
    c.expect(max_abs_diff(apply_av(apply_av(base, v1, l1), v1, l2), apply_av(base, v1, l1 + l2)) <= 1e-5f,
             "additivity broken at seed " + std::to_string(seed));
    const auto forward = apply_multi({base, {{v1, l1}, {v2, l2}, {v3, l3}}, DTypePolicy::keep});
    const auto shuffled = apply_multi({base, {{v3, l3}, {v1, l1}, {v2, l2}}, DTypePolicy::keep});
    c.expect(max_abs_diff(forward, shuffled) <= 1e-6f, "permutation broken at seed " + std::to_string(seed));
  }
  return c;
}

Check monotone_knob() {
  Check c;
  const auto t0 = Clock::now();
  const auto& domain = desk().domains[0];
  const auto report = sweep_lambda(desk().base, desk_vector(0), default_axis(), domain.records, tiny_score_factory());
  c.expect(report.rows.size() == 21, "expected 21 sweep points; ");
  for (std::size_t i = 1; i < report.rows.size(); ++i) {
    c.expect(report.rows[i].mean_logprobs.exp > report.rows[i - 1].mean_logprobs.exp,
             "expert log-prob not increasing at lambda " + std::to_string(report.rows[i].lambda) + "; ");
  }
  std::vector<Dominance> seen;
  for (const auto& row : report.rows) {
    if (seen.empty() || seen.back() != row.dominant) {
      c.expect(std::find(seen.begin(), seen.end(), row.dominant) == seen.end(),
               "dominance returned to an exited level; ");
      seen.push_back(row.dominant);
    }
  }
  const double s = seconds_since(t0);
  c.expect(s < 30.0, "took " + std::to_string(s) + " s");
  return c;
}

class TableScorer : public Scorer {
 public:
  explicit TableScorer(std::map<std::string, double> table) : table_(std::move(table)) {}
  ScoredCompletion score(const std::string&, const std::string& completion) const override {
    return ScoredCompletion::from_logprobs({table_.at(completion)});
  }

 private:
  std::map<std::string, double> table_;
};

Check metric_oracle() {
  Check c;
  const double rows[10][3] = {
      {-1.0, -2.0, -3.0}, {-0.5, -0.9, -0.7}, {-2.0, -4.0, -2.5}, {-1.1, -1.2, -1.3}, {-3.0, -3.0, -3.0},
      {-2.0, -1.0, -3.0}, {-5.0, -0.1, -0.2}, {-9.0, -4.0, -4.0}, {-3.0, -2.0, -1.0}, {-0.3, -0.2, -0.1},
  };
  const Level winners[10] = {Level::exp, Level::exp, Level::exp, Level::exp, Level::exp,
                             Level::gen, Level::gen, Level::gen, Level::avd, Level::avd};
  std::vector<PreferenceRecord> records;
  std::map<std::string, double> table;
  for (int i = 0; i < 10; ++i) {
    PreferenceRecord r;
    r.id = "s" + std::to_string(i);
    r.domain = "medical";
    r.query = "q";
    r.responses = {r.id + "/exp", r.id + "/gen", r.id + "/avd"};
    table[r.id + "/exp"] = rows[i][0];
    table[r.id + "/gen"] = rows[i][1];
    table[r.id + "/avd"] = rows[i][2];
    records.push_back(r);
  }
  const EvalReport report = preference_accuracy(TableScorer(table), records);
  c.expect(report.fractions == Fractions{0.5, 0.3, 0.2}, "fractions differ from the winner table; ");
  for (int i = 0; i < 10; ++i) c.expect(report.per_sample[i].winner == winners[i], "winner mismatch; ");

  std::vector<float> flat(kVocabSize, 0.0f);
  const TinyLM uniform(bias_only_tinylm(TinyLMConfig{kVocabSize, 8, 1, 2, 32}, flat));
  for (double lp : score_completion(uniform, "prompt", "completion").token_logprobs) {
    c.expect(std::abs(lp + std::log(259.0)) <= 1e-5, "zero model is not uniform");
  }
  return c;
}

Check dominance_rule() {
  Check c;
  c.expect(dominant_level({0.12, 0.42, 0.46}) == Dominance::avd, "medical column is not avd; ");
  c.expect(dominant_level({1.0 / 3, 1.0 / 3, 1.0 / 3}) == Dominance::none, "exact tie is not none; ");
  c.expect(dominant_level({0.34, 0.33, 0.33}) == Dominance::exp, "0.34 case has no winner");
  return c;
}

Check counting_claims() {
  Check c;
  const auto grid = CoefficientGrid::uniform(3);
  c.expect(plan_grid(grid).cell_count == 9261, "default grid is not 9261 cells; ");
  const CostReport r = estimate_cost({3, 3, 72, 60}, grid);
  c.expect(r.training_reduction == 9.0, "reduction is not 9; ");
  c.expect(r.joint_hours == 1944.0, "joint hours is not 1944; ");
  c.expect(std::abs(r.search_hours - 154.35) < 1e-9, "search hours is not 154.35; ");
  c.expect(r.speedup >= 12.0 && r.speedup < 13.0, "speedup outside [12, 13)");
  return c;
}

Check desk_search() {
  Check c;
  const auto t0 = Clock::now();
  const Level targets[3] = {Level::avd, Level::avd, Level::exp};
  std::vector<SearchDomain> domains;
  for (std::size_t d = 0; d < 3; ++d) {
    domains.push_back({desk().domains[d].name, desk_vector(d), desk().domains[d].records, targets[d]});
  }
  const SearchResult exhaustive =
      grid_search(desk().base, domains, CoefficientGrid::uniform(3, parse_axis("-1:1:0.5")), tiny_score_factory(),
                  {.workers = 4});
  c.expect(!exhaustive.satisfying.empty(), "no satisfying tuple on the 5x5x5 grid; ");

  const CoefficientGrid fine = CoefficientGrid::uniform(3, default_axis());
  const SearchResult h =
      grid_search(desk().base, domains, fine, tiny_score_factory(), {.mode = SearchMode::hierarchical, .workers = 4});
  c.expect(!h.satisfying.empty(), "hierarchical search found nothing; ");
  // Soundness: confirm every reported tuple by evaluating it on its own.
  for (const Cell& cell : h.satisfying) {
    const CoefficientGrid single{{{cell[0]}, {cell[1]}, {cell[2]}}};
    const SearchResult check = grid_search(desk().base, domains, single, tiny_score_factory());
    if (check.satisfying.size() != 1) {
      c.expect(false, "hierarchical tuple not confirmed; ");
      break;
    }
  }
  const double s = seconds_since(t0);
  c.expect(s < 300.0, "took " + std::to_string(s) + " s");
  return c;
}

Check kappa() {
  Check c;
  const std::vector<std::string> same{"exp", "gen", "avd", "gen"};
  c.expect(cohen_kappa(same, same) == 1.0, "perfect agreement is not 1; ");
  const std::vector<char> a{'E', 'E', 'G', 'A'};
  const std::vector<char> b{'E', 'G', 'G', 'A'};
  const double k = cohen_kappa(a, b);
  c.expect(std::abs(k - 0.5556) <= 1e-4, "worked example gives " + std::to_string(k) + ", expected 0.5556; ");
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> label(0, 2);
  std::vector<int> x(10000);
  std::vector<int> y(10000);
  for (auto& v : x) v = label(rng);
  for (auto& v : y) v = label(rng);
  c.expect(std::abs(cohen_kappa(x, y)) < 0.1, "independent labels give |kappa| >= 0.1");
  return c;
}

Check format_fidelity() {
  Check c;
  testing::TempDir dir;
  TensorMap map;
  map.metadata()["note"] = "fixture";
  map.insert("a.f32", Tensor::from_f32({2, 3}, std::vector<float>{1.5f, -2.0f, 0.0f, 3.25f, -0.0f, 1e-3f}));
  map.insert("b.f16", Tensor::from_f32({4}, std::vector<float>{0.5f, -65504.0f, 6e-8f, 1.0f}, DType::f16));
  map.insert("c.bf16", Tensor::from_f32({2, 2}, std::vector<float>{1e30f, -1.0f, 0.1f, 7.0f}, DType::bf16));
  map.insert("d.scalar", Tensor::from_f32({}, std::vector<float>{42.0f}));
  map.insert("e.empty", Tensor::from_f32({0, 5}, std::vector<float>{}, DType::f16));
  save_checkpoint(map, dir / "m.safetensors");
  const TensorMap back = load_checkpoint(dir / "m.safetensors");
  c.expect(back == map && back.metadata() == map.metadata(), "checkpoint round trip is not bit-exact; ");

  const SplitSizes s = split_sizes(100, {});
  c.expect(s.train == 78 && s.val == 2 && s.test == 20, "100 records do not split 78/2/20; ");
  std::vector<PreferenceRecord> records(100);
  for (std::size_t i = 0; i < records.size(); ++i) records[i].id = "r" + std::to_string(i);
  const DatasetSplit split = split_dataset(records, {});
  c.expect(split.train.size() == 78 && split.val.size() == 2 && split.test.size() == 20, "split parts differ; ");
  c.expect(split_sizes(13000, {}).test == 2600, "13000 records do not give 2600 test");
  return c;
}

Check transferability() {
  Check c;
  const TensorMap other = random_tinylm(desk().config, 99, 0.1f);
  const auto& domain = desk().domains[2];
  const AlignmentVector v = desk_vector(2);
  c.expect(validate_compat(other, desk().base).compatible, "second base is not compatible; ");
  const double before = expert_mean(other, domain.records);
  for (int step = 1; step <= 10; ++step) {
    const double lambda = step / 10.0;
    const double after = expert_mean(apply_av(other, v, lambda), domain.records);
    c.expect(after > before, "no upward shift at lambda " + std::to_string(lambda) + "; ");
  }
  return c;
}

}  // namespace

int main() {
  logger().set_level(spdlog::level::err);
  const std::vector<std::pair<std::string, std::function<Check()>>> criteria{
      {"1 alignment vector recovery", av_recovery},
      {"2 merge identities", merge_identities},
      {"3 additivity and permutation", additivity_permutation},
      {"4 monotone lambda knob", monotone_knob},
      {"5 metric oracle", metric_oracle},
      {"6 dominance rule", dominance_rule},
      {"7 counting claims", counting_claims},
      {"8 desk grid search", desk_search},
      {"9 kappa", kappa},
      {"10 format fidelity", format_fidelity},
      {"11 transferability", transferability},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    Check c;
    try {
      c = run();
    } catch (const std::exception& e) {
      c.ok = false;
      c.why << "threw: " << e.what();
    }
    if (c.ok) {
      std::printf("PASS %s\n", name.c_str());
    } else {
      ++failed;
      std::printf("FAIL %s: %s\n", name.c_str(), c.why.str().c_str());
    }
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
