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
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avforge/editing.hpp"
#include "avforge/evaluation.hpp"
#include "avforge/log.hpp"
#include "avforge/parallel.hpp"

namespace avforge {

// ---------------------------------------------------------------------------
// Coefficient grids

/// Values are snapped to 1e-9 so that 0.1-step grids hold the decimal values
/// users type (0.3, not 0.30000000000000004).
inline double snap(double v) {
  const double s = std::round(v * 1e9) / 1e9;
  return s == 0.0 ? 0.0 : s;
}

inline std::vector<double> linear_axis(double start, double stop, double step) {
  if (!std::isfinite(start) || !std::isfinite(stop) || !std::isfinite(step)) {
    throw Error(ErrorKind::invalid_argument, "grid bounds must be finite");
  }
  if (stop < start) throw Error(ErrorKind::invalid_argument, "grid stop is below start");
  if (step <= 0.0) throw Error(ErrorKind::invalid_argument, "grid step must be positive");
  std::vector<double> axis;
  for (std::size_t i = 0;; ++i) {
    const double v = start + static_cast<double>(i) * step;
    if (v > stop + 1e-9) break;
    axis.push_back(snap(v));
  }
  return axis;
}

/// Parses "start:stop:step".
inline std::vector<double> parse_axis(const std::string& text) {
  std::vector<double> parts;
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    const auto colon = text.find(':', pos);
    const std::string field = text.substr(pos, colon == std::string::npos ? std::string::npos : colon - pos);
    try {
      std::size_t used = 0;
      parts.push_back(std::stod(field, &used));
      if (used != field.size()) throw std::invalid_argument(field);
    } catch (const std::exception&) {
      throw Error(ErrorKind::invalid_argument, "grid must look like start:stop:step, got \"" + text + "\"");
    }
    if (colon == std::string::npos) {
      if (i != 2) throw Error(ErrorKind::invalid_argument, "grid must look like start:stop:step, got \"" + text + "\"");
      break;
    }
    if (i == 2) throw Error(ErrorKind::invalid_argument, "grid must look like start:stop:step, got \"" + text + "\"");
    pos = colon + 1;
  }
  return linear_axis(parts[0], parts[1], parts[2]);
}

/// -1.0 to +1.0 inclusive in steps of 0.1.
inline std::vector<double> default_axis() { return linear_axis(-1.0, 1.0, 0.1); }

struct CoefficientGrid {
  std::vector<std::vector<double>> axes;

  static CoefficientGrid uniform(std::size_t domains, const std::vector<double>& axis = default_axis()) {
    return {std::vector<std::vector<double>>(domains, axis)};
  }

  void validate() const {
    if (axes.empty()) throw Error(ErrorKind::invalid_argument, "grid needs at least one domain");
    for (const auto& axis : axes) {
      if (axis.empty()) throw Error(ErrorKind::invalid_argument, "grid axis is empty");
      for (std::size_t i = 0; i < axis.size(); ++i) {
        if (!std::isfinite(axis[i])) throw Error(ErrorKind::invalid_argument, "grid values must be finite");
        if (i > 0 && !(axis[i] > axis[i - 1])) {
          throw Error(ErrorKind::invalid_argument, "grid axis must be strictly increasing");
        }
      }
    }
  }
};

using Cell = std::vector<double>;

/// Cartesian enumeration of a grid. Cells are numbered in odometer order
/// with the last domain varying fastest.
struct SearchPlan {
  std::vector<std::size_t> sizes;
  std::uint64_t cell_count = 0;
  CoefficientGrid grid;

  Cell cell(std::uint64_t index) const {
    Cell out(sizes.size());
    for (std::size_t d = sizes.size(); d-- > 0;) {
      out[d] = grid.axes[d][index % sizes[d]];
      index /= sizes[d];
    }
    return out;
  }
};

inline SearchPlan plan_grid(const CoefficientGrid& grid) {
  grid.validate();
  SearchPlan plan;
  plan.grid = grid;
  plan.cell_count = 1;
  for (const auto& axis : grid.axes) {
    plan.sizes.push_back(axis.size());
    plan.cell_count *= axis.size();
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Cost accounting

struct CostModel {
  double levels = 3;                 // p
  double domains = 3;                // D
  double train_hours_per_run = 72;
  double eval_seconds_per_cell = 60;

  void validate() const {
    if (!(levels > 0 && domains > 0 && train_hours_per_run > 0 && eval_seconds_per_cell > 0)) {
      throw Error(ErrorKind::invalid_argument, "cost model values must be positive");
    }
  }
};

struct CostReport {
  double joint_training_runs = 0;  // p^D
  double av_training_runs = 0;     // D
  double training_reduction = 0;   // p^D / D
  double joint_hours = 0;
  std::uint64_t search_cells = 0;
  double search_hours = 0;
  double speedup = 0;              // joint_hours / search_hours
};

inline CostReport estimate_cost(const CostModel& model, const CoefficientGrid& grid) {
  model.validate();
  CostReport r;
  r.joint_training_runs = std::pow(model.levels, model.domains);
  r.av_training_runs = model.domains;
  r.training_reduction = r.joint_training_runs / r.av_training_runs;
  r.joint_hours = r.joint_training_runs * model.train_hours_per_run;
  r.search_cells = plan_grid(grid).cell_count;
  r.search_hours = static_cast<double>(r.search_cells) * model.eval_seconds_per_cell / 3600.0;
  r.speedup = r.joint_hours / r.search_hours;
  return r;
}

inline nlohmann::ordered_json to_json(const CostReport& r) {
  return {{"joint_training_runs", r.joint_training_runs},
          {"av_training_runs", r.av_training_runs},
          {"training_reduction", r.training_reduction},
          {"joint_hours", r.joint_hours},
          {"search_cells", r.search_cells},
          {"search_hours", r.search_hours},
          {"speedup", r.speedup}};
}

// ---------------------------------------------------------------------------
// Journal of evaluated cells

/// Builds a scorer for a merged checkpoint.
using ScoreFactory = std::function<std::unique_ptr<Scorer>(const TensorMap&)>;

inline ScoreFactory tiny_score_factory() {
  return [](const TensorMap& weights) { return std::make_unique<TinyScorer>(weights); };
}

struct CellResult {
  Cell cell;
  std::vector<Fractions> fractions;       // one per domain
  std::vector<Fractions> mean_logprobs;   // corpus means, one per domain
  bool satisfied = false;

  friend bool operator==(const CellResult&, const CellResult&) = default;
};

/// Append-only JSON-lines record of evaluated cells. Each line is
/// {"cell": [...], "fractions": {domain: {...}}, "satisfied": bool,
/// "mean_logprobs": {domain: {...}}}.
class Journal {
 public:
  Journal() = default;
  Journal(const std::filesystem::path& path, std::vector<std::string> domains)
      : path_(path), domains_(std::move(domains)) {}

  bool enabled() const { return !path_.empty(); }

  /// Reads completed cells. A torn final line from an interrupted run is
  /// skipped.
  std::map<Cell, CellResult> load() const {
    std::map<Cell, CellResult> done;
    if (!enabled() || !std::filesystem::exists(path_)) return done;
    std::ifstream in(path_);
    if (!in) throw Error(ErrorKind::io, "cannot read journal " + path_.string());
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
      ++number;
      if (line.empty()) continue;
      try {
        const auto j = nlohmann::json::parse(line);
        CellResult r;
        r.cell = j.at("cell").get<Cell>();
        for (const auto& d : domains_) {
          r.fractions.push_back(fractions_from_json(j.at("fractions").at(d)));
          r.mean_logprobs.push_back(j.contains("mean_logprobs") ? fractions_from_json(j["mean_logprobs"].at(d))
                                                                 : Fractions{});
        }
        r.satisfied = j.at("satisfied").get<bool>();
        done[r.cell] = std::move(r);
      } catch (const nlohmann::json::exception& e) {
        logger().warn("journal {} line {} unreadable, ignoring: {}", path_.string(), number, e.what());
      }
    }
    return done;
  }

  void append(const CellResult& r) {
    if (!enabled()) return;
    nlohmann::ordered_json j;
    j["cell"] = r.cell;
    j["fractions"] = nlohmann::ordered_json::object();
    j["satisfied"] = r.satisfied;
    j["mean_logprobs"] = nlohmann::ordered_json::object();
    for (std::size_t d = 0; d < domains_.size(); ++d) {
      j["fractions"][domains_[d]] = to_json(r.fractions[d]);
      j["mean_logprobs"][domains_[d]] = to_json(r.mean_logprobs[d]);
    }
    std::lock_guard lock(mutex_);
    if (!out_.is_open()) {
      repair_tail();
      out_.open(path_, std::ios::app);
      if (!out_) throw Error(ErrorKind::io, "cannot append to journal " + path_.string());
    }
    out_ << j.dump() << '\n';
    out_.flush();
    if (!out_) throw Error(ErrorKind::io, "journal write failed");
  }

 private:
  // Terminates a torn last line so the next record starts on its own line.
  void repair_tail() {
    if (!std::filesystem::exists(path_) || std::filesystem::file_size(path_) == 0) return;
    std::ifstream in(path_, std::ios::binary);
    in.seekg(-1, std::ios::end);
    char last = '\n';
    in.get(last);
    if (last != '\n') std::ofstream(path_, std::ios::app) << '\n';
  }

  std::filesystem::path path_;
  std::vector<std::string> domains_;
  std::mutex mutex_;
  std::ofstream out_;
};

// ---------------------------------------------------------------------------
// Single-domain sweep

struct SweepRow {
  double lambda = 0.0;
  Fractions fractions;
  Dominance dominant = Dominance::none;
  Fractions mean_logprobs;
};

struct SweepReport {
  std::string domain;
  std::vector<SweepRow> rows;
};

struct SweepOptions {
  std::size_t workers = 1;
  std::filesystem::path journal;
  // When set, each merged checkpoint is written here as lambda_<value>.safetensors.
  std::filesystem::path persist_dir;
};

/// Evaluates apply_av(base, av, lambda) for every lambda on the grid.
inline SweepReport sweep_lambda(const TensorMap& base, const AlignmentVector& av, const std::vector<double>& grid,
                                const std::vector<PreferenceRecord>& dataset, const ScoreFactory& score_factory,
                                const SweepOptions& options = {}) {
  if (grid.empty()) throw Error(ErrorKind::invalid_argument, "lambda grid is empty");
  if (dataset.empty()) throw Error(ErrorKind::invalid_argument, "dataset is empty");
  detail::require_compatible(base, av.delta);
  const std::string domain = dataset.front().domain;
  Journal journal(options.journal, {domain});
  auto done = journal.load();

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!done.count(Cell{grid[i]})) pending.push_back(i);
  }
  std::vector<std::optional<CellResult>> fresh(grid.size());
  parallel_for(pending.size(), options.workers, [&](std::size_t k) {
    const double lambda = grid[pending[k]];
    try {
      const TensorMap merged = apply_av(base, av, lambda);
      if (!options.persist_dir.empty()) {
        save_checkpoint(merged, options.persist_dir / ("lambda_" + std::to_string(lambda) + ".safetensors"));
      }
      const auto scorer = score_factory(merged);
      const EvalReport report = preference_accuracy(*scorer, dataset, domain);
      CellResult r{{lambda}, {report.fractions}, {report.corpus_mean_logprobs}, false};
      journal.append(r);
      fresh[pending[k]] = std::move(r);
    } catch (const Error& e) {
      throw Error(e.kind(), "lambda=" + std::to_string(lambda) + ": " + e.what());
    }
  });

  SweepReport report{domain, {}};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const CellResult& r = fresh[i] ? *fresh[i] : done.at(Cell{grid[i]});
    report.rows.push_back({grid[i], r.fractions[0], dominant_level(r.fractions[0]), r.mean_logprobs[0]});
  }
  return report;
}

inline nlohmann::ordered_json to_json(const SweepReport& r) {
  nlohmann::ordered_json out;
  out["domain"] = r.domain;
  out["rows"] = nlohmann::ordered_json::array();
  for (const auto& row : r.rows) {
    out["rows"].push_back({{"lambda", row.lambda},
                           {"fractions", to_json(row.fractions)},
                           {"dominant", std::string(to_string(row.dominant))},
                           {"mean_logprobs", to_json(row.mean_logprobs)}});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Multi-domain grid search

struct SearchDomain {
  std::string name;
  AlignmentVector vector;
  std::vector<PreferenceRecord> dataset;
  Level target = Level::exp;
};

enum class SearchMode { exhaustive, hierarchical };

struct SearchOptions {
  SearchMode mode = SearchMode::exhaustive;
  std::size_t workers = 1;
  std::filesystem::path journal;
  double coarse_step = 0.4;
  double refine_radius = 0.2;
  double refine_step = 0.1;
  std::size_t top_k = 5;
};

struct SearchResult {
  std::vector<std::string> domains;
  std::vector<CellResult> evaluated;  // lexicographic by cell
  std::vector<Cell> satisfying;       // lexicographic
  std::optional<CellResult> best;     // max summed target fraction among satisfying cells

  friend bool operator==(const SearchResult&, const SearchResult&) = default;
};

inline double target_score(const CellResult& r, const std::vector<SearchDomain>& domains) {
  double total = 0.0;
  for (std::size_t d = 0; d < domains.size(); ++d) total += r.fractions[d][domains[d].target];
  return total;
}

namespace detail {

class CellEvaluator {
 public:
  CellEvaluator(const TensorMap& base, const std::vector<SearchDomain>& domains, const ScoreFactory& factory,
                Journal& journal, std::size_t workers)
      : base_(base), domains_(domains), factory_(factory), journal_(journal), workers_(workers) {
    done_ = journal_.load();
    // Journaled verdicts may come from a run with other targets.
    for (auto& [cell, r] : done_) {
      r.satisfied = true;
      for (std::size_t d = 0; d < domains_.size(); ++d) {
        r.satisfied = r.satisfied && dominant_level(r.fractions[d]) == dominance_of(domains_[d].target);
      }
    }
  }

  CellResult evaluate(const Cell& cell) const {
    MergeSpec spec{base_, {}, DTypePolicy::keep};
    for (std::size_t d = 0; d < domains_.size(); ++d) spec.terms.push_back({domains_[d].vector, cell[d]});
    CellResult r{cell, {}, {}, true};
    try {
      const TensorMap merged = apply_multi(spec);
      const auto scorer = factory_(merged);
      for (const auto& domain : domains_) {
        const EvalReport report = preference_accuracy(*scorer, domain.dataset, domain.name);
        r.fractions.push_back(report.fractions);
        r.mean_logprobs.push_back(report.corpus_mean_logprobs);
        r.satisfied = r.satisfied && report.dominant == dominance_of(domain.target);
      }
    } catch (const Error& e) {
      std::string where = "cell (";
      for (std::size_t i = 0; i < cell.size(); ++i) where += (i ? ", " : "") + std::to_string(cell[i]);
      throw Error(e.kind(), where + "): " + e.what());
    }
    return r;
  }

  /// Evaluates every cell not already known, journaling as cells finish.
  void run(const std::vector<Cell>& cells) {
    std::vector<Cell> pending;
    for (const auto& c : cells) {
      if (!done_.count(c)) pending.push_back(c);
    }
    std::vector<CellResult> fresh(pending.size());
    parallel_for(pending.size(), workers_, [&](std::size_t i) {
      fresh[i] = evaluate(pending[i]);
      journal_.append(fresh[i]);
    });
    for (auto& r : fresh) done_[r.cell] = std::move(r);
  }

  const CellResult& result(const Cell& c) const { return done_.at(c); }

 private:
  const TensorMap& base_;
  const std::vector<SearchDomain>& domains_;
  const ScoreFactory& factory_;
  Journal& journal_;
  std::size_t workers_;
  std::map<Cell, CellResult> done_;
};

}  // namespace detail

/// Searches coefficient tuples whose merged model shows each domain's target
/// level as dominant. Hierarchical mode evaluates a coarse sub-grid first,
/// then a fine window around the best-scoring coarse cells; it never
/// reports a cell it did not evaluate, but may miss satisfying cells.
inline SearchResult grid_search(const TensorMap& base, const std::vector<SearchDomain>& domains,
                                const CoefficientGrid& grid, const ScoreFactory& score_factory,
                                const SearchOptions& options = {}) {
  const SearchPlan plan = plan_grid(grid);
  if (domains.empty() || domains.size() != grid.axes.size()) {
    throw Error(ErrorKind::invalid_argument, "need exactly one grid axis per domain");
  }
  std::vector<std::string> names;
  for (const auto& d : domains) {
    if (d.dataset.empty()) throw Error(ErrorKind::invalid_argument, "domain " + d.name + " has no data");
    detail::require_compatible(base, d.vector.delta);
    names.push_back(d.name);
  }
  Journal journal(options.journal, names);
  detail::CellEvaluator evaluator(base, domains, score_factory, journal, options.workers);

  std::set<Cell> visited;
  if (options.mode == SearchMode::exhaustive) {
    std::vector<Cell> cells;
    for (std::uint64_t i = 0; i < plan.cell_count; ++i) cells.push_back(plan.cell(i));
    evaluator.run(cells);
    visited.insert(cells.begin(), cells.end());
  } else {
    CoefficientGrid coarse;
    for (const auto& axis : grid.axes) coarse.axes.push_back(linear_axis(axis.front(), axis.back(), options.coarse_step));
    const SearchPlan coarse_plan = plan_grid(coarse);
    std::vector<Cell> coarse_cells;
    for (std::uint64_t i = 0; i < coarse_plan.cell_count; ++i) coarse_cells.push_back(coarse_plan.cell(i));
    evaluator.run(coarse_cells);
    visited.insert(coarse_cells.begin(), coarse_cells.end());

    std::vector<const CellResult*> ranked;
    for (const auto& c : coarse_cells) ranked.push_back(&evaluator.result(c));
    std::stable_sort(ranked.begin(), ranked.end(), [&](const CellResult* a, const CellResult* b) {
      return target_score(*a, domains) > target_score(*b, domains);
    });
    ranked.resize(std::min(ranked.size(), options.top_k));

    std::set<Cell> fine;
    for (const CellResult* centre : ranked) {
      CoefficientGrid window;
      for (std::size_t d = 0; d < domains.size(); ++d) {
        const double lo = std::max(grid.axes[d].front(), centre->cell[d] - options.refine_radius);
        const double hi = std::min(grid.axes[d].back(), centre->cell[d] + options.refine_radius);
        window.axes.push_back(linear_axis(lo, hi, options.refine_step));
      }
      const SearchPlan window_plan = plan_grid(window);
      for (std::uint64_t i = 0; i < window_plan.cell_count; ++i) {
        Cell c = window_plan.cell(i);
        if (!visited.count(c)) fine.insert(std::move(c));
      }
    }
    const std::vector<Cell> fine_cells(fine.begin(), fine.end());
    evaluator.run(fine_cells);
    visited.insert(fine_cells.begin(), fine_cells.end());
  }

  SearchResult result;
  result.domains = names;
  for (const auto& c : visited) {
    const CellResult& r = evaluator.result(c);
    result.evaluated.push_back(r);
    if (r.satisfied) {
      result.satisfying.push_back(c);
      if (!result.best || target_score(r, domains) > target_score(*result.best, domains)) result.best = r;
    }
  }
  return result;
}

inline nlohmann::ordered_json to_json(const SearchResult& r, bool include_cells = false) {
  auto cell_json = [&](const CellResult& c) {
    nlohmann::ordered_json j;
    j["cell"] = c.cell;
    j["fractions"] = nlohmann::ordered_json::object();
    j["dominant"] = nlohmann::ordered_json::object();
    for (std::size_t d = 0; d < r.domains.size(); ++d) {
      j["fractions"][r.domains[d]] = to_json(c.fractions[d]);
      j["dominant"][r.domains[d]] = std::string(to_string(dominant_level(c.fractions[d])));
    }
    j["satisfied"] = c.satisfied;
    return j;
  };
  nlohmann::ordered_json out;
  out["domains"] = r.domains;
  out["cells_evaluated"] = r.evaluated.size();
  out["satisfying"] = r.satisfying;
  out["best"] = r.best ? cell_json(*r.best) : nlohmann::ordered_json(nullptr);
  if (include_cells) {
    out["cells"] = nlohmann::ordered_json::array();
    for (const auto& c : r.evaluated) out["cells"].push_back(cell_json(c));
  }
  return out;
}

}  // namespace avforge
