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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "avforge/dataset.hpp"
#include "avforge/editing.hpp"
#include "avforge/evaluation.hpp"
#include "avforge/fixtures.hpp"
#include "avforge/log.hpp"
#include "avforge/remote.hpp"
#include "avforge/search.hpp"
#include "avforge/tensor_store.hpp"

namespace avforge::cli {

/// Process exit codes. 0 means the command's postcondition holds.
enum ExitCode : int {
  kOk = 0,
  kFailure = 1,          // usage errors and other failures
  kIoError = 2,          // unreadable/unwritable files, corrupt checkpoints
  kIncompatible = 3,     // checkpoints that cannot be combined
  kBadInput = 4,         // recipe or dataset that does not parse
  kRemoteError = 5,      // scorer / judge / generation endpoint failures
  kValidationFailed = 6, // dataset validate found problems
};

inline int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::io:
    case ErrorKind::malformed_header:
    case ErrorKind::truncated_header:
    case ErrorKind::out_of_bounds:
    case ErrorKind::overlapping_regions:
    case ErrorKind::unsupported_dtype:
      return kIoError;
    case ErrorKind::incompatible:
      return kIncompatible;
    case ErrorKind::recipe_parse:
      return kBadInput;
    case ErrorKind::remote_failed:
    case ErrorKind::malformed_response:
    case ErrorKind::quota_exhausted:
      return kRemoteError;
    default:
      return kFailure;
  }
}

struct GlobalConfig {
  std::string output = "human";
  std::size_t workers = 1;
  std::string scorer = "tiny";
  std::string scorer_endpoint;
  std::string judge_endpoint;
  int retries = 2;
  int backoff_ms = 200;
  std::string log_level = "warn";

  bool json() const { return output == "json"; }
  RetryPolicy retry() const { return {retries, std::chrono::milliseconds(backoff_ms), std::chrono::seconds(60)}; }

  void validate() const {
    if (scorer == "remote" && scorer_endpoint.empty()) {
      throw Error(ErrorKind::invalid_argument, "--scorer remote requires --scorer-endpoint or AVFORGE_SCORER_ENDPOINT");
    }
    if (workers < 1) throw Error(ErrorKind::invalid_argument, "--workers must be >= 1");
  }
};

namespace detail {

inline std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

inline std::string fractions_text(const Fractions& f) {
  return "exp=" + fixed(f.exp, 3) + " gen=" + fixed(f.gen, 3) + " avd=" + fixed(f.avd, 3);
}

inline std::vector<PreferenceRecord> read_dataset(const std::string& path) {
  try {
    return load_dataset(path);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::invalid_argument) throw Error(ErrorKind::recipe_parse, e.what());
    throw;
  }
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << text;
}

}  // namespace detail

/// Runs the command line `args` (without the program name).
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"avforge: alignment-vector extraction, merging and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalConfig config;
  app.add_option("--output", config.output, "human | json")->check(CLI::IsMember({"human", "json"}));
  app.add_option("--workers", config.workers, "parallel workers")->envname("AVFORGE_WORKERS");
  app.add_option("--scorer", config.scorer, "tiny | remote")->check(CLI::IsMember({"tiny", "remote"}));
  app.add_option("--scorer-endpoint", config.scorer_endpoint)->envname("AVFORGE_SCORER_ENDPOINT");
  app.add_option("--judge-endpoint", config.judge_endpoint)->envname("AVFORGE_JUDGE_ENDPOINT");
  app.add_option("--retries", config.retries, "retries per remote request");
  app.add_option("--backoff-ms", config.backoff_ms, "initial retry backoff");
  app.add_option("--log-level", config.log_level)->check(CLI::IsMember({"debug", "info", "warn", "error", "off"}));

  std::function<int()> action;
  auto emit = [&](const nlohmann::ordered_json& j, const std::string& human) {
    if (config.json()) {
      out << j.dump() << '\n';
    } else {
      out << human;
    }
  };
  auto make_scorer = [&](const std::string& model_path) -> std::unique_ptr<Scorer> {
    if (config.scorer == "remote") {
      return std::make_unique<RemoteScorer>(config.scorer_endpoint, config.retry(),
                                            static_cast<std::ptrdiff_t>(config.workers));
    }
    if (model_path.empty()) throw Error(ErrorKind::invalid_argument, "--model is required with the tiny scorer");
    return std::make_unique<TinyScorer>(load_checkpoint(model_path));
  };
  auto require_tiny = [&](const char* what) {
    if (config.scorer != "tiny") {
      throw Error(ErrorKind::invalid_argument, std::string(what) + " merges checkpoints in-process and needs the tiny scorer");
    }
  };

  // inspect ------------------------------------------------------------------
  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect", "summarize a checkpoint");
  inspect->add_option("checkpoint", inspect_path)->required();
  inspect->callback([&] {
    action = [&] {
      const TensorMap map = load_checkpoint(inspect_path);
      const auto summary = summarize(map);
      auto j = to_json(summary);
      j["metadata"] = map.metadata();
      std::ostringstream h;
      h << "parameters " << summary.parameter_count << "\ndigest " << summary.digest << '\n';
      for (const auto& t : summary.tensors) {
        h << t.name << ' ' << dtype_name(t.dtype) << ' ' << shape_string(t.shape) << " min=" << t.min
          << " max=" << t.max << " mean=" << t.mean << " l2=" << t.l2_norm << '\n';
      }
      emit(j, h.str());
      return kOk;
    };
  });

  // extract ------------------------------------------------------------------
  std::string ex_base, ex_aligned, ex_domain, ex_out;
  auto* extract = app.add_subcommand("extract", "aligned - base -> alignment vector");
  extract->add_option("--base", ex_base)->required();
  extract->add_option("--aligned", ex_aligned)->required();
  extract->add_option("--domain", ex_domain)->required();
  extract->add_option("--out", ex_out)->required();
  extract->callback([&] {
    action = [&] {
      const TensorMap base = load_checkpoint(ex_base);
      const TensorMap aligned = load_checkpoint(ex_aligned);
      AlignmentVector av;
      try {
        av = extract_av(aligned, base, ex_domain);
      } catch (const IncompatibleError& e) {
        err << to_json(e.report()).dump() << '\n';
        return static_cast<int>(kIncompatible);
      }
      save_alignment_vector(av, ex_out);
      const std::string digest = content_digest(av.delta);
      emit({{"output", ex_out},
            {"domain", av.provenance.domain},
            {"base_digest", av.provenance.base_digest},
            {"aligned_digest", av.provenance.aligned_digest},
            {"digest", digest}},
           "wrote " + ex_out + " (domain " + ex_domain + ")\ndigest " + digest + "\n");
      return static_cast<int>(kOk);
    };
  });

  // merge --------------------------------------------------------------------
  std::string recipe_path;
  auto* merge = app.add_subcommand("merge", "apply alignment vectors from a recipe");
  merge->add_option("recipe", recipe_path)->required();
  merge->callback([&] {
    action = [&] {
      const Recipe recipe = load_recipe(recipe_path);
      if (std::filesystem::exists(recipe.output) && std::filesystem::exists(recipe.base) &&
          std::filesystem::equivalent(recipe.output, recipe.base)) {
        throw Error(ErrorKind::invalid_argument, "output would overwrite the base checkpoint");
      }
      try {
        const std::string digest = run_recipe(recipe, config.workers);
        emit({{"output", recipe.output.string()}, {"digest", digest}},
             "wrote " + recipe.output.string() + "\ndigest " + digest + "\n");
      } catch (const IncompatibleError& e) {
        err << to_json(e.report()).dump() << '\n';
        return static_cast<int>(kIncompatible);
      }
      return static_cast<int>(kOk);
    };
  });

  // eval ---------------------------------------------------------------------
  std::string ev_model, ev_dataset, ev_domain;
  bool ev_judge = false;
  std::size_t ev_max_new = 64;
  auto* eval = app.add_subcommand("eval", "preference accuracy of one model");
  eval->add_option("--model", ev_model, "checkpoint for the tiny scorer");
  eval->add_option("--dataset", ev_dataset)->required();
  eval->add_option("--domain", ev_domain, "label for the report (default: first record's domain)");
  eval->add_flag("--judge", ev_judge, "also run judge-annotated generation accuracy");
  eval->add_option("--max-new-tokens", ev_max_new);
  eval->callback([&] {
    action = [&] {
      const auto records = detail::read_dataset(ev_dataset);
      const auto scorer = make_scorer(ev_model);
      const EvalReport report = preference_accuracy(*scorer, records, ev_domain, config.workers);
      nlohmann::ordered_json j{{"preference", to_json(report)}};
      std::string human = "domain " + report.domain + " n=" + std::to_string(report.n_samples) + "\n" +
                          detail::fractions_text(report.fractions) + "\ndominant " +
                          std::string(to_string(report.dominant)) + "\n";
      if (ev_judge) {
        if (config.judge_endpoint.empty()) {
          throw Error(ErrorKind::invalid_argument, "--judge needs --judge-endpoint or AVFORGE_JUDGE_ENDPOINT");
        }
        if (ev_model.empty()) throw Error(ErrorKind::invalid_argument, "--judge generates with --model");
        RemoteJudge judge(config.judge_endpoint, config.retry());
        const TinyLM model(load_checkpoint(ev_model));
        const JudgeReport jr = judge_accuracy(judge, model, records, ev_max_new);
        j["judge"] = to_json(jr);
        human += "judged n=" + std::to_string(jr.n) + " errors=" + std::to_string(jr.errors) + " " +
                 detail::fractions_text(jr.fractions) + "\n";
      }
      emit(j, human);
      return static_cast<int>(kOk);
    };
  });

  // sweep --------------------------------------------------------------------
  std::string sw_base, sw_vector, sw_dataset, sw_grid = "-1:1:0.1", sw_journal, sw_persist;
  auto* sweep = app.add_subcommand("sweep", "evaluate base + lambda * vector over a lambda grid");
  sweep->add_option("--base", sw_base)->required();
  sweep->add_option("--vector", sw_vector)->required();
  sweep->add_option("--dataset", sw_dataset)->required();
  sweep->add_option("--grid", sw_grid, "start:stop:step");
  sweep->add_option("--journal", sw_journal, "JSON-lines journal; existing entries are reused");
  sweep->add_option("--persist-dir", sw_persist, "write each merged checkpoint here");
  sweep->callback([&] {
    action = [&] {
      require_tiny("sweep");
      const auto grid = parse_axis(sw_grid);
      const TensorMap base = load_checkpoint(sw_base);
      const AlignmentVector av = load_alignment_vector(sw_vector);
      const auto records = detail::read_dataset(sw_dataset);
      SweepOptions options{config.workers, sw_journal, sw_persist};
      const SweepReport report = sweep_lambda(base, av, grid, records, tiny_score_factory(), options);
      std::ostringstream h;
      h << "lambda   exp    gen    avd    dominant\n";
      for (const auto& row : report.rows) {
        h << std::setw(6) << detail::fixed(row.lambda, 2) << "  " << detail::fixed(row.fractions.exp, 3) << "  "
          << detail::fixed(row.fractions.gen, 3) << "  " << detail::fixed(row.fractions.avd, 3) << "  "
          << to_string(row.dominant) << '\n';
      }
      emit(to_json(report), h.str());
      return static_cast<int>(kOk);
    };
  });

  // search -------------------------------------------------------------------
  std::string se_base, se_mode = "exhaustive", se_journal;
  std::vector<std::string> se_vectors, se_datasets, se_grids, se_targets;
  bool se_cells = false;
  auto* search = app.add_subcommand("search", "multi-domain coefficient grid search");
  search->add_option("--base", se_base)->required();
  search->add_option("--vector", se_vectors, "one per domain, in order")->required();
  search->add_option("--dataset", se_datasets, "one per domain, in order")->required();
  search->add_option("--target", se_targets, "exp|gen|avd, one per domain")->required();
  search->add_option("--grid", se_grids, "start:stop:step, one per domain or one for all");
  search->add_option("--mode", se_mode)->check(CLI::IsMember({"exhaustive", "hierarchical"}));
  search->add_option("--journal", se_journal, "JSON-lines journal; existing entries are reused");
  search->add_flag("--cells", se_cells, "include every evaluated cell in JSON output");
  search->callback([&] {
    action = [&] {
      require_tiny("search");
      const std::size_t n = se_vectors.size();
      if (se_datasets.size() != n || se_targets.size() != n) {
        throw Error(ErrorKind::invalid_argument, "--vector, --dataset and --target must be given once per domain");
      }
      if (n > 3) throw Error(ErrorKind::invalid_argument, "at most 3 domains are supported");
      if (!se_grids.empty() && se_grids.size() != 1 && se_grids.size() != n) {
        throw Error(ErrorKind::invalid_argument, "--grid must be given once or once per domain");
      }
      CoefficientGrid grid;
      for (std::size_t d = 0; d < n; ++d) {
        grid.axes.push_back(se_grids.empty() ? default_axis() : parse_axis(se_grids[se_grids.size() == 1 ? 0 : d]));
      }
      const TensorMap base = load_checkpoint(se_base);
      std::vector<SearchDomain> domains;
      for (std::size_t d = 0; d < n; ++d) {
        SearchDomain sd;
        sd.vector = load_alignment_vector(se_vectors[d]);
        sd.dataset = detail::read_dataset(se_datasets[d]);
        sd.name = sd.dataset.front().domain;
        sd.target = require_level(se_targets[d]);
        domains.push_back(std::move(sd));
      }
      SearchOptions options;
      options.mode = se_mode == "hierarchical" ? SearchMode::hierarchical : SearchMode::exhaustive;
      options.workers = config.workers;
      options.journal = se_journal;
      const SearchResult result = grid_search(base, domains, grid, tiny_score_factory(), options);
      std::ostringstream h;
      h << "evaluated " << result.evaluated.size() << " cell(s), " << result.satisfying.size() << " satisfying\n";
      if (result.best) {
        h << "best (";
        for (std::size_t i = 0; i < result.best->cell.size(); ++i) h << (i ? ", " : "") << result.best->cell[i];
        h << ")\n";
        for (std::size_t d = 0; d < result.domains.size(); ++d) {
          h << "  " << result.domains[d] << ": " << detail::fractions_text(result.best->fractions[d]) << '\n';
        }
      }
      emit(to_json(result, se_cells), h.str());
      return static_cast<int>(kOk);
    };
  });

  // cost ---------------------------------------------------------------------
  CostModel cost_model;
  std::vector<std::string> cost_grids;
  auto* cost = app.add_subcommand("cost", "joint-training vs vector-search cost accounting");
  cost->add_option("--levels", cost_model.levels, "preference levels per domain (p)");
  cost->add_option("--domains", cost_model.domains, "domain count (D)");
  cost->add_option("--train-hours", cost_model.train_hours_per_run);
  cost->add_option("--eval-seconds", cost_model.eval_seconds_per_cell);
  cost->add_option("--grid", cost_grids, "start:stop:step, one per domain or one for all");
  cost->callback([&] {
    action = [&] {
      cost_model.validate();
      const auto domains = static_cast<std::size_t>(std::llround(cost_model.domains));
      CoefficientGrid grid;
      for (std::size_t d = 0; d < domains; ++d) {
        grid.axes.push_back(cost_grids.empty() ? default_axis()
                                               : parse_axis(cost_grids[cost_grids.size() == 1 ? 0 : std::min(d, cost_grids.size() - 1)]));
      }
      const CostReport r = estimate_cost(cost_model, grid);
      std::ostringstream h;
      h << "joint training runs " << r.joint_training_runs << "\nvector training runs " << r.av_training_runs
        << "\nreduction " << r.training_reduction << "\njoint " << r.joint_hours << " h\nsearch cells "
        << r.search_cells << "\nsearch " << detail::fixed(r.search_hours, 2) << " h\nspeedup "
        << detail::fixed(r.speedup, 2) << "x\n";
      emit(to_json(r), h.str());
      return static_cast<int>(kOk);
    };
  });

  // dataset ------------------------------------------------------------------
  auto* dataset = app.add_subcommand("dataset", "dataset tools");
  dataset->require_subcommand(1);

  std::string dv_path;
  auto* validate = dataset->add_subcommand("validate", "schema and duplicate-id check");
  validate->add_option("path", dv_path)->required();
  validate->callback([&] {
    action = [&] {
      const ValidationReport report = validate_dataset(dv_path);
      std::ostringstream h;
      h << (report.passed ? "pass" : "fail") << ": " << report.records << " valid record(s)\n";
      for (const auto& [domain, count] : report.counts_per_domain) h << "  " << domain << ": " << count << '\n';
      for (const auto& i : report.issues) {
        h << "line " << i.line << ": " << i.kind << (i.field.empty() ? "" : " " + i.field) << ": " << i.message << '\n';
      }
      emit(to_json(report), h.str());
      return static_cast<int>(report.passed ? kOk : kValidationFailed);
    };
  });

  std::string ds_path, ds_out = ".";
  std::uint64_t ds_seed = 0;
  auto* split = dataset->add_subcommand("split", "seeded 80/20 split with 3% validation carved from train");
  split->add_option("path", ds_path)->required();
  split->add_option("--out-dir", ds_out);
  split->add_option("--seed", ds_seed);
  split->callback([&] {
    action = [&] {
      auto records = detail::read_dataset(ds_path);
      SplitSpec spec;
      spec.seed = ds_seed;
      const DatasetSplit parts = split_dataset(std::move(records), spec);
      std::filesystem::create_directories(ds_out);
      save_dataset(parts.train, std::filesystem::path(ds_out) / "train.jsonl");
      save_dataset(parts.val, std::filesystem::path(ds_out) / "val.jsonl");
      save_dataset(parts.test, std::filesystem::path(ds_out) / "test.jsonl");
      emit({{"train", parts.train.size()}, {"val", parts.val.size()}, {"test", parts.test.size()}},
           "train " + std::to_string(parts.train.size()) + "\nval " + std::to_string(parts.val.size()) + "\ntest " +
               std::to_string(parts.test.size()) + "\n");
      return static_cast<int>(kOk);
    };
  });

  std::string dr_level, dr_domain, dr_query, dr_lexicon;
  int dr_paras = 2;
  auto* render = dataset->add_subcommand("render", "instantiate a response-generation prompt");
  render->add_option("--level", dr_level)->required();
  render->add_option("--domain", dr_domain)->required();
  render->add_option("--query", dr_query)->required();
  render->add_option("--paras", dr_paras);
  render->add_option("--lexicon", dr_lexicon, "JSON file of domain substitution terms");
  render->callback([&] {
    action = [&] {
      DomainLexicon lexicon = default_lexicon();
      if (!dr_lexicon.empty()) {
        std::ifstream in(dr_lexicon);
        if (!in) throw Error(ErrorKind::io, "cannot read " + dr_lexicon);
        lexicon = lexicon_from_json(nlohmann::json::parse(in));
      }
      const std::string prompt = render_prompt(require_level(dr_level), dr_domain, dr_query, dr_paras, lexicon);
      emit({{"prompt", prompt}}, prompt + "\n");
      return static_cast<int>(kOk);
    };
  });

  std::string dg_endpoint, dg_personas, dg_domain, dg_out;
  std::size_t dg_count = 0, dg_budget = 0;
  std::uint64_t dg_seed = 0;
  bool dg_create = false;
  auto* gen = dataset->add_subcommand("generate", "synthesize three-level records with a remote LLM");
  gen->add_option("--llm-endpoint", dg_endpoint)->required();
  gen->add_option("--personas", dg_personas, "file with one persona per line");
  gen->add_flag("--create-personas", dg_create, "expand personas hierarchically instead of reading a file");
  gen->add_option("--domain", dg_domain)->required();
  gen->add_option("--count", dg_count, "maximum records (default: one per persona)");
  gen->add_option("--out", dg_out)->required();
  gen->add_option("--seed", dg_seed);
  gen->add_option("--call-budget", dg_budget, "maximum LLM calls, 0 = unlimited");
  gen->callback([&] {
    action = [&] {
      RemoteTextGenerator llm(dg_endpoint, config.retry());
      std::vector<std::string> personas;
      GenerationOptions options;
      options.seed = dg_seed;
      options.call_budget = dg_budget;
      if (dg_create) {
        personas = create_personas(llm, dg_domain, {});
        options.source = "createpersona";
      } else {
        if (dg_personas.empty()) throw Error(ErrorKind::invalid_argument, "--personas or --create-personas is required");
        std::ifstream in(dg_personas);
        if (!in) throw Error(ErrorKind::io, "cannot read " + dg_personas);
        for (std::string line; std::getline(in, line);) {
          if (!line.empty()) personas.push_back(line);
        }
      }
      const auto result = generate_records(llm, personas, dg_domain, dg_count ? dg_count : personas.size(), options);
      save_dataset(result.records, dg_out);
      emit({{"records", result.records.size()}, {"dropped", result.dropped.size()}, {"calls", result.calls}},
           "wrote " + std::to_string(result.records.size()) + " record(s), dropped " +
               std::to_string(result.dropped.size()) + ", " + std::to_string(result.calls) + " LLM call(s)\n");
      return static_cast<int>(kOk);
    };
  });

  // fixture ------------------------------------------------------------------
  std::string fx_dir = "fixture";
  std::uint64_t fx_seed = 7;
  auto* fixture = app.add_subcommand("fixture", "write the synthetic three-domain desk fixture");
  fixture->add_option("--out-dir", fx_dir);
  fixture->add_option("--seed", fx_seed);
  fixture->callback([&] {
    action = [&] {
      fixtures::DeskFixtureOptions options;
      options.seed = fx_seed;
      const auto fx = fixtures::build_desk_fixture(options);
      const std::filesystem::path dir(fx_dir);
      std::filesystem::create_directories(dir);
      save_checkpoint(fx.base, dir / "base.safetensors");
      nlohmann::ordered_json files{{"base", (dir / "base.safetensors").string()}};
      for (const auto& d : fx.domains) {
        save_checkpoint(d.aligned, dir / ("aligned_" + d.name + ".safetensors"));
        save_dataset(d.records, dir / (d.name + ".jsonl"));
        files["aligned_" + d.name] = (dir / ("aligned_" + d.name + ".safetensors")).string();
        files[d.name] = (dir / (d.name + ".jsonl")).string();
      }
      emit(files, "wrote fixture to " + dir.string() + "\n");
      return static_cast<int>(kOk);
    };
  });

  std::vector<const char*> argv{"avforge"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kFailure;
  }

  try {
    config.validate();
    logger().set_level(spdlog::level::from_str(config.log_level));
    return action ? action() : kFailure;
  } catch (const IncompatibleError& e) {
    err << to_json(e.report()).dump() << '\n';
    return kIncompatible;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.kind());
  } catch (const nlohmann::json::exception& e) {
    err << "error: " << e.what() << '\n';
    return kBadInput;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace avforge::cli
