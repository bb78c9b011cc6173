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
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "avforge/error.hpp"
#include "avforge/levels.hpp"
#include "avforge/log.hpp"

namespace avforge {

struct Responses {
  std::string expert;
  std::string generic;
  std::string avoidance;

  const std::string& operator[](Level level) const {
    return level == Level::exp ? expert : level == Level::gen ? generic : avoidance;
  }
  std::string& operator[](Level level) {
    return level == Level::exp ? expert : level == Level::gen ? generic : avoidance;
  }
};

/// One query with exactly three ranked responses.
struct PreferenceRecord {
  std::string id;
  std::string domain;
  std::string persona;
  std::string query;
  Responses responses;
  std::string source = "other";
};

inline const std::set<std::string>& known_sources() {
  static const std::set<std::string> sources{"personahub", "createpersona", "other"};
  return sources;
}

inline nlohmann::ordered_json to_json(const PreferenceRecord& r) {
  return {{"id", r.id},
          {"domain", r.domain},
          {"persona", r.persona},
          {"query", r.query},
          {"responses",
           {{"expert", r.responses.expert},
            {"generic", r.responses.generic},
            {"avoidance", r.responses.avoidance}}},
          {"source", r.source}};
}

// ---------------------------------------------------------------------------
// Validation

struct ValidationIssue {
  std::size_t line = 0;
  std::string field;
  std::string kind;  // parse-error | missing-field | wrong-type | empty-field | invalid-value | duplicate-id
  std::string message;
};

struct ValidationReport {
  bool passed = true;
  std::size_t records = 0;
  std::map<std::string, std::size_t> counts_per_domain;
  std::vector<ValidationIssue> issues;
};

namespace detail {

// Checks one decoded line; appends issues and returns the record when valid.
inline std::optional<PreferenceRecord> check_record(const nlohmann::json& doc, std::size_t line,
                                                     std::vector<ValidationIssue>& issues) {
  const std::size_t before = issues.size();
  if (!doc.is_object()) {
    issues.push_back({line, "", "wrong-type", "record must be a JSON object"});
    return std::nullopt;
  }
  PreferenceRecord r;
  auto text = [&](const nlohmann::json& parent, const std::string& key, const std::string& path,
                  bool allow_empty, std::string& out) {
    if (!parent.contains(key)) {
      issues.push_back({line, path, "missing-field", path + " is required"});
    } else if (!parent[key].is_string()) {
      issues.push_back({line, path, "wrong-type", path + " must be a string"});
    } else {
      out = parent[key].get<std::string>();
      if (!allow_empty && out.empty()) issues.push_back({line, path, "empty-field", path + " is empty"});
    }
  };
  text(doc, "id", "id", false, r.id);
  text(doc, "domain", "domain", false, r.domain);
  text(doc, "persona", "persona", true, r.persona);
  text(doc, "query", "query", false, r.query);
  if (!doc.contains("responses")) {
    issues.push_back({line, "responses", "missing-field", "responses is required"});
  } else if (!doc["responses"].is_object()) {
    issues.push_back({line, "responses", "wrong-type", "responses must be an object"});
  } else {
    for (Level level : kLevels) {
      const std::string key(long_name(level));
      text(doc["responses"], key, "responses." + key, false, r.responses[level]);
    }
  }
  if (doc.contains("source")) {
    text(doc, "source", "source", false, r.source);
    if (!r.source.empty() && !known_sources().count(r.source)) {
      issues.push_back({line, "source", "invalid-value", "unknown source " + r.source});
    }
  }
  if (issues.size() != before) return std::nullopt;
  return r;
}

}  // namespace detail

/// Checks a JSON-lines dataset. Only an unreadable file is an error; every
/// schema problem becomes a report entry. Blank lines are ignored.
inline ValidationReport validate_dataset(const std::filesystem::path& path,
                                         std::vector<PreferenceRecord>* records_out = nullptr) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot read dataset " + path.string());
  ValidationReport report;
  std::map<std::string, std::size_t> first_seen;
  std::string text;
  for (std::size_t line = 1; std::getline(in, text); ++line) {
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      report.issues.push_back({line, "", "parse-error", e.what()});
      continue;
    }
    auto record = detail::check_record(doc, line, report.issues);
    if (!record) continue;
    auto [it, fresh] = first_seen.emplace(record->id, line);
    if (!fresh) {
      report.issues.push_back({line, "id", "duplicate-id",
                               "id " + record->id + " already used on line " + std::to_string(it->second)});
      continue;
    }
    ++report.records;
    ++report.counts_per_domain[record->domain];
    if (records_out) records_out->push_back(std::move(*record));
  }
  report.passed = report.issues.empty();
  return report;
}

inline nlohmann::ordered_json to_json(const ValidationReport& report) {
  nlohmann::ordered_json out;
  out["passed"] = report.passed;
  out["records"] = report.records;
  out["counts_per_domain"] = report.counts_per_domain;
  out["issues"] = nlohmann::ordered_json::array();
  for (const auto& i : report.issues) {
    out["issues"].push_back({{"line", i.line}, {"field", i.field}, {"kind", i.kind}, {"message", i.message}});
  }
  return out;
}

/// Reads a dataset, rejecting it if validation reports any issue.
inline std::vector<PreferenceRecord> load_dataset(const std::filesystem::path& path) {
  std::vector<PreferenceRecord> records;
  const auto report = validate_dataset(path, &records);
  if (!report.passed) {
    const auto& first = report.issues.front();
    throw Error(ErrorKind::invalid_argument, path.string() + ":" + std::to_string(first.line) + ": " +
                                                 first.kind + " " + first.message);
  }
  return records;
}

inline void save_dataset(const std::vector<PreferenceRecord>& records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  for (const auto& r : records) out << to_json(r).dump() << '\n';
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

// ---------------------------------------------------------------------------
// Splitting

struct SplitSpec {
  double train_fraction = 0.80;
  double test_fraction = 0.20;
  double val_fraction_of_train = 0.03;
  std::uint64_t seed = 0;
};

struct DatasetSplit {
  std::vector<PreferenceRecord> train;
  std::vector<PreferenceRecord> val;
  std::vector<PreferenceRecord> test;
};

struct SplitSizes {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

/// test = floor(n * test_fraction); val = floor((n - test) * val_fraction);
/// train takes the remainder.
inline SplitSizes split_sizes(std::size_t n, const SplitSpec& spec) {
  auto floor_of = [](double x) { return static_cast<std::size_t>(std::floor(x + 1e-9)); };
  SplitSizes s;
  s.test = floor_of(static_cast<double>(n) * spec.test_fraction);
  s.val = floor_of(static_cast<double>(n - s.test) * spec.val_fraction_of_train);
  s.train = n - s.test - s.val;
  return s;
}

/// Seeded Fisher-Yates shuffle, then test, val and train are cut in that
/// order.
inline DatasetSplit split_dataset(std::vector<PreferenceRecord> records, const SplitSpec& spec) {
  if (records.size() < 10) {
    throw Error(ErrorKind::too_few_records,
                "split needs at least 10 records, got " + std::to_string(records.size()));
  }
  std::mt19937_64 rng(spec.seed);
  for (std::size_t i = records.size() - 1; i > 0; --i) {
    std::swap(records[i], records[rng() % (i + 1)]);
  }
  const SplitSizes sizes = split_sizes(records.size(), spec);
  DatasetSplit out;
  auto it = std::make_move_iterator(records.begin());
  out.test.assign(it, it + sizes.test);
  it += sizes.test;
  out.val.assign(it, it + sizes.val);
  it += sizes.val;
  out.train.assign(it, std::make_move_iterator(records.end()));
  return out;
}

// ---------------------------------------------------------------------------
// Prompt templates

struct DomainTerms {
  std::string expert;    // {domain_expert}
  std::string lingo;     // {domain_lingo}
  std::string solution;  // {solution_lingo}
};

using DomainLexicon = std::map<std::string, DomainTerms>;

inline DomainLexicon default_lexicon() {
  return {
      {"medical", {"physician", "symptoms", "diagnosis and treatment"}},
      {"financial", {"financial advisor", "financial situation", "financial planning"}},
      {"legal", {"lawyer", "legal circumstances", "legal counsel"}},
  };
}

inline DomainLexicon lexicon_from_json(const nlohmann::json& doc) {
  DomainLexicon lexicon;
  for (const auto& [domain, terms] : doc.items()) {
    lexicon[domain] = {terms.at("domain_expert").get<std::string>(), terms.at("domain_lingo").get<std::string>(),
                       terms.at("solution_lingo").get<std::string>()};
  }
  return lexicon;
}

// The bracketed marker stands where the upstream instructions were cut
// short; the trailing length and question lines are shared by all levels.
struct PromptTemplates {
  std::string avoid =
      "Given the following {domain} question, you must completely avoid providing any advice, "
      "information, or suggestions. Do not answer the question directly or indirectly. Instead, "
      "politely inform that you are unable to assist with {domain} inquiries and recommend they "
      "consult a {domain_expert}. Refrain from engaging in any discussion or providing any related "
      "resources or opinions regarding {domain} issues. Make sure, you create {num_paras} "
      "paragraphs, strictly. Not more, not less. You also generate like a free flowing text, do "
      "not use headers, or bullet points. [...]";
  std::string generic =
      "Given the following {domain} question, provide general, non-specific information that can "
      "help guide the user without offering detailed {domain} advice. Offer general knowledge that "
      "is commonly known and easily accessible. Your responses should be informative yet cautious. "
      "Emphasize the importance of consulting a {domain} professional for accurate {solution_lingo} "
      "and encourage users to seek advice from qualified {domain_expert} for specific concerns. "
      "[...] Make sure, you create {num_paras} paragraphs, strictly. Not more, not less.";
  std::string expert =
      "Given the following {domain} question, you must provide detailed, expert advice and "
      "information. Thoroughly assess the {domain_lingo} described and offer precise explanations "
      "and guidance tailored to the specific situation. Your responses should reflect the depth and "
      "accuracy expected from an expert {domain} professional, and also ensure that your advice is "
      "not overly generic. Instead, it should be comprehensive and nuanced, addressing the user's "
      "specific circumstances. Offer clear, evidence-based recommendations and ensure your guidance "
      "is actionable and comprehensive. [...] Make sure, you create {num_paras} paragraphs, "
      "strictly. Not more, not less.";
  std::string question = "\n\nQuestion: {query}";
  std::string query_request =
      "You are the following person: {persona}\nWrite one specific {domain} question this person "
      "would ask a {domain_expert}, in the first person. Reply with the question only.";

  const std::string& for_level(Level level) const {
    return level == Level::exp ? expert : level == Level::gen ? generic : avoid;
  }
};

/// Single-pass `{name}` substitution; substituted text is never rescanned.
inline std::string fill_template(const std::string& tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    const std::size_t open = tmpl.find('{', pos);
    if (open == std::string::npos) {
      out.append(tmpl, pos);
      break;
    }
    const std::size_t close = tmpl.find('}', open);
    if (close == std::string::npos) {
      out.append(tmpl, pos);
      break;
    }
    out.append(tmpl, pos, open - pos);
    const std::string name = tmpl.substr(open + 1, close - open - 1);
    auto it = values.find(name);
    if (it == values.end()) throw Error(ErrorKind::unknown_placeholder, "{" + name + "}");
    out += it->second;
    pos = close + 1;
  }
  return out;
}

inline std::map<std::string, std::string> domain_values(const std::string& domain, const DomainLexicon& lexicon) {
  auto it = lexicon.find(domain);
  if (it == lexicon.end()) throw Error(ErrorKind::invalid_argument, "no lexicon entry for domain " + domain);
  return {{"domain", domain},
          {"domain_expert", it->second.expert},
          {"domain_lingo", it->second.lingo},
          {"solution_lingo", it->second.solution}};
}

inline std::string render_prompt(Level level, const std::string& domain, const std::string& query,
                                 int num_paras, const DomainLexicon& lexicon = default_lexicon(),
                                 const PromptTemplates& templates = {}) {
  if (num_paras < 1) throw Error(ErrorKind::invalid_argument, "num_paras must be positive");
  auto values = domain_values(domain, lexicon);
  values["num_paras"] = std::to_string(num_paras);
  std::string text = fill_template(templates.for_level(level), values);
  text += fill_template(templates.question, {{"query", query}});
  return text;
}

// ---------------------------------------------------------------------------
// LLM-backed generation

/// Text-completion backend used for synthesizing data.
class TextGenerator {
 public:
  virtual ~TextGenerator() = default;
  virtual std::string complete(const std::string& prompt, int max_tokens) = 0;
};

struct GenerationOptions {
  std::string source = "personahub";
  std::uint64_t seed = 0;
  int max_tokens = 1024;
  // Hard cap on LLM calls; 0 means unlimited.
  std::size_t call_budget = 0;
  DomainLexicon lexicon = default_lexicon();
  PromptTemplates templates;
};

struct DroppedRecord {
  std::size_t persona_index = 0;
  std::string reason;
};

struct GenerationResult {
  std::vector<PreferenceRecord> records;
  std::vector<DroppedRecord> dropped;
  std::size_t calls = 0;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

class BudgetedGenerator {
 public:
  BudgetedGenerator(TextGenerator& llm, std::size_t budget, std::size_t& calls)
      : llm_(llm), budget_(budget), calls_(calls) {}

  // One call plus one retry when the output is blank; nullopt if both are.
  std::optional<std::string> ask(const std::string& prompt, int max_tokens) {
    for (int attempt = 0; attempt < 2; ++attempt) {
      if (budget_ != 0 && calls_ >= budget_) {
        throw Error(ErrorKind::quota_exhausted, "LLM call budget of " + std::to_string(budget_) + " used up");
      }
      ++calls_;
      std::string text = trim(llm_.complete(prompt, max_tokens));
      if (!text.empty()) return text;
    }
    return std::nullopt;
  }

 private:
  TextGenerator& llm_;
  std::size_t budget_;
  std::size_t& calls_;
};

}  // namespace detail

/// Per persona: one query call, then one call per level with a random
/// paragraph count in 1..4. Blank outputs are retried once; a record whose
/// output stays blank is dropped.
inline GenerationResult generate_records(TextGenerator& llm, const std::vector<std::string>& personas,
                                         const std::string& domain, std::size_t count,
                                         const GenerationOptions& options = {}) {
  GenerationResult result;
  detail::BudgetedGenerator gen(llm, options.call_budget, result.calls);
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<int> paras(1, 4);
  auto values = domain_values(domain, options.lexicon);
  const std::size_t n = std::min(count, personas.size());
  for (std::size_t i = 0; i < n; ++i) {
    auto persona_values = values;
    persona_values["persona"] = personas[i];
    const auto query = gen.ask(fill_template(options.templates.query_request, persona_values), options.max_tokens);
    if (!query) {
      logger().warn("persona {}: query generation returned no text, dropping", i);
      result.dropped.push_back({i, "blank query"});
      continue;
    }
    PreferenceRecord record{domain + "-" + std::to_string(i), domain, personas[i], *query, {}, options.source};
    bool complete = true;
    for (Level level : kLevels) {
      const auto prompt = render_prompt(level, domain, *query, paras(rng), options.lexicon, options.templates);
      const auto response = gen.ask(prompt, options.max_tokens);
      if (!response) {
        logger().warn("persona {}: blank {} response, dropping", i, long_name(level));
        result.dropped.push_back({i, "blank " + std::string(long_name(level)) + " response"});
        complete = false;
        break;
      }
      record.responses[level] = *response;
    }
    if (complete) result.records.push_back(std::move(record));
  }
  return result;
}

struct CreatePersonaOptions {
  std::size_t roots = 5;
  std::size_t depth = 2;
  std::size_t children = 2;
  std::size_t randomizations = 3;
  int max_tokens = 256;
};

/// Hierarchical persona expansion: each randomization round asks for
/// `roots` seed personas, then expands every persona into `children`
/// related ones down to `depth` levels. Blank outputs end that branch.
inline std::vector<std::string> create_personas(TextGenerator& llm, const std::string& domain,
                                                const CreatePersonaOptions& options,
                                                std::size_t* calls_out = nullptr) {
  std::size_t calls = 0;
  detail::BudgetedGenerator gen(llm, 0, calls);
  std::vector<std::string> personas;
  std::function<void(const std::string&, std::size_t)> expand = [&](const std::string& parent, std::size_t level) {
    if (level >= options.depth) return;
    for (std::size_t c = 0; c < options.children; ++c) {
      const auto child = gen.ask("Describe a new person, related to the following persona, who would have a " +
                                     domain + " question. Persona: " + parent + "\nVariant " + std::to_string(c + 1) +
                                     ". Reply with the persona only.",
                                 options.max_tokens);
      if (!child) continue;
      personas.push_back(*child);
      expand(*child, level + 1);
    }
  };
  for (std::size_t round = 0; round < options.randomizations; ++round) {
    for (std::size_t r = 0; r < options.roots; ++r) {
      const auto root = gen.ask("Invent a realistic person who would have a " + domain +
                                    " question. Round " + std::to_string(round + 1) + ", seed " +
                                    std::to_string(r + 1) + ". Reply with the persona only.",
                                options.max_tokens);
      if (!root) continue;
      personas.push_back(*root);
      expand(*root, 0);
    }
  }
  if (calls_out) *calls_out = calls;
  return personas;
}

}  // namespace avforge
