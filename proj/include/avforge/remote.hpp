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
#include <chrono>
#include <memory>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "avforge/dataset.hpp"
#include "avforge/error.hpp"
#include "avforge/evaluation.hpp"
#include "avforge/log.hpp"
#include "avforge/scorer.hpp"

namespace avforge {

struct RetryPolicy {
  int max_retries = 2;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::seconds timeout{60};
};

/// JSON-over-HTTP POST with bounded retries and exponential backoff.
/// Transport errors, non-200 statuses and bodies the caller's parser
/// rejects are all retried; the last failure is rethrown.
class JsonEndpoint {
 public:
  JsonEndpoint(const std::string& endpoint, RetryPolicy retry, std::ptrdiff_t max_in_flight = 4)
      : retry_(retry), slots_(std::make_shared<std::counting_semaphore<1024>>(std::clamp<std::ptrdiff_t>(max_in_flight, 1, 1024))) {
    const auto scheme = endpoint.find("://");
    const auto path_start = endpoint.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    origin_ = endpoint.substr(0, path_start);
    if (path_start != std::string::npos) prefix_ = endpoint.substr(path_start);
    while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    if (origin_.empty()) throw Error(ErrorKind::invalid_argument, "empty endpoint");
  }

  template <typename Parse>
  auto post(const std::string& path, const nlohmann::json& body, Parse&& parse) const
      -> decltype(parse(std::declval<const nlohmann::json&>())) {
    slots_->acquire();
    struct Release {
      std::counting_semaphore<1024>& s;
      ~Release() { s.release(); }
    } release{*slots_};

    ErrorKind last_kind = ErrorKind::remote_failed;
    std::string last_message;
    const std::string payload = body.dump();
    for (int attempt = 0; attempt <= retry_.max_retries; ++attempt) {
      if (attempt > 0) std::this_thread::sleep_for(retry_.initial_backoff * (1 << (attempt - 1)));
      httplib::Client client(origin_);
      client.set_connection_timeout(retry_.timeout);
      client.set_read_timeout(retry_.timeout);
      auto res = client.Post(prefix_ + path, payload, "application/json");
      if (!res) {
        last_kind = ErrorKind::remote_failed;
        last_message = "transport error: " + httplib::to_string(res.error());
      } else if (res->status != 200) {
        last_kind = ErrorKind::remote_failed;
        last_message = "HTTP " + std::to_string(res->status);
      } else {
        try {
          return parse(nlohmann::json::parse(res->body));
        } catch (const nlohmann::json::exception& e) {
          last_kind = ErrorKind::malformed_response;
          last_message = e.what();
        } catch (const Error& e) {
          last_kind = e.kind();
          last_message = e.what();
        }
      }
      logger().debug("POST {}{} attempt {} failed: {}", origin_, prefix_ + path, attempt + 1, last_message);
    }
    throw Error(last_kind, origin_ + prefix_ + path + " after " + std::to_string(retry_.max_retries + 1) +
                               " attempt(s): " + last_message);
  }

 private:
  RetryPolicy retry_;
  std::string origin_;
  std::string prefix_;
  std::shared_ptr<std::counting_semaphore<1024>> slots_;
};

/// Scores through POST {endpoint}/v1/score. The server's per-token
/// log-probs are kept verbatim; the mean is computed here.
class RemoteScorer : public Scorer {
 public:
  RemoteScorer(const std::string& endpoint, RetryPolicy retry = {}, std::ptrdiff_t max_in_flight = 4)
      : http_(endpoint, retry, max_in_flight) {}

  ScoredCompletion score(const std::string& prompt, const std::string& completion) const override {
    if (completion.empty()) throw Error(ErrorKind::empty_completion, "completion must be non-empty");
    return http_.post("/v1/score", {{"prompt", prompt}, {"completion", completion}},
                      [](const nlohmann::json& body) {
                        if (!body.is_object() || !body.contains("logprobs") || !body["logprobs"].is_array()) {
                          throw Error(ErrorKind::malformed_response, "missing \"logprobs\" array");
                        }
                        std::vector<double> logprobs;
                        for (const auto& v : body["logprobs"]) {
                          if (!v.is_number()) throw Error(ErrorKind::malformed_response, "non-numeric logprob");
                          logprobs.push_back(v.get<double>());
                        }
                        if (logprobs.empty()) throw Error(ErrorKind::malformed_response, "empty logprobs");
                        if (body.contains("token_count") &&
                            (!body["token_count"].is_number_integer() ||
                             body["token_count"].get<std::int64_t>() != static_cast<std::int64_t>(logprobs.size()))) {
                          throw Error(ErrorKind::malformed_response, "token_count disagrees with logprobs");
                        }
                        return ScoredCompletion::from_logprobs(std::move(logprobs));
                      });
  }

 private:
  JsonEndpoint http_;
};

inline ScoredCompletion score_remote(const std::string& endpoint, const std::string& prompt,
                                     const std::string& completion, RetryPolicy retry = {}) {
  return RemoteScorer(endpoint, retry).score(prompt, completion);
}

/// POST {endpoint}/v1/judge -> {"label": string}.
class RemoteJudge : public Judge {
 public:
  RemoteJudge(const std::string& endpoint, RetryPolicy retry = {}) : http_(endpoint, retry) {}

  std::string judge(const std::string& query, const std::string& response,
                    const std::vector<std::string>& labels) override {
    return http_.post("/v1/judge", {{"query", query}, {"response", response}, {"labels", labels}},
                      [](const nlohmann::json& body) {
                        if (!body.is_object() || !body.contains("label") || !body["label"].is_string()) {
                          throw Error(ErrorKind::malformed_response, "missing \"label\" string");
                        }
                        return body["label"].get<std::string>();
                      });
  }

 private:
  JsonEndpoint http_;
};

/// POST {endpoint}/v1/generate -> {"text": string}.
class RemoteTextGenerator : public TextGenerator {
 public:
  RemoteTextGenerator(const std::string& endpoint, RetryPolicy retry = {}) : http_(endpoint, retry) {}

  std::string complete(const std::string& prompt, int max_tokens) override {
    return http_.post("/v1/generate", {{"prompt", prompt}, {"max_tokens", max_tokens}},
                      [](const nlohmann::json& body) {
                        if (!body.is_object() || !body.contains("text") || !body["text"].is_string()) {
                          throw Error(ErrorKind::malformed_response, "missing \"text\" string");
                        }
                        return body["text"].get<std::string>();
                      });
  }

 private:
  JsonEndpoint http_;
};

}  // namespace avforge
