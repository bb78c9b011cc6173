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

#include <gtest/gtest.h>

#include "avforge/remote.hpp"
#include "stub_server.hpp"

using namespace avforge;
using avforge::testing::StubServer;

namespace {

RetryPolicy fast(int retries) { return {retries, std::chrono::milliseconds(1), std::chrono::seconds(5)}; }

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorKind::io;
}

}  // namespace

TEST(RemoteScorer, MeanIsComputedClientSide) {
  nlohmann::json seen;
  StubServer server([&](const nlohmann::json& body, int, httplib::Response& res) {
    seen = body;
    StubServer::reply_json(res, {{"logprobs", {-1.0, -3.0}}, {"token_count", 2}});
  });
  const auto s = score_remote(server.url(), "prompt", "done", fast(0));
  EXPECT_EQ(s.token_logprobs, (std::vector<double>{-1.0, -3.0}));
  EXPECT_EQ(s.mean_logprob, -2.0);
  EXPECT_EQ(s.token_count, 2u);
  EXPECT_EQ(seen, (nlohmann::json{{"prompt", "prompt"}, {"completion", "done"}}));
  EXPECT_EQ(server.last_path(), "/v1/score");
}

TEST(RemoteScorer, EndpointPathPrefixIsKept) {
  StubServer server([](const nlohmann::json&, int, httplib::Response& res) {
    StubServer::reply_json(res, {{"logprobs", {-0.5}}});
  });
  score_remote(server.url() + "/api/", "p", "c", fast(0));
  EXPECT_EQ(server.last_path(), "/api/v1/score");
}

TEST(RemoteScorer, ServerErrorsExhaustRetries) {
  StubServer server([](const nlohmann::json&, int, httplib::Response& res) { res.status = 500; });
  EXPECT_EQ(kind_of([&] { score_remote(server.url(), "p", "c", fast(2)); }), ErrorKind::remote_failed);
  EXPECT_EQ(server.calls(), 3);
}

TEST(RemoteScorer, RecoversWhenALaterAttemptSucceeds) {
  StubServer server([](const nlohmann::json&, int call, httplib::Response& res) {
    if (call < 2) {
      res.status = 503;
      return;
    }
    StubServer::reply_json(res, {{"logprobs", {-4.0}}});
  });
  EXPECT_EQ(score_remote(server.url(), "p", "c", fast(2)).mean_logprob, -4.0);
  EXPECT_EQ(server.calls(), 3);
}

TEST(RemoteScorer, MalformedBodies) {
  const std::vector<std::string> bodies{
      R"({"logprobs":[]})", R"({"logprobs":"x"})", R"({"other":1})", R"({"logprobs":[-1,"a"]})",
      R"({"logprobs":[-1,-2],"token_count":3})", "not json"};
  for (const auto& text : bodies) {
    StubServer server([&](const nlohmann::json&, int, httplib::Response& res) {
      res.set_content(text, "application/json");
    });
    EXPECT_EQ(kind_of([&] { score_remote(server.url(), "p", "c", fast(1)); }), ErrorKind::malformed_response)
        << text;
    EXPECT_EQ(server.calls(), 2) << text;
  }
}

TEST(RemoteScorer, UnreachableEndpoint) {
  std::string url;
  {
    StubServer server([](const nlohmann::json&, int, httplib::Response&) {});
    url = server.url();
  }
  EXPECT_EQ(kind_of([&] { score_remote(url, "p", "c", fast(1)); }), ErrorKind::remote_failed);
}

TEST(RemoteScorer, EmptyCompletionIsRejectedLocally) {
  StubServer server([](const nlohmann::json&, int, httplib::Response&) {});
  EXPECT_EQ(kind_of([&] { score_remote(server.url(), "p", "", fast(0)); }), ErrorKind::empty_completion);
  EXPECT_EQ(server.calls(), 0);
}

TEST(RemoteScorer, DrivesPreferenceAccuracy) {
  // Longer completions score higher.
  StubServer server([](const nlohmann::json& body, int, httplib::Response& res) {
    const auto n = body["completion"].get<std::string>().size();
    StubServer::reply_json(res, {{"logprobs", {-10.0 / static_cast<double>(n)}}});
  });
  PreferenceRecord r;
  r.id = "x";
  r.domain = "legal";
  r.query = "q";
  r.responses = {"a long expert answer", "generic", "no"};
  const RemoteScorer scorer(server.url(), fast(0));
  const auto report = preference_accuracy(scorer, {r, r}, "legal", 2);
  EXPECT_EQ(report.fractions, (Fractions{1.0, 0.0, 0.0}));
  EXPECT_EQ(server.calls(), 6);
}

TEST(RemoteJudge, SendsLabelsAndReturnsVerdict) {
  nlohmann::json seen;
  StubServer server([&](const nlohmann::json& body, int, httplib::Response& res) {
    seen = body;
    StubServer::reply_json(res, {{"label", "generic"}});
  });
  RemoteJudge judge(server.url(), fast(0));
  EXPECT_EQ(judge.judge("q", "r", {"expert", "generic", "avoidance"}), "generic");
  EXPECT_EQ(seen["labels"], (nlohmann::json{"expert", "generic", "avoidance"}));
  EXPECT_EQ(server.last_path(), "/v1/judge");
}

TEST(RemoteJudge, FailuresBecomeSampleErrors) {
  StubServer server([](const nlohmann::json& body, int, httplib::Response& res) {
    const auto q = body["query"].get<std::string>();
    if (q == "q1") {
      res.status = 500;
    } else if (q == "q2") {
      StubServer::reply_json(res, {{"label", "meh"}});
    } else {
      StubServer::reply_json(res, {{"label", "expert"}});
    }
  });
  RemoteJudge judge(server.url(), fast(0));
  std::vector<PreferenceRecord> data(4);
  for (int i = 0; i < 4; ++i) data[i].id = data[i].query = "q" + std::to_string(i);
  const auto report = judge_accuracy(judge, [](const std::string& q) { return q; }, data);
  EXPECT_EQ(report.n, 2u);
  EXPECT_EQ(report.errors, 2u);
  EXPECT_EQ(report.fractions.exp, 1.0);
}

TEST(RemoteTextGenerator, ReturnsText) {
  StubServer server([](const nlohmann::json& body, int, httplib::Response& res) {
    StubServer::reply_json(res, {{"text", "echo " + std::to_string(body["max_tokens"].get<int>())}});
  });
  RemoteTextGenerator llm(server.url(), fast(0));
  EXPECT_EQ(llm.complete("hi", 12), "echo 12");
  EXPECT_EQ(server.last_path(), "/v1/generate");
}
