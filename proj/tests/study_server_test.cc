// Copyright 2026 The VPConv Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include "vpconv/study_server.h"

#include <gtest/gtest.h>

#include <set>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "test_util.h"
#include "vpconv/audio.h"

namespace vpconv {
namespace {

using ::vpconv::testing::Noise;
using ::vpconv::testing::TempDir;
using json = nlohmann::json;

class StudyServerTest : public ::testing::Test {
 protected:
  void SetUp() override {
    service_ = std::make_unique<StudyService>(data_.path() / "db", [] { return 1234; }, 1);
    server_ = std::make_unique<StudyServer>(*service_);
    port_ = server_->Bind("127.0.0.1", 0);
    thread_ = std::thread([this] { server_->Listen(); });
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    client_->set_connection_timeout(5);
    for (int i = 0; i < 100 && !client_->Get("/healthcheck"); ++i) {
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
  }

  void TearDown() override {
    server_->Stop();
    thread_.join();
  }

  json StudyJson(int cases = 9) {
    json j = {{"title", "t"}, {"systems", {"rave", "vq_rave"}}, {"confidence_level", 0.99},
              {"audio_root", (data_.path() / "audio").string()}};
    std::filesystem::create_directories(data_.path() / "audio");
    json cs = json::array();
    for (int c = 0; c < cases; ++c) {
      const std::string id = "case" + std::to_string(c);
      WriteWav(data_.path() / "audio" / (id + "_drums.wav"), Noise(100, 16000, c));
      WriteWav(data_.path() / "audio" / (id + "_rave.wav"), Noise(100, 16000, 100 + c));
      WriteWav(data_.path() / "audio" / (id + "_vq.wav"), Noise(100, 16000, 200 + c));
      cs.push_back({{"id", id},
                    {"source", id + "_drums.wav"},
                    {"outputs", {{"rave", id + "_rave.wav"}, {"vq_rave", id + "_vq.wav"}}}});
    }
    j["cases"] = cs;
    return j;
  }

  json Post(const std::string& path, const json& body, int expected) {
    auto res = client_->Post(path, body.dump(), "application/json");
    EXPECT_TRUE(res) << path;
    if (!res) return json();
    EXPECT_EQ(res->status, expected) << path << " " << res->body;
    return json::parse(res->body);
  }

  json Get(const std::string& path, int expected) {
    auto res = client_->Get(path);
    EXPECT_TRUE(res) << path;
    if (!res) return json();
    EXPECT_EQ(res->status, expected) << path << " " << res->body;
    return json::parse(res->body);
  }

  TempDir data_{"server"};
  std::unique_ptr<StudyService> service_;
  std::unique_ptr<StudyServer> server_;
  std::unique_ptr<httplib::Client> client_;
  std::thread thread_;
  int port_ = 0;
};

TEST_F(StudyServerTest, FullSessionRoundTrip) {
  const json created = Post("/api/studies", StudyJson(), 201);
  EXPECT_EQ(created["pairs_per_participant"], 18);
  const std::string study = created["study_id"];
  const json reg = Post("/api/studies/" + study + "/participants", {{"seed", 3}}, 201);
  EXPECT_EQ(reg["total"], 18);
  const std::string p = reg["participant"];

  std::set<std::string> trials;
  int positives = 0;
  for (int i = 0; i < 18; ++i) {
    const json next = Get("/api/studies/" + study + "/trials/next?participant=" + p, 200);
    ASSERT_FALSE(next["complete"].get<bool>());
    const json& t = next["trial"];
    EXPECT_EQ(t["index"], i);
    EXPECT_EQ(t["questions"].size(), 3u);
    EXPECT_EQ(t.dump().find("rave"), std::string::npos);
    const std::string tid = t["trial_id"];
    trials.insert(tid);
    auto audio = client_->Get(t["source1_url"].get<std::string>());
    ASSERT_TRUE(audio);
    EXPECT_EQ(audio->status, 200);
    EXPECT_EQ(audio->get_header_value("Content-Type"), "audio/wav");
    EXPECT_EQ(audio->body.substr(0, 4), "RIFF");

    json answer = {{"participant", p}, {"q1_rhythm", true}, {"q2_timbre", i % 2 == 0},
                   {"q3_naturalness", true}, {"comment", i % 2 == 0 ? "" : "mixed"},
                   {"playback_complete", true}};
    const json early = Post("/api/trials/" + tid + "/response", answer, 422);
    EXPECT_EQ(early["reason"], kRejectPlayback);
    Post("/api/trials/" + tid + "/playback-complete", {{"source", 1}}, 200);
    Post("/api/trials/" + tid + "/playback-complete", {{"source", 2}}, 200);
    EXPECT_EQ(Post("/api/trials/" + tid + "/response", answer, 200)["accepted"], true);
    EXPECT_EQ(Post("/api/trials/" + tid + "/response", answer, 422)["reason"], kRejectDuplicate);
    positives += i % 2 == 0;
  }
  EXPECT_EQ(trials.size(), 18u);
  EXPECT_TRUE(Get("/api/studies/" + study + "/trials/next?participant=" + p, 200)["complete"]
                  .get<bool>());

  const json stats = Get("/api/studies/" + study + "/stats", 200);
  ASSERT_EQ(stats["systems"].size(), 2u);
  int q2 = 0;
  for (const json& s : stats["systems"]) {
    EXPECT_EQ(s["responses"], 9);
    EXPECT_EQ(s["criteria"][0]["successes"], 9);
    EXPECT_EQ(s["criteria"][0]["mean"], 1.0);
    q2 += s["criteria"][1]["successes"].get<int>();
  }
  EXPECT_EQ(q2, positives);

  auto csv = client_->Get("/api/studies/" + study + "/export?format=csv");
  ASSERT_TRUE(csv);
  EXPECT_EQ(csv->status, 200);
  EXPECT_EQ(ParseCsvExport(csv->body).size(), 18u);
  auto jsonl = client_->Get("/api/studies/" + study + "/export?format=jsonl");
  ASSERT_TRUE(jsonl);
  const auto parsed = ParseJsonlExport(jsonl->body);
  EXPECT_EQ(ToJson(ComputeStats(parsed, {"rave", "vq_rave"}, 0.99)), stats);
}

TEST_F(StudyServerTest, CommentRequiredOverHttp) {
  const std::string study = Post("/api/studies", StudyJson(2), 201)["study_id"];
  const std::string p = Post("/api/studies/" + study + "/participants", json::object(), 201)["participant"];
  const std::string tid =
      Get("/api/studies/" + study + "/trials/next?participant=" + p, 200)["trial"]["trial_id"];
  Post("/api/trials/" + tid + "/playback-complete", {{"source", 1}}, 200);
  Post("/api/trials/" + tid + "/playback-complete", {{"source", 2}}, 200);
  json answer = {{"q1_rhythm", true}, {"q2_timbre", true}, {"q3_naturalness", false},
                 {"playback_complete", true}};
  EXPECT_EQ(Post("/api/trials/" + tid + "/response", answer, 422)["reason"], kRejectComment);
  answer["comment"] = "still drum-like";
  EXPECT_EQ(Post("/api/trials/" + tid + "/response", answer, 200)["accepted"], true);
}

TEST_F(StudyServerTest, StructuredErrors) {
  const json bad = Post("/api/studies", {{"systems", json::array()}}, 400);
  EXPECT_EQ(bad["code"], "invalid_argument");
  EXPECT_FALSE(bad["reason"].get<std::string>().empty());
  EXPECT_EQ(Post("/api/studies/abc123/participants", json::object(), 404)["code"], "not_found");
  const std::string study = Post("/api/studies", StudyJson(2), 201)["study_id"];
  EXPECT_EQ(Get("/api/studies/" + study + "/trials/next", 400)["code"], "invalid_argument");
  EXPECT_EQ(Get("/api/studies/" + study + "/trials/next?participant=ff", 404)["code"],
            "not_found");
  EXPECT_EQ(Get("/api/studies/" + study + "/stats", 409)["code"], "failed_precondition");
  EXPECT_EQ(Get("/api/studies/" + study + "/export?format=xml", 400)["code"],
            "invalid_argument");
  EXPECT_EQ(Get("/audio/0123abcd.wav", 404)["code"], "not_found");
  EXPECT_EQ(Get("/no/such/route", 404)["code"], "not_found");
  EXPECT_EQ(Post("/api/trials/ab/playback-complete", {{"source", "x"}}, 400)["code"],
            "invalid_argument");
  auto res = client_->Post("/api/studies", "{nope", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(json::parse(res->body)["code"], "invalid_argument");
  const json missing = Post("/api/trials/ab/response", {{"q1_rhythm", true}}, 400);
  EXPECT_EQ(missing["code"], "invalid_argument");
}

}  // namespace
}  // namespace vpconv
