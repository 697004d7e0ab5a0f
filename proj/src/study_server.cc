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

#include <fstream>
#include <iterator>

#include "httplib.h"
#include "json.hpp"
#include "vpconv/error.h"

namespace vpconv {

namespace {

using json = nlohmann::json;

void Reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void ReplyError(httplib::Response& res, int status, const std::string& code,
                const std::string& reason) {
  Reply(res, status, {{"code", code}, {"reason", reason}});
}

int StatusFor(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kMalformed:
      return 400;
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kFailedPrecondition:
      return 409;
    default:
      return 500;
  }
}

// Runs a handler, turning exceptions into structured error replies.
template <typename F>
httplib::Server::Handler Guard(F f) {
  return [f](const httplib::Request& req, httplib::Response& res) {
    try {
      f(req, res);
    } catch (const Error& e) {
      ReplyError(res, StatusFor(e.code()), std::string(ErrorCodeName(e.code())), e.what());
    } catch (const json::exception& e) {
      ReplyError(res, 400, "invalid_argument", std::string("bad JSON body: ") + e.what());
    } catch (const std::exception& e) {
      ReplyError(res, 500, "internal", e.what());
    }
  };
}

json Body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  json j = json::parse(req.body);
  if (!j.is_object()) throw Error(ErrorCode::kInvalidArgument, "body must be a JSON object");
  return j;
}

bool RequiredBool(const json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_boolean()) {
    throw Error(ErrorCode::kInvalidArgument, std::string("'") + key + "' must be a boolean");
  }
  return j.at(key).get<bool>();
}

json QuestionsJson(const QuestionSet& q) {
  auto one = [](const char* key, const Question& question) {
    return json{{"id", key},
                {"prompt", question.prompt},
                {"options", {question.positive, question.negative}},
                {"comment_required_on", question.negative_requires_comment
                                            ? json(question.negative)
                                            : json(nullptr)}};
  };
  return json::array({one("q1_rhythm", q.q1_rhythm), one("q2_timbre", q.q2_timbre),
                      one("q3_naturalness", q.q3_naturalness)});
}

}  // namespace

StudyServer::StudyServer(StudyService& service)
    : service_(service), server_(std::make_unique<httplib::Server>()) {
  Routes();
}

StudyServer::~StudyServer() { Stop(); }

void StudyServer::Routes() {
  httplib::Server& s = *server_;

  s.Post("/api/studies", Guard([this](const httplib::Request& req, httplib::Response& res) {
    const StudyConfig cfg = StudyConfigFromJson(Body(req));
    const std::string id = service_.CreateStudy(cfg);
    Reply(res, 201, {{"study_id", id}, {"pairs_per_participant", cfg.pairs_per_participant()}});
  }));

  s.Post(R"(/api/studies/([0-9a-f]+)/participants)",
         Guard([this](const httplib::Request& req, httplib::Response& res) {
           const json body = Body(req);
           std::optional<std::uint64_t> seed;
           if (body.contains("seed")) seed = body.at("seed").get<std::uint64_t>();
           const std::string study = req.matches[1];
           const std::string id = service_.RegisterParticipant(study, seed);
           Reply(res, 201, {{"participant", id},
                            {"total", service_.Config(study).pairs_per_participant()}});
         }));

  s.Get(R"(/api/studies/([0-9a-f]+)/trials/next)",
        Guard([this](const httplib::Request& req, httplib::Response& res) {
          const std::string study = req.matches[1];
          if (!req.has_param("participant")) {
            throw Error(ErrorCode::kInvalidArgument, "missing 'participant' query parameter");
          }
          const auto trial = service_.NextTrial(study, req.get_param_value("participant"));
          if (!trial.has_value()) {
            Reply(res, 200, {{"complete", true}});
            return;
          }
          Reply(res, 200,
                {{"complete", false},
                 {"trial",
                  {{"trial_id", trial->trial_id},
                   {"index", trial->index},
                   {"total", trial->total},
                   {"source1_url", trial->source1_url},
                   {"source2_url", trial->source2_url},
                   {"questions", QuestionsJson(service_.Questions(study))}}}});
        }));

  s.Post(R"(/api/trials/([0-9a-f]+)/playback-complete)",
         Guard([this](const httplib::Request& req, httplib::Response& res) {
           const json body = Body(req);
           if (!body.contains("source") || !body.at("source").is_number_integer()) {
             throw Error(ErrorCode::kInvalidArgument, "'source' must be 1 or 2");
           }
           service_.RecordPlaybackComplete(req.matches[1], body.at("source").get<int>());
           Reply(res, 200, {{"recorded", true}});
         }));

  s.Post(R"(/api/trials/([0-9a-f]+)/response)",
         Guard([this](const httplib::Request& req, httplib::Response& res) {
           const json body = Body(req);
           ResponseInput in;
           if (body.contains("participant")) in.participant = body.at("participant").get<std::string>();
           in.q1_rhythm = RequiredBool(body, "q1_rhythm");
           in.q2_timbre = RequiredBool(body, "q2_timbre");
           in.q3_naturalness = RequiredBool(body, "q3_naturalness");
           in.comment = body.value("comment", "");
           in.playback_complete = body.value("playback_complete", false);
           const SubmitResult result = service_.Submit(req.matches[1], in);
           if (!result.accepted) {
             ReplyError(res, 422, "rejected", result.reason);
             return;
           }
           Reply(res, 200, {{"accepted", true}});
         }));

  s.Get(R"(/api/studies/([0-9a-f]+)/stats)",
        Guard([this](const httplib::Request& req, httplib::Response& res) {
          Reply(res, 200, ToJson(service_.Stats(req.matches[1])));
        }));

  s.Get(R"(/api/studies/([0-9a-f]+)/export)",
        Guard([this](const httplib::Request& req, httplib::Response& res) {
          const std::string format =
              req.has_param("format") ? req.get_param_value("format") : "csv";
          const std::string body = service_.Export(req.matches[1], format);
          res.status = 200;
          res.set_content(body, format == "csv" ? "text/csv" : "application/x-ndjson");
        }));

  s.Get(R"(/audio/([0-9a-f]+)\.wav)",
        Guard([this](const httplib::Request& req, httplib::Response& res) {
          const auto path = service_.AudioPath(req.matches[1]);
          if (!path.has_value()) throw Error(ErrorCode::kNotFound, "unknown audio token");
          std::ifstream f(*path, std::ios::binary);
          if (!f) throw Error(ErrorCode::kNotFound, "audio file is missing");
          std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
          res.status = 200;
          res.set_content(std::move(data), "audio/wav");
        }));

  s.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (res.body.empty()) {
      ReplyError(res, res.status, res.status == 404 ? "not_found" : "error",
                 res.status == 404 ? "no such endpoint" : "request failed");
    }
  });
}

int StudyServer::Bind(const std::string& host, int port) {
  if (port == 0) {
    const int bound = server_->bind_to_any_port(host);
    if (bound < 0) throw Error(ErrorCode::kIo, "cannot bind " + host);
    return bound;
  }
  if (!server_->bind_to_port(host, port)) {
    throw Error(ErrorCode::kIo, "cannot bind " + host + ":" + std::to_string(port));
  }
  return port;
}

void StudyServer::Listen() { server_->listen_after_bind(); }

void StudyServer::Stop() {
  if (server_ != nullptr && server_->is_running()) server_->stop();
}

}  // namespace vpconv
