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

#ifndef VPCONV_STUDY_SERVER_H_
#define VPCONV_STUDY_SERVER_H_

#include <memory>
#include <string>

#include "vpconv/study.h"

namespace httplib {
class Server;
}

namespace vpconv {

// JSON HTTP front end for a StudyService:
//   POST /api/studies                              config -> {study_id, pairs_per_participant}
//   POST /api/studies/{id}/participants            {seed?} -> {participant, total}
//   GET  /api/studies/{id}/trials/next?participant=P
//   POST /api/trials/{tid}/playback-complete       {source: 1 | 2}
//   POST /api/trials/{tid}/response                answers -> {accepted} or 422
//   GET  /api/studies/{id}/stats
//   GET  /api/studies/{id}/export?format=csv|jsonl
//   GET  /audio/{token}.wav
// Errors are {"code": ..., "reason": ...}.
class StudyServer {
 public:
  explicit StudyServer(StudyService& service);
  ~StudyServer();

  // Binds and returns the port (an ephemeral one when port == 0).
  int Bind(const std::string& host, int port);
  // Blocks until Stop().
  void Listen();
  void Stop();

 private:
  void Routes();

  StudyService& service_;
  std::unique_ptr<httplib::Server> server_;
};

}  // namespace vpconv

#endif  // VPCONV_STUDY_SERVER_H_
