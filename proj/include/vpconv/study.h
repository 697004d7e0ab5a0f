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

#ifndef VPCONV_STUDY_H_
#define VPCONV_STUDY_H_

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "vpconv/stats.h"

namespace vpconv {

struct Question {
  std::string prompt;
  // Answer labels: `positive` scores 1, `negative` scores 0.
  std::string positive;
  std::string negative;
  bool negative_requires_comment = false;
};

// Texts are configuration; only the scoring polarity is fixed.
struct QuestionSet {
  Question q1_rhythm{"Does Source 2 change the rhythm of Source 1 in a way that was not intended?",
                     "No unintended change", "Rhythm changed", false};
  Question q2_timbre{"Does each drum sound in Source 1 map to one consistent vocal sound in Source 2?",
                     "Mapping consistent", "None", true};
  Question q3_naturalness{"Does Source 2 sound closer to vocal percussion or to drums?",
                          "Closer to VP", "Closer to drum", true};
};

struct StudyCase {
  std::string id;
  // Paths relative to audio_root.
  std::string source;
  std::map<std::string, std::string> outputs;  // system -> converted audio
};

struct StudyConfig {
  std::string title;
  std::vector<std::string> systems;
  std::vector<StudyCase> cases;
  double confidence_level = 0.99;
  std::filesystem::path audio_root;
  QuestionSet questions;

  int pairs_per_participant() const {
    return static_cast<int>(systems.size() * cases.size());
  }
  // Throws kInvalidArgument: no systems or cases, duplicate names, a case
  // missing an output for some system, or confidence outside (0, 1).
  void Validate() const;
};

nlohmann::json ToJson(const StudyConfig& cfg);
StudyConfig StudyConfigFromJson(const nlohmann::json& j);

// What the client sees; the system name is deliberately absent.
struct TrialDescriptor {
  std::string trial_id;
  int index = 0;  // 0-based position in the participant's sequence
  int total = 0;
  std::string source1_url;
  std::string source2_url;
};

struct ResponseInput {
  std::optional<std::string> participant;
  bool q1_rhythm = false;
  bool q2_timbre = false;
  bool q3_naturalness = false;
  std::string comment;
  bool playback_complete = false;
};

struct TrialResponse {
  std::string participant;
  std::string trial_id;
  std::string system;
  std::string test_case;
  bool q1_rhythm = false;
  bool q2_timbre = false;
  bool q3_naturalness = false;
  std::string comment;
  bool playback_complete = false;
  std::int64_t timestamp_ms = 0;
};

nlohmann::json ToJson(const TrialResponse& r);
TrialResponse TrialResponseFromJson(const nlohmann::json& j);

inline constexpr char kRejectPlayback[] = "playback incomplete";
inline constexpr char kRejectComment[] = "comment required";
inline constexpr char kRejectDuplicate[] = "duplicate";

struct SubmitResult {
  bool accepted = false;
  std::string reason;  // empty when accepted
};

// Rejection reason for a response, or empty. `duplicate` and `playback_ok`
// come from server-side state.
std::string ValidateResponse(const ResponseInput& input, bool duplicate, bool playback_ok);

struct SystemStats {
  std::string system;
  int responses = 0;
  std::vector<BinaryCriterionStats> criteria;  // q1_rhythm, q2_timbre, q3_naturalness
};

struct StudyStats {
  double confidence_level = 0.99;
  std::vector<SystemStats> systems;
  // E.g. systems that received no responses.
  std::vector<std::string> notes;
};

// Scores: q1 no unintended change, q2 consistent mapping, q3 closer to VP
// count 1; everything else 0. Throws kFailedPrecondition on no responses.
StudyStats ComputeStats(const std::vector<TrialResponse>& responses,
                        const std::vector<std::string>& systems, double confidence);
nlohmann::json ToJson(const StudyStats& stats);

// Header + one row per accepted response; RFC 4180 quoting.
std::string ExportCsv(const std::vector<TrialResponse>& responses);
// One response object per line, then {"type": "stats", ...}.
std::string ExportJsonl(const std::vector<TrialResponse>& responses, const StudyStats* stats);
std::vector<TrialResponse> ParseJsonlExport(const std::string& text);
std::vector<TrialResponse> ParseCsvExport(const std::string& text);

using Clock = std::function<std::int64_t()>;
// Wall clock in Unix milliseconds.
std::int64_t SystemClockMs();

// All studies, backed by one append-only JSON-lines log per study in
// data_dir. Thread-safe.
class StudyService {
 public:
  explicit StudyService(std::filesystem::path data_dir, Clock clock = SystemClockMs,
                        std::optional<std::uint64_t> id_seed = std::nullopt);
  ~StudyService();
  StudyService(const StudyService&) = delete;
  StudyService& operator=(const StudyService&) = delete;

  // Returns the new study id.
  std::string CreateStudy(const StudyConfig& config);
  std::vector<std::string> StudyIds() const;
  StudyConfig Config(const std::string& study) const;

  // `seed` fixes the participant's presentation order; random when absent.
  std::string RegisterParticipant(const std::string& study,
                                  std::optional<std::uint64_t> seed = std::nullopt);
  // The outstanding trial if one is unanswered, else the next one; nullopt
  // when the participant has answered everything.
  std::optional<TrialDescriptor> NextTrial(const std::string& study,
                                           const std::string& participant);
  // source is 1 (drums) or 2 (converted).
  void RecordPlaybackComplete(const std::string& trial_id, int source);
  SubmitResult Submit(const std::string& trial_id, const ResponseInput& input);

  std::vector<TrialResponse> Responses(const std::string& study) const;
  StudyStats Stats(const std::string& study) const;
  std::string Export(const std::string& study, const std::string& format) const;
  const QuestionSet& Questions(const std::string& study) const;

  // File behind an audio token, or nullopt for unknown tokens.
  std::optional<std::filesystem::path> AudioPath(const std::string& token) const;

 private:
  struct Trial {
    std::string id;
    std::string study;
    std::string participant;
    int index = 0;
    std::string system;
    std::string test_case;
    std::string token1;
    std::string token2;
    bool played1 = false;
    bool played2 = false;
    bool answered = false;
  };
  struct Participant {
    std::string id;
    std::uint64_t seed = 0;
    // Indices into the (system, case) pair list, shuffled.
    std::vector<int> order;
    int answered = 0;
    std::string outstanding;  // trial id
  };
  struct Study {
    std::string id;
    StudyConfig config;
    std::FILE* log = nullptr;
    std::map<std::string, Participant> participants;
    std::vector<TrialResponse> responses;
  };

  void Replay(const std::filesystem::path& log_path);
  void Apply(Study& study, const nlohmann::json& event);
  void Append(Study& study, const nlohmann::json& event);
  Study& FindStudy(const std::string& id);
  const Study& FindStudy(const std::string& id) const;
  std::string NewId();
  static std::vector<int> ShuffledOrder(int pairs, std::uint64_t seed);
  TrialDescriptor Describe(const Trial& trial, const Study& study) const;

  std::filesystem::path data_dir_;
  Clock clock_;
  mutable std::mutex mu_;
  std::mt19937_64 id_rng_;
  std::map<std::string, std::unique_ptr<Study>> studies_;
  std::map<std::string, Trial> trials_;
  std::map<std::string, std::string> audio_tokens_;  // token -> trial id
};

}  // namespace vpconv

#endif  // VPCONV_STUDY_H_
