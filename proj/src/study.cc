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

#include "vpconv/study.h"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "vpconv/error.h"
#include "vpconv/random.h"

namespace vpconv {

namespace {

using json = nlohmann::json;

constexpr char kLogSuffix[] = ".jsonl";

json QuestionJson(const Question& q) {
  return {{"prompt", q.prompt},
          {"positive", q.positive},
          {"negative", q.negative},
          {"negative_requires_comment", q.negative_requires_comment}};
}

Question QuestionFromJson(const json& j, Question q) {
  q.prompt = j.value("prompt", q.prompt);
  q.positive = j.value("positive", q.positive);
  q.negative = j.value("negative", q.negative);
  q.negative_requires_comment = j.value("negative_requires_comment", q.negative_requires_comment);
  return q;
}

bool Blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c) != 0; });
}

std::string CsvField(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string Hex(std::uint64_t a, std::uint64_t b) {
  std::ostringstream s;
  s << std::hex << std::setfill('0') << std::setw(16) << a << std::setw(16) << b;
  return s.str();
}

}  // namespace

void StudyConfig::Validate() const {
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::kInvalidArgument, "study config: " + what);
  };
  if (systems.empty()) fail("no systems");
  if (cases.empty()) fail("no test cases");
  if (!(confidence_level > 0.0 && confidence_level < 1.0)) {
    fail("confidence_level must be in (0, 1)");
  }
  std::set<std::string> names(systems.begin(), systems.end());
  if (names.size() != systems.size()) fail("duplicate system name");
  std::set<std::string> ids;
  for (const StudyCase& c : cases) {
    if (!ids.insert(c.id).second) fail("duplicate test case '" + c.id + "'");
    if (c.source.empty()) fail("test case '" + c.id + "' has no source audio");
    for (const std::string& s : systems) {
      if (c.outputs.count(s) == 0) fail("test case '" + c.id + "' has no output for " + s);
    }
  }
}

json ToJson(const StudyConfig& cfg) {
  json cases = json::array();
  for (const StudyCase& c : cfg.cases) {
    cases.push_back({{"id", c.id}, {"source", c.source}, {"outputs", c.outputs}});
  }
  return {{"title", cfg.title},
          {"systems", cfg.systems},
          {"cases", cases},
          {"confidence_level", cfg.confidence_level},
          {"audio_root", cfg.audio_root.string()},
          {"questions",
           {{"q1_rhythm", QuestionJson(cfg.questions.q1_rhythm)},
            {"q2_timbre", QuestionJson(cfg.questions.q2_timbre)},
            {"q3_naturalness", QuestionJson(cfg.questions.q3_naturalness)}}}};
}

StudyConfig StudyConfigFromJson(const json& j) {
  StudyConfig cfg;
  try {
    cfg.title = j.value("title", "");
    cfg.systems = j.at("systems").get<std::vector<std::string>>();
    for (const json& c : j.at("cases")) {
      cfg.cases.push_back({c.at("id").get<std::string>(), c.at("source").get<std::string>(),
                           c.at("outputs").get<std::map<std::string, std::string>>()});
    }
    cfg.confidence_level = j.value("confidence_level", cfg.confidence_level);
    cfg.audio_root = j.value("audio_root", "");
    if (j.contains("questions")) {
      const json& q = j.at("questions");
      QuestionSet& qs = cfg.questions;
      if (q.contains("q1_rhythm")) qs.q1_rhythm = QuestionFromJson(q.at("q1_rhythm"), qs.q1_rhythm);
      if (q.contains("q2_timbre")) qs.q2_timbre = QuestionFromJson(q.at("q2_timbre"), qs.q2_timbre);
      if (q.contains("q3_naturalness")) {
        qs.q3_naturalness = QuestionFromJson(q.at("q3_naturalness"), qs.q3_naturalness);
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("study config: ") + e.what());
  }
  cfg.Validate();
  return cfg;
}

json ToJson(const TrialResponse& r) {
  return {{"participant", r.participant},
          {"trial_id", r.trial_id},
          {"system", r.system},
          {"test_case", r.test_case},
          {"q1_rhythm", r.q1_rhythm},
          {"q2_timbre", r.q2_timbre},
          {"q3_naturalness", r.q3_naturalness},
          {"comment", r.comment},
          {"playback_complete", r.playback_complete},
          {"timestamp_ms", r.timestamp_ms}};
}

TrialResponse TrialResponseFromJson(const json& j) {
  TrialResponse r;
  try {
    r.participant = j.at("participant").get<std::string>();
    r.trial_id = j.at("trial_id").get<std::string>();
    r.system = j.at("system").get<std::string>();
    r.test_case = j.at("test_case").get<std::string>();
    r.q1_rhythm = j.at("q1_rhythm").get<bool>();
    r.q2_timbre = j.at("q2_timbre").get<bool>();
    r.q3_naturalness = j.at("q3_naturalness").get<bool>();
    r.comment = j.at("comment").get<std::string>();
    r.playback_complete = j.at("playback_complete").get<bool>();
    r.timestamp_ms = j.at("timestamp_ms").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformed, std::string("response record: ") + e.what());
  }
  return r;
}

std::string ValidateResponse(const ResponseInput& input, bool duplicate, bool playback_ok) {
  if (duplicate) return kRejectDuplicate;
  if (!input.playback_complete || !playback_ok) return kRejectPlayback;
  if ((!input.q2_timbre || !input.q3_naturalness) && Blank(input.comment)) {
    return kRejectComment;
  }
  return "";
}

StudyStats ComputeStats(const std::vector<TrialResponse>& responses,
                        const std::vector<std::string>& systems, double confidence) {
  if (responses.empty()) {
    throw Error(ErrorCode::kFailedPrecondition, "no responses to summarize");
  }
  StudyStats stats;
  stats.confidence_level = confidence;
  std::vector<std::string> order = systems;
  for (const TrialResponse& r : responses) {
    if (std::find(order.begin(), order.end(), r.system) == order.end()) order.push_back(r.system);
  }
  for (const std::string& system : order) {
    int n = 0, k1 = 0, k2 = 0, k3 = 0;
    for (const TrialResponse& r : responses) {
      if (r.system != system) continue;
      ++n;
      k1 += r.q1_rhythm ? 1 : 0;
      k2 += r.q2_timbre ? 1 : 0;
      k3 += r.q3_naturalness ? 1 : 0;
    }
    if (n == 0) {
      stats.notes.push_back("system '" + system + "' has no responses");
      continue;
    }
    SystemStats s{system, n, {}};
    s.criteria.push_back(SummarizeCriterion("q1_rhythm", k1, n, confidence));
    s.criteria.push_back(SummarizeCriterion("q2_timbre", k2, n, confidence));
    s.criteria.push_back(SummarizeCriterion("q3_naturalness", k3, n, confidence));
    stats.systems.push_back(std::move(s));
  }
  return stats;
}

json ToJson(const StudyStats& stats) {
  json systems = json::array();
  for (const SystemStats& s : stats.systems) {
    json criteria = json::array();
    for (const BinaryCriterionStats& c : s.criteria) {
      criteria.push_back({{"criterion", c.criterion},
                          {"successes", c.successes},
                          {"total", c.total},
                          {"mean", c.mean},
                          {"ci_low", c.ci_low},
                          {"ci_high", c.ci_high},
                          {"significant_vs_chance", c.significant_vs_chance}});
    }
    systems.push_back({{"system", s.system}, {"responses", s.responses}, {"criteria", criteria}});
  }
  return {{"confidence_level", stats.confidence_level},
          {"systems", systems},
          {"notes", stats.notes}};
}

std::string ExportCsv(const std::vector<TrialResponse>& responses) {
  std::string out =
      "participant,trial_id,system,test_case,q1_rhythm,q2_timbre,q3_naturalness,comment,"
      "playback_complete,timestamp_ms\n";
  for (const TrialResponse& r : responses) {
    out += CsvField(r.participant) + ',' + CsvField(r.trial_id) + ',' + CsvField(r.system) +
           ',' + CsvField(r.test_case) + ',' + (r.q1_rhythm ? "1" : "0") + ',' +
           (r.q2_timbre ? "1" : "0") + ',' + (r.q3_naturalness ? "1" : "0") + ',' +
           CsvField(r.comment) + ',' + (r.playback_complete ? "1" : "0") + ',' +
           std::to_string(r.timestamp_ms) + '\n';
  }
  return out;
}

std::string ExportJsonl(const std::vector<TrialResponse>& responses, const StudyStats* stats) {
  std::string out;
  for (const TrialResponse& r : responses) {
    json j = ToJson(r);
    j["type"] = "response";
    out += j.dump() + '\n';
  }
  if (stats != nullptr) {
    json j = ToJson(*stats);
    j["type"] = "stats";
    out += j.dump() + '\n';
  }
  return out;
}

std::vector<TrialResponse> ParseJsonlExport(const std::string& text) {
  std::vector<TrialResponse> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (Blank(line)) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw Error(ErrorCode::kMalformed, std::string("export line: ") + e.what());
    }
    if (j.value("type", "") == "response") out.push_back(TrialResponseFromJson(j));
  }
  return out;
}

std::vector<TrialResponse> ParseCsvExport(const std::string& text) {
  std::vector<std::vector<std::string>> rows(1);
  std::string field;
  bool quoted = false;
  bool row_open = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      row_open = true;
    } else if (c == ',') {
      rows.back().push_back(std::move(field));
      field.clear();
      row_open = true;
    } else if (c == '\n') {
      rows.back().push_back(std::move(field));
      field.clear();
      rows.emplace_back();
      row_open = false;
    } else if (c != '\r') {
      field += c;
      row_open = true;
    }
  }
  if (quoted) throw Error(ErrorCode::kMalformed, "unterminated quote in CSV export");
  if (row_open) rows.back().push_back(std::move(field));
  if (rows.back().empty()) rows.pop_back();
  if (rows.empty()) throw Error(ErrorCode::kMalformed, "CSV export has no header");

  std::vector<TrialResponse> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != 10) {
      throw Error(ErrorCode::kMalformed, "CSV row " + std::to_string(i) + " has " +
                                             std::to_string(f.size()) + " fields, expected 10");
    }
    TrialResponse r;
    r.participant = f[0];
    r.trial_id = f[1];
    r.system = f[2];
    r.test_case = f[3];
    r.q1_rhythm = f[4] == "1";
    r.q2_timbre = f[5] == "1";
    r.q3_naturalness = f[6] == "1";
    r.comment = f[7];
    r.playback_complete = f[8] == "1";
    try {
      r.timestamp_ms = std::stoll(f[9]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::kMalformed, "CSV row " + std::to_string(i) + ": bad timestamp");
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::int64_t SystemClockMs() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

StudyService::StudyService(std::filesystem::path data_dir, Clock clock,
                           std::optional<std::uint64_t> id_seed)
    : data_dir_(std::move(data_dir)), clock_(std::move(clock)) {
  if (id_seed.has_value()) {
    id_rng_.seed(*id_seed);
  } else {
    std::random_device rd;
    id_rng_.seed((static_cast<std::uint64_t>(rd()) << 32) ^ rd());
  }
  std::error_code ec;
  std::filesystem::create_directories(data_dir_, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + data_dir_.string() + ": " + ec.message());
  std::vector<std::filesystem::path> logs;
  for (const auto& entry : std::filesystem::directory_iterator(data_dir_)) {
    if (entry.path().extension() == kLogSuffix) logs.push_back(entry.path());
  }
  std::sort(logs.begin(), logs.end());
  for (const auto& p : logs) Replay(p);
}

StudyService::~StudyService() {
  for (auto& [id, study] : studies_) {
    if (study->log != nullptr) std::fclose(study->log);
  }
}

std::string StudyService::NewId() { return Hex(id_rng_(), id_rng_()); }

std::vector<int> StudyService::ShuffledOrder(int pairs, std::uint64_t seed) {
  std::vector<int> order(static_cast<std::size_t>(pairs));
  for (int i = 0; i < pairs; ++i) order[i] = i;
  // Fisher-Yates with an explicit generator so the order is portable.
  std::mt19937_64 rng(MixSeed(seed));
  for (int i = pairs - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  return order;
}

void StudyService::Append(Study& study, const json& event) {
  const std::string line = event.dump() + '\n';
  if (std::fwrite(line.data(), 1, line.size(), study.log) != line.size() ||
      std::fflush(study.log) != 0 || ::fsync(fileno(study.log)) != 0) {
    throw Error(ErrorCode::kIo, "cannot append to the log of study " + study.id);
  }
}

void StudyService::Apply(Study& study, const json& e) {
  const std::string type = e.at("type").get<std::string>();
  if (type == "participant") {
    Participant p;
    p.id = e.at("id").get<std::string>();
    p.seed = e.at("seed").get<std::uint64_t>();
    p.order = ShuffledOrder(study.config.pairs_per_participant(), p.seed);
    study.participants.emplace(p.id, std::move(p));
  } else if (type == "trial") {
    Trial t;
    t.id = e.at("id").get<std::string>();
    t.study = study.id;
    t.participant = e.at("participant").get<std::string>();
    t.index = e.at("index").get<int>();
    t.system = e.at("system").get<std::string>();
    t.test_case = e.at("test_case").get<std::string>();
    t.token1 = e.at("token1").get<std::string>();
    t.token2 = e.at("token2").get<std::string>();
    study.participants.at(t.participant).outstanding = t.id;
    audio_tokens_[t.token1] = t.id;
    audio_tokens_[t.token2] = t.id;
    trials_.emplace(t.id, std::move(t));
  } else if (type == "playback") {
    Trial& t = trials_.at(e.at("trial").get<std::string>());
    (e.at("source").get<int>() == 1 ? t.played1 : t.played2) = true;
  } else if (type == "response") {
    TrialResponse r = TrialResponseFromJson(e.at("response"));
    Trial& t = trials_.at(r.trial_id);
    t.answered = true;
    Participant& p = study.participants.at(r.participant);
    ++p.answered;
    p.outstanding.clear();
    study.responses.push_back(std::move(r));
  } else {
    throw Error(ErrorCode::kMalformed, "unknown event type '" + type + "'");
  }
}

void StudyService::Replay(const std::filesystem::path& log_path) {
  std::ifstream in(log_path);
  if (!in) throw Error(ErrorCode::kIo, "cannot read " + log_path.string());
  auto study = std::make_unique<Study>();
  std::string line;
  bool first = true;
  int line_no = 0;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (Blank(line)) continue;
      const json e = json::parse(line);
      if (first) {
        if (e.value("type", "") != "study") {
          throw Error(ErrorCode::kMalformed, "log does not start with a study record");
        }
        study->id = e.at("id").get<std::string>();
        study->config = StudyConfigFromJson(e.at("config"));
        first = false;
        continue;
      }
      Apply(*study, e);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformed, log_path.string() + ":" + std::to_string(line_no) +
                                           ": " + e.what());
  } catch (const std::out_of_range&) {
    throw Error(ErrorCode::kMalformed, log_path.string() + ":" + std::to_string(line_no) +
                                           ": event refers to an unknown record");
  }
  if (first) return;
  study->log = std::fopen(log_path.c_str(), "a");
  if (study->log == nullptr) throw Error(ErrorCode::kIo, "cannot append to " + log_path.string());
  const std::string id = study->id;
  studies_.emplace(id, std::move(study));
}

StudyService::Study& StudyService::FindStudy(const std::string& id) {
  const auto it = studies_.find(id);
  if (it == studies_.end()) throw Error(ErrorCode::kNotFound, "unknown study '" + id + "'");
  return *it->second;
}

const StudyService::Study& StudyService::FindStudy(const std::string& id) const {
  const auto it = studies_.find(id);
  if (it == studies_.end()) throw Error(ErrorCode::kNotFound, "unknown study '" + id + "'");
  return *it->second;
}

std::string StudyService::CreateStudy(const StudyConfig& config) {
  config.Validate();
  std::lock_guard<std::mutex> lock(mu_);
  auto study = std::make_unique<Study>();
  study->id = NewId().substr(0, 12);
  study->config = config;
  const std::filesystem::path path = data_dir_ / (study->id + kLogSuffix);
  study->log = std::fopen(path.c_str(), "a");
  if (study->log == nullptr) throw Error(ErrorCode::kIo, "cannot create " + path.string());
  Append(*study, {{"type", "study"}, {"id", study->id}, {"config", ToJson(config)}});
  const std::string id = study->id;
  studies_.emplace(id, std::move(study));
  return id;
}

std::vector<std::string> StudyService::StudyIds() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<std::string> ids;
  for (const auto& [id, s] : studies_) ids.push_back(id);
  return ids;
}

StudyConfig StudyService::Config(const std::string& study) const {
  std::lock_guard<std::mutex> lock(mu_);
  return FindStudy(study).config;
}

const QuestionSet& StudyService::Questions(const std::string& study) const {
  std::lock_guard<std::mutex> lock(mu_);
  return FindStudy(study).config.questions;
}

std::string StudyService::RegisterParticipant(const std::string& study_id,
                                              std::optional<std::uint64_t> seed) {
  std::lock_guard<std::mutex> lock(mu_);
  Study& study = FindStudy(study_id);
  const std::string id = NewId();
  const json e = {{"type", "participant"}, {"id", id}, {"seed", seed.value_or(id_rng_())}};
  Append(study, e);
  Apply(study, e);
  return id;
}

TrialDescriptor StudyService::Describe(const Trial& trial, const Study& study) const {
  return {trial.id, trial.index, study.config.pairs_per_participant(),
          "/audio/" + trial.token1 + ".wav", "/audio/" + trial.token2 + ".wav"};
}

std::optional<TrialDescriptor> StudyService::NextTrial(const std::string& study_id,
                                                       const std::string& participant) {
  std::lock_guard<std::mutex> lock(mu_);
  Study& study = FindStudy(study_id);
  const auto it = study.participants.find(participant);
  if (it == study.participants.end()) {
    throw Error(ErrorCode::kNotFound, "unknown participant '" + participant + "'");
  }
  Participant& p = it->second;
  if (!p.outstanding.empty()) return Describe(trials_.at(p.outstanding), study);
  if (p.answered >= static_cast<int>(p.order.size())) return std::nullopt;

  const int pair = p.order[static_cast<std::size_t>(p.answered)];
  const int n_cases = static_cast<int>(study.config.cases.size());
  const json e = {{"type", "trial"},
                  {"id", NewId()},
                  {"participant", p.id},
                  {"index", p.answered},
                  {"system", study.config.systems[static_cast<std::size_t>(pair / n_cases)]},
                  {"test_case", study.config.cases[static_cast<std::size_t>(pair % n_cases)].id},
                  {"token1", NewId()},
                  {"token2", NewId()}};
  Append(study, e);
  Apply(study, e);
  return Describe(trials_.at(p.outstanding), study);
}

void StudyService::RecordPlaybackComplete(const std::string& trial_id, int source) {
  if (source != 1 && source != 2) {
    throw Error(ErrorCode::kInvalidArgument, "playback source must be 1 or 2");
  }
  std::lock_guard<std::mutex> lock(mu_);
  const auto it = trials_.find(trial_id);
  if (it == trials_.end()) throw Error(ErrorCode::kNotFound, "unknown trial '" + trial_id + "'");
  Study& study = FindStudy(it->second.study);
  const json e = {{"type", "playback"}, {"trial", trial_id}, {"source", source}};
  Append(study, e);
  Apply(study, e);
}

SubmitResult StudyService::Submit(const std::string& trial_id, const ResponseInput& input) {
  std::lock_guard<std::mutex> lock(mu_);
  const auto it = trials_.find(trial_id);
  if (it == trials_.end()) throw Error(ErrorCode::kNotFound, "unknown trial '" + trial_id + "'");
  const Trial& t = it->second;
  if (input.participant.has_value() && *input.participant != t.participant) {
    throw Error(ErrorCode::kInvalidArgument, "trial was not issued to this participant");
  }
  const std::string reason = ValidateResponse(input, t.answered, t.played1 && t.played2);
  if (!reason.empty()) return {false, reason};

  Study& study = FindStudy(t.study);
  TrialResponse r;
  r.participant = t.participant;
  r.trial_id = t.id;
  r.system = t.system;
  r.test_case = t.test_case;
  r.q1_rhythm = input.q1_rhythm;
  r.q2_timbre = input.q2_timbre;
  r.q3_naturalness = input.q3_naturalness;
  r.comment = input.comment;
  r.playback_complete = true;
  r.timestamp_ms = clock_();
  const json e = {{"type", "response"}, {"response", ToJson(r)}};
  Append(study, e);
  Apply(study, e);
  return {true, ""};
}

std::vector<TrialResponse> StudyService::Responses(const std::string& study) const {
  std::lock_guard<std::mutex> lock(mu_);
  return FindStudy(study).responses;
}

StudyStats StudyService::Stats(const std::string& study_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  const Study& study = FindStudy(study_id);
  return ComputeStats(study.responses, study.config.systems, study.config.confidence_level);
}

std::string StudyService::Export(const std::string& study_id, const std::string& format) const {
  std::lock_guard<std::mutex> lock(mu_);
  const Study& study = FindStudy(study_id);
  if (format == "csv") return ExportCsv(study.responses);
  if (format == "jsonl") {
    if (study.responses.empty()) return ExportJsonl(study.responses, nullptr);
    const StudyStats stats =
        ComputeStats(study.responses, study.config.systems, study.config.confidence_level);
    return ExportJsonl(study.responses, &stats);
  }
  throw Error(ErrorCode::kInvalidArgument, "export format must be csv or jsonl");
}

std::optional<std::filesystem::path> StudyService::AudioPath(const std::string& token) const {
  std::lock_guard<std::mutex> lock(mu_);
  const auto it = audio_tokens_.find(token);
  if (it == audio_tokens_.end()) return std::nullopt;
  const Trial& t = trials_.at(it->second);
  const StudyConfig& cfg = FindStudy(t.study).config;
  for (const StudyCase& c : cfg.cases) {
    if (c.id != t.test_case) continue;
    const std::string& rel = token == t.token1 ? c.source : c.outputs.at(t.system);
    return cfg.audio_root / rel;
  }
  return std::nullopt;
}

}  // namespace vpconv
