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

#include "vpconv/cli.h"

#include <chrono>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "vpconv/converter.h"
#include "vpconv/error.h"
#include "vpconv/metrics.h"
#include "vpconv/patterns.h"
#include "vpconv/preprocess.h"
#include "vpconv/stats.h"
#include "vpconv/study.h"
#include "vpconv/study_server.h"
#include "vpconv/trainer.h"

namespace vpconv {

namespace {

using json = nlohmann::json;

json ReadJsonFile(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformed, path.string() + ": " + e.what());
  }
}

void WriteText(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  f << text;
  if (!f) throw Error(ErrorCode::kIo, "cannot write " + path.string());
}

std::string ScalarString(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  return v.dump();
}

// Fills options of `sub` that were not given on the command line from the
// config file: top-level scalar keys first, then the subcommand's section.
// Keys use the long option name with '-' or '_'.
void ApplyConfig(CLI::App* sub, const json& config) {
  std::map<std::string, json> values;
  for (const auto& [k, v] : config.items()) {
    if (!v.is_object()) values[k] = v;
  }
  if (config.contains(sub->get_name()) && config.at(sub->get_name()).is_object()) {
    for (const auto& [k, v] : config.at(sub->get_name()).items()) values[k] = v;
  }
  for (CLI::Option* opt : sub->get_options()) {
    if (opt->count() > 0 || opt->get_lnames().empty()) continue;
    const std::string name = opt->get_lnames().front();
    std::string underscored = name;
    std::replace(underscored.begin(), underscored.end(), '-', '_');
    auto it = values.find(name);
    if (it == values.end()) it = values.find(underscored);
    if (it == values.end() || it->second.is_object()) continue;
    if (it->second.is_array()) {
      for (const json& e : it->second) opt->add_result(ScalarString(e));
    } else {
      opt->add_result(ScalarString(it->second));
    }
    opt->run_callback();
  }
}

void Require(bool ok, const std::string& what) {
  if (!ok) throw Error(ErrorCode::kInvalidArgument, what);
}

json TextureJson(const TextureReport& t) {
  if (!t.defined) {
    return {{"defined", false}, {"aperiodicity", nullptr}, {"flatness", nullptr},
            {"voiced_fraction", nullptr}};
  }
  return {{"defined", true},
          {"aperiodicity", t.aperiodicity},
          {"flatness", t.flatness},
          {"voiced_fraction", t.voiced_fraction}};
}

struct Options {
  std::filesystem::path config;
  std::uint64_t seed = 0;

  // preprocess
  std::filesystem::path manifest;
  std::filesystem::path out;
  int rate = kToySampleRate;
  double threshold_db = -60.0;
  double min_silence = 1.0;
  // 0: 65536, or 8192 for synthetic toy training.
  std::size_t chunk = 0;

  // train
  int stage = 1;
  std::string mode = "gaussian";
  std::string preset = "toy";
  std::filesystem::path data;
  int synthetic = 0;
  std::filesystem::path from;
  std::filesystem::path resume;
  std::int64_t steps = 2000;
  int batch = 8;
  std::int64_t checkpoint_every = 500;
  int log_every = 50;
  bool no_augment = false;

  // convert
  std::filesystem::path in;
  std::filesystem::path checkpoint;
  bool no_gain_match = false;

  // patterns
  std::filesystem::path kit;

  // metrics
  std::filesystem::path converted;

  // stats
  int k = -1;
  int n = -1;
  double confidence = 0.99;
  std::filesystem::path export_file;

  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path study;
};

int RunPreprocess(const Options& o, std::ostream& out) {
  Require(!o.manifest.empty(), "preprocess needs --manifest");
  Require(!o.out.empty(), "preprocess needs --out");
  SegmentationConfig cfg;
  cfg.silence_threshold_db = o.threshold_db;
  cfg.min_silence_seconds = o.min_silence;
  cfg.chunk_length = o.chunk > 0 ? o.chunk : 65536;
  const auto entries = ReadCorpusManifest(o.manifest);
  const auto records =
      PreprocessCorpus(entries, o.manifest.parent_path(), o.out, cfg, o.rate);
  std::map<std::string, int> per_split;
  for (const auto& r : records) ++per_split[r.split];
  out << json({{"chunks", records.size()}, {"per_split", per_split}, {"out", o.out.string()}})
             .dump()
      << '\n';
  return kExitOk;
}

int RunTrain(const Options& o, const json& config, std::ostream& out) {
  Require(o.stage == 1 || o.stage == 2, "--stage must be 1 or 2");
  Require(!o.out.empty(), "train needs --out");
  std::filesystem::create_directories(o.out);
  const json section = config.value("train", json::object());

  auto apply_overrides = [&](TrainConfig cfg) {
    if (section.contains("trainer")) cfg = TrainConfigFromJson(section.at("trainer"), cfg);
    cfg.stage = o.stage;
    cfg.total_steps = o.steps;
    cfg.batch_size = o.batch;
    cfg.seed = o.seed;
    cfg.checkpoint_every = o.checkpoint_every;
    cfg.checkpoint_dir = o.out;
    cfg.loss_log = o.out / ("loss_stage" + std::to_string(o.stage) + ".csv");
    if (o.no_augment) cfg.augment = false;
    cfg.Validate();
    return cfg;
  };

  const auto t0 = std::chrono::steady_clock::now();
  auto progress = [&](const StepLog& log) {
    if (o.log_every > 0 && log.step % o.log_every == 0) {
      const double secs =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      out << "stage " << log.stage << " step " << log.step << " total " << log.total
          << " spectral " << log.spectral << " smoothed " << log.smoothed_spectral
          << (log.clipped ? " clipped" : "") << " (" << std::fixed << std::setprecision(1)
          << secs << " s)" << std::defaultfloat << std::setprecision(6) << '\n';
      out.flush();
    }
  };

  auto load_corpus = [&](const ModelConfig& mc) {
    if (o.synthetic > 0) {
      const std::size_t chunk = o.chunk > 0 ? o.chunk : (o.preset == "toy" ? 8192 : 65536);
      return SyntheticVpCorpus(o.synthetic, chunk, mc.sample_rate, o.seed);
    }
    Require(!o.data.empty(), "train needs --data (preprocessed directory) or --synthetic N");
    auto chunks = LoadChunks(o.data, "train");
    for (const auto& c : chunks) {
      Require(c.sample_rate() == mc.sample_rate,
              "chunk sample rate does not match the model configuration");
    }
    return chunks;
  };

  std::filesystem::path final_path = o.out / ("stage" + std::to_string(o.stage) + ".ckpt");
  if (!o.resume.empty()) {
    LoadedCheckpoint loaded = LoadCheckpoint(o.resume);
    Require(loaded.state.stage == o.stage, "--resume checkpoint is from another stage");
    const TrainConfig cfg = apply_overrides(loaded.config);
    const auto corpus = load_corpus(loaded.state.model().config());
    RunTraining(loaded.state, corpus, cfg, progress);
    SaveCheckpoint(final_path, loaded.state, cfg);
  } else if (o.stage == 1) {
    ModelConfig mc = o.preset == "toy" ? ModelConfig::Toy() : ModelConfig();
    Require(o.preset == "toy" || o.preset == "full", "--preset must be toy or full");
    if (section.contains("model")) {
      json m = ToJson(mc);
      m.update(section.at("model"));
      mc = ModelConfigFromJson(m);
    }
    mc.latent_mode = ParseLatentMode(o.mode);
    mc.Validate();
    const TrainConfig cfg = apply_overrides(TrainConfig{});
    const auto corpus = load_corpus(mc);
    TrainState state = TrainStage1(corpus, cfg, mc, progress);
    SaveCheckpoint(final_path, state, cfg);
  } else {
    Require(!o.from.empty(), "stage 2 needs --from <stage-1 checkpoint>");
    LoadedCheckpoint loaded = LoadCheckpoint(o.from);
    Require(loaded.state.stage == 1, "--from must be a stage-1 checkpoint");
    const TrainConfig cfg = apply_overrides(loaded.config);
    const auto corpus = load_corpus(loaded.state.model().config());
    TrainState state = TrainStage2(std::move(loaded.state), corpus, cfg, progress);
    SaveCheckpoint(final_path, state, cfg);
  }
  out << "wrote " << final_path.string() << '\n';
  return kExitOk;
}

int RunConvert(const Options& o, const CLI::App& sub, std::ostream& out) {
  Require(!o.in.empty() && !o.out.empty() && !o.checkpoint.empty(),
          "convert needs --in, --out and --checkpoint");
  ConvertOptions opts;
  if (sub.get_option("--mode")->count() > 0) opts.mode = ParseLatentMode(o.mode);
  opts.gain_match = !o.no_gain_match;
  const AudioBuffer drums = ReadWav(o.in);
  const AudioBuffer vp = ConvertFile(drums, o.checkpoint, opts);
  WriteWav(o.out, vp);
  out << json({{"in", o.in.string()},
               {"out", o.out.string()},
               {"input_samples", drums.size()},
               {"output_samples", vp.size()},
               {"sample_rate", vp.sample_rate()}})
             .dump()
      << '\n';
  return kExitOk;
}

int RunPatterns(const Options& o, std::ostream& out) {
  Require(!o.out.empty(), "patterns needs --out");
  const DrumKit kit = o.kit.empty() ? SynthesizedKit() : LoadKit(o.kit);
  const auto cases = GenerateTestSet(kit, o.out);
  json files = json::array();
  for (const auto& c : cases) {
    files.push_back({{"file", c.file}, {"base_length", c.base_length}, {"length", c.length}});
  }
  out << json({{"cases", cases.size()}, {"files", files}}).dump() << '\n';
  return kExitOk;
}

int RunMetrics(const Options& o, std::ostream& out) {
  Require(!o.manifest.empty(), "metrics needs --manifest (test-set manifest.json)");
  const auto cases = ReadTestSetManifest(o.manifest);
  const std::filesystem::path dir = o.converted.empty() ? o.manifest.parent_path() : o.converted;
  json report = json::array();
  for (const TestCase& c : cases) {
    const CaseMetrics m = EvaluateCase(c, ReadWav(dir / c.file));
    report.push_back({{"file", m.file},
                      {"rhythmic_f", m.rhythmic_f},
                      {"reference_onsets", m.reference_onsets},
                      {"detected_onsets", m.detected_onsets},
                      {"timbral_consistency", m.timbral_consistency.has_value()
                                                  ? json(*m.timbral_consistency)
                                                  : json(nullptr)},
                      {"texture", TextureJson(m.texture)}});
  }
  const std::string text = json({{"cases", report}}).dump(2) + '\n';
  if (!o.out.empty()) {
    WriteText(o.out, text);
  } else {
    out << text;
  }
  return kExitOk;
}

int RunStats(const Options& o, std::ostream& out) {
  if (!o.export_file.empty()) {
    std::ifstream in(o.export_file);
    if (!in) throw Error(ErrorCode::kIo, "cannot open " + o.export_file.string());
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto responses = o.export_file.extension() == ".csv" ? ParseCsvExport(text)
                                                               : ParseJsonlExport(text);
    out << ToJson(ComputeStats(responses, {}, o.confidence)).dump(2) << '\n';
    return kExitOk;
  }
  Require(o.k >= 0 && o.n >= 1, "stats needs --k and --n (or --export)");
  const BinaryCriterionStats s = SummarizeCriterion("k_of_n", o.k, o.n, o.confidence);
  out << std::setprecision(10) << "[" << s.ci_low << ", " << s.ci_high << "]\n";
  out << json({{"k", s.successes},
               {"n", s.total},
               {"confidence", o.confidence},
               {"mean", s.mean},
               {"ci_low", s.ci_low},
               {"ci_high", s.ci_high},
               {"significant_vs_chance", s.significant_vs_chance}})
             .dump()
      << '\n';
  return kExitOk;
}

int RunServe(const Options& o, std::ostream& out) {
  Require(!o.data.empty(), "serve needs --data (study log directory)");
  StudyService service(o.data);
  if (!o.study.empty()) {
    const std::string id = service.CreateStudy(StudyConfigFromJson(ReadJsonFile(o.study)));
    out << "created study " << id << '\n';
  }
  for (const std::string& id : service.StudyIds()) out << "study " << id << '\n';
  StudyServer server(service);
  const int port = server.Bind(o.host, o.port);
  out << "listening on http://" << o.host << ":" << port << '\n';
  out.flush();
  server.Listen();
  return kExitOk;
}

}  // namespace

int Dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Drum-to-vocal-percussion conversion toolkit", "vpconv"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--config", o.config,
                 "JSON config; values fill options not given on the command line "
                 "(flags > config file > defaults)");

  auto add_seed = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Random seed")->capture_default_str();
  };

  CLI::App* pre = app.add_subcommand("preprocess", "Segment and chunk a recording corpus");
  pre->add_option("--manifest", o.manifest, "Corpus manifest JSON [{path, split}]");
  pre->add_option("--out", o.out, "Output directory for chunks and index.json");
  pre->add_option("--rate", o.rate, "Target sample rate")->capture_default_str();
  pre->add_option("--threshold-db", o.threshold_db, "Silence threshold (dBFS)")
      ->capture_default_str();
  pre->add_option("--min-silence", o.min_silence, "Minimum silence that splits (s)")
      ->capture_default_str();
  pre->add_option("--chunk", o.chunk, "Chunk length in samples (default 65536)");
  add_seed(pre);

  CLI::App* train = app.add_subcommand("train", "Train stage 1 (VAE) or stage 2 (adversarial)");
  train->add_option("--stage", o.stage, "1 or 2")->capture_default_str();
  train->add_option("--mode", o.mode, "gaussian or vq (stage 1)")->capture_default_str();
  train->add_option("--preset", o.preset, "toy or full model size")->capture_default_str();
  train->add_option("--data", o.data, "Preprocessed chunk directory");
  train->add_option("--synthetic", o.synthetic, "Train on N synthetic chunks instead");
  train->add_option("--chunk", o.chunk, "Synthetic chunk length (default 8192 toy, 65536 full)");
  train->add_option("--from", o.from, "Stage-1 checkpoint (stage 2)");
  train->add_option("--resume", o.resume, "Continue from a checkpoint of the same stage");
  train->add_option("--out", o.out, "Checkpoint and log directory");
  train->add_option("--steps", o.steps, "Optimization steps")->capture_default_str();
  train->add_option("--batch", o.batch, "Batch size")->capture_default_str();
  train->add_option("--checkpoint-every", o.checkpoint_every, "Steps between checkpoints")
      ->capture_default_str();
  train->add_option("--log-every", o.log_every, "Steps between progress lines")
      ->capture_default_str();
  train->add_flag("--no-augment", o.no_augment, "Disable online augmentation");
  add_seed(train);

  CLI::App* convert = app.add_subcommand("convert", "Convert drum audio with a checkpoint");
  convert->add_option("--in", o.in, "Input WAV");
  convert->add_option("--out", o.out, "Output WAV");
  convert->add_option("--checkpoint", o.checkpoint, "Model checkpoint");
  convert->add_option("--mode", o.mode, "gaussian or vq (must match the checkpoint)");
  convert->add_flag("--no-gain-match", o.no_gain_match, "Keep the model's output level");
  add_seed(convert);

  CLI::App* patterns = app.add_subcommand("patterns", "Render the 9-case drum test set");
  patterns->add_option("--kit", o.kit, "Kit manifest JSON {instrument: wav}; synthesized if absent");
  patterns->add_option("--out", o.out, "Output directory");
  add_seed(patterns);

  CLI::App* metrics = app.add_subcommand("metrics", "Objective proxies on converted test cases");
  metrics->add_option("--manifest", o.manifest, "Test-set manifest.json");
  metrics->add_option("--converted", o.converted,
                      "Directory of converted WAVs named like the test set");
  metrics->add_option("--out", o.out, "Write the JSON report here instead of stdout");
  add_seed(metrics);

  CLI::App* stats = app.add_subcommand("stats", "Clopper-Pearson intervals");
  stats->add_option("--k", o.k, "Successes");
  stats->add_option("--n", o.n, "Trials");
  stats->add_option("--confidence", o.confidence, "Confidence level")->capture_default_str();
  stats->add_option("--export", o.export_file, "Study export (.csv or .jsonl) to summarize");
  add_seed(stats);

  CLI::App* serve = app.add_subcommand("serve", "Run the listening-study HTTP service");
  serve->add_option("--data", o.data, "Directory of study event logs");
  serve->add_option("--study", o.study, "Study config JSON to create at startup");
  serve->add_option("--host", o.host, "Bind address")->capture_default_str();
  serve->add_option("--port", o.port, "Port (0 = any)")->capture_default_str();
  add_seed(serve);

  if (args.empty()) {
    err << app.help();
    return kExitUsage;
  }
  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    json config = json::object();
    if (!o.config.empty()) {
      config = ReadJsonFile(o.config);
      Require(config.is_object(), "--config must hold a JSON object");
      ApplyConfig(sub, config);
    }
    const std::string name = sub->get_name();
    if (name == "preprocess") return RunPreprocess(o, out);
    if (name == "train") return RunTrain(o, config, out);
    if (name == "convert") return RunConvert(o, *sub, out);
    if (name == "patterns") return RunPatterns(o, out);
    if (name == "metrics") return RunMetrics(o, out);
    if (name == "stats") return RunStats(o, out);
    if (name == "serve") return RunServe(o, out);
    err << "error: usage: unknown subcommand " << name << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "error: " << ErrorCodeName(e.code()) << ": " << e.what() << '\n';
    return e.code() == ErrorCode::kInvalidArgument ? kExitUsage : kExitFailure;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace vpconv
