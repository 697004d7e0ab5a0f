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

#include "vpconv/trainer.h"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "test_util.h"
#include "vpconv/error.h"

namespace vpconv {
namespace {

using ::vpconv::testing::TempDir;

ModelConfig SmallModel(LatentMode mode) {
  ModelConfig cfg = ModelConfig::Toy();
  cfg.latent_mode = mode;
  cfg.codebook_size = 8;
  return cfg;
}

TrainConfig SmallTrain(int stage, std::int64_t steps) {
  TrainConfig cfg;
  cfg.stage = stage;
  cfg.total_steps = steps;
  cfg.batch_size = 2;
  cfg.seed = 77;
  cfg.stft_windows = {256, 128, 64};
  return cfg;
}

// Non-silent 1024-sample excerpts of the synthetic corpus.
const std::vector<AudioBuffer>& Corpus() {
  static const auto corpus = [] {
    std::vector<AudioBuffer> out;
    for (const AudioBuffer& c : SyntheticVpCorpus(8, 4096, kToySampleRate, 5)) {
      for (std::size_t o = 0; o + 1024 <= c.size() && out.size() < 4; o += 1024) {
        AudioBuffer piece = c.Slice(o, o + 1024);
        if (PeakDbfs(piece) > -20.0) out.push_back(std::move(piece));
      }
    }
    return out;
  }();
  return corpus;
}

std::vector<std::vector<float>> Snapshot(const Model& m) {
  std::vector<std::vector<float>> out;
  for (const auto& [name, values] : m.NamedTensors()) out.push_back(*values);
  return out;
}

std::size_t CountFields(const std::string& line) {
  return static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
}

TEST(TrainConfigTest, JsonRoundTrip) {
  TrainConfig cfg = SmallTrain(2, 123);
  cfg.gen_lr = 5e-4f;
  cfg.weights.kl_beta = 0.3;
  cfg.augment = false;
  const TrainConfig back = TrainConfigFromJson(ToJson(cfg));
  EXPECT_EQ(back.stage, 2);
  EXPECT_EQ(back.total_steps, 123);
  EXPECT_EQ(back.batch_size, 2);
  EXPECT_EQ(back.gen_lr, 5e-4f);
  EXPECT_EQ(back.weights.kl_beta, 0.3);
  EXPECT_FALSE(back.augment);
  EXPECT_EQ(back.stft_windows, cfg.stft_windows);
  EXPECT_EQ(back.seed, 77u);
}

TEST(TrainConfigTest, PartialJsonKeepsBase) {
  const TrainConfig cfg = TrainConfigFromJson({{"batch_size", 3}}, SmallTrain(1, 9));
  EXPECT_EQ(cfg.batch_size, 3);
  EXPECT_EQ(cfg.total_steps, 9);
  EXPECT_THROW(TrainConfigFromJson({{"batch_size", "many"}}), Error);
}

TEST(TrainConfigTest, Defaults) {
  const TrainConfig cfg;
  EXPECT_EQ(cfg.batch_size, 8);
  EXPECT_FLOAT_EQ(cfg.gen_lr, 1e-3f);
  EXPECT_FLOAT_EQ(cfg.disc_lr, 1e-4f);
  EXPECT_FLOAT_EQ(cfg.beta1, 0.5f);
  EXPECT_FLOAT_EQ(cfg.beta2, 0.9f);
  EXPECT_DOUBLE_EQ(cfg.weights.feature_matching, 10.0);
}

TEST(TrainConfigTest, ValidateRejects) {
  TrainConfig cfg;
  cfg.stage = 3;
  EXPECT_THROW(cfg.Validate(), Error);
  cfg = TrainConfig{};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.Validate(), Error);
  cfg = TrainConfig{};
  cfg.beta2 = 1.0f;
  EXPECT_THROW(cfg.Validate(), Error);
}

TEST(ModelConfigJsonTest, RoundTripAndPreset) {
  ModelConfig cfg = SmallModel(LatentMode::kVq);
  const ModelConfig back = ModelConfigFromJson(ToJson(cfg));
  EXPECT_EQ(back.latent_mode, LatentMode::kVq);
  EXPECT_EQ(back.codebook_size, 8);
  EXPECT_EQ(back.downsample_ratios, cfg.downsample_ratios);
  const ModelConfig toy = ModelConfigFromJson({{"preset", "toy"}, {"latent_dim", 4}});
  EXPECT_EQ(toy.latent_dim, 4);
  EXPECT_EQ(toy.sample_rate, kToySampleRate);
  EXPECT_THROW(ModelConfigFromJson({{"latent_dim", -1}}), Error);
}

TEST(StepLogTest, CsvColumnsAgree) {
  StepLog log;
  log.step = 4;
  log.clipped = true;
  EXPECT_EQ(CountFields(StepLogCsvHeader()), CountFields(StepLogCsvRow(log)));
  EXPECT_EQ(StepLogCsvHeader().rfind("step,stage,", 0), 0u);
}

TEST(AssembleBatchTest, DependsOnlyOnSeedStageStep) {
  const TrainConfig cfg = SmallTrain(1, 1);
  const auto a = AssembleBatch(Corpus(), cfg, 1, 3);
  const auto b = AssembleBatch(Corpus(), cfg, 1, 3);
  const auto c = AssembleBatch(Corpus(), cfg, 1, 4);
  const auto d = AssembleBatch(Corpus(), cfg, 2, 3);
  ASSERT_EQ(a.size(), 2u);
  auto same = [](const std::vector<AudioBuffer>& x, const std::vector<AudioBuffer>& y) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!std::equal(x[i].samples().begin(), x[i].samples().end(), y[i].samples().begin())) return false;
    }
    return true;
  };
  EXPECT_TRUE(same(a, b));
  EXPECT_FALSE(same(a, c));
  EXPECT_FALSE(same(a, d));
  EXPECT_THROW(AssembleBatch({}, cfg, 1, 0), Error);
}

TEST(TrainStepTest, GaussianStageOneLogsKl) {
  const TrainConfig cfg = SmallTrain(1, 1);
  TrainState state(SmallModel(LatentMode::kGaussian), cfg);
  const StepLog log = TrainStep(state, Corpus(), cfg);
  EXPECT_EQ(log.step, 1);
  EXPECT_EQ(state.step, 1);
  EXPECT_GT(log.spectral, 0.0);
  EXPECT_GT(log.kl, 0.0);
  EXPECT_EQ(log.vq, 0.0);
  EXPECT_TRUE(std::isfinite(log.total));
  EXPECT_NEAR(log.total, log.spectral + cfg.weights.kl_beta * log.kl, 1e-6 * log.total);
  EXPECT_DOUBLE_EQ(log.smoothed_spectral, log.spectral);
}

TEST(TrainStepTest, VqStageOneInitializesCodebook) {
  const TrainConfig cfg = SmallTrain(1, 1);
  TrainState state(SmallModel(LatentMode::kVq), cfg);
  const auto before = state.model().codebook().entries();
  const StepLog log = TrainStep(state, Corpus(), cfg);
  EXPECT_TRUE(state.codebook_initialized);
  EXPECT_NE(state.model().codebook().entries(), before);
  EXPECT_GT(log.vq, 0.0);
  EXPECT_EQ(log.kl, 0.0);
  double used = 0.0;
  for (double u : state.codebook_usage) used += u;
  EXPECT_EQ(used, 2.0 * 1024 / 64);
}

TEST(TrainStepTest, SmoothingIsTrailingMean) {
  TrainConfig cfg = SmallTrain(1, 3);
  cfg.smoothing_window = 2;
  TrainState state(SmallModel(LatentMode::kGaussian), cfg);
  std::vector<StepLog> logs;
  RunTraining(state, Corpus(), cfg, [&](const StepLog& l) { logs.push_back(l); });
  ASSERT_EQ(logs.size(), 3u);
  EXPECT_NEAR(logs[2].smoothed_spectral, (logs[1].spectral + logs[2].spectral) / 2.0, 1e-12);
}

TEST(TrainingTest, ResumeIsBitIdentical) {
  TempDir dir("resume");
  TrainConfig cfg = SmallTrain(1, 4);
  TrainState straight(SmallModel(LatentMode::kVq), cfg);
  std::vector<StepLog> straight_logs;
  RunTraining(straight, Corpus(), cfg, [&](const StepLog& l) { straight_logs.push_back(l); });

  TrainConfig first = cfg;
  first.total_steps = 2;
  TrainState half(SmallModel(LatentMode::kVq), first);
  RunTraining(half, Corpus(), first);
  SaveCheckpoint(dir.path() / "half.ckpt", half, cfg);
  LoadedCheckpoint loaded = LoadCheckpoint(dir.path() / "half.ckpt");
  EXPECT_EQ(loaded.state.step, 2);
  EXPECT_EQ(loaded.config.total_steps, 4);
  std::vector<StepLog> resumed_logs;
  RunTraining(loaded.state, Corpus(), loaded.config,
              [&](const StepLog& l) { resumed_logs.push_back(l); });
  EXPECT_EQ(Snapshot(loaded.state.model()), Snapshot(straight.model()));
  ASSERT_EQ(resumed_logs.size(), 2u);
  EXPECT_EQ(resumed_logs[1].total, straight_logs[3].total);
  EXPECT_EQ(resumed_logs[1].smoothed_spectral, straight_logs[3].smoothed_spectral);
  EXPECT_EQ(loaded.state.gen_optimizer().steps(), straight.gen_optimizer().steps());
}

TEST(TrainingTest, StageTwoFreezesEncoderAndCodebook) {
  const TrainConfig s1 = SmallTrain(1, 2);
  TrainState state = TrainStage1(Corpus(), s1, SmallModel(LatentMode::kVq));
  const std::uint64_t enc = EncoderChecksum(state.model());
  const auto book = state.model().codebook().entries();
  const auto decoder_before = state.model().decoder().Parameters()[0]->value;
  const auto disc_before = state.model().discriminators().Parameters()[0]->value;
  std::vector<StepLog> logs;
  TrainState s2 = TrainStage2(std::move(state), Corpus(), SmallTrain(2, 3),
                              [&](const StepLog& l) { logs.push_back(l); });
  EXPECT_EQ(s2.stage, 2);
  EXPECT_EQ(s2.step, 3);
  EXPECT_EQ(s2.gen_optimizer().steps(), 3);
  EXPECT_EQ(EncoderChecksum(s2.model()), enc);
  EXPECT_EQ(s2.model().codebook().entries(), book);
  EXPECT_NE(s2.model().decoder().Parameters()[0]->value, decoder_before);
  EXPECT_NE(s2.model().discriminators().Parameters()[0]->value, disc_before);
  ASSERT_EQ(logs.size(), 3u);
  for (const StepLog& l : logs) {
    EXPECT_EQ(l.stage, 2);
    EXPECT_TRUE(std::isfinite(l.disc));
    EXPECT_TRUE(std::isfinite(l.feature_matching));
    EXPECT_TRUE(std::isfinite(l.adv_gen));
  }
}

TEST(TrainingTest, CheckpointsAndLossLog) {
  TempDir dir("run");
  TrainConfig cfg = SmallTrain(1, 4);
  cfg.checkpoint_every = 2;
  cfg.checkpoint_dir = dir.path() / "ck";
  cfg.loss_log = dir.path() / "loss.csv";
  TrainStage1(Corpus(), cfg, SmallModel(LatentMode::kGaussian));
  EXPECT_TRUE(std::filesystem::exists(cfg.checkpoint_dir / "stage1_step2.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(cfg.checkpoint_dir / "stage1_step4.ckpt"));
  EXPECT_TRUE(std::filesystem::exists(cfg.checkpoint_dir / "latest.ckpt"));
  std::ifstream csv(cfg.loss_log);
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, StepLogCsvHeader());
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 4);
  const Model m = LoadModel(cfg.checkpoint_dir / "latest.ckpt");
  EXPECT_EQ(m.config().latent_mode, LatentMode::kGaussian);
}

TEST(TrainingTest, RejectsInconsistentCorpus) {
  const TrainConfig cfg = SmallTrain(1, 1);
  TrainState state(SmallModel(LatentMode::kGaussian), cfg);
  std::vector<AudioBuffer> bad = {AudioBuffer(std::vector<float>(1000, 0.0f), kToySampleRate)};
  EXPECT_THROW(RunTraining(state, bad, cfg), Error);
  bad = {AudioBuffer(std::vector<float>(1024, 0.0f), 44100)};
  EXPECT_THROW(RunTraining(state, bad, cfg), Error);
  EXPECT_THROW(RunTraining(state, {}, cfg), Error);
}

TEST(PerplexityTest, Histograms) {
  EXPECT_NEAR(Perplexity({1, 1, 1, 1}), 4.0, 1e-12);
  EXPECT_NEAR(Perplexity({5, 0, 0}), 1.0, 1e-12);
  EXPECT_EQ(Perplexity({0, 0}), 0.0);
  const double p = Perplexity({3, 1});
  EXPECT_NEAR(p, std::exp(-(0.75 * std::log(0.75) + 0.25 * std::log(0.25))), 1e-12);
}

TEST(PerplexityTest, GaussianModelHasNoCodebookPerplexity) {
  Model m(SmallModel(LatentMode::kGaussian), 1);
  EXPECT_THROW(CodebookPerplexity(m, Corpus()), Error);
  Model v(SmallModel(LatentMode::kVq), 1);
  EXPECT_GE(CodebookPerplexity(v, Corpus()), 1.0);
}

}  // namespace
}  // namespace vpconv
