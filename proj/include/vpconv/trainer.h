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

#ifndef VPCONV_TRAINER_H_
#define VPCONV_TRAINER_H_

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vpconv/audio.h"
#include "vpconv/losses.h"
#include "vpconv/model.h"
#include "vpconv/nn/adam.h"
#include "vpconv/preprocess.h"

namespace vpconv {

struct TrainConfig {
  int stage = 1;
  // Optimization steps (not passes over the corpus).
  std::int64_t total_steps = 2000;
  int batch_size = 8;
  float gen_lr = 1e-3f;
  float disc_lr = 1e-4f;
  float beta1 = 0.5f;
  float beta2 = 0.9f;
  std::uint64_t seed = 0;
  // 0 disables periodic checkpoints.
  std::int64_t checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;
  // Empty disables the CSV loss log.
  std::filesystem::path loss_log;
  double grad_clip = 10.0;
  LossWeights weights;
  bool augment = true;
  AugmentSpec augmentation;
  std::vector<int> stft_windows = DefaultStftWindows();
  // Trailing window of the smoothed reconstruction loss.
  int smoothing_window = 100;
  // VQ: entries whose EMA usage drops below this are re-seeded from the batch.
  float dead_code_threshold = 0.05f;
  int dead_code_interval = 50;

  void Validate() const;
};

nlohmann::json ToJson(const ModelConfig& cfg);
ModelConfig ModelConfigFromJson(const nlohmann::json& j);
nlohmann::json ToJson(const TrainConfig& cfg);
// Keys absent from `j` keep the values of `base`.
TrainConfig TrainConfigFromJson(const nlohmann::json& j, TrainConfig base = {});

// One row of the loss log. Components that do not apply to the stage are 0.
struct StepLog {
  std::int64_t step = 0;
  int stage = 1;
  double total = 0.0;
  double spectral = 0.0;
  double kl = 0.0;
  double vq = 0.0;
  double adv_gen = 0.0;
  double feature_matching = 0.0;
  double disc = 0.0;
  double grad_norm = 0.0;
  bool clipped = false;
  // Trailing mean of `spectral`.
  double smoothed_spectral = 0.0;
};

std::string StepLogCsvHeader();
std::string StepLogCsvRow(const StepLog& log);

// Everything needed to continue training bit-for-bit. Move-only: the
// optimizers hold pointers into the model.
class TrainState {
 public:
  TrainState(const ModelConfig& model_cfg, const TrainConfig& cfg);

  Model& model() { return *model_; }
  const Model& model() const { return *model_; }
  nn::Adam& gen_optimizer() { return gen_opt_; }
  nn::Adam& disc_optimizer() { return disc_opt_; }
  const nn::Adam& gen_optimizer() const { return gen_opt_; }
  const nn::Adam& disc_optimizer() const { return disc_opt_; }

  int stage = 1;
  std::int64_t step = 0;
  std::uint64_t seed = 0;
  bool codebook_initialized = false;
  std::deque<double> recent_spectral;
  // Assignments per codebook entry accumulated over the current stage.
  std::vector<double> codebook_usage;

  double SmoothedSpectral() const;
  // Rebuilds the optimizers for `stage` (moments reset). Stage 1 optimizes
  // encoder + decoder; stage 2 the decoder and the discriminators.
  void ConfigureOptimizers(const TrainConfig& cfg);

 private:
  std::unique_ptr<Model> model_;
  nn::Adam gen_opt_;
  nn::Adam disc_opt_;
};

// Batch of chunks for `step`, augmented when enabled. Depends only on
// (seed, stage, step).
std::vector<AudioBuffer> AssembleBatch(const std::vector<AudioBuffer>& corpus,
                                       const TrainConfig& cfg, int stage,
                                       std::int64_t step);

// One optimization step of the state's stage. Throws kNumerical on a
// non-finite loss.
StepLog TrainStep(TrainState& state, const std::vector<AudioBuffer>& corpus,
                  const TrainConfig& cfg);

using StepCallback = std::function<void(const StepLog&)>;

// Runs stage 1 from initialization.
TrainState TrainStage1(const std::vector<AudioBuffer>& corpus,
                       const TrainConfig& cfg, const ModelConfig& model_cfg,
                       const StepCallback& on_step = {});

// Switches a stage-1 state to stage 2 (step counter and optimizer moments
// reset, encoder and codebook frozen) and runs cfg.total_steps steps.
TrainState TrainStage2(TrainState state, const std::vector<AudioBuffer>& corpus,
                       const TrainConfig& cfg, const StepCallback& on_step = {});

// Continues a state until cfg.total_steps. Writes checkpoints and the loss log
// as configured.
void RunTraining(TrainState& state, const std::vector<AudioBuffer>& corpus,
                 const TrainConfig& cfg, const StepCallback& on_step = {});

void SaveCheckpoint(const std::filesystem::path& path, const TrainState& state,
                    const TrainConfig& cfg);
struct LoadedCheckpoint {
  TrainConfig config;
  TrainState state;
};
LoadedCheckpoint LoadCheckpoint(const std::filesystem::path& path);
// Model only, for inference.
Model LoadModel(const std::filesystem::path& path);

// exp(entropy) of the codebook assignment histogram over `chunks`.
double CodebookPerplexity(const Model& model, const std::vector<AudioBuffer>& chunks);
double Perplexity(const std::vector<double>& histogram);

// Hash of every encoder parameter's bit pattern.
std::uint64_t EncoderChecksum(const Model& model);

}  // namespace vpconv

#endif  // VPCONV_TRAINER_H_
