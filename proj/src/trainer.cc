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

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "vpconv/checkpoint.h"
#include "vpconv/error.h"
#include "vpconv/random.h"

namespace vpconv {

namespace {

using nn::Tensor;
using json = nlohmann::json;

std::vector<nn::Parameter*> Concat(std::vector<nn::Parameter*> a,
                                   const std::vector<nn::Parameter*>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

void ZeroGrads(const std::vector<nn::Parameter*>& params) {
  for (nn::Parameter* p : params) p->ZeroGrad();
}

// Mean multiscale spectral loss over the batch; fills d(loss)/d(estimate).
double BatchSpectralLoss(const Tensor& target, const Tensor& estimate,
                         const std::vector<int>& windows, Tensor* grad) {
  if (grad != nullptr) *grad = Tensor(estimate.batch, 1, estimate.length);
  const auto n = static_cast<std::size_t>(estimate.length);
  std::vector<double> t(n), e(n), g;
  double total = 0.0;
  for (int b = 0; b < estimate.batch; ++b) {
    std::copy_n(target.row(b, 0), n, t.begin());
    std::copy_n(estimate.row(b, 0), n, e.begin());
    total += MultiscaleSpectralLoss(t, e, windows, grad != nullptr ? &g : nullptr);
    if (grad != nullptr) {
      float* dst = grad->row(b, 0);
      for (std::size_t i = 0; i < n; ++i) {
        dst[i] = static_cast<float>(g[i] / estimate.batch);
      }
    }
  }
  return total / estimate.batch;
}

// (B, H, T) tensor to frame-major (B * T) x H doubles, and back.
std::vector<double> FrameMajor(const Tensor& x) {
  std::vector<double> out(x.size());
  for (int b = 0; b < x.batch; ++b) {
    for (int h = 0; h < x.channels; ++h) {
      const float* r = x.row(b, h);
      for (int t = 0; t < x.length; ++t) {
        out[(static_cast<std::size_t>(b) * x.length + t) * x.channels + h] = r[t];
      }
    }
  }
  return out;
}

Tensor FromFrameMajor(const std::vector<double>& v, int batch, int channels, int length) {
  Tensor out(batch, channels, length);
  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < channels; ++h) {
      float* r = out.row(b, h);
      for (int t = 0; t < length; ++t) {
        r[t] = static_cast<float>(
            v[(static_cast<std::size_t>(b) * length + t) * channels + h]);
      }
    }
  }
  return out;
}

std::vector<double> ToDoubles(const Tensor& t) {
  return std::vector<double>(t.data.begin(), t.data.end());
}

Tensor FromDoubles(const std::vector<double>& v, const Tensor& like, double scale) {
  Tensor out(like.batch, like.channels, like.length);
  for (std::size_t i = 0; i < v.size(); ++i) out.data[i] = static_cast<float>(v[i] * scale);
  return out;
}

ScoreSet Scores(const std::vector<DiscriminatorOutput>& outs) {
  ScoreSet s;
  for (const auto& o : outs) s.push_back(ToDoubles(o.score));
  return s;
}

FeatureSet Features(const std::vector<DiscriminatorOutput>& outs) {
  FeatureSet f;
  for (const auto& o : outs) {
    f.emplace_back();
    for (const auto& t : o.features) f.back().push_back(ToDoubles(t));
  }
  return f;
}

std::vector<Tensor> ScoreGrads(const ScoreSet& g, const std::vector<DiscriminatorOutput>& like,
                               double scale) {
  std::vector<Tensor> out;
  for (std::size_t i = 0; i < g.size(); ++i) out.push_back(FromDoubles(g[i], like[i].score, scale));
  return out;
}

std::vector<std::vector<Tensor>> FeatureGrads(const FeatureSet& g,
                                              const std::vector<DiscriminatorOutput>& like,
                                              double scale) {
  std::vector<std::vector<Tensor>> out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    out.emplace_back();
    for (std::size_t j = 0; j < g[i].size(); ++j) {
      out.back().push_back(FromDoubles(g[i][j], like[i].features[j], scale));
    }
  }
  return out;
}

void CheckFinite(double v, const char* what, std::int64_t step) {
  if (!std::isfinite(v)) {
    throw Error(ErrorCode::kNumerical, std::string("non-finite ") + what +
                                           " at step " + std::to_string(step));
  }
}

void PushSmoothed(TrainState& state, double spectral, int window) {
  state.recent_spectral.push_back(spectral);
  while (static_cast<int>(state.recent_spectral.size()) > window) {
    state.recent_spectral.pop_front();
  }
}

// Latent fed to the decoder during training plus the pieces its backward
// pass needs.
struct LatentSample {
  LatentCode code;
  Tensor z;
  Tensor noise;  // gaussian
};

LatentSample SampleLatent(const Model& model, LatentCode code, std::uint64_t seed) {
  LatentSample s;
  if (model.config().latent_mode == LatentMode::kGaussian) {
    s.z = Reparameterize(code, seed, &s.noise);
    s.code = std::move(code);
  } else {
    s.code = Quantize(code, model.codebook());
    s.z = s.code.quantized;
  }
  return s;
}

StepLog Stage1Step(TrainState& state, const std::vector<AudioBuffer>& corpus,
                   const TrainConfig& cfg) {
  Model& model = state.model();
  const ModelConfig& mc = model.config();
  const std::int64_t step = state.step;
  const Tensor x = ToTensor(AssembleBatch(corpus, cfg, 1, step));

  std::vector<nn::Parameter*> params =
      Concat(model.encoder().Parameters(), model.decoder().Parameters());
  ZeroGrads(params);

  Encoder::Trace enc_trace;
  LatentCode code = model.encoder().Forward(x, &enc_trace);
  if (mc.latent_mode == LatentMode::kVq && !state.codebook_initialized) {
    std::mt19937_64 rng(DeriveSeed(state.seed, {1, static_cast<std::uint64_t>(step), 2}));
    model.codebook().InitializeFrom(code.mean, rng);
    state.codebook_initialized = true;
  }
  LatentSample sample =
      SampleLatent(model, std::move(code), DeriveSeed(state.seed, {1, static_cast<std::uint64_t>(step), 3}));

  Decoder::Trace dec_trace;
  const DecoderOutput out = model.decoder().Forward(sample.z, &dec_trace);

  StepLog log;
  log.stage = 1;
  Tensor grad_audio;
  log.spectral = BatchSpectralLoss(x, out.audio, cfg.stft_windows, &grad_audio);
  const double w_spec = cfg.weights.spectral;
  for (float& g : grad_audio.data) g = static_cast<float>(g * w_spec);
  const Tensor grad_z = model.decoder().Backward(grad_audio, dec_trace);

  const Tensor& mean = sample.code.mean;
  Tensor grad_mean = StraightThroughGradient(grad_z);
  Tensor grad_logvar;
  if (mc.latent_mode == LatentMode::kGaussian) {
    std::vector<double> gm, glv;
    log.kl = KlGaussian(FrameMajor(mean), FrameMajor(sample.code.log_variance),
                        mean.channels, &gm, &glv);
    const double beta = cfg.weights.kl_beta;
    grad_logvar = Tensor(mean.batch, mean.channels, mean.length);
    const Tensor kl_mean = FromFrameMajor(gm, mean.batch, mean.channels, mean.length);
    const Tensor kl_lv = FromFrameMajor(glv, mean.batch, mean.channels, mean.length);
    for (std::size_t i = 0; i < mean.size(); ++i) {
      const float scale = std::exp(0.5f * sample.code.log_variance.data[i]);
      grad_mean.data[i] = grad_z.data[i] + static_cast<float>(beta * kl_mean.data[i]);
      grad_logvar.data[i] = grad_z.data[i] * 0.5f * scale * sample.noise.data[i] +
                            static_cast<float>(beta * kl_lv.data[i]);
    }
    log.total = w_spec * log.spectral + beta * log.kl;
  } else {
    std::vector<double> gp;
    log.vq = VqLoss(ToDoubles(mean), ToDoubles(sample.code.quantized),
                    cfg.weights.vq_commitment, &gp, nullptr);
    for (std::size_t i = 0; i < mean.size(); ++i) {
      grad_mean.data[i] += static_cast<float>(gp[i]);
    }
    log.total = w_spec * log.spectral + log.vq;
  }
  CheckFinite(log.total, "stage-1 loss", step);
  model.encoder().Backward(grad_mean, grad_logvar, enc_trace);

  log.grad_norm = nn::ClipGradientNorm(params, cfg.grad_clip);
  log.clipped = log.grad_norm > cfg.grad_clip;
  CheckFinite(log.grad_norm, "gradient norm", step);
  state.gen_optimizer().Step();

  if (mc.latent_mode == LatentMode::kVq) {
    model.codebook().EmaUpdate(mean, sample.code.indices, mc.codebook_decay);
    for (int k : sample.code.indices) state.codebook_usage[static_cast<std::size_t>(k)] += 1.0;
    if (cfg.dead_code_interval > 0 && (step + 1) % cfg.dead_code_interval == 0) {
      std::mt19937_64 rng(DeriveSeed(state.seed, {1, static_cast<std::uint64_t>(step), 4}));
      model.codebook().RestartDeadCodes(mean, rng, cfg.dead_code_threshold);
    }
  }
  return log;
}

StepLog Stage2Step(TrainState& state, const std::vector<AudioBuffer>& corpus,
                   const TrainConfig& cfg) {
  Model& model = state.model();
  const std::int64_t step = state.step;
  const Tensor x = ToTensor(AssembleBatch(corpus, cfg, 2, step));

  const LatentSample sample =
      SampleLatent(model, model.encoder().Forward(x, nullptr),
                   DeriveSeed(state.seed, {2, static_cast<std::uint64_t>(step), 3}));
  Decoder::Trace dec_trace;
  const DecoderOutput out = model.decoder().Forward(sample.z, &dec_trace);
  const Tensor& y = out.audio;

  StepLog log;
  log.stage = 2;
  DiscriminatorEnsemble& disc = model.discriminators();
  const std::vector<nn::Parameter*> disc_params = disc.Parameters();
  const std::vector<nn::Parameter*> gen_params = model.decoder().Parameters();

  // Discriminator update on (real, detached fake).
  {
    ZeroGrads(disc_params);
    std::vector<SubDiscriminator::Trace> tr_real, tr_fake;
    const auto real = disc.Forward(x, &tr_real);
    const auto fake = disc.Forward(y, &tr_fake);
    ScoreSet g_real, g_fake;
    log.disc = HingeAdversarial(Scores(real), Scores(fake), HingeSide::kDiscriminator,
                                &g_real, &g_fake);
    CheckFinite(log.disc, "discriminator loss", step);
    disc.Backward(ScoreGrads(g_real, real, 1.0), {}, tr_real);
    disc.Backward(ScoreGrads(g_fake, fake, 1.0), {}, tr_fake);
    nn::ClipGradientNorm(disc_params, cfg.grad_clip);
    state.disc_optimizer().Step();
  }

  // Generator update against the refreshed discriminators.
  ZeroGrads(gen_params);
  const auto real = disc.Forward(x, nullptr);
  std::vector<SubDiscriminator::Trace> tr_fake;
  const auto fake = disc.Forward(y, &tr_fake);
  ScoreSet g_scores;
  FeatureSet g_features;
  log.adv_gen = HingeAdversarial(Scores(real), Scores(fake), HingeSide::kGenerator,
                                 nullptr, &g_scores);
  log.feature_matching = FeatureMatching(Features(real), Features(fake), &g_features);
  Tensor grad_audio = disc.Backward(ScoreGrads(g_scores, fake, cfg.weights.adversarial),
                                    FeatureGrads(g_features, fake, cfg.weights.feature_matching),
                                    tr_fake);
  ZeroGrads(disc_params);

  Tensor grad_spec;
  log.spectral = BatchSpectralLoss(x, y, cfg.stft_windows, &grad_spec);
  for (std::size_t i = 0; i < grad_audio.size(); ++i) {
    grad_audio.data[i] += static_cast<float>(cfg.weights.spectral * grad_spec.data[i]);
  }
  log.total = cfg.weights.adversarial * log.adv_gen +
              cfg.weights.feature_matching * log.feature_matching +
              cfg.weights.spectral * log.spectral;
  CheckFinite(log.total, "generator loss", step);
  model.decoder().Backward(grad_audio, dec_trace);

  log.grad_norm = nn::ClipGradientNorm(gen_params, cfg.grad_clip);
  log.clipped = log.grad_norm > cfg.grad_clip;
  CheckFinite(log.grad_norm, "gradient norm", step);
  state.gen_optimizer().Step();
  return log;
}

bool ModelFinite(const Model& model) {
  for (const auto& [name, values] : model.NamedTensors()) {
    if (!nn::AllFinite(*values)) return false;
  }
  return true;
}

std::string HexU64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << v;
  return s.str();
}

}  // namespace

void TrainConfig::Validate() const {
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::kInvalidArgument, "train config: " + what);
  };
  if (stage != 1 && stage != 2) fail("stage must be 1 or 2");
  if (total_steps < 0) fail("total_steps must be >= 0");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(gen_lr > 0.0f) || !(disc_lr > 0.0f)) fail("learning rates must be > 0");
  if (!(beta1 >= 0.0f && beta1 < 1.0f) || !(beta2 >= 0.0f && beta2 < 1.0f)) {
    fail("Adam betas must be in [0, 1)");
  }
  if (checkpoint_every < 0) fail("checkpoint_every must be >= 0");
  if (!(grad_clip > 0.0)) fail("grad_clip must be > 0");
  if (stft_windows.empty()) fail("stft_windows must not be empty");
  if (smoothing_window < 1) fail("smoothing_window must be >= 1");
  weights.Validate();
  if (augment) augmentation.Validate();
}

json ToJson(const ModelConfig& cfg) {
  return {{"latent_dim", cfg.latent_dim},
          {"downsample_ratios", cfg.downsample_ratios},
          {"latent_mode", LatentModeName(cfg.latent_mode)},
          {"codebook_size", cfg.codebook_size},
          {"base_channels", cfg.base_channels},
          {"max_channels", cfg.max_channels},
          {"causal", cfg.causal},
          {"sample_rate", cfg.sample_rate},
          {"codebook_decay", cfg.codebook_decay}};
}

ModelConfig ModelConfigFromJson(const json& j) {
  ModelConfig cfg;
  try {
    if (j.value("preset", "") == "toy") cfg = ModelConfig::Toy();
    cfg.latent_dim = j.value("latent_dim", cfg.latent_dim);
    cfg.downsample_ratios = j.value("downsample_ratios", cfg.downsample_ratios);
    if (j.contains("latent_mode")) cfg.latent_mode = ParseLatentMode(j.at("latent_mode"));
    cfg.codebook_size = j.value("codebook_size", cfg.codebook_size);
    cfg.base_channels = j.value("base_channels", cfg.base_channels);
    cfg.max_channels = j.value("max_channels", cfg.max_channels);
    cfg.causal = j.value("causal", cfg.causal);
    cfg.sample_rate = j.value("sample_rate", cfg.sample_rate);
    cfg.codebook_decay = j.value("codebook_decay", cfg.codebook_decay);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("model config: ") + e.what());
  }
  cfg.Validate();
  return cfg;
}

json ToJson(const TrainConfig& cfg) {
  const AugmentSpec& a = cfg.augmentation;
  return {{"stage", cfg.stage},
          {"total_steps", cfg.total_steps},
          {"batch_size", cfg.batch_size},
          {"gen_lr", cfg.gen_lr},
          {"disc_lr", cfg.disc_lr},
          {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},
          {"seed", cfg.seed},
          {"checkpoint_every", cfg.checkpoint_every},
          {"checkpoint_dir", cfg.checkpoint_dir.string()},
          {"loss_log", cfg.loss_log.string()},
          {"grad_clip", cfg.grad_clip},
          {"weights",
           {{"kl_beta", cfg.weights.kl_beta},
            {"vq_commitment", cfg.weights.vq_commitment},
            {"adversarial", cfg.weights.adversarial},
            {"feature_matching", cfg.weights.feature_matching},
            {"spectral", cfg.weights.spectral}}},
          {"augment", cfg.augment},
          {"augmentation",
           {{"gain_min_db", a.gain_min_db},
            {"gain_max_db", a.gain_max_db},
            {"mute_probability", a.mute_probability},
            {"mute_min_seconds", a.mute_min_seconds},
            {"mute_max_seconds", a.mute_max_seconds},
            {"compression", a.compression}}},
          {"stft_windows", cfg.stft_windows},
          {"smoothing_window", cfg.smoothing_window},
          {"dead_code_threshold", cfg.dead_code_threshold},
          {"dead_code_interval", cfg.dead_code_interval}};
}

TrainConfig TrainConfigFromJson(const json& j, TrainConfig c) {
  try {
    c.stage = j.value("stage", c.stage);
    c.total_steps = j.value("total_steps", c.total_steps);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.gen_lr = j.value("gen_lr", c.gen_lr);
    c.disc_lr = j.value("disc_lr", c.disc_lr);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.seed = j.value("seed", c.seed);
    c.checkpoint_every = j.value("checkpoint_every", c.checkpoint_every);
    c.checkpoint_dir = j.value("checkpoint_dir", c.checkpoint_dir.string());
    c.loss_log = j.value("loss_log", c.loss_log.string());
    c.grad_clip = j.value("grad_clip", c.grad_clip);
    if (j.contains("weights")) {
      const json& w = j.at("weights");
      c.weights.kl_beta = w.value("kl_beta", c.weights.kl_beta);
      c.weights.vq_commitment = w.value("vq_commitment", c.weights.vq_commitment);
      c.weights.adversarial = w.value("adversarial", c.weights.adversarial);
      c.weights.feature_matching = w.value("feature_matching", c.weights.feature_matching);
      c.weights.spectral = w.value("spectral", c.weights.spectral);
    }
    c.augment = j.value("augment", c.augment);
    if (j.contains("augmentation")) {
      const json& a = j.at("augmentation");
      AugmentSpec& s = c.augmentation;
      s.gain_min_db = a.value("gain_min_db", s.gain_min_db);
      s.gain_max_db = a.value("gain_max_db", s.gain_max_db);
      s.mute_probability = a.value("mute_probability", s.mute_probability);
      s.mute_min_seconds = a.value("mute_min_seconds", s.mute_min_seconds);
      s.mute_max_seconds = a.value("mute_max_seconds", s.mute_max_seconds);
      s.compression = a.value("compression", s.compression);
    }
    c.stft_windows = j.value("stft_windows", c.stft_windows);
    c.smoothing_window = j.value("smoothing_window", c.smoothing_window);
    c.dead_code_threshold = j.value("dead_code_threshold", c.dead_code_threshold);
    c.dead_code_interval = j.value("dead_code_interval", c.dead_code_interval);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("train config: ") + e.what());
  }
  c.Validate();
  return c;
}

std::string StepLogCsvHeader() {
  return "step,stage,total,spectral,kl,vq,adv_gen,fm,disc,grad_norm,clipped,smoothed_spectral";
}

std::string StepLogCsvRow(const StepLog& l) {
  std::ostringstream s;
  s << std::setprecision(9) << l.step << ',' << l.stage << ',' << l.total << ','
    << l.spectral << ',' << l.kl << ',' << l.vq << ',' << l.adv_gen << ','
    << l.feature_matching << ',' << l.disc << ',' << l.grad_norm << ','
    << (l.clipped ? 1 : 0) << ',' << l.smoothed_spectral;
  return s.str();
}

TrainState::TrainState(const ModelConfig& model_cfg, const TrainConfig& cfg)
    : seed(cfg.seed),
      model_(std::make_unique<Model>(model_cfg, DeriveSeed(cfg.seed, {0}))) {
  codebook_usage.assign(static_cast<std::size_t>(model_cfg.codebook_size), 0.0);
  ConfigureOptimizers(cfg);
}

double TrainState::SmoothedSpectral() const {
  if (recent_spectral.empty()) return 0.0;
  return std::accumulate(recent_spectral.begin(), recent_spectral.end(), 0.0) /
         static_cast<double>(recent_spectral.size());
}

void TrainState::ConfigureOptimizers(const TrainConfig& cfg) {
  nn::AdamConfig gen{cfg.gen_lr, cfg.beta1, cfg.beta2, 1e-8f};
  nn::AdamConfig disc{cfg.disc_lr, cfg.beta1, cfg.beta2, 1e-8f};
  if (stage == 1) {
    gen_opt_ = nn::Adam(Concat(model_->encoder().Parameters(), model_->decoder().Parameters()), gen);
  } else {
    gen_opt_ = nn::Adam(model_->decoder().Parameters(), gen);
  }
  disc_opt_ = nn::Adam(model_->discriminators().Parameters(), disc);
}

std::vector<AudioBuffer> AssembleBatch(const std::vector<AudioBuffer>& corpus,
                                       const TrainConfig& cfg, int stage,
                                       std::int64_t step) {
  if (corpus.empty()) throw Error(ErrorCode::kInvalidArgument, "training corpus is empty");
  const auto s = static_cast<std::uint64_t>(step);
  std::mt19937_64 rng(DeriveSeed(cfg.seed, {static_cast<std::uint64_t>(stage), s, 0}));
  std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
  std::vector<AudioBuffer> batch;
  batch.reserve(static_cast<std::size_t>(cfg.batch_size));
  for (int b = 0; b < cfg.batch_size; ++b) {
    const AudioBuffer& chunk = corpus[pick(rng)];
    if (cfg.augment) {
      batch.push_back(Augment(chunk, cfg.augmentation,
                              DeriveSeed(cfg.seed, {static_cast<std::uint64_t>(stage), s, 1,
                                                    static_cast<std::uint64_t>(b)})));
    } else {
      batch.push_back(chunk);
    }
  }
  return batch;
}

StepLog TrainStep(TrainState& state, const std::vector<AudioBuffer>& corpus,
                  const TrainConfig& cfg) {
  StepLog log = state.stage == 1 ? Stage1Step(state, corpus, cfg)
                                 : Stage2Step(state, corpus, cfg);
  ++state.step;
  log.step = state.step;
  PushSmoothed(state, log.spectral, cfg.smoothing_window);
  log.smoothed_spectral = state.SmoothedSpectral();
  return log;
}

void RunTraining(TrainState& state, const std::vector<AudioBuffer>& corpus,
                 const TrainConfig& cfg, const StepCallback& on_step) {
  cfg.Validate();
  if (corpus.empty()) throw Error(ErrorCode::kInvalidArgument, "training corpus is empty");
  const int hop = state.model().config().hop_length();
  for (const AudioBuffer& c : corpus) {
    if (c.size() % static_cast<std::size_t>(hop) != 0 || c.size() != corpus.front().size()) {
      throw Error(ErrorCode::kInvalidArgument,
                  "corpus chunks must share one length divisible by " + std::to_string(hop));
    }
    if (c.sample_rate() != state.model().config().sample_rate) {
      throw Error(ErrorCode::kInvalidArgument, "corpus sample rate does not match the model");
    }
  }
  std::ofstream csv;
  if (!cfg.loss_log.empty()) {
    std::error_code ec;
    const bool empty = !std::filesystem::exists(cfg.loss_log) ||
                       std::filesystem::file_size(cfg.loss_log, ec) == 0;
    const bool restart = state.step == 0 && state.stage == 1;
    csv.open(cfg.loss_log, restart ? std::ios::trunc : std::ios::app);
    if (!csv) throw Error(ErrorCode::kIo, "cannot open loss log " + cfg.loss_log.string());
    if (restart || empty) csv << StepLogCsvHeader() << '\n';
  }
  if (!cfg.checkpoint_dir.empty()) std::filesystem::create_directories(cfg.checkpoint_dir);
  while (state.step < cfg.total_steps) {
    const StepLog log = TrainStep(state, corpus, cfg);
    if (csv.is_open()) csv << StepLogCsvRow(log) << '\n';
    if (on_step) on_step(log);
    if (cfg.checkpoint_every > 0 && !cfg.checkpoint_dir.empty() &&
        (state.step % cfg.checkpoint_every == 0 || state.step == cfg.total_steps)) {
      if (!ModelFinite(state.model())) {
        throw Error(ErrorCode::kNumerical,
                    "non-finite weights at step " + std::to_string(state.step));
      }
      csv.flush();
      SaveCheckpoint(cfg.checkpoint_dir /
                         ("stage" + std::to_string(state.stage) + "_step" +
                          std::to_string(state.step) + ".ckpt"),
                     state, cfg);
      SaveCheckpoint(cfg.checkpoint_dir / "latest.ckpt", state, cfg);
    }
  }
}

TrainState TrainStage1(const std::vector<AudioBuffer>& corpus, const TrainConfig& cfg,
                       const ModelConfig& model_cfg, const StepCallback& on_step) {
  if (cfg.stage != 1) throw Error(ErrorCode::kInvalidArgument, "TrainStage1 needs stage = 1");
  TrainState state(model_cfg, cfg);
  RunTraining(state, corpus, cfg, on_step);
  return state;
}

TrainState TrainStage2(TrainState state, const std::vector<AudioBuffer>& corpus,
                       const TrainConfig& cfg, const StepCallback& on_step) {
  if (cfg.stage != 2) throw Error(ErrorCode::kInvalidArgument, "TrainStage2 needs stage = 2");
  if (state.stage == 1) {
    state.stage = 2;
    state.step = 0;
    state.recent_spectral.clear();
    std::fill(state.codebook_usage.begin(), state.codebook_usage.end(), 0.0);
    state.ConfigureOptimizers(cfg);
  }
  RunTraining(state, corpus, cfg, on_step);
  return state;
}

void SaveCheckpoint(const std::filesystem::path& path, const TrainState& state,
                    const TrainConfig& cfg) {
  TensorRefs tensors;
  for (const auto& [name, values] : state.model().NamedTensors()) {
    tensors.emplace_back(name, values);
  }
  auto add_moments = [&](const nn::Adam& opt, const std::string& prefix) {
    for (std::size_t i = 0; i < opt.parameters().size(); ++i) {
      const std::string& name = opt.parameters()[i]->name;
      tensors.emplace_back(prefix + ".m." + name, &opt.first_moments()[i]);
      tensors.emplace_back(prefix + ".v." + name, &opt.second_moments()[i]);
    }
  };
  add_moments(state.gen_optimizer(), "adam.gen");
  add_moments(state.disc_optimizer(), "adam.disc");
  std::vector<double> recent(state.recent_spectral.begin(), state.recent_spectral.end());
  // Doubles are stored as exact hex bit patterns.
  std::vector<std::string> recent_bits, usage_bits;
  for (double d : recent) {
    std::uint64_t b;
    std::memcpy(&b, &d, sizeof(b));
    recent_bits.push_back(HexU64(b));
  }
  for (double d : state.codebook_usage) {
    std::uint64_t b;
    std::memcpy(&b, &d, sizeof(b));
    usage_bits.push_back(HexU64(b));
  }
  const json meta = {
      {"model", ToJson(state.model().config())},
      {"train", ToJson(cfg)},
      {"state",
       {{"stage", state.stage},
        {"step", state.step},
        {"seed", HexU64(state.seed)},
        {"codebook_initialized", state.codebook_initialized},
        {"gen_adam_steps", state.gen_optimizer().steps()},
        {"disc_adam_steps", state.disc_optimizer().steps()},
        {"recent_spectral", recent_bits},
        {"codebook_usage", usage_bits}}}};
  WriteArchive(path, meta, tensors);
}

namespace {

void RestoreModelTensors(Model& model, const Archive& archive) {
  for (auto& [name, values] : model.NamedTensors()) {
    const std::vector<float>& stored = archive.Get(name);
    if (stored.size() != values->size()) {
      throw Error(ErrorCode::kMalformed, "checkpoint tensor '" + name + "' has " +
                                             std::to_string(stored.size()) +
                                             " values, expected " +
                                             std::to_string(values->size()));
    }
    *values = stored;
  }
}

double DoubleFromHex(const std::string& s) {
  const std::uint64_t b = std::stoull(s, nullptr, 16);
  double d;
  std::memcpy(&d, &b, sizeof(d));
  return d;
}

}  // namespace

LoadedCheckpoint LoadCheckpoint(const std::filesystem::path& path) {
  const Archive archive = ReadArchive(path);
  try {
    const json& meta = archive.meta;
    const ModelConfig model_cfg = ModelConfigFromJson(meta.at("model"));
    const TrainConfig cfg = TrainConfigFromJson(meta.at("train"));
    const json& st = meta.at("state");
    LoadedCheckpoint out{cfg, TrainState(model_cfg, cfg)};
    TrainState& state = out.state;
    state.stage = st.at("stage").get<int>();
    state.step = st.at("step").get<std::int64_t>();
    state.seed = std::stoull(st.at("seed").get<std::string>(), nullptr, 16);
    state.codebook_initialized = st.at("codebook_initialized").get<bool>();
    for (const auto& h : st.at("recent_spectral")) {
      state.recent_spectral.push_back(DoubleFromHex(h.get<std::string>()));
    }
    state.codebook_usage.clear();
    for (const auto& h : st.at("codebook_usage")) {
      state.codebook_usage.push_back(DoubleFromHex(h.get<std::string>()));
    }
    RestoreModelTensors(state.model(), archive);
    state.ConfigureOptimizers(cfg);
    auto restore_moments = [&](nn::Adam& opt, const std::string& prefix, std::int64_t steps) {
      for (std::size_t i = 0; i < opt.parameters().size(); ++i) {
        const std::string& name = opt.parameters()[i]->name;
        opt.first_moments()[i] = archive.Get(prefix + ".m." + name);
        opt.second_moments()[i] = archive.Get(prefix + ".v." + name);
        if (opt.first_moments()[i].size() != opt.parameters()[i]->size() ||
            opt.second_moments()[i].size() != opt.parameters()[i]->size()) {
          throw Error(ErrorCode::kMalformed, "optimizer moment size mismatch for " + name);
        }
      }
      opt.set_steps(steps);
    };
    restore_moments(state.gen_optimizer(), "adam.gen", st.at("gen_adam_steps").get<std::int64_t>());
    restore_moments(state.disc_optimizer(), "adam.disc",
                    st.at("disc_adam_steps").get<std::int64_t>());
    return out;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformed, "checkpoint " + path.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw Error(ErrorCode::kMalformed, "checkpoint " + path.string() + ": bad number");
  }
}

Model LoadModel(const std::filesystem::path& path) {
  const Archive archive = ReadArchive(path);
  ModelConfig cfg;
  try {
    cfg = ModelConfigFromJson(archive.meta.at("model"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformed, "checkpoint " + path.string() + ": " + e.what());
  }
  Model model(cfg, 0);
  RestoreModelTensors(model, archive);
  return model;
}

double Perplexity(const std::vector<double>& histogram) {
  const double total = std::accumulate(histogram.begin(), histogram.end(), 0.0);
  if (total <= 0.0) return 0.0;
  double entropy = 0.0;
  for (double c : histogram) {
    if (c > 0.0) {
      const double p = c / total;
      entropy -= p * std::log(p);
    }
  }
  return std::exp(entropy);
}

double CodebookPerplexity(const Model& model, const std::vector<AudioBuffer>& chunks) {
  if (model.config().latent_mode != LatentMode::kVq) {
    throw Error(ErrorCode::kFailedPrecondition, "perplexity needs a vq model");
  }
  std::vector<double> hist(static_cast<std::size_t>(model.codebook().size()), 0.0);
  for (const AudioBuffer& c : chunks) {
    for (int k : model.Encode(c).indices) hist[static_cast<std::size_t>(k)] += 1.0;
  }
  return Perplexity(hist);
}

std::uint64_t EncoderChecksum(const Model& model) {
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (const nn::Parameter* p : model.encoder().Parameters()) {
    for (float f : p->value) {
      std::uint32_t bits;
      std::memcpy(&bits, &f, sizeof(bits));
      h = MixSeed(h ^ bits);
    }
  }
  return h;
}

}  // namespace vpconv
