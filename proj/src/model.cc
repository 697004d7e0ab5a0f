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

#include "vpconv/model.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "vpconv/error.h"

namespace vpconv {

namespace {

using nn::Tensor;

constexpr float kLeakySlope = 0.2f;
constexpr float kLeakyGain = 1.39f;  // sqrt(2 / (1 + 0.2^2))
constexpr float kScaleFloor = 1e-4f;

float Softplus(float x) { return x > 20.0f ? x : std::log1p(std::exp(x)); }
float Sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

int Channels(const ModelConfig& cfg, int level) {
  long c = cfg.base_channels;
  for (int i = 0; i < level; ++i) c *= 2;
  return static_cast<int>(std::min<long>(c, cfg.max_channels));
}

void AddResidual(nn::Sequential& seq, const std::string& name, int channels,
                 std::mt19937_64& rng) {
  nn::Sequential body;
  body.Add<nn::CausalConv1d>(name + ".conv_a", channels, channels, 3)
      .Initialize(rng, kLeakyGain);
  body.Add<nn::LeakyRelu>(kLeakySlope);
  body.Add<nn::CausalConv1d>(name + ".conv_b", channels, channels, 1)
      .Initialize(rng, 0.3f);
  seq.Add<nn::Residual>(std::move(body));
}

}  // namespace

std::string LatentModeName(LatentMode mode) {
  return mode == LatentMode::kGaussian ? "gaussian" : "vq";
}

LatentMode ParseLatentMode(const std::string& name) {
  if (name == "gaussian") return LatentMode::kGaussian;
  if (name == "vq") return LatentMode::kVq;
  throw Error(ErrorCode::kInvalidArgument,
              "latent mode must be gaussian or vq, got '" + name + "'");
}

ModelConfig ModelConfig::Toy() {
  ModelConfig cfg;
  cfg.latent_dim = 8;
  cfg.downsample_ratios = {4, 4, 4};
  cfg.base_channels = 16;
  cfg.max_channels = 32;
  cfg.codebook_size = 32;
  cfg.sample_rate = kToySampleRate;
  return cfg;
}

int ModelConfig::hop_length() const {
  int r = 1;
  for (int v : downsample_ratios) r *= v;
  return r;
}

void ModelConfig::Validate() const {
  auto fail = [](const std::string& what) {
    throw Error(ErrorCode::kInvalidArgument, "model config: " + what);
  };
  if (latent_dim < 1) fail("latent_dim must be >= 1");
  if (downsample_ratios.empty()) fail("downsample_ratios must not be empty");
  for (int r : downsample_ratios) {
    if (r < 1) fail("downsample ratios must be >= 1");
  }
  if (latent_mode == LatentMode::kVq && codebook_size < 1) {
    fail("codebook_size must be >= 1");
  }
  if (base_channels < 1 || max_channels < base_channels) fail("bad channel counts");
  if (!causal) fail("only causal models are supported");
  if (sample_rate <= 0) fail("sample_rate must be positive");
  if (!(codebook_decay > 0.0 && codebook_decay < 1.0)) {
    fail("codebook_decay must be in (0, 1)");
  }
}

Codebook::Codebook(int size, int dim)
    : size_(size),
      dim_(dim),
      entries_(static_cast<std::size_t>(size) * dim, 0.0f),
      cluster_size_(static_cast<std::size_t>(size), 1.0f),
      embed_sum_(static_cast<std::size_t>(size) * dim, 0.0f) {}

int Codebook::Nearest(const float* v) const {
  if (size_ < 1) throw Error(ErrorCode::kFailedPrecondition, "empty codebook");
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int k = 0; k < size_; ++k) {
    const float* e = entries_.data() + static_cast<std::size_t>(k) * dim_;
    double d = 0.0;
    for (int h = 0; h < dim_; ++h) {
      const double diff = static_cast<double>(v[h]) - e[h];
      d += diff * diff;
    }
    if (d < best_dist) {
      best_dist = d;
      best = k;
    }
  }
  return best;
}

namespace {

// Frame (b, t) of a (B, H, T) tensor copied into `out`.
void GatherFrame(const Tensor& z, int b, int t, float* out) {
  for (int h = 0; h < z.channels; ++h) out[h] = z.at(b, h, t);
}

}  // namespace

void Codebook::InitializeFrom(const Tensor& latents, std::mt19937_64& rng) {
  const int frames = latents.batch * latents.length;
  std::uniform_int_distribution<int> pick(0, frames - 1);
  for (int k = 0; k < size_; ++k) {
    const int f = pick(rng);
    float* e = entries_.data() + static_cast<std::size_t>(k) * dim_;
    GatherFrame(latents, f / latents.length, f % latents.length, e);
    std::copy_n(e, dim_, embed_sum_.data() + static_cast<std::size_t>(k) * dim_);
    cluster_size_[k] = 1.0f;
  }
}

void Codebook::EmaUpdate(const Tensor& latents, const std::vector<int>& indices,
                         double decay) {
  std::vector<double> counts(static_cast<std::size_t>(size_), 0.0);
  std::vector<double> sums(entries_.size(), 0.0);
  std::vector<float> frame(static_cast<std::size_t>(dim_));
  for (int b = 0; b < latents.batch; ++b) {
    for (int t = 0; t < latents.length; ++t) {
      const int k = indices[static_cast<std::size_t>(b) * latents.length + t];
      GatherFrame(latents, b, t, frame.data());
      counts[k] += 1.0;
      for (int h = 0; h < dim_; ++h) {
        sums[static_cast<std::size_t>(k) * dim_ + h] += frame[h];
      }
    }
  }
  const auto d = static_cast<float>(decay);
  double total = 0.0;
  for (int k = 0; k < size_; ++k) {
    cluster_size_[k] = d * cluster_size_[k] + (1.0f - d) * static_cast<float>(counts[k]);
    total += cluster_size_[k];
  }
  for (std::size_t i = 0; i < embed_sum_.size(); ++i) {
    embed_sum_[i] = d * embed_sum_[i] + (1.0f - d) * static_cast<float>(sums[i]);
  }
  // Laplace smoothing keeps rarely used entries finite.
  constexpr double kEps = 1e-5;
  for (int k = 0; k < size_; ++k) {
    const double smoothed =
        (cluster_size_[k] + kEps) / (total + size_ * kEps) * total;
    for (int h = 0; h < dim_; ++h) {
      const std::size_t i = static_cast<std::size_t>(k) * dim_ + h;
      entries_[i] = static_cast<float>(embed_sum_[i] / smoothed);
    }
  }
}

int Codebook::RestartDeadCodes(const Tensor& latents, std::mt19937_64& rng,
                               float min_usage) {
  const int frames = latents.batch * latents.length;
  std::uniform_int_distribution<int> pick(0, frames - 1);
  int restarted = 0;
  for (int k = 0; k < size_; ++k) {
    if (cluster_size_[k] >= min_usage) continue;
    const int f = pick(rng);
    float* e = entries_.data() + static_cast<std::size_t>(k) * dim_;
    GatherFrame(latents, f / latents.length, f % latents.length, e);
    std::copy_n(e, dim_, embed_sum_.data() + static_cast<std::size_t>(k) * dim_);
    cluster_size_[k] = 1.0f;
    ++restarted;
  }
  return restarted;
}

Tensor Reparameterize(const LatentCode& code, std::uint64_t seed, Tensor* noise) {
  if (code.mode != LatentMode::kGaussian) {
    throw Error(ErrorCode::kFailedPrecondition,
                "reparameterization needs a gaussian latent");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Tensor z = code.mean;
  if (noise != nullptr) *noise = Tensor(z.batch, z.channels, z.length);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const auto eps = static_cast<float>(normal(rng));
    const float scale = std::exp(0.5f * code.log_variance.data[i]);
    z.data[i] = code.mean.data[i] + scale * eps;
    if (noise != nullptr) noise->data[i] = eps;
  }
  return z;
}

LatentCode Quantize(const LatentCode& code, const Codebook& book) {
  if (book.size() < 1) throw Error(ErrorCode::kFailedPrecondition, "empty codebook");
  if (book.dim() != code.mean.channels) {
    throw Error(ErrorCode::kInvalidArgument, "codebook dimension mismatch");
  }
  LatentCode out = code;
  out.mode = LatentMode::kVq;
  out.quantized = Tensor(code.mean.batch, code.mean.channels, code.mean.length);
  out.indices.assign(static_cast<std::size_t>(code.mean.batch) * code.mean.length, 0);
  std::vector<float> frame(static_cast<std::size_t>(book.dim()));
  for (int b = 0; b < code.mean.batch; ++b) {
    for (int t = 0; t < code.mean.length; ++t) {
      GatherFrame(code.mean, b, t, frame.data());
      const int k = book.Nearest(frame.data());
      out.indices[static_cast<std::size_t>(b) * code.mean.length + t] = k;
      const float* e = book.entries().data() + static_cast<std::size_t>(k) * book.dim();
      for (int h = 0; h < book.dim(); ++h) out.quantized.at(b, h, t) = e[h];
    }
  }
  return out;
}

Tensor StraightThroughGradient(const Tensor& grad_quantized) {
  return grad_quantized;
}

Encoder::Encoder(const ModelConfig& cfg, std::mt19937_64& rng)
    : mode_(cfg.latent_mode), latent_dim_(cfg.latent_dim), hop_(cfg.hop_length()) {
  body_.Add<nn::CausalConv1d>("encoder.conv_in", 1, Channels(cfg, 0), 7)
      .Initialize(rng, kLeakyGain);
  body_.Add<nn::LeakyRelu>(kLeakySlope);
  for (std::size_t i = 0; i < cfg.downsample_ratios.size(); ++i) {
    const int r = cfg.downsample_ratios[i];
    const int c_in = Channels(cfg, static_cast<int>(i));
    const int c_out = Channels(cfg, static_cast<int>(i) + 1);
    const std::string name = "encoder.level" + std::to_string(i);
    body_.Add<nn::CausalConv1d>(name + ".down", c_in, c_out, 2 * r, r)
        .Initialize(rng, kLeakyGain);
    body_.Add<nn::LeakyRelu>(kLeakySlope);
    AddResidual(body_, name + ".res", c_out, rng);
  }
  body_.Add<nn::LeakyRelu>(kLeakySlope);
  const int head_out = mode_ == LatentMode::kGaussian ? 2 * latent_dim_ : latent_dim_;
  body_.Add<nn::CausalConv1d>(
           "encoder.head",
           Channels(cfg, static_cast<int>(cfg.downsample_ratios.size())), head_out, 3)
      .Initialize(rng, 0.5f);
}

LatentCode Encoder::Split(const Tensor& raw) const {
  LatentCode code;
  code.mode = mode_;
  code.mean = nn::SliceChannels(raw, 0, latent_dim_);
  if (mode_ == LatentMode::kGaussian) {
    code.log_variance = nn::SliceChannels(raw, latent_dim_, 2 * latent_dim_);
    for (float& v : code.log_variance.data) {
      v = 2.0f * std::log(Softplus(v) + kScaleFloor);
    }
  }
  return code;
}

LatentCode Encoder::Forward(const Tensor& x, Trace* trace) const {
  if (x.length % hop_ != 0) {
    throw Error(ErrorCode::kInvalidArgument,
                "encoder input length " + std::to_string(x.length) +
                    " is not a multiple of the hop length " + std::to_string(hop_));
  }
  Tensor raw = body_.Forward(x, trace != nullptr ? &trace->body : nullptr);
  LatentCode code = Split(raw);
  if (trace != nullptr) trace->raw = std::move(raw);
  return code;
}

Tensor Encoder::Backward(const Tensor& grad_mean, const Tensor& grad_log_variance,
                         const Trace& trace) {
  const Tensor& raw = trace.raw;
  Tensor grad_raw(raw.batch, raw.channels, raw.length);
  for (int b = 0; b < raw.batch; ++b) {
    for (int h = 0; h < latent_dim_; ++h) {
      std::copy_n(grad_mean.row(b, h), raw.length, grad_raw.row(b, h));
      if (mode_ != LatentMode::kGaussian || grad_log_variance.empty()) continue;
      const float* pre = raw.row(b, latent_dim_ + h);
      const float* g = grad_log_variance.row(b, h);
      float* out = grad_raw.row(b, latent_dim_ + h);
      for (int t = 0; t < raw.length; ++t) {
        out[t] = g[t] * 2.0f * Sigmoid(pre[t]) / (Softplus(pre[t]) + kScaleFloor);
      }
    }
  }
  return body_.Backward(grad_raw, trace.body);
}

LatentCode Encoder::Stream(const Tensor& block, nn::StreamState& state) const {
  if (block.length % hop_ != 0) {
    throw Error(ErrorCode::kInvalidArgument, "stream block is not a multiple of the hop");
  }
  return Split(body_.Stream(block, state));
}

std::vector<nn::Parameter*> Encoder::Parameters() {
  std::vector<nn::Parameter*> out;
  body_.CollectParameters(out);
  return out;
}

std::vector<const nn::Parameter*> Encoder::Parameters() const {
  std::vector<const nn::Parameter*> out;
  body_.CollectParameters(out);
  return out;
}

Decoder::Decoder(const ModelConfig& cfg, std::mt19937_64& rng)
    : hop_(cfg.hop_length()) {
  const int levels = static_cast<int>(cfg.downsample_ratios.size());
  trunk_.Add<nn::CausalConv1d>("decoder.conv_in", cfg.latent_dim,
                               Channels(cfg, levels), 3)
      .Initialize(rng, kLeakyGain);
  trunk_.Add<nn::LeakyRelu>(kLeakySlope);

  auto& env = env_head_.Add<nn::CausalConv1d>("decoder.envelope", Channels(cfg, levels), 1, 1);
  env.Initialize(rng, 0.1f);
  // softplus(-1) ~ 0.31 keeps the initial output at a moderate level.
  env.bias().value[0] = -1.0f;

  for (int i = levels - 1; i >= 0; --i) {
    const int r = cfg.downsample_ratios[static_cast<std::size_t>(i)];
    const int c_in = Channels(cfg, i + 1);
    const int c_out = Channels(cfg, i);
    const std::string name = "decoder.level" + std::to_string(i);
    up_.Add<nn::CausalConv1d>(name + ".up", c_in, c_out * r, 3)
        .Initialize(rng, kLeakyGain);
    up_.Add<nn::PixelShuffle>(r);
    up_.Add<nn::LeakyRelu>(kLeakySlope);
    // Full-rate residual blocks dominate the cost; the last level skips it.
    if (i > 0) AddResidual(up_, name + ".res", c_out, rng);
  }
  up_.Add<nn::CausalConv1d>("decoder.wave_out", Channels(cfg, 0), 1, 7)
      .Initialize(rng, 1.0f);
  up_.Add<nn::Tanh>();
}

Tensor Decoder::UpsampleEnvelope(const Tensor& frames,
                                 std::vector<float>* previous) const {
  Tensor out(frames.batch, 1, frames.length * hop_);
  const float inv_hop = 1.0f / static_cast<float>(hop_);
  for (int b = 0; b < frames.batch; ++b) {
    const float* e = frames.row(b, 0);
    float* dst = out.row(b, 0);
    float prev = (previous != nullptr && !previous->empty()) ? (*previous)[b] : e[0];
    for (int t = 0; t < frames.length; ++t) {
      const float cur = e[t];
      for (int j = 0; j < hop_; ++j) {
        const float alpha = static_cast<float>(j + 1) * inv_hop;
        dst[t * hop_ + j] = prev + (cur - prev) * alpha;
      }
      prev = cur;
    }
    if (previous != nullptr) {
      previous->resize(static_cast<std::size_t>(frames.batch));
      (*previous)[b] = prev;
    }
  }
  return out;
}

DecoderOutput Decoder::Forward(const Tensor& z, Trace* trace,
                               std::optional<float> forced_envelope) const {
  if (z.length < 1) throw Error(ErrorCode::kInvalidArgument, "decoder needs >= 1 frame");
  Tensor h = trunk_.Forward(z, trace != nullptr ? &trace->trunk : nullptr);
  Tensor env_pre = env_head_.Forward(h, trace != nullptr ? &trace->env_head : nullptr);
  DecoderOutput out;
  out.envelope_frames = env_pre;
  for (float& v : out.envelope_frames.data) {
    v = forced_envelope.has_value() ? *forced_envelope : Softplus(v);
  }
  out.body = up_.Forward(h, trace != nullptr ? &trace->up : nullptr);
  out.envelope = UpsampleEnvelope(out.envelope_frames, nullptr);
  out.audio = out.body;
  for (std::size_t i = 0; i < out.audio.size(); ++i) {
    out.audio.data[i] *= out.envelope.data[i];
  }
  if (trace != nullptr) {
    trace->env_pre = std::move(env_pre);
    trace->out = out;
  }
  return out;
}

Tensor Decoder::Backward(const Tensor& grad_audio, const Trace& trace) {
  const DecoderOutput& out = trace.out;
  Tensor grad_body = grad_audio;
  Tensor grad_env(grad_audio.batch, 1, grad_audio.length);
  for (std::size_t i = 0; i < grad_audio.size(); ++i) {
    grad_body.data[i] *= out.envelope.data[i];
    grad_env.data[i] = grad_audio.data[i] * out.body.data[i];
  }
  const int frames = out.envelope_frames.length;
  Tensor grad_env_pre(grad_audio.batch, 1, frames);
  const float inv_hop = 1.0f / static_cast<float>(hop_);
  for (int b = 0; b < grad_audio.batch; ++b) {
    const float* g = grad_env.row(b, 0);
    float* ge = grad_env_pre.row(b, 0);
    for (int t = 0; t < frames; ++t) {
      for (int j = 0; j < hop_; ++j) {
        const float alpha = static_cast<float>(j + 1) * inv_hop;
        const float v = g[t * hop_ + j];
        ge[t] += v * alpha;
        ge[t > 0 ? t - 1 : 0] += v * (1.0f - alpha);
      }
    }
    const float* pre = trace.env_pre.row(b, 0);
    for (int t = 0; t < frames; ++t) ge[t] *= Sigmoid(pre[t]);
  }
  Tensor grad_h = up_.Backward(grad_body, trace.up);
  const Tensor grad_h_env = env_head_.Backward(grad_env_pre, trace.env_head);
  for (std::size_t i = 0; i < grad_h.size(); ++i) grad_h.data[i] += grad_h_env.data[i];
  return trunk_.Backward(grad_h, trace.trunk);
}

Tensor Decoder::Stream(const Tensor& z_block, StreamState& state) const {
  Tensor h = trunk_.Stream(z_block, state.trunk);
  Tensor env = env_head_.Stream(h, state.env_head);
  for (float& v : env.data) v = Softplus(v);
  Tensor body = up_.Stream(h, state.up);
  Tensor envelope = UpsampleEnvelope(env, &state.previous_envelope);
  for (std::size_t i = 0; i < body.size(); ++i) body.data[i] *= envelope.data[i];
  return body;
}

std::vector<nn::Parameter*> Decoder::Parameters() {
  std::vector<nn::Parameter*> out;
  trunk_.CollectParameters(out);
  env_head_.CollectParameters(out);
  up_.CollectParameters(out);
  return out;
}

std::vector<const nn::Parameter*> Decoder::Parameters() const {
  std::vector<const nn::Parameter*> out;
  trunk_.CollectParameters(out);
  env_head_.CollectParameters(out);
  up_.CollectParameters(out);
  return out;
}

Tensor PeriodReshape(const Tensor& x, int period) {
  const int rows = (x.length + period - 1) / period;
  Tensor out(x.batch * period, 1, rows);
  for (int b = 0; b < x.batch; ++b) {
    const float* src = x.row(b, 0);
    for (int i = 0; i < x.length; ++i) {
      out.at(b * period + i % period, 0, i / period) = src[i];
    }
  }
  return out;
}

Tensor PeriodReshapeBackward(const Tensor& grad, int period, int length) {
  Tensor out(grad.batch / period, 1, length);
  for (int b = 0; b < out.batch; ++b) {
    float* dst = out.row(b, 0);
    for (int i = 0; i < length; ++i) {
      dst[i] = grad.at(b * period + i % period, 0, i / period);
    }
  }
  return out;
}

SubDiscriminator::SubDiscriminator(Kind kind, int factor, int channels,
                                   std::mt19937_64& rng, const std::string& name)
    : kind_(kind), factor_(factor) {
  const int d = channels;
  struct Spec {
    int in, out, kernel, stride;
  };
  std::vector<Spec> specs;
  if (kind == Kind::kPeriod) {
    specs = {{1, d, 5, 3}, {d, 2 * d, 5, 3}, {2 * d, 4 * d, 5, 3},
             {4 * d, 4 * d, 5, 1}, {4 * d, 1, 3, 1}};
  } else {
    specs = {{1, d, 15, 1}, {d, 2 * d, 11, 4}, {2 * d, 4 * d, 11, 4},
             {4 * d, 4 * d, 5, 1}, {4 * d, 1, 3, 1}};
  }
  convs_.reserve(specs.size());
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const Spec& s = specs[i];
    convs_.emplace_back(name + ".conv" + std::to_string(i), s.in, s.out, s.kernel,
                        s.stride);
    convs_.back().Initialize(rng, i + 1 < specs.size() ? 1.3f : 1.0f);
    total_stride_ *= s.stride;
  }
}

DiscriminatorOutput SubDiscriminator::Forward(const Tensor& x, Trace* trace) const {
  const int multiple = factor_ * total_stride_;
  const int padded = (x.length + multiple - 1) / multiple * multiple;
  Tensor h = padded == x.length ? x : nn::ConcatTime(x, Tensor(x.batch, 1, padded - x.length));
  h = kind_ == Kind::kPeriod ? PeriodReshape(h, factor_) : nn::AvgPool(h, factor_);
  if (trace != nullptr) {
    trace->convs.assign(convs_.size(), nn::Trace{});
    trace->acts.assign(convs_.size(), nn::Trace{});
    trace->input_length = x.length;
    trace->padded_length = padded;
  }
  DiscriminatorOutput out;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    h = convs_[i].Forward(h, trace != nullptr ? &trace->convs[i] : nullptr);
    if (i + 1 == convs_.size()) break;
    h = act_.Forward(h, trace != nullptr ? &trace->acts[i] : nullptr);
    out.features.push_back(h);
  }
  out.score = std::move(h);
  return out;
}

Tensor SubDiscriminator::Backward(const Tensor& grad_score,
                                  const std::vector<Tensor>& grad_features,
                                  const Trace& trace) {
  Tensor g = convs_.back().Backward(grad_score, trace.convs.back());
  for (std::size_t i = convs_.size() - 1; i-- > 0;) {
    if (i < grad_features.size() && !grad_features[i].empty()) {
      for (std::size_t j = 0; j < g.size(); ++j) g.data[j] += grad_features[i].data[j];
    }
    g = act_.Backward(g, trace.acts[i]);
    g = convs_[i].Backward(g, trace.convs[i]);
  }
  g = kind_ == Kind::kPeriod ? PeriodReshapeBackward(g, factor_, trace.padded_length)
                             : nn::AvgPoolBackward(g, factor_, trace.padded_length);
  return trace.padded_length == trace.input_length
             ? g
             : nn::SliceTime(g, 0, trace.input_length);
}

void SubDiscriminator::CollectParameters(std::vector<nn::Parameter*>& out) {
  for (auto& c : convs_) c.CollectParameters(out);
}

void SubDiscriminator::CollectParameters(std::vector<const nn::Parameter*>& out) const {
  for (const auto& c : convs_) c.CollectParameters(out);
}

DiscriminatorEnsemble::DiscriminatorEnsemble(int channels, std::mt19937_64& rng) {
  for (int p : Periods()) {
    subs_.emplace_back(SubDiscriminator::Kind::kPeriod, p, channels, rng,
                       "disc.period" + std::to_string(p));
  }
  for (int s : Scales()) {
    subs_.emplace_back(SubDiscriminator::Kind::kScale, s, channels, rng,
                       "disc.scale" + std::to_string(s));
  }
}

const std::vector<int>& DiscriminatorEnsemble::Periods() {
  static const std::vector<int> periods = {2, 3, 5, 7, 11};
  return periods;
}

const std::vector<int>& DiscriminatorEnsemble::Scales() {
  static const std::vector<int> scales = {1, 2, 4};
  return scales;
}

int DiscriminatorEnsemble::min_length() const {
  return 2 * *std::max_element(Periods().begin(), Periods().end());
}

std::vector<DiscriminatorOutput> DiscriminatorEnsemble::Forward(
    const Tensor& x, std::vector<SubDiscriminator::Trace>* traces) const {
  if (x.length < min_length()) {
    throw Error(ErrorCode::kInvalidArgument,
                "chunk of " + std::to_string(x.length) +
                    " samples is too short for the discriminators (need >= " +
                    std::to_string(min_length()) + ")");
  }
  if (traces != nullptr) traces->assign(subs_.size(), SubDiscriminator::Trace{});
  std::vector<DiscriminatorOutput> out;
  out.reserve(subs_.size());
  for (std::size_t i = 0; i < subs_.size(); ++i) {
    out.push_back(subs_[i].Forward(x, traces != nullptr ? &(*traces)[i] : nullptr));
  }
  return out;
}

Tensor DiscriminatorEnsemble::Backward(
    const std::vector<Tensor>& grad_scores,
    const std::vector<std::vector<Tensor>>& grad_features,
    const std::vector<SubDiscriminator::Trace>& traces) {
  Tensor total;
  static const std::vector<Tensor> kNoFeatures;
  for (std::size_t i = 0; i < subs_.size(); ++i) {
    const auto& gf = i < grad_features.size() ? grad_features[i] : kNoFeatures;
    Tensor g = subs_[i].Backward(grad_scores[i], gf, traces[i]);
    if (total.empty()) {
      total = std::move(g);
    } else {
      for (std::size_t j = 0; j < total.size(); ++j) total.data[j] += g.data[j];
    }
  }
  return total;
}

std::vector<nn::Parameter*> DiscriminatorEnsemble::Parameters() {
  std::vector<nn::Parameter*> out;
  for (auto& s : subs_) s.CollectParameters(out);
  return out;
}

std::vector<const nn::Parameter*> DiscriminatorEnsemble::Parameters() const {
  std::vector<const nn::Parameter*> out;
  for (const auto& s : subs_) s.CollectParameters(out);
  return out;
}

Model::Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.Validate();
  std::mt19937_64 rng(seed);
  encoder_ = Encoder(cfg_, rng);
  decoder_ = Decoder(cfg_, rng);
  codebook_ = Codebook(cfg_.codebook_size, cfg_.latent_dim);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  for (float& v : codebook_.entries()) v = normal(rng);
  codebook_.embed_sum() = codebook_.entries();
  discriminators_ = DiscriminatorEnsemble(std::max(8, cfg_.base_channels / 2), rng);
}

LatentCode Model::Encode(const AudioBuffer& chunk) const {
  if (chunk.sample_rate() != cfg_.sample_rate) {
    throw Error(ErrorCode::kInvalidArgument, "chunk sample rate does not match the model");
  }
  LatentCode code = encoder_.Forward(ToTensor(chunk), nullptr);
  if (cfg_.latent_mode == LatentMode::kVq) code = Quantize(code, codebook_);
  return code;
}

AudioBuffer Model::Decode(const Tensor& z, std::optional<float> forced_envelope) const {
  const DecoderOutput out = decoder_.Forward(z, nullptr, forced_envelope);
  return ToAudio(out.audio, 0, cfg_.sample_rate);
}

std::vector<DiscriminatorOutput> Model::Discriminate(const AudioBuffer& chunk) const {
  return discriminators_.Forward(ToTensor(chunk), nullptr);
}

Tensor Model::InferenceLatent(const LatentCode& code) const {
  if (cfg_.latent_mode == LatentMode::kGaussian) return code.mean;
  if (code.mode == LatentMode::kVq && !code.quantized.empty()) return code.quantized;
  return Quantize(code, codebook_).quantized;
}

Tensor Model::Reconstruct(const Tensor& x) const {
  const LatentCode code = encoder_.Forward(x, nullptr);
  return decoder_.Forward(InferenceLatent(code), nullptr).audio;
}

std::vector<std::pair<std::string, std::vector<float>*>> Model::NamedTensors() {
  std::vector<std::pair<std::string, std::vector<float>*>> out;
  for (nn::Parameter* p : encoder_.Parameters()) out.emplace_back(p->name, &p->value);
  for (nn::Parameter* p : decoder_.Parameters()) out.emplace_back(p->name, &p->value);
  for (nn::Parameter* p : discriminators_.Parameters()) out.emplace_back(p->name, &p->value);
  out.emplace_back("codebook.entries", &codebook_.entries());
  out.emplace_back("codebook.cluster_size", &codebook_.cluster_size());
  out.emplace_back("codebook.embed_sum", &codebook_.embed_sum());
  return out;
}

std::vector<std::pair<std::string, const std::vector<float>*>> Model::NamedTensors()
    const {
  std::vector<std::pair<std::string, const std::vector<float>*>> out;
  for (const nn::Parameter* p : encoder_.Parameters()) out.emplace_back(p->name, &p->value);
  for (const nn::Parameter* p : decoder_.Parameters()) out.emplace_back(p->name, &p->value);
  for (const nn::Parameter* p : discriminators_.Parameters()) {
    out.emplace_back(p->name, &p->value);
  }
  out.emplace_back("codebook.entries", &codebook_.entries());
  out.emplace_back("codebook.cluster_size", &codebook_.cluster_size());
  out.emplace_back("codebook.embed_sum", &codebook_.embed_sum());
  return out;
}

Tensor ToTensor(const AudioBuffer& buf) {
  Tensor t(1, 1, static_cast<int>(buf.size()));
  std::copy(buf.samples().begin(), buf.samples().end(), t.data.begin());
  return t;
}

Tensor ToTensor(const std::vector<AudioBuffer>& batch) {
  if (batch.empty()) return Tensor();
  const auto len = static_cast<int>(batch.front().size());
  Tensor t(static_cast<int>(batch.size()), 1, len);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (static_cast<int>(batch[b].size()) != len) {
      throw Error(ErrorCode::kInvalidArgument, "batch chunks differ in length");
    }
    std::copy(batch[b].samples().begin(), batch[b].samples().end(),
              t.row(static_cast<int>(b), 0));
  }
  return t;
}

AudioBuffer ToAudio(const Tensor& x, int batch_index, int sample_rate) {
  const float* r = x.row(batch_index, 0);
  return AudioBuffer(std::vector<float>(r, r + x.length), sample_rate);
}

}  // namespace vpconv
