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

#ifndef VPCONV_MODEL_H_
#define VPCONV_MODEL_H_

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vpconv/audio.h"
#include "vpconv/nn/layers.h"
#include "vpconv/nn/tensor.h"

namespace vpconv {

enum class LatentMode { kGaussian, kVq };

std::string LatentModeName(LatentMode mode);
LatentMode ParseLatentMode(const std::string& name);

struct ModelConfig {
  int latent_dim = 16;
  std::vector<int> downsample_ratios = {4, 4, 4, 2};
  LatentMode latent_mode = LatentMode::kGaussian;
  int codebook_size = 128;
  int base_channels = 32;
  // Channels double at every downsampling step up to this cap.
  int max_channels = 256;
  // Only causal convolutions are implemented; kept for the config schema.
  bool causal = true;
  int sample_rate = kCanonicalSampleRate;
  double codebook_decay = 0.99;

  // H=8, 16 channels, r=64 at 16 kHz: small enough for CPU training in tests.
  static ModelConfig Toy();

  // Product of the downsample ratios (samples per latent frame).
  int hop_length() const;
  void Validate() const;
};

// Posterior parameters for a batch of chunks. Tensors are (batch, H, frames).
// In VQ mode `mean` holds the continuous pre-quantization encoder output.
struct LatentCode {
  LatentMode mode = LatentMode::kGaussian;
  nn::Tensor mean;
  nn::Tensor log_variance;
  // VQ only: codebook index per (batch, frame), batch-major.
  std::vector<int> indices;
  nn::Tensor quantized;

  int frames() const { return mean.length; }
};

class Codebook {
 public:
  Codebook() = default;
  Codebook(int size, int dim);

  int size() const { return size_; }
  int dim() const { return dim_; }
  std::vector<float>& entries() { return entries_; }
  const std::vector<float>& entries() const { return entries_; }
  std::vector<float>& cluster_size() { return cluster_size_; }
  std::vector<float>& embed_sum() { return embed_sum_; }
  const std::vector<float>& cluster_size() const { return cluster_size_; }
  const std::vector<float>& embed_sum() const { return embed_sum_; }

  // Index of the entry closest to `v` (dim values) in Euclidean distance;
  // ties go to the lowest index.
  int Nearest(const float* v) const;

  // Seeds every entry with a randomly chosen frame of `latents`.
  void InitializeFrom(const nn::Tensor& latents, std::mt19937_64& rng);
  // Exponential-moving-average codebook update from one batch assignment.
  void EmaUpdate(const nn::Tensor& latents, const std::vector<int>& indices,
                 double decay);
  // Re-seeds entries whose EMA usage fell below `min_usage` from random
  // frames of `latents`. Returns how many were replaced.
  int RestartDeadCodes(const nn::Tensor& latents, std::mt19937_64& rng,
                       float min_usage);

 private:
  int size_ = 0;
  int dim_ = 0;
  std::vector<float> entries_;       // size x dim
  std::vector<float> cluster_size_;  // EMA assignment counts
  std::vector<float> embed_sum_;     // EMA sum of assigned latents, size x dim
};

// z = mean + exp(log_variance / 2) * eps with eps ~ N(0, 1) drawn from `seed`.
// Throws kFailedPrecondition in VQ mode. When `noise` is non-null it receives
// eps (needed for the backward pass).
nn::Tensor Reparameterize(const LatentCode& code, std::uint64_t seed,
                          nn::Tensor* noise = nullptr);

// Nearest-entry assignment of every frame of code.mean. The straight-through
// estimator passes d(loss)/d(quantized) unchanged to the pre-quantization
// latent; see StraightThroughGradient.
LatentCode Quantize(const LatentCode& code, const Codebook& book);
nn::Tensor StraightThroughGradient(const nn::Tensor& grad_quantized);

class Encoder {
 public:
  struct Trace {
    nn::Trace body;
    nn::Tensor raw;
  };

  Encoder() = default;
  Encoder(const ModelConfig& cfg, std::mt19937_64& rng);

  // x is (batch, 1, length) with length divisible by the hop length.
  LatentCode Forward(const nn::Tensor& x, Trace* trace) const;
  // Gradient with respect to the input waveform. `grad_log_variance` is
  // ignored (may be empty) in VQ mode.
  nn::Tensor Backward(const nn::Tensor& grad_mean,
                      const nn::Tensor& grad_log_variance, const Trace& trace);
  LatentCode Stream(const nn::Tensor& block, nn::StreamState& state) const;

  std::vector<nn::Parameter*> Parameters();
  std::vector<const nn::Parameter*> Parameters() const;

 private:
  LatentCode Split(const nn::Tensor& raw) const;

  LatentMode mode_ = LatentMode::kGaussian;
  int latent_dim_ = 0;
  int hop_ = 1;
  nn::Sequential body_;
};

struct DecoderOutput {
  nn::Tensor body;             // (B, 1, L), tanh waveform
  nn::Tensor envelope_frames;  // (B, 1, frames), softplus output
  nn::Tensor envelope;         // (B, 1, L), linearly upsampled
  nn::Tensor audio;            // body * envelope
};

class Decoder {
 public:
  struct Trace {
    nn::Trace trunk;
    nn::Trace up;
    nn::Trace env_head;
    nn::Tensor env_pre;
    DecoderOutput out;
  };

  struct StreamState {
    nn::StreamState trunk;
    nn::StreamState up;
    nn::StreamState env_head;
    std::vector<float> previous_envelope;  // one value per batch item
  };

  Decoder() = default;
  Decoder(const ModelConfig& cfg, std::mt19937_64& rng);

  // z is (batch, H, frames). `forced_envelope` replaces the envelope head
  // output with a constant (used to probe the multiplicative gate).
  DecoderOutput Forward(const nn::Tensor& z, Trace* trace,
                        std::optional<float> forced_envelope = std::nullopt) const;
  // d(loss)/d(z) given d(loss)/d(audio).
  nn::Tensor Backward(const nn::Tensor& grad_audio, const Trace& trace);
  nn::Tensor Stream(const nn::Tensor& z_block, StreamState& state) const;

  std::vector<nn::Parameter*> Parameters();
  std::vector<const nn::Parameter*> Parameters() const;

 private:
  nn::Tensor UpsampleEnvelope(const nn::Tensor& frames,
                              std::vector<float>* previous) const;

  int hop_ = 1;
  nn::Sequential trunk_;
  nn::Sequential up_;
  nn::Sequential env_head_;
};

// Folds (B, 1, L) into (B * period, 1, ceil(L / period)), zero-padding the
// tail: column j of item b becomes row b * period + j holding samples
// j, j + period, j + 2 * period, ...
nn::Tensor PeriodReshape(const nn::Tensor& x, int period);
nn::Tensor PeriodReshapeBackward(const nn::Tensor& grad, int period, int length);

struct DiscriminatorOutput {
  nn::Tensor score;
  std::vector<nn::Tensor> features;
};

// One member of the ensemble: either a period discriminator (waveform folded
// by `period`) or a scale discriminator (waveform average-pooled by `pool`).
class SubDiscriminator {
 public:
  enum class Kind { kPeriod, kScale };

  struct Trace {
    std::vector<nn::Trace> convs;
    std::vector<nn::Trace> acts;
    int input_length = 0;
    int padded_length = 0;
  };

  SubDiscriminator(Kind kind, int factor, int channels, std::mt19937_64& rng,
                   const std::string& name);

  DiscriminatorOutput Forward(const nn::Tensor& x, Trace* trace) const;
  // Accumulates parameter gradients; returns d(loss)/d(x).
  nn::Tensor Backward(const nn::Tensor& grad_score,
                      const std::vector<nn::Tensor>& grad_features,
                      const Trace& trace);

  Kind kind() const { return kind_; }
  int factor() const { return factor_; }
  std::vector<nn::CausalConv1d>& convs() { return convs_; }
  void CollectParameters(std::vector<nn::Parameter*>& out);
  void CollectParameters(std::vector<const nn::Parameter*>& out) const;

 private:
  Kind kind_;
  int factor_;
  int total_stride_ = 1;
  std::vector<nn::CausalConv1d> convs_;
  nn::LeakyRelu act_{0.1f};
};

// Multi-period (2, 3, 5, 7, 11) plus multi-scale (x1, x2, x4) ensemble.
class DiscriminatorEnsemble {
 public:
  DiscriminatorEnsemble() = default;
  DiscriminatorEnsemble(int channels, std::mt19937_64& rng);

  static const std::vector<int>& Periods();
  static const std::vector<int>& Scales();

  std::size_t size() const { return subs_.size(); }
  SubDiscriminator& sub(std::size_t i) { return subs_[i]; }
  const SubDiscriminator& sub(std::size_t i) const { return subs_[i]; }
  // Shortest accepted input: twice the largest period.
  int min_length() const;

  std::vector<DiscriminatorOutput> Forward(
      const nn::Tensor& x, std::vector<SubDiscriminator::Trace>* traces) const;
  nn::Tensor Backward(const std::vector<nn::Tensor>& grad_scores,
                      const std::vector<std::vector<nn::Tensor>>& grad_features,
                      const std::vector<SubDiscriminator::Trace>& traces);

  std::vector<nn::Parameter*> Parameters();
  std::vector<const nn::Parameter*> Parameters() const;

 private:
  std::vector<SubDiscriminator> subs_;
};

// Encoder, latent layer, envelope-gated decoder and discriminators.
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  Encoder& encoder() { return encoder_; }
  const Encoder& encoder() const { return encoder_; }
  Decoder& decoder() { return decoder_; }
  const Decoder& decoder() const { return decoder_; }
  Codebook& codebook() { return codebook_; }
  const Codebook& codebook() const { return codebook_; }
  DiscriminatorEnsemble& discriminators() { return discriminators_; }
  const DiscriminatorEnsemble& discriminators() const { return discriminators_; }

  // Single-chunk conveniences. The chunk length must be a multiple of the
  // hop length and the sample rate must match the config.
  LatentCode Encode(const AudioBuffer& chunk) const;
  AudioBuffer Decode(const nn::Tensor& z,
                     std::optional<float> forced_envelope = std::nullopt) const;
  std::vector<DiscriminatorOutput> Discriminate(const AudioBuffer& chunk) const;

  // Deterministic reconstruction: posterior mean (gaussian) or quantized
  // codes (vq), then decode. Input (B, 1, L).
  nn::Tensor Reconstruct(const nn::Tensor& x) const;
  // The latent fed to the decoder at inference time.
  nn::Tensor InferenceLatent(const LatentCode& code) const;

  // Every tensor that defines the model, keyed by a stable name: network
  // parameters plus the codebook buffers ("codebook.*").
  std::vector<std::pair<std::string, std::vector<float>*>> NamedTensors();
  std::vector<std::pair<std::string, const std::vector<float>*>> NamedTensors()
      const;

 private:
  ModelConfig cfg_;
  Encoder encoder_;
  Decoder decoder_;
  Codebook codebook_;
  DiscriminatorEnsemble discriminators_;
};

nn::Tensor ToTensor(const AudioBuffer& buf);
nn::Tensor ToTensor(const std::vector<AudioBuffer>& batch);
AudioBuffer ToAudio(const nn::Tensor& x, int batch_index, int sample_rate);

}  // namespace vpconv

#endif  // VPCONV_MODEL_H_
