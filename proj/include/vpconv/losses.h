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

#ifndef VPCONV_LOSSES_H_
#define VPCONV_LOSSES_H_

#include <span>
#include <vector>

#include "vpconv/audio.h"
#include "vpconv/stft.h"

namespace vpconv {

struct LossWeights {
  double kl_beta = 0.1;
  double vq_commitment = 0.25;
  double adversarial = 1.0;
  double feature_matching = 10.0;
  double spectral = 1.0;

  // Throws kInvalidArgument if any weight is negative or non-finite.
  void Validate() const;
};

inline constexpr double kSpectralLogEpsilon = 1e-5;

// Sum over STFT scales of the per-scale mean L1 distance between magnitudes
// plus the per-scale mean L1 distance between log(magnitude + 1e-5).
// Symmetric in its arguments. If `grad_estimate` is non-null it receives
// d(loss)/d(estimate).
double MultiscaleSpectralLoss(std::span<const double> target,
                              std::span<const double> estimate,
                              std::span<const int> window_sizes,
                              std::vector<double>* grad_estimate = nullptr);

double MultiscaleSpectralLoss(const AudioBuffer& target,
                              const AudioBuffer& estimate,
                              std::span<const int> window_sizes =
                                  DefaultStftWindows());

// KL(N(mean, exp(log_variance)) || N(0, 1)) summed over the `dims` latent
// channels and averaged over frames. Inputs are frame-major (frames x dims).
double KlGaussian(std::span<const double> mean,
                  std::span<const double> log_variance, int dims,
                  std::vector<double>* grad_mean = nullptr,
                  std::vector<double>* grad_log_variance = nullptr);

// mean((sg(pre) - quant)^2) + commitment * mean((pre - sg(quant))^2), where
// sg stops the gradient: `grad_pre` only sees the commitment term and
// `grad_quantized` only the codebook term.
double VqLoss(std::span<const double> pre_quant,
              std::span<const double> quantized, double commitment,
              std::vector<double>* grad_pre = nullptr,
              std::vector<double>* grad_quantized = nullptr);

enum class HingeSide { kGenerator, kDiscriminator };

// Score maps per sub-discriminator.
using ScoreSet = std::vector<std::vector<double>>;
// Feature maps per sub-discriminator, per layer.
using FeatureSet = std::vector<std::vector<std::vector<double>>>;

// Discriminator side: mean over sub-discriminators of
// mean(relu(1 - real)) + mean(relu(1 + fake)). Generator side: mean over
// sub-discriminators of -mean(fake); `real` is ignored.
double HingeAdversarial(const ScoreSet& real, const ScoreSet& fake,
                        HingeSide side, ScoreSet* grad_real = nullptr,
                        ScoreSet* grad_fake = nullptr);

// Mean over sub-discriminators and layers of the per-layer mean absolute
// difference. Real features are treated as constants; the gradient is with
// respect to the fake features.
double FeatureMatching(const FeatureSet& real, const FeatureSet& fake,
                       FeatureSet* grad_fake = nullptr);

}  // namespace vpconv

#endif  // VPCONV_LOSSES_H_
