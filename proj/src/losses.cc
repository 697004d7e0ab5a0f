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

#include "vpconv/losses.h"

#include <cmath>
#include <complex>
#include <string>

#include "vpconv/error.h"

namespace vpconv {

namespace {

double Sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void CheckFinite(std::span<const double> v, const char* what) {
  for (double d : v) {
    if (!std::isfinite(d)) {
      throw Error(ErrorCode::kNumerical, std::string("non-finite ") + what);
    }
  }
}

}  // namespace

void LossWeights::Validate() const {
  for (double w : {kl_beta, vq_commitment, adversarial, feature_matching, spectral}) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw Error(ErrorCode::kInvalidArgument, "loss weights must be finite and >= 0");
    }
  }
}

double MultiscaleSpectralLoss(std::span<const double> target,
                              std::span<const double> estimate,
                              std::span<const int> window_sizes,
                              std::vector<double>* grad_estimate) {
  if (target.size() != estimate.size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "spectral loss length mismatch: " + std::to_string(target.size()) +
                    " vs " + std::to_string(estimate.size()));
  }
  if (grad_estimate != nullptr) grad_estimate->assign(estimate.size(), 0.0);
  double total = 0.0;
  for (int window : window_sizes) {
    const auto& stft = StftAnalyzer::ForWindow(window);
    const auto ref = stft.Forward(target);
    const auto est = stft.Forward(estimate);
    const double norm = static_cast<double>(ref.size());
    double lin = 0.0;
    double log = 0.0;
    std::vector<double> grad_mag;
    if (grad_estimate != nullptr) grad_mag.resize(est.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      const double a = Magnitude(ref[i]);
      const double b = Magnitude(est[i]);
      const double log_diff =
          std::log(a + kSpectralLogEpsilon) - std::log(b + kSpectralLogEpsilon);
      lin += std::abs(a - b);
      log += std::abs(log_diff);
      if (grad_estimate != nullptr) {
        grad_mag[i] = (Sign(b - a) - Sign(log_diff) / (b + kSpectralLogEpsilon)) / norm;
      }
    }
    total += (lin + log) / norm;
    if (grad_estimate != nullptr) {
      const auto g = stft.MagnitudeBackward(est, grad_mag, estimate.size());
      for (std::size_t i = 0; i < g.size(); ++i) (*grad_estimate)[i] += g[i];
    }
  }
  return total;
}

double MultiscaleSpectralLoss(const AudioBuffer& target,
                              const AudioBuffer& estimate,
                              std::span<const int> window_sizes) {
  const std::vector<double> x(target.samples().begin(), target.samples().end());
  const std::vector<double> y(estimate.samples().begin(), estimate.samples().end());
  return MultiscaleSpectralLoss(x, y, window_sizes);
}

double KlGaussian(std::span<const double> mean,
                  std::span<const double> log_variance, int dims,
                  std::vector<double>* grad_mean,
                  std::vector<double>* grad_log_variance) {
  if (mean.size() != log_variance.size() || dims < 1 || mean.empty() ||
      mean.size() % static_cast<std::size_t>(dims) != 0) {
    throw Error(ErrorCode::kInvalidArgument, "KL inputs must be frames x dims");
  }
  CheckFinite(mean, "KL mean");
  CheckFinite(log_variance, "KL log-variance");
  const double frames = static_cast<double>(mean.size() / dims);
  double sum = 0.0;
  if (grad_mean != nullptr) grad_mean->resize(mean.size());
  if (grad_log_variance != nullptr) grad_log_variance->resize(mean.size());
  for (std::size_t i = 0; i < mean.size(); ++i) {
    const double var = std::exp(log_variance[i]);
    sum += mean[i] * mean[i] + var - 1.0 - log_variance[i];
    if (grad_mean != nullptr) (*grad_mean)[i] = mean[i] / frames;
    if (grad_log_variance != nullptr) {
      (*grad_log_variance)[i] = 0.5 * (var - 1.0) / frames;
    }
  }
  return 0.5 * sum / frames;
}

double VqLoss(std::span<const double> pre_quant,
              std::span<const double> quantized, double commitment,
              std::vector<double>* grad_pre, std::vector<double>* grad_quantized) {
  if (pre_quant.size() != quantized.size() || pre_quant.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "VQ loss shape mismatch");
  }
  const double n = static_cast<double>(pre_quant.size());
  double sq = 0.0;
  if (grad_pre != nullptr) grad_pre->resize(pre_quant.size());
  if (grad_quantized != nullptr) grad_quantized->resize(pre_quant.size());
  for (std::size_t i = 0; i < pre_quant.size(); ++i) {
    const double d = pre_quant[i] - quantized[i];
    sq += d * d;
    if (grad_pre != nullptr) (*grad_pre)[i] = commitment * 2.0 * d / n;
    if (grad_quantized != nullptr) (*grad_quantized)[i] = -2.0 * d / n;
  }
  // Both terms share the same forward value; they differ only in gradient.
  return (1.0 + commitment) * sq / n;
}

double HingeAdversarial(const ScoreSet& real, const ScoreSet& fake,
                        HingeSide side, ScoreSet* grad_real, ScoreSet* grad_fake) {
  if (fake.empty() || (side == HingeSide::kDiscriminator && real.size() != fake.size())) {
    throw Error(ErrorCode::kInvalidArgument, "hinge loss needs non-empty score lists");
  }
  const double subs = static_cast<double>(fake.size());
  double total = 0.0;
  if (grad_fake != nullptr) grad_fake->assign(fake.size(), {});
  if (grad_real != nullptr) grad_real->assign(real.size(), {});
  for (std::size_t d = 0; d < fake.size(); ++d) {
    const auto& f = fake[d];
    if (f.empty()) throw Error(ErrorCode::kInvalidArgument, "empty score map");
    const double nf = static_cast<double>(f.size());
    if (grad_fake != nullptr) (*grad_fake)[d].assign(f.size(), 0.0);
    if (side == HingeSide::kGenerator) {
      double sum = 0.0;
      for (std::size_t i = 0; i < f.size(); ++i) {
        sum += f[i];
        if (grad_fake != nullptr) (*grad_fake)[d][i] = -1.0 / (nf * subs);
      }
      total += -sum / nf;
      continue;
    }
    const auto& r = real[d];
    if (r.empty()) throw Error(ErrorCode::kInvalidArgument, "empty score map");
    const double nr = static_cast<double>(r.size());
    if (grad_real != nullptr) (*grad_real)[d].assign(r.size(), 0.0);
    double real_term = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
      const double m = 1.0 - r[i];
      if (m > 0.0) {
        real_term += m;
        if (grad_real != nullptr) (*grad_real)[d][i] = -1.0 / (nr * subs);
      }
    }
    double fake_term = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
      const double m = 1.0 + f[i];
      if (m > 0.0) {
        fake_term += m;
        if (grad_fake != nullptr) (*grad_fake)[d][i] = 1.0 / (nf * subs);
      }
    }
    total += real_term / nr + fake_term / nf;
  }
  return total / subs;
}

double FeatureMatching(const FeatureSet& real, const FeatureSet& fake,
                       FeatureSet* grad_fake) {
  if (real.size() != fake.size() || real.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "feature sets are not congruent");
  }
  if (grad_fake != nullptr) grad_fake->assign(fake.size(), {});
  double total = 0.0;
  for (std::size_t d = 0; d < real.size(); ++d) {
    if (real[d].size() != fake[d].size() || real[d].empty()) {
      throw Error(ErrorCode::kInvalidArgument, "feature layer counts differ");
    }
    const double layers = static_cast<double>(real[d].size());
    if (grad_fake != nullptr) (*grad_fake)[d].resize(real[d].size());
    double sub_total = 0.0;
    for (std::size_t l = 0; l < real[d].size(); ++l) {
      const auto& a = real[d][l];
      const auto& b = fake[d][l];
      if (a.size() != b.size() || a.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "feature map shapes differ");
      }
      const double n = static_cast<double>(a.size());
      double sum = 0.0;
      std::vector<double>* g = nullptr;
      if (grad_fake != nullptr) {
        g = &(*grad_fake)[d][l];
        g->assign(b.size(), 0.0);
      }
      const double scale = 1.0 / (n * layers * static_cast<double>(real.size()));
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double diff = b[i] - a[i];
        sum += std::abs(diff);
        if (g != nullptr) (*g)[i] = Sign(diff) * scale;
      }
      sub_total += sum / n;
    }
    total += sub_total / layers;
  }
  return total / static_cast<double>(real.size());
}

}  // namespace vpconv
