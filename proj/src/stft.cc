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

#include "vpconv/stft.h"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "vpconv/error.h"

namespace vpconv {

namespace {

// FFTW's planner is not thread-safe; executing an existing plan is.
std::mutex& PlannerMutex() {
  static std::mutex mu;
  return mu;
}

bool IsPowerOfTwo(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

std::size_t ReflectIndex(std::ptrdiff_t index, std::size_t length) {
  if (length == 1) return 0;
  const auto n = static_cast<std::ptrdiff_t>(length);
  const std::ptrdiff_t period = 2 * (n - 1);
  std::ptrdiff_t i = index % period;
  if (i < 0) i += period;
  if (i >= n) i = period - i;
  return static_cast<std::size_t>(i);
}

StftAnalyzer::StftAnalyzer(int window_size) : window_size_(window_size) {
  if (!IsPowerOfTwo(window_size) || window_size < 32) {
    throw Error(ErrorCode::kInvalidArgument,
                "STFT window must be a power of two >= 32, got " +
                    std::to_string(window_size));
  }
  window_.resize(static_cast<std::size_t>(window_size));
  for (int n = 0; n < window_size; ++n) {
    window_[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / window_size);
  }
  std::lock_guard<std::mutex> lock(PlannerMutex());
  std::vector<double> real(static_cast<std::size_t>(window_size));
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(bins()));
  auto* spec_ptr = reinterpret_cast<fftw_complex*>(spec.data());
  forward_plan_ = fftw_plan_dft_r2c_1d(window_size, real.data(), spec_ptr,
                                       FFTW_ESTIMATE | FFTW_UNALIGNED);
  inverse_plan_ = fftw_plan_dft_c2r_1d(window_size, spec_ptr, real.data(),
                                       FFTW_ESTIMATE | FFTW_UNALIGNED);
}

StftAnalyzer::~StftAnalyzer() {
  std::lock_guard<std::mutex> lock(PlannerMutex());
  fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
}

const StftAnalyzer& StftAnalyzer::ForWindow(int window_size) {
  static std::mutex mu;
  static std::map<int, std::unique_ptr<StftAnalyzer>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto& slot = cache[window_size];
  if (!slot) slot = std::make_unique<StftAnalyzer>(window_size);
  return *slot;
}

std::vector<std::complex<double>> StftAnalyzer::Forward(
    std::span<const double> x) const {
  if (x.empty()) throw Error(ErrorCode::kInvalidArgument, "empty signal");
  const int frames = FrameCount(x.size());
  const int n_bins = bins();
  const int hop = hop_size();
  const int pad = window_size_ / 2;
  std::vector<std::complex<double>> out(static_cast<std::size_t>(frames) *
                                        n_bins);
  std::vector<double> frame(static_cast<std::size_t>(window_size_));
  for (int f = 0; f < frames; ++f) {
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(f) * hop - pad;
    if (start >= 0 && start + window_size_ <= static_cast<std::ptrdiff_t>(x.size())) {
      for (int n = 0; n < window_size_; ++n) frame[n] = window_[n] * x[start + n];
    } else {
      for (int n = 0; n < window_size_; ++n) {
        frame[n] = window_[n] * x[ReflectIndex(start + n, x.size())];
      }
    }
    fftw_execute_dft_r2c(
        static_cast<fftw_plan>(forward_plan_), frame.data(),
        reinterpret_cast<fftw_complex*>(out.data() +
                                        static_cast<std::size_t>(f) * n_bins));
  }
  return out;
}

std::vector<double> StftAnalyzer::MagnitudeBackward(
    std::span<const std::complex<double>> spectrum,
    std::span<const double> grad_magnitude, std::size_t length) const {
  const int frames = FrameCount(length);
  const int n_bins = bins();
  const int hop = hop_size();
  const int pad = window_size_ / 2;
  const int nyquist = window_size_ / 2;
  std::vector<double> grad(length, 0.0);
  std::vector<std::complex<double>> half(static_cast<std::size_t>(n_bins));
  std::vector<double> frame(static_cast<std::size_t>(window_size_));
  for (int f = 0; f < frames; ++f) {
    const std::size_t base = static_cast<std::size_t>(f) * n_bins;
    // d|X_k|/dx_n = w_n Re(u_k e^{+i 2 pi k n / N}) with u_k = X_k / |X_k|.
    // The sum over the half spectrum is one inverse real FFT once interior
    // bins are halved to undo the Hermitian doubling.
    for (int k = 0; k < n_bins; ++k) {
      const std::complex<double> value = spectrum[base + k];
      const double mag = Magnitude(value);
      std::complex<double> c = 0.0;
      if (mag > 0.0) c = grad_magnitude[base + k] * value / mag;
      if (k != 0 && k != nyquist) c *= 0.5;
      half[k] = c;
    }
    // c2r ignores the imaginary parts of the DC and Nyquist bins, which is
    // exactly Re(c_0) and Re(c_{N/2} (-1)^n).
    fftw_execute_dft_c2r(static_cast<fftw_plan>(inverse_plan_),
                         reinterpret_cast<fftw_complex*>(half.data()),
                         frame.data());
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(f) * hop - pad;
    if (start >= 0 && start + window_size_ <= static_cast<std::ptrdiff_t>(length)) {
      for (int n = 0; n < window_size_; ++n) grad[start + n] += window_[n] * frame[n];
    } else {
      for (int n = 0; n < window_size_; ++n) {
        grad[ReflectIndex(start + n, length)] += window_[n] * frame[n];
      }
    }
  }
  return grad;
}

Spectrogram MagnitudeSpectrogram(const AudioBuffer& buf, int window_size) {
  const auto& analyzer = StftAnalyzer::ForWindow(window_size);
  std::vector<double> x(buf.samples().begin(), buf.samples().end());
  const auto spectrum = analyzer.Forward(x);
  Spectrogram s;
  s.frames = analyzer.FrameCount(x.size());
  s.bins = analyzer.bins();
  s.window_size = window_size;
  s.hop_size = analyzer.hop_size();
  s.sample_rate = buf.sample_rate();
  s.magnitudes.resize(spectrum.size());
  std::transform(spectrum.begin(), spectrum.end(), s.magnitudes.begin(),
                 [](const std::complex<double>& c) { return Magnitude(c); });
  return s;
}

std::vector<Spectrogram> MultiscaleStft(const AudioBuffer& buf,
                                        std::span<const int> window_sizes) {
  if (window_sizes.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "no STFT window sizes given");
  }
  const int smallest = *std::min_element(window_sizes.begin(), window_sizes.end());
  if (buf.size() < static_cast<std::size_t>(smallest)) {
    throw Error(ErrorCode::kInvalidArgument,
                "buffer of " + std::to_string(buf.size()) +
                    " samples is shorter than the smallest STFT window " +
                    std::to_string(smallest));
  }
  std::vector<Spectrogram> out;
  out.reserve(window_sizes.size());
  for (int w : window_sizes) out.push_back(MagnitudeSpectrogram(buf, w));
  return out;
}

}  // namespace vpconv
