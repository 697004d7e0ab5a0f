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

#ifndef VPCONV_STFT_H_
#define VPCONV_STFT_H_

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "vpconv/audio.h"

namespace vpconv {

// Magnitude spectrogram, frame-major: magnitudes[frame * bins + bin].
struct Spectrogram {
  std::vector<double> magnitudes;
  int frames = 0;
  int bins = 0;
  int window_size = 0;
  int hop_size = 0;
  int sample_rate = 0;

  double at(int frame, int bin) const {
    return magnitudes[static_cast<std::size_t>(frame) * bins + bin];
  }
  double BinFrequency(int bin) const {
    return static_cast<double>(bin) * sample_rate / window_size;
  }
};

// Centered STFT with a periodic Hann window, hop = window / 4 and reflect
// padding of window / 2 on both sides, so a signal of n samples always gives
// n / hop + 1 frames. Instances are immutable and safe to share.
class StftAnalyzer {
 public:
  explicit StftAnalyzer(int window_size);
  ~StftAnalyzer();
  StftAnalyzer(const StftAnalyzer&) = delete;
  StftAnalyzer& operator=(const StftAnalyzer&) = delete;

  // Process-wide cached analyzer for a window size.
  static const StftAnalyzer& ForWindow(int window_size);

  int window_size() const { return window_size_; }
  int hop_size() const { return window_size_ / 4; }
  int bins() const { return window_size_ / 2 + 1; }
  int FrameCount(std::size_t length) const {
    return static_cast<int>(length / static_cast<std::size_t>(hop_size())) + 1;
  }

  // Complex spectrum, frame-major (frames x bins).
  std::vector<std::complex<double>> Forward(std::span<const double> x) const;

  // Gradient of a scalar loss with respect to the input signal, given the
  // loss gradient with respect to every |X(frame, bin)| and the spectrum
  // returned by Forward. Bins with zero magnitude receive no gradient.
  std::vector<double> MagnitudeBackward(
      std::span<const std::complex<double>> spectrum,
      std::span<const double> grad_magnitude, std::size_t length) const;

 private:
  int window_size_;
  std::vector<double> window_;
  void* forward_plan_ = nullptr;
  void* inverse_plan_ = nullptr;
};

// Maps an index of the reflect-padded signal onto the original signal.
std::size_t ReflectIndex(std::ptrdiff_t index, std::size_t length);

// |c| without the overflow guards of std::abs (hypot), which are not needed
// for audio-range values.
inline double Magnitude(const std::complex<double>& c) {
  return std::sqrt(c.real() * c.real() + c.imag() * c.imag());
}

Spectrogram MagnitudeSpectrogram(const AudioBuffer& buf, int window_size);

// One magnitude spectrogram per window size. Window sizes must be powers of
// two >= 32 and the buffer must be at least as long as the smallest window.
std::vector<Spectrogram> MultiscaleStft(const AudioBuffer& buf,
                                        std::span<const int> window_sizes);

inline const std::vector<int>& DefaultStftWindows() {
  static const std::vector<int> windows = {2048, 1024, 512, 256, 128};
  return windows;
}

}  // namespace vpconv

#endif  // VPCONV_STFT_H_
