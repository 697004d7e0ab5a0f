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

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "vpconv/error.h"

namespace vpconv {
namespace {

TEST(ReflectIndexTest, MirrorsWithoutRepeatingEdges) {
  EXPECT_EQ(ReflectIndex(-1, 5), 1u);
  EXPECT_EQ(ReflectIndex(-4, 5), 4u);
  EXPECT_EQ(ReflectIndex(5, 5), 3u);
  EXPECT_EQ(ReflectIndex(8, 5), 0u);
  EXPECT_EQ(ReflectIndex(2, 5), 2u);
  EXPECT_EQ(ReflectIndex(7, 1), 0u);
}

TEST(StftTest, FrameGeometry) {
  const StftAnalyzer a(256);
  EXPECT_EQ(a.hop_size(), 64);
  EXPECT_EQ(a.bins(), 129);
  EXPECT_EQ(a.FrameCount(1000), 1000 / 64 + 1);
  EXPECT_THROW(StftAnalyzer(100), Error);
  EXPECT_THROW(StftAnalyzer(16), Error);
}

// Direct DFT of one reflect-padded, Hann-windowed frame.
TEST(StftTest, MatchesDirectDft) {
  const int n = 64;
  std::vector<double> x(300);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::sin(0.37 * i) + 0.1 * std::cos(1.9 * i);
  const auto spec = StftAnalyzer::ForWindow(n).Forward(x);
  for (int f : {0, 2, 4}) {
    for (int k : {0, 3, 17, 32}) {
      std::complex<double> acc = 0.0;
      for (int t = 0; t < n; ++t) {
        const double w = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * t / n);
        const double v = x[ReflectIndex(f * 16 - n / 2 + t, x.size())];
        acc += w * v * std::polar(1.0, -2.0 * std::numbers::pi * k * t / n);
      }
      EXPECT_NEAR(std::abs(spec[f * 33 + k] - acc), 0.0, 1e-9) << f << "," << k;
    }
  }
}

TEST(StftTest, SinusoidPeaksAtItsBin) {
  const int rate = 16000;
  std::vector<float> x(rate);
  for (int t = 0; t < rate; ++t) x[t] = 0.5f * std::sin(2.0 * std::numbers::pi * 1000.0 * t / rate);
  const Spectrogram s = MagnitudeSpectrogram(AudioBuffer(x, rate), 512);
  const int mid = s.frames / 2;
  int best = 0;
  for (int k = 1; k < s.bins; ++k) {
    if (s.at(mid, k) > s.at(mid, best)) best = k;
  }
  EXPECT_NEAR(s.BinFrequency(best), 1000.0, rate / 512.0);
}

TEST(StftTest, MultiscaleValidatesInput) {
  const AudioBuffer x(std::vector<float>(100, 0.1f), 16000);
  const std::vector<int> big = {128};
  EXPECT_THROW(MultiscaleStft(x, big), Error);
  EXPECT_THROW(MultiscaleStft(x, std::vector<int>{}), Error);
  const std::vector<int> ok = {32, 64};
  EXPECT_EQ(MultiscaleStft(x, ok).size(), 2u);
}

TEST(StftTest, MagnitudeHelper) {
  EXPECT_DOUBLE_EQ(Magnitude({3.0, -4.0}), 5.0);
}

}  // namespace
}  // namespace vpconv
