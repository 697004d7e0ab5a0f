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


#include "vpconv/converter.h"

#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <vector>

#include "test_util.h"
#include "vpconv/error.h"
#include "vpconv/trainer.h"

namespace vpconv {
namespace {

using ::vpconv::testing::Noise;
using ::vpconv::testing::TempDir;

std::shared_ptr<const Model> ToyModel(LatentMode mode) {
  ModelConfig cfg = ModelConfig::Toy();
  cfg.latent_mode = mode;
  cfg.codebook_size = 8;
  return std::make_shared<const Model>(cfg, 11);
}

TEST(ConvertAudioTest, OutputLengthMatchesInput) {
  const auto model = ToyModel(LatentMode::kGaussian);
  for (std::size_t n : {1u, 63u, 64u, 65u, 1000u, 4097u}) {
    const AudioBuffer out = ConvertAudio(*model, Noise(n, kToySampleRate, n));
    EXPECT_EQ(out.size(), n);
    EXPECT_EQ(out.sample_rate(), kToySampleRate);
  }
}

TEST(ConvertAudioTest, ResamplesToModelRateAndBack) {
  const auto model = ToyModel(LatentMode::kGaussian);
  for (std::size_t n : {4410u, 4411u, 12345u}) {
    const AudioBuffer out = ConvertAudio(*model, Noise(n, 44100, 3));
    EXPECT_EQ(out.size(), n);
    EXPECT_EQ(out.sample_rate(), 44100);
  }
}

TEST(ConvertAudioTest, OutputIsBoundedAndFinite) {
  const auto model = ToyModel(LatentMode::kVq);
  const AudioBuffer out = ConvertAudio(*model, Noise(3000, kToySampleRate, 8, 1.0f));
  for (float v : out.samples()) {
    ASSERT_TRUE(std::isfinite(v));
    ASSERT_LE(std::abs(v), 1.0f);
  }
}

TEST(ConvertAudioTest, Deterministic) {
  for (LatentMode mode : {LatentMode::kGaussian, LatentMode::kVq}) {
    const auto model = ToyModel(mode);
    const AudioBuffer in = Noise(2000, kToySampleRate, 4);
    const AudioBuffer a = ConvertAudio(*model, in);
    const AudioBuffer b = ConvertAudio(*model, in);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i], b[i]);
  }
}

TEST(ConvertAudioTest, GainMatchEqualizesPeak) {
  const auto model = ToyModel(LatentMode::kGaussian);
  const AudioBuffer in = Noise(2048, kToySampleRate, 5, 0.25f);
  const AudioBuffer out = ConvertAudio(*model, in);
  EXPECT_NEAR(PeakDbfs(out), PeakDbfs(in), 1e-3);
}

TEST(ConvertAudioTest, RejectsEmptyInput) {
  const auto model = ToyModel(LatentMode::kGaussian);
  try {
    ConvertAudio(*model, AudioBuffer({}, kToySampleRate));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
}

TEST(ConvertAudioTest, RejectsModeMismatch) {
  const auto gaussian = ToyModel(LatentMode::kGaussian);
  const auto vq = ToyModel(LatentMode::kVq);
  const AudioBuffer in = Noise(256, kToySampleRate, 6);
  ConvertOptions opts;
  opts.mode = LatentMode::kVq;
  try {
    ConvertAudio(*gaussian, in, opts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kInvalidArgument);
  }
  EXPECT_NO_THROW(ConvertAudio(*vq, in, opts));
  opts.mode = LatentMode::kGaussian;
  EXPECT_THROW(ConvertAudio(*vq, in, opts), Error);
  EXPECT_NO_THROW(ConvertAudio(*gaussian, in, opts));
}

TEST(ConvertFileTest, MatchesInMemoryModel) {
  TempDir dir("convert");
  ModelConfig mcfg = ModelConfig::Toy();
  TrainConfig tcfg;
  const TrainState state(mcfg, tcfg);
  const auto path = dir.path() / "model.ckpt";
  SaveCheckpoint(path, state, tcfg);
  const AudioBuffer in = Noise(1500, kToySampleRate, 9);
  const AudioBuffer a = ConvertAudio(state.model(), in);
  const AudioBuffer b = ConvertFile(in, path);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) ASSERT_EQ(a[i], b[i]);
}

TEST(ConvertFileTest, MissingCheckpoint) {
  try {
    ConvertFile(Noise(64, kToySampleRate, 1), "/nonexistent/model.ckpt");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotFound);
  }
}

TEST(StreamConverterTest, MatchesOfflineWithoutGainMatch) {
  for (LatentMode mode : {LatentMode::kGaussian, LatentMode::kVq}) {
    const auto model = ToyModel(mode);
    StreamConverter stream(model);
    const int r = stream.block_size();
    const AudioBuffer in = Noise(static_cast<std::size_t>(r) * 20, kToySampleRate, 12);
    ConvertOptions opts;
    opts.gain_match = false;
    const AudioBuffer offline = ConvertAudio(*model, in, opts);
    std::vector<float> streamed;
    for (int b = 0; b < 20; ++b) {
      const AudioBuffer out = stream.Process(in.Slice(b * r, (b + 1) * r));
      ASSERT_EQ(static_cast<int>(out.size()), r);
      streamed.insert(streamed.end(), out.samples().begin(), out.samples().end());
    }
    ASSERT_EQ(streamed.size(), offline.size());
    for (std::size_t i = stream.latency(); i < streamed.size(); ++i) {
      ASSERT_EQ(streamed[i], offline[i - stream.latency()]) << "sample " << i;
    }
  }
}

TEST(StreamConverterTest, ResetRestartsState) {
  const auto model = ToyModel(LatentMode::kGaussian);
  StreamConverter stream(model);
  const int r = stream.block_size();
  const AudioBuffer a = Noise(r, kToySampleRate, 1);
  const AudioBuffer b = Noise(r, kToySampleRate, 2);
  const AudioBuffer first = stream.Process(a);
  stream.Process(b);
  stream.Reset();
  const AudioBuffer again = stream.Process(a);
  for (int i = 0; i < r; ++i) ASSERT_EQ(first[i], again[i]);
}

TEST(StreamConverterTest, RejectsWrongBlock) {
  const auto model = ToyModel(LatentMode::kGaussian);
  StreamConverter stream(model);
  const int r = stream.block_size();
  EXPECT_THROW(stream.Process(Noise(r - 1, kToySampleRate, 1)), Error);
  EXPECT_THROW(stream.Process(Noise(r + 1, kToySampleRate, 1)), Error);
  EXPECT_THROW(stream.Process(Noise(r, 44100, 1)), Error);
  EXPECT_THROW(StreamConverter(nullptr), Error);
}

}  // namespace
}  // namespace vpconv
