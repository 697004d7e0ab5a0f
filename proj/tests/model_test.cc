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

#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <set>
#include <vector>

#include "test_util.h"
#include "vpconv/error.h"

namespace vpconv {
namespace {

using ::vpconv::testing::RandomTensor;
using nn::Tensor;

double Dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a.data[i]) * b.data[i];
  return s;
}

Tensor Axpy(const Tensor& x, float h, const Tensor& v) {
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += h * v.data[i];
  return out;
}

// Directional derivative check: <analytic, v> against a central difference
// of f along v.
void ExpectDirectionalDerivative(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                 const Tensor& analytic, std::uint64_t seed, float h = 1e-4f) {
  const Tensor v = RandomTensor(x.batch, x.channels, x.length, seed);
  const double fd = (f(Axpy(x, h, v)) - f(Axpy(x, -h, v))) / (2.0 * h);
  const double an = Dot(analytic, v);
  EXPECT_NEAR(an, fd, 3e-2 * (std::abs(fd) + 1e-2)) << "analytic " << an << " fd " << fd;
}

TEST(ModelConfigTest, ToyPreset) {
  const ModelConfig cfg = ModelConfig::Toy();
  EXPECT_EQ(cfg.latent_dim, 8);
  EXPECT_EQ(cfg.hop_length(), 64);
  EXPECT_EQ(cfg.sample_rate, 16000);
  EXPECT_NO_THROW(cfg.Validate());
}

TEST(ModelConfigTest, Defaults) {
  const ModelConfig cfg;
  EXPECT_EQ(cfg.latent_dim, 16);
  EXPECT_EQ(cfg.hop_length(), 128);
  EXPECT_EQ(cfg.sample_rate, 44100);
}

TEST(ModelConfigTest, RejectsBadValues) {
  ModelConfig cfg = ModelConfig::Toy();
  cfg.latent_dim = 0;
  EXPECT_THROW(cfg.Validate(), Error);
  cfg = ModelConfig::Toy();
  cfg.downsample_ratios = {};
  EXPECT_THROW(cfg.Validate(), Error);
  cfg = ModelConfig::Toy();
  cfg.codebook_decay = 1.0;
  EXPECT_THROW(cfg.Validate(), Error);
}

TEST(LatentModeTest, NamesRoundTrip) {
  EXPECT_EQ(ParseLatentMode(LatentModeName(LatentMode::kVq)), LatentMode::kVq);
  EXPECT_EQ(ParseLatentMode("gaussian"), LatentMode::kGaussian);
  EXPECT_THROW(ParseLatentMode("diffusion"), Error);
}

TEST(ReparameterizeTest, SampleMomentsMatchPosterior) {
  LatentCode code;
  const int n = 40000;
  code.mean = Tensor(1, 1, n, 0.7f);
  code.log_variance = Tensor(1, 1, n, std::log(0.25f));
  Tensor eps;
  const Tensor z = Reparameterize(code, 42, &eps);
  double sum = 0.0, sq = 0.0;
  for (float v : z.data) {
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  // Standard errors: 0.5 / sqrt(n) = 0.0025 for the mean, about
  // 0.25 * sqrt(2 / n) = 0.0018 for the variance.
  EXPECT_NEAR(mean, 0.7, 0.0125);
  EXPECT_NEAR(var, 0.25, 0.009);
  for (int i = 0; i < 10; ++i) EXPECT_FLOAT_EQ(z.data[i], 0.7f + 0.5f * eps.data[i]);
}

TEST(ReparameterizeTest, DeterministicPerSeed) {
  LatentCode code;
  code.mean = Tensor(2, 3, 5);
  code.log_variance = Tensor(2, 3, 5);
  EXPECT_EQ(Reparameterize(code, 1).data, Reparameterize(code, 1).data);
  EXPECT_NE(Reparameterize(code, 1).data, Reparameterize(code, 2).data);
}

TEST(ReparameterizeTest, RejectsVqCode) {
  LatentCode code;
  code.mode = LatentMode::kVq;
  code.mean = Tensor(1, 1, 1);
  EXPECT_THROW(Reparameterize(code, 0), Error);
}

TEST(CodebookTest, NearestWithLowestIndexTieBreak) {
  Codebook book(3, 2);
  book.entries() = {1.0f, 0.0f, -1.0f, 0.0f, 5.0f, 5.0f};
  const float origin[2] = {0.0f, 0.0f};
  EXPECT_EQ(book.Nearest(origin), 0);
  const float left[2] = {-0.9f, 0.1f};
  EXPECT_EQ(book.Nearest(left), 1);
  const float far[2] = {4.0f, 6.0f};
  EXPECT_EQ(book.Nearest(far), 2);
}

TEST(CodebookTest, QuantizeAssignsNearestEntries) {
  Codebook book(2, 1);
  book.entries() = {-1.0f, 1.0f};
  LatentCode code;
  code.mean = Tensor(1, 1, 4);
  code.mean.data = {-3.0f, -0.2f, 0.3f, 9.0f};
  const LatentCode q = Quantize(code, book);
  EXPECT_EQ(q.mode, LatentMode::kVq);
  EXPECT_EQ(q.indices, (std::vector<int>{0, 0, 1, 1}));
  EXPECT_EQ(q.quantized.data, (std::vector<float>{-1.0f, -1.0f, 1.0f, 1.0f}));
}

TEST(CodebookTest, EmaUpdateMovesTowardAssignedMean) {
  Codebook book(2, 1);
  book.entries() = {0.0f, 10.0f};
  book.embed_sum() = book.entries();
  Tensor latents(1, 1, 2);
  latents.data = {2.0f, 4.0f};
  book.EmaUpdate(latents, {0, 0}, 0.5);
  // cluster: 0.5 * 1 + 0.5 * 2 = 1.5; sum: 0.5 * 0 + 0.5 * 6 = 3.
  EXPECT_NEAR(book.cluster_size()[0], 1.5f, 1e-6);
  EXPECT_NEAR(book.embed_sum()[0], 3.0f, 1e-6);
  EXPECT_NEAR(book.entries()[0], 2.0f, 1e-3);
  EXPECT_NEAR(book.cluster_size()[1], 0.5f, 1e-6);
  EXPECT_NEAR(book.entries()[1], 10.0f, 1e-3);
}

TEST(CodebookTest, DeadCodesAreReseededFromData) {
  Codebook book(3, 1);
  book.entries() = {0.0f, 100.0f, 200.0f};
  book.cluster_size() = {1.0f, 0.01f, 0.02f};
  Tensor latents(1, 1, 3);
  latents.data = {7.0f, 8.0f, 9.0f};
  std::mt19937_64 rng(5);
  EXPECT_EQ(book.RestartDeadCodes(latents, rng, 0.05f), 2);
  EXPECT_EQ(book.entries()[0], 0.0f);
  for (int k = 1; k < 3; ++k) {
    EXPECT_GE(book.entries()[k], 7.0f);
    EXPECT_LE(book.entries()[k], 9.0f);
  }
}

// Toy graph: x -> q = Quantize(x) -> L = 3 q. The straight-through gradient
// of L with respect to x is dL/dq, exactly.
TEST(StraightThroughTest, ScalarGraphPassesGradientUnchanged) {
  Codebook book(2, 1);
  book.entries() = {-0.5f, 0.75f};
  LatentCode code;
  code.mean = Tensor(1, 1, 1);
  code.mean.data = {0.4f};
  const LatentCode q = Quantize(code, book);
  ASSERT_EQ(q.quantized.data[0], 0.75f);
  Tensor dl_dq(1, 1, 1, 3.0f);
  const Tensor dl_dx = StraightThroughGradient(dl_dq);
  ASSERT_TRUE(dl_dx.SameShape(code.mean));
  EXPECT_EQ(dl_dx.data[0], 3.0f);
}

class ModelTest : public ::testing::TestWithParam<LatentMode> {
 protected:
  ModelConfig Config() const {
    ModelConfig cfg = ModelConfig::Toy();
    cfg.latent_mode = GetParam();
    return cfg;
  }
};

TEST_P(ModelTest, EncoderShapesAndCausality) {
  Model model(Config(), 3);
  Tensor x = RandomTensor(1, 1, 1024, 7, 0.3f);
  const LatentCode a = model.encoder().Forward(x, nullptr);
  ASSERT_EQ(a.frames(), 1024 / 64);
  ASSERT_EQ(a.mean.channels, 8);
  if (GetParam() == LatentMode::kGaussian) {
    ASSERT_TRUE(a.log_variance.SameShape(a.mean));
  }
  const int cut = 640;
  for (int t = cut; t < 1024; ++t) x.data[t] = -x.data[t] + 0.5f;
  const LatentCode b = model.encoder().Forward(x, nullptr);
  for (int h = 0; h < 8; ++h) {
    for (int f = 0; f < cut / 64; ++f) EXPECT_EQ(a.mean.at(0, h, f), b.mean.at(0, h, f));
  }
  double diff = 0.0;
  for (int h = 0; h < 8; ++h) diff += std::abs(a.mean.at(0, h, cut / 64) - b.mean.at(0, h, cut / 64));
  EXPECT_GT(diff, 0.0);
}

TEST_P(ModelTest, EncoderRejectsPartialFrame) {
  Model model(Config(), 3);
  EXPECT_THROW(model.encoder().Forward(Tensor(1, 1, 100), nullptr), Error);
}

TEST_P(ModelTest, EncoderStreamMatchesOffline) {
  Model model(Config(), 4);
  const Tensor x = RandomTensor(1, 1, 1280, 9, 0.3f);
  const LatentCode offline = model.encoder().Forward(x, nullptr);
  nn::StreamState state;
  for (int f = 0; f < 20; ++f) {
    const LatentCode block = model.encoder().Stream(nn::SliceTime(x, f * 64, (f + 1) * 64), state);
    for (int h = 0; h < 8; ++h) ASSERT_EQ(block.mean.at(0, h, 0), offline.mean.at(0, h, f));
  }
}

TEST_P(ModelTest, EncoderGradientDirectional) {
  Model model(Config(), 5);
  const Tensor x = RandomTensor(1, 1, 512, 11, 0.3f);
  Encoder::Trace trace;
  const LatentCode code = model.encoder().Forward(x, &trace);
  const Tensor rm = RandomTensor(1, 8, code.frames(), 13);
  const Tensor rl = RandomTensor(1, 8, code.frames(), 17);
  const bool gaussian = GetParam() == LatentMode::kGaussian;
  const auto f = [&](const Tensor& in) {
    const LatentCode c = model.encoder().Forward(in, nullptr);
    return Dot(c.mean, rm) + (gaussian ? Dot(c.log_variance, rl) : 0.0);
  };
  const Tensor g = model.encoder().Backward(rm, gaussian ? rl : Tensor(), trace);
  ASSERT_TRUE(g.SameShape(x));
  ExpectDirectionalDerivative(f, x, g, 19);
}

TEST_P(ModelTest, DecoderEnvelopeGatesOutput) {
  Model model(Config(), 6);
  const Tensor z = RandomTensor(1, 8, 12, 23);
  const DecoderOutput out = model.decoder().Forward(z, nullptr);
  ASSERT_EQ(out.audio.length, 12 * 64);
  ASSERT_EQ(out.envelope_frames.length, 12);
  for (float e : out.envelope_frames.data) EXPECT_GT(e, 0.0f);
  for (std::size_t i = 0; i < out.audio.size(); ++i) {
    EXPECT_EQ(out.audio.data[i], out.body.data[i] * out.envelope.data[i]);
    EXPECT_LE(std::abs(out.body.data[i]), 1.0f);
  }
  const AudioBuffer silent = model.Decode(z, 0.0f);
  for (float s : silent.samples()) EXPECT_EQ(s, 0.0f);
  const AudioBuffer unit = model.Decode(z, 1.0f);
  for (std::size_t i = 0; i < unit.size(); ++i) EXPECT_EQ(unit[i], out.body.data[i]);
}

TEST_P(ModelTest, EnvelopeUpsamplingIsCausalLinear) {
  Model model(Config(), 6);
  const Tensor z = RandomTensor(1, 8, 4, 29);
  const DecoderOutput out = model.decoder().Forward(z, nullptr);
  const auto& e = out.envelope_frames.data;
  for (int t = 1; t < 4; ++t) {
    // The last sample of frame t reaches that frame's envelope value.
    EXPECT_NEAR(out.envelope.at(0, 0, t * 64 + 63), e[t], 1e-6);
    EXPECT_NEAR(out.envelope.at(0, 0, t * 64 + 31), e[t - 1] + (e[t] - e[t - 1]) * 0.5f, 1e-6);
  }
}

TEST_P(ModelTest, DecoderStreamMatchesOffline) {
  Model model(Config(), 7);
  const Tensor z = RandomTensor(1, 8, 10, 31);
  const DecoderOutput offline = model.decoder().Forward(z, nullptr);
  Decoder::StreamState state;
  for (int f = 0; f < 10; ++f) {
    const Tensor block = model.decoder().Stream(nn::SliceTime(z, f, f + 1), state);
    ASSERT_EQ(block.length, 64);
    for (int j = 0; j < 64; ++j) ASSERT_EQ(block.data[j], offline.audio.at(0, 0, f * 64 + j));
  }
}

TEST_P(ModelTest, DecoderGradientDirectional) {
  Model model(Config(), 8);
  const Tensor z = RandomTensor(1, 8, 6, 37);
  Decoder::Trace trace;
  const DecoderOutput out = model.decoder().Forward(z, &trace);
  const Tensor r = RandomTensor(1, 1, out.audio.length, 41);
  const Tensor g = model.decoder().Backward(r, trace);
  ASSERT_TRUE(g.SameShape(z));
  ExpectDirectionalDerivative(
      [&](const Tensor& in) { return Dot(model.decoder().Forward(in, nullptr).audio, r); }, z, g,
      43);
}

TEST_P(ModelTest, ReconstructIsDeterministic) {
  Model model(Config(), 9);
  const Tensor x = RandomTensor(2, 1, 640, 47, 0.3f);
  const Tensor a = model.Reconstruct(x);
  EXPECT_EQ(a.length, 640);
  EXPECT_EQ(a.data, model.Reconstruct(x).data);
}

INSTANTIATE_TEST_SUITE_P(Modes, ModelTest,
                         ::testing::Values(LatentMode::kGaussian, LatentMode::kVq));

TEST(DiscriminatorTest, EnsembleLayout) {
  Model model(ModelConfig::Toy(), 10);
  auto& d = model.discriminators();
  EXPECT_EQ(d.size(), 8u);
  EXPECT_EQ(DiscriminatorEnsemble::Periods(), (std::vector<int>{2, 3, 5, 7, 11}));
  EXPECT_EQ(DiscriminatorEnsemble::Scales(), (std::vector<int>{1, 2, 4}));
  EXPECT_EQ(d.min_length(), 22);
  EXPECT_THROW(d.Forward(Tensor(1, 1, 21), nullptr), Error);
  const auto out = d.Forward(RandomTensor(2, 1, 300, 53), nullptr);
  ASSERT_EQ(out.size(), 8u);
  for (const auto& o : out) {
    EXPECT_FALSE(o.score.empty());
    EXPECT_FALSE(o.features.empty());
    EXPECT_TRUE(nn::AllFinite(o.score));
  }
}

TEST(DiscriminatorTest, GradientDirectional) {
  Model model(ModelConfig::Toy(), 11);
  auto& d = model.discriminators();
  const Tensor x = RandomTensor(1, 1, 200, 59, 0.3f);
  std::vector<SubDiscriminator::Trace> traces;
  const auto out = d.Forward(x, &traces);
  std::vector<Tensor> gs;
  std::vector<std::vector<Tensor>> gf;
  for (std::size_t i = 0; i < out.size(); ++i) {
    gs.push_back(RandomTensor(out[i].score.batch, out[i].score.channels, out[i].score.length, 60 + i));
    gf.emplace_back();
    for (std::size_t l = 0; l < out[i].features.size(); ++l) {
      const Tensor& f = out[i].features[l];
      gf.back().push_back(RandomTensor(f.batch, f.channels, f.length, 100 + 10 * i + l, 0.1f));
    }
  }
  const Tensor g = d.Backward(gs, gf, traces);
  ASSERT_TRUE(g.SameShape(x));
  const auto f = [&](const Tensor& in) {
    const auto o = d.Forward(in, nullptr);
    double s = 0.0;
    for (std::size_t i = 0; i < o.size(); ++i) {
      s += Dot(o[i].score, gs[i]);
      for (std::size_t l = 0; l < o[i].features.size(); ++l) s += Dot(o[i].features[l], gf[i][l]);
    }
    return s;
  };
  ExpectDirectionalDerivative(f, x, g, 61);
}

TEST(PeriodReshapeTest, LayoutAndAdjoint) {
  Tensor x(1, 1, 7);
  for (int t = 0; t < 7; ++t) x.data[t] = static_cast<float>(t + 1);
  const Tensor y = PeriodReshape(x, 3);
  ASSERT_EQ(y.batch, 3);
  ASSERT_EQ(y.length, 3);
  EXPECT_EQ(y.at(0, 0, 0), 1.0f);
  EXPECT_EQ(y.at(0, 0, 2), 7.0f);
  EXPECT_EQ(y.at(1, 0, 1), 5.0f);
  EXPECT_EQ(y.at(2, 0, 2), 0.0f);
  const Tensor r = RandomTensor(3, 1, 3, 67);
  const Tensor back = PeriodReshapeBackward(r, 3, 7);
  EXPECT_NEAR(Dot(y, r), Dot(x, back), 1e-5);
}

TEST(ModelTest, NamedTensorsAreUniqueAndComplete) {
  Model model(ModelConfig::Toy(), 12);
  std::set<std::string> names;
  for (const auto& [name, values] : std::as_const(model).NamedTensors()) {
    EXPECT_TRUE(names.insert(name).second) << name;
    EXPECT_FALSE(values->empty()) << name;
  }
  EXPECT_TRUE(names.count("codebook.entries"));
  EXPECT_TRUE(names.count("encoder.conv_in.weight"));
}

TEST(ModelTest, SameSeedSameWeights) {
  Model a(ModelConfig::Toy(), 13), b(ModelConfig::Toy(), 13), c(ModelConfig::Toy(), 14);
  const auto ta = std::as_const(a).NamedTensors();
  const auto tb = std::as_const(b).NamedTensors();
  const auto tc = std::as_const(c).NamedTensors();
  for (std::size_t i = 0; i < ta.size(); ++i) EXPECT_EQ(*ta[i].second, *tb[i].second);
  EXPECT_NE(*ta[0].second, *tc[0].second);
}

}  // namespace
}  // namespace vpconv
