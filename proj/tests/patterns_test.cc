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


#include "vpconv/patterns.h"

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <string>
#include <vector>

#include "test_util.h"
#include "vpconv/error.h"
#include "vpconv/metrics.h"

namespace vpconv {
namespace {

using ::vpconv::testing::TempDir;

constexpr int kRate = 44100;

std::vector<std::uint8_t> FileBytes(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

TEST(InstrumentTest, NamesRoundTrip) {
  EXPECT_EQ(AllInstruments().size(), 5u);
  for (Instrument i : AllInstruments()) EXPECT_EQ(ParseInstrument(InstrumentName(i)), i);
  EXPECT_EQ(InstrumentName(Instrument::kHihatOpen), "hihat_open");
  EXPECT_THROW(ParseInstrument("cowbell"), Error);
}

TEST(BuiltinPatternsTest, ThreeValidPatterns) {
  const auto patterns = BuiltinPatterns();
  ASSERT_EQ(patterns.size(), 3u);
  for (std::size_t i = 0; i < patterns.size(); ++i) {
    EXPECT_EQ(patterns[i].id, static_cast<int>(i) + 1);
    EXPECT_FALSE(patterns[i].description.empty());
    EXPECT_NO_THROW(patterns[i].Validate());
    for (const DrumEvent& e : patterns[i].events) {
      EXPECT_GE(e.beats(), 0.0);
      EXPECT_LT(e.beats(), 16.0);
    }
  }
}

TEST(BuiltinPatternsTest, MostlyMonophonic) {
  for (const DrumPattern& p : BuiltinPatterns()) {
    std::map<int, int> per_position;
    for (const DrumEvent& e : p.events) ++per_position[e.sixteenth];
    int multi = 0;
    for (const auto& [pos, n] : per_position) multi += n >= 2;
    const double fraction = static_cast<double>(multi) / per_position.size();
    EXPECT_DOUBLE_EQ(p.SimultaneousFraction(), fraction);
    EXPECT_LE(fraction, 0.10) << "pattern " << p.id;
  }
}

TEST(BuiltinPatternsTest, CharacteristicInstruments) {
  const auto patterns = BuiltinPatterns();
  auto uses = [](const DrumPattern& p, Instrument i) {
    for (const DrumEvent& e : p.events) {
      if (e.instrument == i) return true;
    }
    return false;
  };
  EXPECT_TRUE(uses(patterns[0], Instrument::kKick));
  EXPECT_TRUE(uses(patterns[0], Instrument::kSnare));
  EXPECT_TRUE(uses(patterns[1], Instrument::kHihatClosed));
  EXPECT_TRUE(uses(patterns[2], Instrument::kHihatOpen));
  EXPECT_TRUE(uses(patterns[2], Instrument::kCrash));
}

TEST(DrumPatternTest, ValidateRejects) {
  DrumPattern p;
  p.events = {{Instrument::kKick, 64, 1.0}};
  EXPECT_THROW(p.Validate(), Error);
  p.events = {{Instrument::kKick, -1, 1.0}};
  EXPECT_THROW(p.Validate(), Error);
  p.events = {{Instrument::kKick, 4, 1.0}, {Instrument::kKick, 0, 1.0}};
  EXPECT_THROW(p.Validate(), Error);
  p.events = {{Instrument::kKick, 0, 1.0}, {Instrument::kKick, 0, 0.5}};
  EXPECT_THROW(p.Validate(), Error);
  p.events = {{Instrument::kKick, 0, 1.5}};
  EXPECT_THROW(p.Validate(), Error);
  p.events = {{Instrument::kKick, 0, 1.0}, {Instrument::kSnare, 0, 0.5}};
  EXPECT_NO_THROW(p.Validate());
}

TEST(RenderTest, BaseLengthsToTheSample) {
  EXPECT_EQ(BaseLength(80, kRate), 12u * kRate);
  EXPECT_EQ(BaseLength(120, kRate), 8u * kRate);
  EXPECT_EQ(BaseLength(160, kRate), 6u * kRate);
  EXPECT_EQ(BaseLength(120, 16000), 128000u);
}

TEST(RenderTest, DurationIsBasePlusTail) {
  const DrumKit kit = SynthesizedKit();
  for (const DrumPattern& p : BuiltinPatterns()) {
    for (int bpm : kPatternTempos) {
      const RenderedPattern r = RenderPattern(p, bpm, kit);
      EXPECT_EQ(r.base_length, static_cast<std::size_t>(16 * 60 * kRate / bpm));
      std::size_t expected = r.base_length;
      for (const DrumEvent& e : p.events) {
        const auto offset = static_cast<std::size_t>(std::llround(e.beats() * 60.0 / bpm * kRate));
        expected = std::max(expected, offset + kit.at(e.instrument).size());
      }
      EXPECT_EQ(r.audio.size(), expected);
      EXPECT_NEAR(PeakDbfs(r.audio), kRenderPeakDbfs, 1e-4);
    }
  }
}

TEST(RenderTest, OnsetsScaleInverselyWithTempo) {
  const DrumKit kit = SynthesizedKit();
  const DrumPattern p = BuiltinPatterns()[0];
  const RenderedPattern fast = RenderPattern(p, 160, kit);
  const RenderedPattern slow = RenderPattern(p, 80, kit);
  for (const auto& [inst, times] : fast.onsets) {
    const auto& other = slow.onsets.at(inst);
    ASSERT_EQ(times.size(), other.size());
    for (std::size_t i = 0; i < times.size(); ++i) EXPECT_DOUBLE_EQ(other[i], 2.0 * times[i]);
  }
}

TEST(RenderTest, SingleEventPrefixIsScaledSample) {
  const DrumKit kit = SynthesizedKit();
  DrumPattern p;
  p.events = {{Instrument::kSnare, 0, 1.0}};
  const RenderedPattern r = RenderPattern(p, 120, kit);
  const AudioBuffer& s = kit.at(Instrument::kSnare);
  double peak = 0.0;
  for (float v : s.samples()) peak = std::max(peak, std::abs(static_cast<double>(v)));
  const double gain = DbToGain(kRenderPeakDbfs) / peak;
  for (std::size_t i = 0; i < s.size(); ++i) {
    ASSERT_NEAR(r.audio[i], s[i] * gain, 1e-6);
  }
  for (std::size_t i = s.size(); i < r.audio.size(); ++i) ASSERT_EQ(r.audio[i], 0.0f);
}

TEST(RenderTest, Errors) {
  DrumKit kit = SynthesizedKit();
  const DrumPattern p = BuiltinPatterns()[2];
  EXPECT_THROW(RenderPattern(p, 0, kit), Error);
  kit.erase(Instrument::kCrash);
  try {
    RenderPattern(p, 120, kit);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotFound);
  }
}

TEST(SynthesizedKitTest, CompleteMonoAndDeterministic) {
  const DrumKit a = SynthesizedKit();
  const DrumKit b = SynthesizedKit();
  ASSERT_EQ(a.size(), AllInstruments().size());
  for (Instrument i : AllInstruments()) {
    const AudioBuffer& s = a.at(i);
    EXPECT_EQ(s.sample_rate(), kRate);
    EXPECT_EQ(s.channel_count(), 1);
    EXPECT_GT(PeakDbfs(s), -20.0);
    ASSERT_EQ(s.size(), b.at(i).size());
    for (std::size_t k = 0; k < s.size(); ++k) ASSERT_EQ(s[k], b.at(i)[k]);
  }
  EXPECT_GT(a.at(Instrument::kCrash).size(), a.at(Instrument::kHihatClosed).size());
  EXPECT_GT(a.at(Instrument::kHihatOpen).size(), a.at(Instrument::kHihatClosed).size());
}

TEST(LoadKitTest, ReadsManifestAndResamples) {
  TempDir dir("kit");
  const DrumKit synth = SynthesizedKit();
  std::ofstream m(dir.path() / "kit.json");
  m << "{";
  bool first = true;
  for (Instrument i : AllInstruments()) {
    const std::string file = InstrumentName(i) + ".wav";
    WriteWav(dir.path() / file, Resample(synth.at(i), 22050));
    m << (first ? "" : ",") << "\"" << InstrumentName(i) << "\": \"" << file << "\"";
    first = false;
  }
  m << "}";
  m.close();
  const DrumKit kit = LoadKit(dir.path() / "kit.json");
  ASSERT_EQ(kit.size(), 5u);
  for (const auto& [i, s] : kit) {
    EXPECT_EQ(s.sample_rate(), kRate);
    EXPECT_NEAR(static_cast<double>(s.size()), synth.at(i).size(), 2.0);
  }
  EXPECT_THROW(LoadKit(dir.path() / "missing.json"), Error);
}

TEST(TestSetTest, NineFilesAndManifest) {
  TempDir dir("testset");
  const DrumKit kit = SynthesizedKit();
  const auto cases = GenerateTestSet(kit, dir.path());
  ASSERT_EQ(cases.size(), 9u);
  std::set<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(dir.path())) {
    names.insert(entry.path().filename().string());
  }
  EXPECT_EQ(names.size(), 10u);
  EXPECT_TRUE(names.count(kTestSetManifestName));
  for (int p = 1; p <= 3; ++p) {
    for (int bpm : kPatternTempos) {
      EXPECT_TRUE(names.count("pattern" + std::to_string(p) + "_bpm" + std::to_string(bpm) + ".wav"));
    }
  }
  for (const TestCase& tc : cases) {
    const AudioBuffer audio = ReadWav(dir.path() / tc.file);
    EXPECT_EQ(audio.size(), tc.length);
    EXPECT_EQ(tc.base_length, BaseLength(tc.bpm, kRate));
  }
  const auto back = ReadTestSetManifest(dir.path() / kTestSetManifestName);
  ASSERT_EQ(back.size(), cases.size());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    EXPECT_EQ(back[i].file, cases[i].file);
    EXPECT_EQ(back[i].pattern, cases[i].pattern);
    EXPECT_EQ(back[i].bpm, cases[i].bpm);
    EXPECT_EQ(back[i].base_length, cases[i].base_length);
    EXPECT_EQ(back[i].length, cases[i].length);
    EXPECT_EQ(back[i].onsets, cases[i].onsets);
  }
}

TEST(TestSetTest, Pattern1At120OnsetsAreHalfSecondBeats) {
  TempDir dir("testset120");
  const auto cases = GenerateTestSet(SynthesizedKit(), dir.path());
  const DrumPattern p = BuiltinPatterns()[0];
  const TestCase* tc = nullptr;
  for (const TestCase& c : cases) {
    if (c.pattern == 1 && c.bpm == 120) tc = &c;
  }
  ASSERT_NE(tc, nullptr);
  std::map<Instrument, std::vector<double>> expected;
  for (const DrumEvent& e : p.events) expected[e.instrument].push_back(e.beats() * 0.5);
  EXPECT_EQ(tc->onsets, expected);
}

TEST(TestSetTest, RegenerationIsByteIdentical) {
  TempDir a("regen_a");
  TempDir b("regen_b");
  const DrumKit kit = SynthesizedKit();
  GenerateTestSet(kit, a.path());
  GenerateTestSet(kit, b.path());
  for (const auto& entry : std::filesystem::directory_iterator(a.path())) {
    EXPECT_EQ(FileBytes(entry.path()), FileBytes(b.path() / entry.path().filename()))
        << entry.path().filename();
  }
}

TEST(TestSetTest, DetectorRecoversGroundTruth) {
  const DrumKit kit = SynthesizedKit();
  for (const DrumPattern& p : BuiltinPatterns()) {
    for (int bpm : kPatternTempos) {
      const RenderedPattern r = RenderPattern(p, bpm, kit);
      const double f = RhythmicFidelity(MergeOnsets(r.onsets), DetectOnsets(r.audio));
      EXPECT_GE(f, 0.95) << "pattern " << p.id << " @ " << bpm;
    }
  }
}

}  // namespace
}  // namespace vpconv
