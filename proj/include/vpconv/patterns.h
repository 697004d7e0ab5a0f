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

#ifndef VPCONV_PATTERNS_H_
#define VPCONV_PATTERNS_H_

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "vpconv/audio.h"

namespace vpconv {

enum class Instrument { kKick, kSnare, kHihatClosed, kHihatOpen, kCrash };

// "kick", "snare", "hihat_closed", "hihat_open", "crash".
std::string InstrumentName(Instrument instrument);
Instrument ParseInstrument(const std::string& name);
const std::vector<Instrument>& AllInstruments();

// Positions are on a sixteenth-note grid: beat = sixteenth / 4.
struct DrumEvent {
  Instrument instrument;
  int sixteenth = 0;
  double velocity = 1.0;

  double beats() const { return sixteenth / 4.0; }
};

inline constexpr int kPatternMeasures = 4;
inline constexpr int kBeatsPerMeasure = 4;
inline constexpr int kPatternBeats = kPatternMeasures * kBeatsPerMeasure;

struct DrumPattern {
  int id = 0;
  std::string description;
  // Sorted by position, then instrument.
  std::vector<DrumEvent> events;

  // Throws kInvalidArgument on an out-of-range position, unsorted events,
  // a duplicate (instrument, position) or a velocity outside [0, 1].
  void Validate() const;
  // Fraction of occupied positions holding two or more events.
  double SimultaneousFraction() const;
};

// Rock beat, eighth-note hat groove with syncopated kick, sixteenth-note
// pattern with open-hat and crash accents.
std::vector<DrumPattern> BuiltinPatterns();

inline constexpr int kPatternTempos[] = {80, 120, 160};

using DrumKit = std::map<Instrument, AudioBuffer>;

// Deterministic synthesized one-shots at 44.1 kHz.
DrumKit SynthesizedKit();
// Kit manifest: JSON object {instrument name: wav path}, paths relative to the
// manifest. Samples are resampled to 44.1 kHz.
DrumKit LoadKit(const std::filesystem::path& manifest);

// Seconds from the start of the pattern to the event.
double EventSeconds(const DrumEvent& event, double bpm);
// 16 beats at `bpm`, in samples.
std::size_t BaseLength(double bpm, int sample_rate);

struct RenderedPattern {
  AudioBuffer audio;
  std::size_t base_length = 0;  // samples before the trailing sample tail
  std::map<Instrument, std::vector<double>> onsets;  // seconds
};

// Sums velocity-scaled kit samples at their event offsets and peak-normalizes
// to -1 dBFS. Throws kNotFound for an instrument missing from the kit.
RenderedPattern RenderPattern(const DrumPattern& pattern, double bpm, const DrumKit& kit);

inline constexpr double kRenderPeakDbfs = -1.0;

struct TestCase {
  std::string file;
  int pattern = 0;
  int bpm = 0;
  std::size_t base_length = 0;
  std::size_t length = 0;
  std::map<Instrument, std::vector<double>> onsets;
};

inline constexpr char kTestSetManifestName[] = "manifest.json";

// Writes pattern{1..3}_bpm{80,120,160}.wav and manifest.json to out_dir.
std::vector<TestCase> GenerateTestSet(const DrumKit& kit, const std::filesystem::path& out_dir);
std::vector<TestCase> ReadTestSetManifest(const std::filesystem::path& path);

}  // namespace vpconv

#endif  // VPCONV_PATTERNS_H_
