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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "json.hpp"
#include "vpconv/error.h"

namespace vpconv {

namespace {

using json = nlohmann::json;

constexpr int kKitRate = kCanonicalSampleRate;

std::size_t Samples(double seconds) {
  return static_cast<std::size_t>(std::lround(seconds * kKitRate));
}

// One-pole low-pass / high-pass pair used to shape noise.
std::vector<double> LowPass(const std::vector<double>& x, double cutoff_hz) {
  const double a = std::exp(-2.0 * std::numbers::pi * cutoff_hz / kKitRate);
  std::vector<double> y(x.size());
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = s = (1.0 - a) * x[i] + a * s;
  return y;
}

std::vector<double> HighPass(const std::vector<double>& x, double cutoff_hz) {
  const std::vector<double> low = LowPass(x, cutoff_hz);
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] - low[i];
  return y;
}

std::vector<double> Noise(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> x(n);
  for (double& v : x) v = u(rng);
  return x;
}

AudioBuffer Finish(std::vector<double> x, double peak) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = m > 0.0 ? static_cast<float>(x[i] * peak / m) : 0.0f;
  }
  return AudioBuffer(std::move(out), kKitRate);
}

// Exponential decay with time constant tau and a 1 ms linear fade-out at the end.
double Envelope(std::size_t i, std::size_t n, double tau) {
  const double t = static_cast<double>(i) / kKitRate;
  const double fade_len = 0.001 * kKitRate;
  const double fade = std::min(1.0, static_cast<double>(n - i) / fade_len);
  return std::exp(-t / tau) * fade;
}

AudioBuffer Kick() {
  const std::size_t n = Samples(0.5);
  std::vector<double> x(n);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kKitRate;
    const double f = 40.0 + 60.0 * std::exp(-t / 0.05);  // 100 Hz falling to 40 Hz
    phase += 2.0 * std::numbers::pi * f / kKitRate;
    x[i] = std::sin(phase) * Envelope(i, n, 0.15);
  }
  const std::vector<double> click = HighPass(Noise(Samples(0.004), 11), 2000.0);
  for (std::size_t i = 0; i < click.size(); ++i) x[i] += 0.3 * click[i] * Envelope(i, click.size(), 0.001);
  return Finish(std::move(x), 1.0);
}

AudioBuffer Snare() {
  const std::size_t n = Samples(0.3);
  const std::vector<double> noise = LowPass(HighPass(Noise(n, 22), 1500.0), 8000.0);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / kKitRate;
    x[i] = 0.8 * noise[i] * Envelope(i, n, 0.07) +
           0.5 * std::sin(2.0 * std::numbers::pi * 180.0 * t) * Envelope(i, n, 0.05);
  }
  return Finish(std::move(x), 0.9);
}

AudioBuffer Hat(double seconds, double tau, std::uint64_t seed, double peak) {
  const std::size_t n = Samples(seconds);
  const std::vector<double> noise = HighPass(HighPass(Noise(n, seed), 7000.0), 7000.0);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = noise[i] * Envelope(i, n, tau);
  return Finish(std::move(x), peak);
}

AudioBuffer Crash() {
  const std::size_t n = Samples(2.0);
  const std::vector<double> noise = LowPass(HighPass(Noise(n, 55), 3000.0), 12000.0);
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = noise[i] * Envelope(i, n, 0.6);
  return Finish(std::move(x), 0.8);
}

void Add(std::vector<DrumEvent>& events, Instrument inst, int measure, double beat,
         double velocity = 1.0) {
  events.push_back({inst, measure * 16 + static_cast<int>(std::lround(beat * 4)), velocity});
}

DrumPattern Sorted(int id, std::string description, std::vector<DrumEvent> events) {
  std::sort(events.begin(), events.end(), [](const DrumEvent& a, const DrumEvent& b) {
    return a.sixteenth != b.sixteenth ? a.sixteenth < b.sixteenth
                                      : a.instrument < b.instrument;
  });
  DrumPattern p{id, std::move(description), std::move(events)};
  p.Validate();
  return p;
}

json OnsetsJson(const std::map<Instrument, std::vector<double>>& onsets) {
  json j = json::object();
  for (const auto& [inst, times] : onsets) j[InstrumentName(inst)] = times;
  return j;
}

}  // namespace

std::string InstrumentName(Instrument instrument) {
  switch (instrument) {
    case Instrument::kKick: return "kick";
    case Instrument::kSnare: return "snare";
    case Instrument::kHihatClosed: return "hihat_closed";
    case Instrument::kHihatOpen: return "hihat_open";
    case Instrument::kCrash: return "crash";
  }
  return "unknown";
}

Instrument ParseInstrument(const std::string& name) {
  for (Instrument i : AllInstruments()) {
    if (InstrumentName(i) == name) return i;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown instrument '" + name + "'");
}

const std::vector<Instrument>& AllInstruments() {
  static const std::vector<Instrument> all = {Instrument::kKick, Instrument::kSnare,
                                              Instrument::kHihatClosed,
                                              Instrument::kHihatOpen, Instrument::kCrash};
  return all;
}

void DrumPattern::Validate() const {
  std::set<std::pair<int, Instrument>> seen;
  for (std::size_t i = 0; i < events.size(); ++i) {
    const DrumEvent& e = events[i];
    if (e.sixteenth < 0 || e.sixteenth >= kPatternBeats * 4) {
      throw Error(ErrorCode::kInvalidArgument, "event position outside [0, 16) beats");
    }
    if (!(e.velocity >= 0.0 && e.velocity <= 1.0)) {
      throw Error(ErrorCode::kInvalidArgument, "event velocity outside [0, 1]");
    }
    if (i > 0 && e.sixteenth < events[i - 1].sixteenth) {
      throw Error(ErrorCode::kInvalidArgument, "events are not sorted by position");
    }
    if (!seen.insert({e.sixteenth, e.instrument}).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate event for " +
                                                   InstrumentName(e.instrument));
    }
  }
}

double DrumPattern::SimultaneousFraction() const {
  std::map<int, int> per_position;
  for (const DrumEvent& e : events) ++per_position[e.sixteenth];
  if (per_position.empty()) return 0.0;
  int multi = 0;
  for (const auto& [pos, count] : per_position) multi += count >= 2 ? 1 : 0;
  return static_cast<double>(multi) / static_cast<double>(per_position.size());
}

std::vector<DrumPattern> BuiltinPatterns() {
  using I = Instrument;
  std::vector<DrumPattern> out;

  // Hats sit on the off-beat eighths so they never coincide with kick or snare.
  std::vector<DrumEvent> rock;
  for (int m = 0; m < kPatternMeasures; ++m) {
    Add(rock, I::kKick, m, 0.0);
    Add(rock, I::kKick, m, 2.0);
    Add(rock, I::kSnare, m, 1.0);
    Add(rock, I::kSnare, m, 3.0);
    for (double b : {0.5, 1.5, 2.5, 3.5}) Add(rock, I::kHihatClosed, m, b, 0.7);
  }
  Add(rock, I::kCrash, 0, 0.0);
  out.push_back(Sorted(1, "basic rock beat", std::move(rock)));

  std::vector<DrumEvent> groove;
  for (int m = 0; m < kPatternMeasures; ++m) {
    Add(groove, I::kKick, m, 0.0);
    Add(groove, I::kKick, m, 1.75);
    Add(groove, I::kKick, m, 2.5);
    Add(groove, I::kSnare, m, 1.0);
    Add(groove, I::kSnare, m, 3.0);
    for (double b : {0.5, 1.5, 2.0}) Add(groove, I::kHihatClosed, m, b, 0.7);
    Add(groove, m == kPatternMeasures - 1 ? I::kHihatOpen : I::kHihatClosed, m, 3.5, 0.7);
  }
  out.push_back(Sorted(2, "eighth-note hi-hat groove with syncopated kick", std::move(groove)));

  std::vector<DrumEvent> sixteenths;
  for (int m = 0; m < kPatternMeasures; ++m) {
    std::set<double> taken = {0.0, 0.75, 2.5, 1.0, 3.0, 3.75};
    Add(sixteenths, I::kKick, m, 0.0);
    Add(sixteenths, I::kKick, m, 0.75);
    Add(sixteenths, I::kKick, m, 2.5);
    Add(sixteenths, I::kSnare, m, 1.0);
    Add(sixteenths, I::kSnare, m, 3.0);
    Add(sixteenths, I::kSnare, m, 3.75, 0.5);
    if (m % 2 == 1) {
      Add(sixteenths, I::kHihatOpen, m, 1.5, 0.8);
      taken.insert(1.5);
    }
    for (int s = 0; s < 16; ++s) {
      const double b = s / 4.0;
      if (taken.count(b) == 0) Add(sixteenths, I::kHihatClosed, m, b, s % 2 == 0 ? 0.7 : 0.45);
    }
  }
  Add(sixteenths, I::kCrash, 0, 0.0);
  Add(sixteenths, I::kCrash, 2, 0.0);
  out.push_back(Sorted(3, "sixteenth-note pattern with open-hat and crash accents",
                       std::move(sixteenths)));
  return out;
}

DrumKit SynthesizedKit() {
  DrumKit kit;
  kit.emplace(Instrument::kKick, Kick());
  kit.emplace(Instrument::kSnare, Snare());
  kit.emplace(Instrument::kHihatClosed, Hat(0.08, 0.015, 33, 0.6));
  kit.emplace(Instrument::kHihatOpen, Hat(0.5, 0.15, 44, 0.6));
  kit.emplace(Instrument::kCrash, Crash());
  return kit;
}

DrumKit LoadKit(const std::filesystem::path& manifest) {
  std::ifstream in(manifest);
  if (!in) throw Error(ErrorCode::kIo, "cannot open kit manifest " + manifest.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformed, "kit manifest: " + std::string(e.what()));
  }
  if (!j.is_object()) throw Error(ErrorCode::kMalformed, "kit manifest must be an object");
  DrumKit kit;
  for (const auto& [name, path] : j.items()) {
    if (!path.is_string()) throw Error(ErrorCode::kMalformed, "kit paths must be strings");
    const AudioBuffer sample = ReadWav(manifest.parent_path() / path.get<std::string>());
    kit.insert_or_assign(ParseInstrument(name), sample.sample_rate() == kKitRate
                                                    ? sample
                                                    : Resample(sample, kKitRate));
  }
  return kit;
}

double EventSeconds(const DrumEvent& event, double bpm) {
  return event.beats() * 60.0 / bpm;
}

std::size_t BaseLength(double bpm, int sample_rate) {
  return static_cast<std::size_t>(std::llround(kPatternBeats * 60.0 / bpm * sample_rate));
}

RenderedPattern RenderPattern(const DrumPattern& pattern, double bpm, const DrumKit& kit) {
  if (!(bpm > 0.0)) throw Error(ErrorCode::kInvalidArgument, "tempo must be positive");
  pattern.Validate();
  RenderedPattern out{AudioBuffer::Silence(0, kKitRate), BaseLength(bpm, kKitRate), {}};
  std::size_t length = out.base_length;
  for (const DrumEvent& e : pattern.events) {
    const auto it = kit.find(e.instrument);
    if (it == kit.end()) {
      throw Error(ErrorCode::kNotFound, "kit has no sample for " + InstrumentName(e.instrument));
    }
    const auto offset = static_cast<std::size_t>(std::llround(EventSeconds(e, bpm) * kKitRate));
    length = std::max(length, offset + it->second.size());
  }
  std::vector<double> mix(length, 0.0);
  for (const DrumEvent& e : pattern.events) {
    const AudioBuffer& sample = kit.at(e.instrument);
    const double seconds = EventSeconds(e, bpm);
    const auto offset = static_cast<std::size_t>(std::llround(seconds * kKitRate));
    for (std::size_t i = 0; i < sample.size(); ++i) mix[offset + i] += e.velocity * sample[i];
    out.onsets[e.instrument].push_back(seconds);
  }
  double peak = 0.0;
  for (double v : mix) peak = std::max(peak, std::abs(v));
  const double gain = peak > 0.0 ? DbToGain(kRenderPeakDbfs) / peak : 0.0;
  std::vector<float> samples(length);
  for (std::size_t i = 0; i < length; ++i) samples[i] = static_cast<float>(mix[i] * gain);
  out.audio = AudioBuffer(std::move(samples), kKitRate);
  return out;
}

std::vector<TestCase> GenerateTestSet(const DrumKit& kit, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + out_dir.string() + ": " + ec.message());
  std::vector<TestCase> cases;
  json manifest = json::array();
  for (const DrumPattern& p : BuiltinPatterns()) {
    for (int bpm : kPatternTempos) {
      const RenderedPattern r = RenderPattern(p, bpm, kit);
      TestCase tc;
      tc.file = "pattern" + std::to_string(p.id) + "_bpm" + std::to_string(bpm) + ".wav";
      tc.pattern = p.id;
      tc.bpm = bpm;
      tc.base_length = r.base_length;
      tc.length = r.audio.size();
      tc.onsets = r.onsets;
      WriteWav(out_dir / tc.file, r.audio);
      manifest.push_back({{"file", tc.file},
                          {"pattern", tc.pattern},
                          {"bpm", tc.bpm},
                          {"sample_rate", kKitRate},
                          {"base_length", tc.base_length},
                          {"length", tc.length},
                          {"onsets", OnsetsJson(tc.onsets)}});
      cases.push_back(std::move(tc));
    }
  }
  std::ofstream f(out_dir / kTestSetManifestName, std::ios::trunc);
  if (!f) throw Error(ErrorCode::kIo, "cannot write test-set manifest");
  f << manifest.dump(2) << '\n';
  if (!f) throw Error(ErrorCode::kIo, "cannot write test-set manifest");
  return cases;
}

std::vector<TestCase> ReadTestSetManifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<TestCase> cases;
  try {
    const json j = json::parse(in);
    for (const json& e : j) {
      TestCase tc;
      tc.file = e.at("file").get<std::string>();
      tc.pattern = e.at("pattern").get<int>();
      tc.bpm = e.at("bpm").get<int>();
      tc.base_length = e.value("base_length", std::size_t{0});
      tc.length = e.value("length", std::size_t{0});
      for (const auto& [name, times] : e.at("onsets").items()) {
        tc.onsets[ParseInstrument(name)] = times.get<std::vector<double>>();
      }
      cases.push_back(std::move(tc));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformed, "test-set manifest: " + std::string(e.what()));
  }
  return cases;
}

}  // namespace vpconv
