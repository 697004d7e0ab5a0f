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

#include "vpconv/preprocess.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

#include "json.hpp"
#include "vpconv/error.h"
#include "vpconv/random.h"

namespace vpconv {

namespace {

using json = nlohmann::json;

[[noreturn]] void Invalid(const std::string& what) {
  throw Error(ErrorCode::kInvalidArgument, what);
}

}  // namespace

void SegmentationConfig::Validate() const {
  if (!(min_silence_seconds > 0.0)) Invalid("min_silence must be positive");
  if (chunk_length == 0) Invalid("chunk_length must be positive");
  if (!(silence_threshold_db < 0.0)) Invalid("silence threshold must be < 0 dBFS");
  if (!(frame_seconds > 0.0)) Invalid("frame length must be positive");
}

void AugmentSpec::Validate() const {
  if (!std::isfinite(gain_min_db) || !std::isfinite(gain_max_db) ||
      gain_min_db > gain_max_db) {
    Invalid("gain range must be a finite interval");
  }
  if (!(mute_probability >= 0.0 && mute_probability <= 1.0)) {
    Invalid("mute probability must be in [0, 1]");
  }
  if (!(mute_min_seconds >= 0.0 && mute_min_seconds <= mute_max_seconds)) {
    Invalid("mute span must be a non-negative interval");
  }
}

AugmentSpec AugmentSpec::Neutral() {
  AugmentSpec spec;
  spec.gain_min_db = 0.0;
  spec.gain_max_db = 0.0;
  spec.mute_probability = 0.0;
  spec.compression = false;
  return spec;
}

std::vector<Region> FindNonSilentRegions(const AudioBuffer& buf,
                                         const SegmentationConfig& cfg) {
  cfg.Validate();
  const auto x = buf.samples();
  const float threshold =
      static_cast<float>(DbToGain(cfg.silence_threshold_db));
  const auto frame = std::max<std::size_t>(
      1, static_cast<std::size_t>(
             std::lround(cfg.frame_seconds * buf.sample_rate())));
  const auto min_gap = static_cast<std::size_t>(
      std::ceil(cfg.min_silence_seconds * buf.sample_rate()));

  // Loud frames grouped into runs; a run ends at a silence >= min_gap.
  std::vector<Region> coarse;
  for (std::size_t start = 0; start < x.size(); start += frame) {
    const std::size_t stop = std::min(start + frame, x.size());
    float peak = 0.0f;
    for (std::size_t i = start; i < stop; ++i) peak = std::max(peak, std::abs(x[i]));
    if (peak < threshold) continue;
    if (!coarse.empty() && start - coarse.back().end < min_gap) {
      coarse.back().end = stop;
    } else {
      coarse.push_back({start, stop});
    }
  }

  // Trim each run to its first and last sample at or above the threshold.
  for (Region& r : coarse) {
    while (std::abs(x[r.begin]) < threshold) ++r.begin;
    while (std::abs(x[r.end - 1]) < threshold) --r.end;
  }
  return coarse;
}

std::vector<AudioBuffer> SegmentBySilence(const AudioBuffer& buf,
                                          const SegmentationConfig& cfg) {
  std::vector<AudioBuffer> out;
  for (const Region& r : FindNonSilentRegions(buf, cfg)) {
    out.push_back(buf.Slice(r.begin, r.end));
  }
  return out;
}

std::vector<std::size_t> ChunkOffsets(std::size_t segment_length,
                                      std::size_t chunk_length) {
  if (chunk_length == 0) Invalid("chunk_length must be positive");
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (; offset + chunk_length <= segment_length; offset += chunk_length) {
    offsets.push_back(offset);
  }
  if (2 * (segment_length - offset) >= chunk_length) offsets.push_back(offset);
  return offsets;
}

std::vector<AudioBuffer> MakeChunks(const std::vector<AudioBuffer>& segments,
                                    std::size_t chunk_length) {
  std::vector<AudioBuffer> chunks;
  for (const AudioBuffer& seg : segments) {
    for (std::size_t offset : ChunkOffsets(seg.size(), chunk_length)) {
      std::vector<float> data(chunk_length, 0.0f);
      const std::size_t n = std::min(chunk_length, seg.size() - offset);
      std::copy_n(seg.samples().begin() + static_cast<std::ptrdiff_t>(offset),
                  n, data.begin());
      chunks.emplace_back(std::move(data), seg.sample_rate());
    }
  }
  return chunks;
}

AudioBuffer Compress(const AudioBuffer& buf, const CompressorSettings& s) {
  const double rate = buf.sample_rate();
  const double attack = std::exp(-1.0 / (s.attack_ms * 1e-3 * rate));
  const double release = std::exp(-1.0 / (s.release_ms * 1e-3 * rate));
  const double slope = 1.0 / s.ratio - 1.0;
  double smoothed = 0.0;  // gain change in dB, <= 0
  std::vector<float> out(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    const double level =
        20.0 * std::log10(std::max<double>(std::abs(buf[i]), 1e-9));
    const double over = level - s.threshold_db;
    double target = 0.0;
    if (2.0 * over > s.knee_db) {
      target = slope * over;
    } else if (2.0 * over > -s.knee_db) {
      const double knee = over + s.knee_db / 2.0;
      target = slope * knee * knee / (2.0 * s.knee_db);
    }
    const double coeff = target < smoothed ? attack : release;
    smoothed = coeff * smoothed + (1.0 - coeff) * target;
    out[i] = static_cast<float>(buf[i] * DbToGain(smoothed));
  }
  return AudioBuffer(std::move(out), buf.sample_rate());
}

AudioBuffer Augment(const AudioBuffer& chunk, const AugmentSpec& spec,
                    std::uint64_t seed) {
  spec.Validate();
  std::mt19937_64 rng(seed);
  const double gain_db =
      std::uniform_real_distribution<double>(spec.gain_min_db,
                                             spec.gain_max_db)(rng);
  std::vector<float> x(chunk.samples().begin(), chunk.samples().end());
  if (gain_db != 0.0) {
    const double gain = DbToGain(gain_db);
    for (float& v : x) v = static_cast<float>(v * gain);
  }

  if (std::bernoulli_distribution(spec.mute_probability)(rng) && !x.empty()) {
    const double seconds = std::uniform_real_distribution<double>(
        spec.mute_min_seconds, spec.mute_max_seconds)(rng);
    const std::size_t span = std::min(
        x.size(),
        static_cast<std::size_t>(std::lround(seconds * chunk.sample_rate())));
    const std::size_t start = std::uniform_int_distribution<std::size_t>(
        0, x.size() - span)(rng);
    std::fill_n(x.begin() + static_cast<std::ptrdiff_t>(start), span, 0.0f);
  }

  AudioBuffer out(std::move(x), chunk.sample_rate());
  if (spec.compression) out = Compress(out, spec.compressor);
  return out.Clipped();
}

std::vector<CorpusEntry> ReadCorpusManifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kNotFound, "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformed, path.string() + ": " + e.what());
  }
  if (!doc.is_array()) {
    throw Error(ErrorCode::kMalformed, "corpus manifest must be a JSON list");
  }
  std::vector<CorpusEntry> out;
  for (const auto& item : doc) {
    CorpusEntry e;
    e.path = item.at("path").get<std::string>();
    e.split = item.value("split", std::string("train"));
    if (e.split != "train" && e.split != "valid") {
      throw Error(ErrorCode::kMalformed, "split must be train or valid: " + e.path);
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<ChunkRecord> PreprocessCorpus(
    const std::vector<CorpusEntry>& manifest,
    const std::filesystem::path& manifest_dir,
    const std::filesystem::path& out_dir, const SegmentationConfig& cfg,
    int target_rate) {
  cfg.Validate();
  std::filesystem::create_directories(out_dir);
  std::vector<ChunkRecord> records;
  json index = json::array();
  for (std::size_t file_id = 0; file_id < manifest.size(); ++file_id) {
    const CorpusEntry& entry = manifest[file_id];
    std::filesystem::path src = entry.path;
    if (src.is_relative()) src = manifest_dir / src;
    const AudioBuffer audio = Resample(ReadWav(src), target_rate);
    std::size_t chunk_id = 0;
    for (const Region& region : FindNonSilentRegions(audio, cfg)) {
      const AudioBuffer segment = audio.Slice(region.begin, region.end);
      for (std::size_t offset : ChunkOffsets(segment.size(), cfg.chunk_length)) {
        std::vector<float> data(cfg.chunk_length, 0.0f);
        const std::size_t n = std::min(cfg.chunk_length, segment.size() - offset);
        std::copy_n(segment.samples().begin() + static_cast<std::ptrdiff_t>(offset),
                    n, data.begin());
        ChunkRecord rec;
        rec.file = "chunk_" + std::to_string(file_id) + "_" +
                   std::to_string(chunk_id++) + ".wav";
        rec.source = entry.path;
        rec.split = entry.split;
        rec.offset = region.begin + offset;
        WriteWav(out_dir / rec.file, AudioBuffer(std::move(data), target_rate));
        index.push_back({{"file", rec.file},
                         {"source", rec.source},
                         {"split", rec.split},
                         {"offset", rec.offset},
                         {"augmented", rec.augmented}});
        records.push_back(std::move(rec));
      }
    }
  }
  std::ofstream out(out_dir / kChunkIndexName);
  out << index.dump(2) << "\n";
  if (!out) throw Error(ErrorCode::kIo, "cannot write chunk index");
  return records;
}

std::vector<ChunkRecord> ReadChunkIndex(const std::filesystem::path& dir) {
  std::ifstream in(dir / kChunkIndexName);
  if (!in) {
    throw Error(ErrorCode::kNotFound,
                "no " + std::string(kChunkIndexName) + " in " + dir.string());
  }
  std::vector<ChunkRecord> out;
  try {
    for (const auto& item : json::parse(in)) {
      ChunkRecord rec;
      rec.file = item.at("file").get<std::string>();
      rec.source = item.at("source").get<std::string>();
      rec.split = item.value("split", std::string("train"));
      rec.offset = item.at("offset").get<std::size_t>();
      rec.augmented = item.value("augmented", false);
      out.push_back(std::move(rec));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformed, "chunk index: " + std::string(e.what()));
  }
  return out;
}

std::vector<AudioBuffer> LoadChunks(const std::filesystem::path& dir,
                                    const std::string& split) {
  std::vector<AudioBuffer> chunks;
  for (const ChunkRecord& rec : ReadChunkIndex(dir)) {
    if (split.empty() || rec.split == split) chunks.push_back(ReadWav(dir / rec.file));
  }
  return chunks;
}

std::vector<AudioBuffer> SyntheticVpCorpus(int count, std::size_t chunk_length,
                                           int sample_rate, std::uint64_t seed) {
  const double fs = sample_rate;
  std::vector<AudioBuffer> corpus;
  corpus.reserve(static_cast<std::size_t>(count));
  for (int c = 0; c < count; ++c) {
    std::mt19937_64 rng(DeriveSeed(seed, {static_cast<std::uint64_t>(c)}));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> x(chunk_length, 0.0);

    // Events on a jittered grid of roughly 8th notes at 100-140 BPM.
    const double step = 60.0 / (100.0 + 40.0 * uni(rng)) / 2.0;
    for (double t = 0.02 + 0.05 * uni(rng); t < chunk_length / fs; t += step) {
      if (uni(rng) < 0.2) continue;
      const auto onset = static_cast<std::size_t>(t * fs);
      const int kind = static_cast<int>(uni(rng) * 3.0);
      const double amp = 0.3 + 0.5 * uni(rng);
      double lp = 0.0;
      double prev = 0.0;
      double phase = 0.0;
      const double decay = kind == 0 ? 0.07 : (kind == 1 ? 0.09 : 0.03);
      const auto len = std::min(chunk_length - onset,
                                static_cast<std::size_t>(6.0 * decay * fs));
      for (std::size_t i = 0; i < len; ++i) {
        const double tt = i / fs;
        const double env = std::exp(-tt / decay) * (1.0 - std::exp(-tt / 0.002));
        const double n = noise(rng);
        double v = 0.0;
        if (kind == 0) {
          // Lip bass: falling pitch with a breathy low-passed noise layer.
          const double f = 50.0 + 70.0 * std::exp(-tt / 0.03);
          phase += 2.0 * std::numbers::pi * f / fs;
          lp += 0.1 * (n - lp);
          v = 0.8 * std::sin(phase) + 0.6 * lp;
        } else if (kind == 1) {
          // Snare-like "k"/"pf": band-limited noise with a short voiced body.
          lp += 0.5 * (n - lp);
          phase += 2.0 * std::numbers::pi * 190.0 / fs;
          v = 0.8 * (lp - 0.5 * prev) + 0.25 * std::sin(phase) * std::exp(-tt / 0.02);
          prev = lp;
        } else {
          // "ts": high-passed hiss.
          v = 0.6 * (n - prev);
          prev = n;
        }
        x[onset + i] += amp * env * v;
      }
    }
    std::vector<float> out(chunk_length);
    for (std::size_t i = 0; i < chunk_length; ++i) {
      out[i] = static_cast<float>(std::clamp(x[i], -1.0, 1.0));
    }
    corpus.emplace_back(std::move(out), sample_rate);
  }
  return corpus;
}

}  // namespace vpconv
