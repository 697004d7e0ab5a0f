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

#ifndef VPCONV_PREPROCESS_H_
#define VPCONV_PREPROCESS_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vpconv/audio.h"

namespace vpconv {

struct SegmentationConfig {
  // A 10 ms frame is silent when its peak level is below this.
  double silence_threshold_db = -60.0;
  // Silences at least this long separate segments.
  double min_silence_seconds = 1.0;
  std::size_t chunk_length = 65536;
  double frame_seconds = 0.010;

  void Validate() const;
};

struct CompressorSettings {
  double threshold_db = -20.0;
  double ratio = 4.0;
  double knee_db = 6.0;
  double attack_ms = 5.0;
  double release_ms = 50.0;
};

struct AugmentSpec {
  double gain_min_db = -6.0;
  double gain_max_db = 3.0;
  double mute_probability = 0.1;
  double mute_min_seconds = 0.1;
  double mute_max_seconds = 0.5;
  bool compression = true;
  CompressorSettings compressor;

  void Validate() const;
  // No gain change, no muting, no compression.
  static AugmentSpec Neutral();
};

// Half-open sample range [begin, end).
struct Region {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const Region&) const = default;
};

// Maximal non-silent regions. Regions separated only by silences shorter than
// min_silence are merged; each region starts and ends on a sample at or above
// the threshold.
std::vector<Region> FindNonSilentRegions(const AudioBuffer& buf,
                                         const SegmentationConfig& cfg);

std::vector<AudioBuffer> SegmentBySilence(const AudioBuffer& buf,
                                          const SegmentationConfig& cfg);

// Splits a segment into consecutive chunk_length pieces. A remainder at least
// half a chunk long is zero-padded into a final chunk; shorter remainders are
// dropped. Returned offsets are relative to the segment start.
std::vector<std::size_t> ChunkOffsets(std::size_t segment_length,
                                      std::size_t chunk_length);
std::vector<AudioBuffer> MakeChunks(const std::vector<AudioBuffer>& segments,
                                    std::size_t chunk_length);

// Soft-knee feed-forward compressor. Only ever attenuates.
AudioBuffer Compress(const AudioBuffer& buf, const CompressorSettings& settings);

// Random gain, then random muting of one span, then compression, then a hard
// clip to [-1, 1]. Deterministic for a given seed.
AudioBuffer Augment(const AudioBuffer& chunk, const AugmentSpec& spec,
                    std::uint64_t seed);

// Corpus manifest: JSON list of {"path": ..., "split": "train" | "valid"}.
struct CorpusEntry {
  std::string path;
  std::string split;
};
std::vector<CorpusEntry> ReadCorpusManifest(const std::filesystem::path& path);

// One line of the chunk index written by PreprocessCorpus.
struct ChunkRecord {
  std::string file;    // relative to the output directory
  std::string source;  // manifest path of the originating recording
  std::string split;
  std::size_t offset = 0;  // sample offset in the resampled source
  bool augmented = false;
};

inline constexpr char kChunkIndexName[] = "index.json";

// Reads every manifest entry, converts it to mono at target_rate, segments it
// on silence and writes fixed-length chunks plus index.json to out_dir.
// Augmentation is not applied here; training applies it per batch.
std::vector<ChunkRecord> PreprocessCorpus(
    const std::vector<CorpusEntry>& manifest,
    const std::filesystem::path& manifest_dir,
    const std::filesystem::path& out_dir, const SegmentationConfig& cfg,
    int target_rate);

std::vector<ChunkRecord> ReadChunkIndex(const std::filesystem::path& dir);

// Loads the chunks of one split ("" for all) from a preprocessed directory.
std::vector<AudioBuffer> LoadChunks(const std::filesystem::path& dir,
                                    const std::string& split);

// Toy stand-in for a vocal percussion corpus: chunks of breathy, mostly
// unvoiced percussive bursts (lip-bass thumps, "k"/"pf" snares, "ts" hats)
// separated by silence.
std::vector<AudioBuffer> SyntheticVpCorpus(int count, std::size_t chunk_length,
                                           int sample_rate, std::uint64_t seed);

}  // namespace vpconv

#endif  // VPCONV_PREPROCESS_H_
