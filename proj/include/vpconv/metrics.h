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

#ifndef VPCONV_METRICS_H_
#define VPCONV_METRICS_H_

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vpconv/audio.h"
#include "vpconv/patterns.h"

namespace vpconv {

// Ascending onset times in seconds.
using OnsetList = std::vector<double>;

inline constexpr double kOnsetTolerance = 0.05;
inline constexpr double kMinOnsetGap = 0.05;

struct OnsetDetectorConfig {
  // Samples; 0 picks 2048 at rates >= 32 kHz and 1024 below.
  int window_size = 0;
  double min_gap_seconds = kMinOnsetGap;
  // Half-width of the moving-median threshold window.
  double median_seconds = 0.05;
  double median_scale = 1.0;
  // Floor relative to the mean flux.
  double relative_floor = 0.25;
  // Magnitudes are compressed as log(1 + compression * |X|).
  double compression = 100.0;
};

// Spectral-flux onsets: half-wave rectified frame-to-frame increase of
// log-compressed magnitudes, peak-picked above a moving-median threshold.
// Silence gives an empty list.
OnsetList DetectOnsets(const AudioBuffer& buf, const OnsetDetectorConfig& cfg = {});

// Greedy one-to-one matching in time order within +/- tolerance; F-measure.
// Two empty lists score 1.
double RhythmicFidelity(const OnsetList& ref, const OnsetList& est,
                        double tolerance = kOnsetTolerance);

struct LabeledClip {
  std::string label;
  AudioBuffer audio;
};

// Mean-removed, time-averaged log-magnitude spectrum.
std::vector<double> TimbreEmbedding(const AudioBuffer& clip);

// Leave-one-out nearest-centroid classification by cosine similarity; the
// fraction of clips assigned their own label. Ties go to the label that sorts
// first. Needs >= 2 labels with >= 2 clips each (kInvalidArgument otherwise).
double TimbralConsistency(const std::vector<LabeledClip>& clips);

inline constexpr double kTimbreClipSeconds = 0.15;

// Excerpts of `audio` starting at each onset, labeled with the instrument
// name; zero-padded past the end.
std::vector<LabeledClip> ExtractOnsetClips(
    const AudioBuffer& audio, const std::map<Instrument, std::vector<double>>& onsets,
    double clip_seconds = kTimbreClipSeconds);

// Descriptive texture statistics (not a naturalness score). `defined` is
// false and the fields are NaN when the input has no frame above -60 dBFS.
struct TextureReport {
  bool defined = false;
  // 1 - mean normalized autocorrelation peak (pitch lags 60-1000 Hz).
  double aperiodicity = 0.0;
  // Spectral flatness of the Welch-averaged power spectrum.
  double flatness = 0.0;
  // Fraction of active frames whose autocorrelation peak is >= 0.6.
  double voiced_fraction = 0.0;
};

TextureReport VpTextureReport(const AudioBuffer& buf);

struct CaseMetrics {
  std::string file;
  double rhythmic_f = 0.0;
  int reference_onsets = 0;
  int detected_onsets = 0;
  std::optional<double> timbral_consistency;
  TextureReport texture;
};

// Merged ground-truth onsets of every instrument, sorted, with times closer
// than the minimum gap collapsed.
OnsetList MergeOnsets(const std::map<Instrument, std::vector<double>>& onsets);

CaseMetrics EvaluateCase(const TestCase& reference, const AudioBuffer& converted);

}  // namespace vpconv

#endif  // VPCONV_METRICS_H_
