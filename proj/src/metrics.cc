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

#include "vpconv/metrics.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>

#include "vpconv/error.h"
#include "vpconv/stft.h"

namespace vpconv {

namespace {

int DefaultWindow(int sample_rate) { return sample_rate >= 32000 ? 2048 : 1024; }

AudioBuffer PadTo(const AudioBuffer& buf, std::size_t length) {
  if (buf.size() >= length) return buf;
  std::vector<float> x(buf.samples().begin(), buf.samples().end());
  x.resize(length, 0.0f);
  return AudioBuffer(std::move(x), buf.sample_rate());
}

double Median(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  return v[mid];
}

double Cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa <= 0.0 || bb <= 0.0) return 0.0;
  return ab / std::sqrt(aa * bb);
}

}  // namespace

OnsetList DetectOnsets(const AudioBuffer& buf, const OnsetDetectorConfig& cfg) {
  if (buf.empty()) throw Error(ErrorCode::kInvalidArgument, "onset detection on empty audio");
  const int window = cfg.window_size > 0 ? cfg.window_size : DefaultWindow(buf.sample_rate());
  const Spectrogram s = MagnitudeSpectrogram(PadTo(buf, static_cast<std::size_t>(window)), window);
  const double norm = 2.0 / window;

  std::vector<double> flux(static_cast<std::size_t>(s.frames), 0.0);
  std::vector<double> prev(static_cast<std::size_t>(s.bins), 0.0);
  std::vector<double> cur(static_cast<std::size_t>(s.bins));
  for (int f = 0; f < s.frames; ++f) {
    double sum = 0.0;
    for (int k = 0; k < s.bins; ++k) {
      cur[k] = std::log1p(cfg.compression * s.at(f, k) * norm);
      sum += std::max(0.0, cur[k] - prev[k]);
    }
    flux[f] = sum / s.bins;
    std::swap(prev, cur);
  }

  const double mean = std::accumulate(flux.begin(), flux.end(), 0.0) / flux.size();
  if (!(mean > 1e-9)) return {};
  const int half = std::max(1, static_cast<int>(std::lround(cfg.median_seconds *
                                                             s.sample_rate / s.hop_size)));
  const double seconds_per_frame = static_cast<double>(s.hop_size) / s.sample_rate;

  OnsetList out;
  std::vector<double> peaks;
  for (int f = 0; f < s.frames; ++f) {
    const int lo = std::max(0, f - half);
    const int hi = std::min(s.frames - 1, f + half);
    const double threshold =
        cfg.median_scale * Median(std::vector<double>(flux.begin() + lo, flux.begin() + hi + 1)) +
        cfg.relative_floor * mean;
    if (flux[f] <= threshold) continue;
    // Local maximum over +/- 3 frames; the first frame of a plateau wins.
    bool is_peak = true;
    for (int d = -3; d <= 3 && is_peak; ++d) {
      const int g = f + d;
      if (d == 0 || g < 0 || g >= s.frames) continue;
      if (d < 0 ? flux[g] >= flux[f] : flux[g] > flux[f]) is_peak = false;
    }
    if (!is_peak) continue;
    const double t = f * seconds_per_frame;
    if (!out.empty() && t - out.back() < cfg.min_gap_seconds) {
      if (flux[f] > peaks.back()) {
        out.back() = t;
        peaks.back() = flux[f];
      }
      continue;
    }
    out.push_back(t);
    peaks.push_back(flux[f]);
  }
  return out;
}

double RhythmicFidelity(const OnsetList& ref, const OnsetList& est, double tolerance) {
  if (!(tolerance > 0.0)) throw Error(ErrorCode::kInvalidArgument, "tolerance must be positive");
  if (ref.empty() && est.empty()) return 1.0;
  if (ref.empty() || est.empty()) return 0.0;
  std::size_t i = 0, j = 0, matches = 0;
  while (i < ref.size() && j < est.size()) {
    // Compare the offset against the tolerance with a small slack so that
    // decimal inputs such as 0.15 - 0.1 still count as 0.05.
    const double d = est[j] - ref[i];
    if (std::abs(d) <= tolerance + 1e-12) {
      ++matches;
      ++i;
      ++j;
    } else if (d < 0) {
      ++j;
    } else {
      ++i;
    }
  }
  if (matches == 0) return 0.0;
  const double p = static_cast<double>(matches) / est.size();
  const double r = static_cast<double>(matches) / ref.size();
  return 2.0 * p * r / (p + r);
}

std::vector<double> TimbreEmbedding(const AudioBuffer& clip) {
  if (clip.empty()) throw Error(ErrorCode::kInvalidArgument, "empty clip");
  const int window = DefaultWindow(clip.sample_rate());
  const Spectrogram s = MagnitudeSpectrogram(PadTo(clip, static_cast<std::size_t>(window)), window);
  std::vector<double> e(static_cast<std::size_t>(s.bins), 0.0);
  for (int f = 0; f < s.frames; ++f) {
    for (int k = 0; k < s.bins; ++k) e[k] += s.at(f, k);
  }
  for (double& v : e) v = std::log(v / s.frames + 1e-12);
  const double mean = std::accumulate(e.begin(), e.end(), 0.0) / e.size();
  for (double& v : e) v -= mean;
  return e;
}

double TimbralConsistency(const std::vector<LabeledClip>& clips) {
  std::map<std::string, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < clips.size(); ++i) by_label[clips[i].label].push_back(i);
  if (by_label.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "timbral consistency needs at least 2 labels");
  }
  for (const auto& [label, idx] : by_label) {
    if (idx.size() < 2) {
      throw Error(ErrorCode::kInvalidArgument,
                  "label '" + label + "' needs at least 2 clips");
    }
  }
  std::vector<std::vector<double>> emb;
  emb.reserve(clips.size());
  for (const LabeledClip& c : clips) emb.push_back(TimbreEmbedding(c.audio));
  const std::size_t dims = emb.front().size();
  for (const auto& e : emb) {
    if (e.size() != dims) {
      throw Error(ErrorCode::kInvalidArgument, "clips must share one sample rate");
    }
  }
  std::map<std::string, std::vector<double>> sums;
  for (const auto& [label, idx] : by_label) {
    std::vector<double> s(dims, 0.0);
    for (std::size_t i : idx) {
      for (std::size_t d = 0; d < dims; ++d) s[d] += emb[i][d];
    }
    sums.emplace(label, std::move(s));
  }
  int correct = 0;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    std::string best;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (const auto& [label, sum] : sums) {
      std::vector<double> centroid = sum;
      if (label == clips[i].label) {
        for (std::size_t d = 0; d < dims; ++d) centroid[d] -= emb[i][d];
      }
      const double sim = Cosine(emb[i], centroid);
      if (sim > best_sim + 1e-12) {
        best_sim = sim;
        best = label;
      }
    }
    correct += best == clips[i].label ? 1 : 0;
  }
  return static_cast<double>(correct) / clips.size();
}

std::vector<LabeledClip> ExtractOnsetClips(
    const AudioBuffer& audio, const std::map<Instrument, std::vector<double>>& onsets,
    double clip_seconds) {
  const auto len = static_cast<std::size_t>(std::lround(clip_seconds * audio.sample_rate()));
  std::vector<LabeledClip> clips;
  for (const auto& [inst, times] : onsets) {
    for (double t : times) {
      const auto begin = static_cast<std::size_t>(std::lround(t * audio.sample_rate()));
      std::vector<float> x(len, 0.0f);
      for (std::size_t i = 0; i < len && begin + i < audio.size(); ++i) x[i] = audio[begin + i];
      clips.push_back({InstrumentName(inst), AudioBuffer(std::move(x), audio.sample_rate())});
    }
  }
  return clips;
}

TextureReport VpTextureReport(const AudioBuffer& buf) {
  if (buf.empty()) throw Error(ErrorCode::kInvalidArgument, "texture report on empty audio");
  const int rate = buf.sample_rate();
  const int window = DefaultWindow(rate);
  const int hop = window / 2;
  const AudioBuffer x = PadTo(buf, static_cast<std::size_t>(window));
  const double silence = DbToGain(-60.0);
  const int min_lag = std::max(1, rate / 1000);
  const int max_lag = std::min(window / 2, rate / 60);

  std::vector<double> hann(static_cast<std::size_t>(window));
  for (int i = 0; i < window; ++i) {
    hann[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / window);
  }
  std::vector<double> power(static_cast<std::size_t>(window / 2 + 1), 0.0);
  std::vector<double> frame(static_cast<std::size_t>(window));
  const auto& analyzer = StftAnalyzer::ForWindow(window);
  int active = 0, voiced = 0;
  double peak_sum = 0.0;
  for (std::size_t start = 0; start + window <= x.size(); start += hop) {
    double energy = 0.0;
    for (int i = 0; i < window; ++i) {
      frame[i] = x[start + i];
      energy += frame[i] * frame[i];
    }
    if (std::sqrt(energy / window) < silence) continue;
    ++active;

    double best = 0.0;
    for (int lag = min_lag; lag <= max_lag; ++lag) {
      double ab = 0.0, aa = 0.0, bb = 0.0;
      for (int i = 0; i + lag < window; ++i) {
        ab += frame[i] * frame[i + lag];
        aa += frame[i] * frame[i];
        bb += frame[i + lag] * frame[i + lag];
      }
      if (aa > 0.0 && bb > 0.0) best = std::max(best, ab / std::sqrt(aa * bb));
    }
    peak_sum += best;
    voiced += best >= 0.6 ? 1 : 0;

    // One centered STFT frame of exactly `window` samples is the middle
    // frame of a window-length input.
    const auto spec = analyzer.Forward(frame);
    const int mid = analyzer.FrameCount(frame.size()) / 2;
    for (std::size_t k = 0; k < power.size(); ++k) {
      power[k] += std::norm(spec[static_cast<std::size_t>(mid) * power.size() + k]);
    }
  }
  TextureReport r;
  if (active == 0) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    r.aperiodicity = r.flatness = r.voiced_fraction = nan;
    return r;
  }
  r.defined = true;
  r.aperiodicity = 1.0 - peak_sum / active;
  r.voiced_fraction = static_cast<double>(voiced) / active;
  double log_sum = 0.0, sum = 0.0;
  for (std::size_t k = 1; k < power.size(); ++k) {
    const double p = power[k] / active + 1e-20;
    log_sum += std::log(p);
    sum += p;
  }
  const double n = static_cast<double>(power.size() - 1);
  r.flatness = std::exp(log_sum / n) / (sum / n);
  return r;
}

OnsetList MergeOnsets(const std::map<Instrument, std::vector<double>>& onsets) {
  OnsetList all;
  for (const auto& [inst, times] : onsets) all.insert(all.end(), times.begin(), times.end());
  std::sort(all.begin(), all.end());
  OnsetList out;
  for (double t : all) {
    if (out.empty() || t - out.back() >= kMinOnsetGap) out.push_back(t);
  }
  return out;
}

CaseMetrics EvaluateCase(const TestCase& reference, const AudioBuffer& converted) {
  CaseMetrics m;
  m.file = reference.file;
  const OnsetList ref = MergeOnsets(reference.onsets);
  const OnsetList est = DetectOnsets(converted);
  m.reference_onsets = static_cast<int>(ref.size());
  m.detected_onsets = static_cast<int>(est.size());
  m.rhythmic_f = RhythmicFidelity(ref, est);
  const std::vector<LabeledClip> clips = ExtractOnsetClips(converted, reference.onsets);
  std::map<std::string, int> counts;
  for (const auto& c : clips) ++counts[c.label];
  std::vector<LabeledClip> usable;
  for (const auto& c : clips) {
    if (counts[c.label] >= 2) usable.push_back(c);
  }
  std::set<std::string> labels;
  for (const auto& c : usable) labels.insert(c.label);
  if (labels.size() >= 2) m.timbral_consistency = TimbralConsistency(usable);
  m.texture = VpTextureReport(converted);
  return m;
}

}  // namespace vpconv
