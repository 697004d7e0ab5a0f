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

#ifndef VPCONV_AUDIO_H_
#define VPCONV_AUDIO_H_

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <vector>

namespace vpconv {

inline constexpr int kCanonicalSampleRate = 44100;
inline constexpr int kToySampleRate = 16000;

// Returned by the dBFS measurements for an all-zero buffer.
inline constexpr double kSilenceDbfs = -std::numeric_limits<double>::infinity();

// Mono waveform tagged with its sample rate. Immutable once constructed; every
// processing step returns a new buffer.
class AudioBuffer {
 public:
  AudioBuffer() = default;
  // Throws kInvalidArgument on a non-positive rate or non-finite samples.
  AudioBuffer(std::vector<float> samples, int sample_rate);

  static AudioBuffer Silence(std::size_t length, int sample_rate);

  std::span<const float> samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  bool empty() const { return samples_.empty(); }
  int sample_rate() const { return sample_rate_; }
  int channel_count() const { return 1; }
  double duration_seconds() const {
    return static_cast<double>(samples_.size()) / sample_rate_;
  }
  float operator[](std::size_t i) const { return samples_[i]; }

  // Copy of samples [begin, end).
  AudioBuffer Slice(std::size_t begin, std::size_t end) const;
  AudioBuffer Scaled(double gain) const;
  // Hard clip to [-1, 1].
  AudioBuffer Clipped() const;

  // Moves the storage out, leaving the buffer empty.
  std::vector<float> Release() && { return std::move(samples_); }

 private:
  std::vector<float> samples_;
  int sample_rate_ = kCanonicalSampleRate;
};

enum class WavEncoding { kPcm16, kFloat32 };

// RIFF/WAVE decoding of PCM16 and IEEE float32 data (plain or
// WAVE_FORMAT_EXTENSIBLE). Multichannel input is averaged to mono.
AudioBuffer DecodeWav(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> EncodeWav(const AudioBuffer& buf,
                                    WavEncoding encoding);

AudioBuffer ReadWav(const std::filesystem::path& path);
// Written files are always mono. PCM16 output is clipped to full scale.
void WriteWav(const std::filesystem::path& path, const AudioBuffer& buf,
              WavEncoding encoding = WavEncoding::kFloat32);

// Band-limited (windowed-sinc) sample-rate conversion. Output length is
// round(size * target / source).
AudioBuffer Resample(const AudioBuffer& buf, int target_rate);

// 20 log10(max |x|); kSilenceDbfs for an all-zero buffer. Throws on empty input.
double PeakDbfs(const AudioBuffer& buf);
double PeakDbfs(std::span<const float> samples);
// 20 log10(rms); kSilenceDbfs for an all-zero buffer.
double RmsDbfs(const AudioBuffer& buf);

inline double DbToGain(double db) { return std::pow(10.0, db / 20.0); }

}  // namespace vpconv

#endif  // VPCONV_AUDIO_H_
