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

#include "vpconv/audio.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>

#include "vpconv/error.h"

namespace vpconv {

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

std::uint16_t ReadU16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t ReadU32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

void PutU16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void PutU32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
  }
}

void PutTag(std::vector<std::uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

[[noreturn]] void Malformed(const std::string& what) {
  throw Error(ErrorCode::kMalformed, "malformed WAV: " + what);
}

// Blackman-windowed sinc table used by Resample. The kernel spans
// kZeroCrossings lobes on each side, sampled kPhases times per lobe.
constexpr int kZeroCrossings = 32;
constexpr int kPhases = 512;

const std::vector<double>& SincTable() {
  static const std::vector<double> table = [] {
    std::vector<double> t(kZeroCrossings * kPhases + 2);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double x = static_cast<double>(i) / kPhases;
      const double sinc =
          x == 0.0 ? 1.0
                   : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
      // Blackman window over [-kZeroCrossings, kZeroCrossings].
      const double u = std::min(x / kZeroCrossings, 1.0);
      const double w = 0.42 + 0.5 * std::cos(std::numbers::pi * u) +
                       0.08 * std::cos(2.0 * std::numbers::pi * u);
      t[i] = sinc * w;
    }
    return t;
  }();
  return table;
}

double Kernel(double x) {
  x = std::abs(x);
  if (x >= kZeroCrossings) return 0.0;
  const auto& table = SincTable();
  const double pos = x * kPhases;
  const auto i = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(i);
  return table[i] + frac * (table[i + 1] - table[i]);
}

}  // namespace

AudioBuffer::AudioBuffer(std::vector<float> samples, int sample_rate)
    : samples_(std::move(samples)), sample_rate_(sample_rate) {
  if (sample_rate_ <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "sample rate must be positive");
  }
  for (float s : samples_) {
    if (!std::isfinite(s)) {
      throw Error(ErrorCode::kInvalidArgument, "non-finite sample");
    }
  }
}

AudioBuffer AudioBuffer::Silence(std::size_t length, int sample_rate) {
  return AudioBuffer(std::vector<float>(length, 0.0f), sample_rate);
}

AudioBuffer AudioBuffer::Slice(std::size_t begin, std::size_t end) const {
  end = std::min(end, samples_.size());
  begin = std::min(begin, end);
  return AudioBuffer(
      std::vector<float>(samples_.begin() + static_cast<std::ptrdiff_t>(begin),
                         samples_.begin() + static_cast<std::ptrdiff_t>(end)),
      sample_rate_);
}

AudioBuffer AudioBuffer::Scaled(double gain) const {
  std::vector<float> out(samples_.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<float>(samples_[i] * gain);
  }
  return AudioBuffer(std::move(out), sample_rate_);
}

AudioBuffer AudioBuffer::Clipped() const {
  std::vector<float> out(samples_.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::clamp(samples_[i], -1.0f, 1.0f);
  }
  return AudioBuffer(std::move(out), sample_rate_);
}

AudioBuffer DecodeWav(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) Malformed("file shorter than RIFF header");
  if (std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    Malformed("missing RIFF/WAVE tags");
  }

  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  bool have_fmt = false;
  const std::uint8_t* data = nullptr;
  std::size_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::uint8_t* chunk = bytes.data() + pos;
    const std::uint32_t size = ReadU32(chunk + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16 || body + size > bytes.size()) Malformed("short fmt chunk");
      format = ReadU16(chunk + 8);
      channels = ReadU16(chunk + 10);
      rate = ReadU32(chunk + 12);
      bits = ReadU16(chunk + 22);
      if (format == kFormatExtensible) {
        if (size < 40) Malformed("short extensible fmt chunk");
        // The first two bytes of the sub-format GUID carry the format tag.
        format = ReadU16(chunk + 8 + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      if (body + size > bytes.size()) Malformed("data chunk truncated");
      data = bytes.data() + body;
      data_size = size;
      break;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt) Malformed("missing fmt chunk");
  if (data == nullptr) Malformed("missing data chunk");
  if (channels == 0 || rate == 0) Malformed("zero channels or sample rate");

  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool float32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !float32) {
    throw Error(ErrorCode::kUnsupported,
                "unsupported WAV encoding (format " + std::to_string(format) +
                    ", " + std::to_string(bits) + " bits)");
  }

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t frames = data_size / frame_bytes;
  std::vector<float> mono(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    double sum = 0.0;
    for (std::size_t c = 0; c < channels; ++c) {
      const std::uint8_t* p = data + f * frame_bytes + c * bytes_per_sample;
      if (pcm16) {
        sum += static_cast<std::int16_t>(ReadU16(p)) / 32768.0;
      } else {
        const std::uint32_t bits32 = ReadU32(p);
        float v;
        std::memcpy(&v, &bits32, sizeof(v));
        if (!std::isfinite(v)) Malformed("non-finite float sample");
        sum += v;
      }
    }
    mono[f] = channels == 1 ? static_cast<float>(sum)
                            : static_cast<float>(sum / channels);
  }
  return AudioBuffer(std::move(mono), static_cast<int>(rate));
}

std::vector<std::uint8_t> EncodeWav(const AudioBuffer& buf,
                                    WavEncoding encoding) {
  const bool pcm16 = encoding == WavEncoding::kPcm16;
  const std::uint16_t bits = pcm16 ? 16 : 32;
  const std::uint32_t data_bytes =
      static_cast<std::uint32_t>(buf.size() * (bits / 8));
  const auto rate = static_cast<std::uint32_t>(buf.sample_rate());

  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  PutTag(out, "RIFF");
  PutU32(out, 36 + data_bytes);
  PutTag(out, "WAVE");
  PutTag(out, "fmt ");
  PutU32(out, 16);
  PutU16(out, pcm16 ? kFormatPcm : kFormatFloat);
  PutU16(out, 1);
  PutU32(out, rate);
  PutU32(out, rate * (bits / 8));
  PutU16(out, bits / 8);
  PutU16(out, bits);
  PutTag(out, "data");
  PutU32(out, data_bytes);
  for (float s : buf.samples()) {
    if (pcm16) {
      const double scaled = std::round(static_cast<double>(s) * 32768.0);
      const auto v =
          static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
      PutU16(out, static_cast<std::uint16_t>(v));
    } else {
      std::uint32_t v;
      std::memcpy(&v, &s, sizeof(v));
      PutU32(out, v);
    }
  }
  return out;
}

AudioBuffer ReadWav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kNotFound, "cannot open " + path.string());
  }
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return DecodeWav(bytes);
  } catch (const Error& e) {
    throw Error(e.code(), path.string() + ": " + e.what());
  }
}

void WriteWav(const std::filesystem::path& path, const AudioBuffer& buf,
              WavEncoding encoding) {
  const auto bytes = EncodeWav(buf, encoding);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "short write to " + path.string());
}

AudioBuffer Resample(const AudioBuffer& buf, int target_rate) {
  if (target_rate <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "target rate must be positive");
  }
  const int source_rate = buf.sample_rate();
  if (target_rate == source_rate) return buf;

  const double ratio = static_cast<double>(target_rate) / source_rate;
  const auto out_len =
      static_cast<std::size_t>(std::llround(buf.size() * ratio));
  // Downsampling lowers the cutoff to the new Nyquist frequency.
  const double cutoff = std::min(1.0, ratio);
  const double half_width = kZeroCrossings / cutoff;
  const auto in = buf.samples();
  const auto n_in = static_cast<std::ptrdiff_t>(in.size());

  std::vector<float> out(out_len);
  for (std::size_t n = 0; n < out_len; ++n) {
    const double t = static_cast<double>(n) / ratio;
    const auto first =
        std::max<std::ptrdiff_t>(0, static_cast<std::ptrdiff_t>(std::ceil(t - half_width)));
    const auto last = std::min<std::ptrdiff_t>(
        n_in - 1, static_cast<std::ptrdiff_t>(std::floor(t + half_width)));
    double acc = 0.0;
    for (std::ptrdiff_t m = first; m <= last; ++m) {
      acc += in[static_cast<std::size_t>(m)] * Kernel((t - m) * cutoff);
    }
    out[n] = static_cast<float>(acc * cutoff);
  }
  return AudioBuffer(std::move(out), target_rate);
}

double PeakDbfs(std::span<const float> samples) {
  if (samples.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "peak of an empty buffer");
  }
  float peak = 0.0f;
  for (float s : samples) peak = std::max(peak, std::abs(s));
  if (peak == 0.0f) return kSilenceDbfs;
  return 20.0 * std::log10(static_cast<double>(peak));
}

double PeakDbfs(const AudioBuffer& buf) { return PeakDbfs(buf.samples()); }

double RmsDbfs(const AudioBuffer& buf) {
  if (buf.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "rms of an empty buffer");
  }
  double sum = 0.0;
  for (float s : buf.samples()) sum += static_cast<double>(s) * s;
  if (sum == 0.0) return kSilenceDbfs;
  return 10.0 * std::log10(sum / static_cast<double>(buf.size()));
}

}  // namespace vpconv
