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

#include "vpconv/converter.h"

#include <algorithm>
#include <cmath>
#include <utility>
#include <vector>

#include "vpconv/error.h"
#include "vpconv/trainer.h"

namespace vpconv {

namespace {

void CheckMode(const Model& model, const ConvertOptions& options) {
  if (options.mode.has_value() && *options.mode != model.config().latent_mode) {
    throw Error(ErrorCode::kInvalidArgument,
                "checkpoint was trained in " + LatentModeName(model.config().latent_mode) +
                    " mode, not " + LatentModeName(*options.mode));
  }
}

}  // namespace

AudioBuffer ConvertAudio(const Model& model, const AudioBuffer& drums,
                         const ConvertOptions& options) {
  if (drums.empty()) throw Error(ErrorCode::kInvalidArgument, "input audio is empty");
  CheckMode(model, options);
  const int rate = model.config().sample_rate;
  const int hop = model.config().hop_length();
  const AudioBuffer input =
      drums.sample_rate() == rate ? drums : Resample(drums, rate);

  const std::size_t n = input.size();
  const std::size_t padded = (n + hop - 1) / hop * hop;
  nn::Tensor x(1, 1, static_cast<int>(std::max<std::size_t>(padded, hop)));
  std::copy(input.samples().begin(), input.samples().end(), x.data.begin());

  nn::Tensor y = model.Reconstruct(x);
  y.data.resize(n);
  AudioBuffer out = AudioBuffer(std::move(y.data), rate).Clipped();
  if (drums.sample_rate() != rate) {
    std::vector<float> back = Resample(out, drums.sample_rate()).Clipped().Release();
    back.resize(drums.size(), 0.0f);
    out = AudioBuffer(std::move(back), drums.sample_rate());
  }

  if (options.gain_match) {
    const double in_peak = PeakDbfs(drums);
    const double out_peak = PeakDbfs(out);
    if (std::isfinite(in_peak) && std::isfinite(out_peak)) {
      out = out.Scaled(static_cast<float>(DbToGain(in_peak - out_peak))).Clipped();
    }
  }
  return out;
}

AudioBuffer ConvertFile(const AudioBuffer& drums, const std::filesystem::path& checkpoint,
                        const ConvertOptions& options) {
  const Model model = LoadModel(checkpoint);
  return ConvertAudio(model, drums, options);
}

StreamConverter::StreamConverter(std::shared_ptr<const Model> model)
    : model_(std::move(model)) {
  if (model_ == nullptr) throw Error(ErrorCode::kInvalidArgument, "null model");
}

AudioBuffer StreamConverter::Process(const AudioBuffer& block) {
  if (static_cast<int>(block.size()) != block_size()) {
    throw Error(ErrorCode::kInvalidArgument,
                "stream block has " + std::to_string(block.size()) +
                    " samples, expected " + std::to_string(block_size()));
  }
  if (block.sample_rate() != model_->config().sample_rate) {
    throw Error(ErrorCode::kInvalidArgument, "stream block sample rate does not match the model");
  }
  const LatentCode code = model_->encoder().Stream(ToTensor(block), encoder_state_);
  nn::Tensor y = model_->decoder().Stream(model_->InferenceLatent(code), decoder_state_);
  return AudioBuffer(std::move(y.data), block.sample_rate()).Clipped();
}

void StreamConverter::Reset() {
  encoder_state_ = nn::StreamState{};
  decoder_state_ = Decoder::StreamState{};
}

}  // namespace vpconv
