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

#ifndef VPCONV_CONVERTER_H_
#define VPCONV_CONVERTER_H_

#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "vpconv/audio.h"
#include "vpconv/model.h"

namespace vpconv {

struct ConvertOptions {
  // Overrides the checkpoint's latent mode at inference time. Only the mode
  // the model was trained with is accepted.
  std::optional<LatentMode> mode;
  // Scale the output so its peak dBFS equals the input's.
  bool gain_match = true;
};

// Drum audio in, vocal-percussion audio out, at the input's sample rate. The
// input is resampled to the model rate, zero-padded to a whole number of
// latent frames, encoded to the posterior mean (gaussian) or quantized codes
// (vq), decoded, trimmed and clipped to [-1, 1]. The output has exactly as
// many samples as the input.
AudioBuffer ConvertAudio(const Model& model, const AudioBuffer& drums,
                         const ConvertOptions& options = {});
AudioBuffer ConvertFile(const AudioBuffer& drums,
                        const std::filesystem::path& checkpoint,
                        const ConvertOptions& options = {});

// Block-wise causal conversion at the model rate. Each Process call takes
// exactly hop_length() samples and returns as many. Output block n equals
// samples [n * r + latency, ...) of ConvertAudio with gain matching off.
class StreamConverter {
 public:
  explicit StreamConverter(std::shared_ptr<const Model> model);

  int block_size() const { return model_->config().hop_length(); }
  // Offset, in samples, between stream output and offline output.
  int latency() const { return 0; }

  AudioBuffer Process(const AudioBuffer& block);
  void Reset();

 private:
  std::shared_ptr<const Model> model_;
  nn::StreamState encoder_state_;
  Decoder::StreamState decoder_state_;
};

}  // namespace vpconv

#endif  // VPCONV_CONVERTER_H_
