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

#ifndef VPCONV_NN_ADAM_H_
#define VPCONV_NN_ADAM_H_

#include <cstdint>
#include <vector>

#include "vpconv/nn/tensor.h"

namespace vpconv::nn {

struct AdamConfig {
  float learning_rate = 1e-3f;
  float beta1 = 0.5f;
  float beta2 = 0.9f;
  float epsilon = 1e-8f;
};

// Adam over a fixed parameter list. Moments are stored per parameter, in the
// order the parameters were given.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<Parameter*> params, AdamConfig config);

  void Step();
  void ZeroGrad();

  const AdamConfig& config() const { return config_; }
  std::int64_t steps() const { return steps_; }
  const std::vector<Parameter*>& parameters() const { return params_; }

  // Checkpoint access.
  std::vector<std::vector<float>>& first_moments() { return m_; }
  std::vector<std::vector<float>>& second_moments() { return v_; }
  const std::vector<std::vector<float>>& first_moments() const { return m_; }
  const std::vector<std::vector<float>>& second_moments() const { return v_; }
  void set_steps(std::int64_t steps) { steps_ = steps; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig config_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  std::int64_t steps_ = 0;
};

double GradientNorm(const std::vector<Parameter*>& params);

// Rescales gradients so their global L2 norm is at most max_norm. Returns the
// norm before clipping.
double ClipGradientNorm(const std::vector<Parameter*>& params, double max_norm);

}  // namespace vpconv::nn

#endif  // VPCONV_NN_ADAM_H_
