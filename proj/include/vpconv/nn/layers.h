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

#ifndef VPCONV_NN_LAYERS_H_
#define VPCONV_NN_LAYERS_H_

#include <memory>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "vpconv/nn/tensor.h"

namespace vpconv::nn {

// A differentiable block. Forward is const so that trained weights can be
// shared by concurrent inference; Backward accumulates into parameter
// gradients and is single-writer.
class Module {
 public:
  virtual ~Module() = default;

  // `trace` may be null when no backward pass will follow.
  virtual Tensor Forward(const Tensor& x, Trace* trace) const = 0;
  // Returns d(loss)/d(input) and adds d(loss)/d(params) into Parameter::grad.
  virtual Tensor Backward(const Tensor& grad_out, const Trace& trace) = 0;
  // Processes one block of a causal stream. Concatenated block outputs equal
  // Forward on the concatenated input, bit for bit.
  virtual Tensor Stream(const Tensor& block, StreamState& state) const = 0;
  virtual void CollectParameters(std::vector<Parameter*>& out) = 0;
  virtual void CollectParameters(std::vector<const Parameter*>& out) const = 0;
};

// Causal 1-D convolution. Output frame t depends only on input samples up to
// (t + 1) * stride - 1; the input length must be a multiple of stride and the
// output length is length / stride.
class CausalConv1d final : public Module {
 public:
  CausalConv1d(std::string name, int in_channels, int out_channels, int kernel,
               int stride = 1, int dilation = 1);

  // Uniform init with bound gain * sqrt(3 / fan_in); bias zero.
  void Initialize(std::mt19937_64& rng, float gain = 1.0f);

  Tensor Forward(const Tensor& x, Trace* trace) const override;
  Tensor Backward(const Tensor& grad_out, const Trace& trace) override;
  Tensor Stream(const Tensor& block, StreamState& state) const override;
  void CollectParameters(std::vector<Parameter*>& out) override;
  void CollectParameters(std::vector<const Parameter*>& out) const override;

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return kernel_; }
  int stride() const { return stride_; }
  // Zero samples prepended to the input (history length when streaming).
  int left_padding() const { return padding_; }

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }
  const Parameter& weight() const { return weight_; }
  const Parameter& bias() const { return bias_; }

 private:
  Tensor Apply(const Tensor& padded, int out_length) const;

  int in_;
  int out_;
  int kernel_;
  int stride_;
  int dilation_;
  int padding_;
  Parameter weight_;  // [out][in][kernel]
  Parameter bias_;    // [out]
};

class LeakyRelu final : public Module {
 public:
  explicit LeakyRelu(float slope = 0.2f) : slope_(slope) {}
  Tensor Forward(const Tensor& x, Trace* trace) const override;
  Tensor Backward(const Tensor& grad_out, const Trace& trace) override;
  Tensor Stream(const Tensor& block, StreamState& state) const override;
  void CollectParameters(std::vector<Parameter*>&) override {}
  void CollectParameters(std::vector<const Parameter*>&) const override {}

 private:
  float slope_;
};

class Tanh final : public Module {
 public:
  Tensor Forward(const Tensor& x, Trace* trace) const override;
  Tensor Backward(const Tensor& grad_out, const Trace& trace) override;
  Tensor Stream(const Tensor& block, StreamState& state) const override;
  void CollectParameters(std::vector<Parameter*>&) override {}
  void CollectParameters(std::vector<const Parameter*>&) const override {}
};

// (B, C * factor, L) -> (B, C, L * factor): out[c][t * factor + j] =
// in[c * factor + j][t]. Causal sub-pixel upsampling.
class PixelShuffle final : public Module {
 public:
  explicit PixelShuffle(int factor) : factor_(factor) {}
  Tensor Forward(const Tensor& x, Trace* trace) const override;
  Tensor Backward(const Tensor& grad_out, const Trace& trace) override;
  Tensor Stream(const Tensor& block, StreamState& state) const override;
  void CollectParameters(std::vector<Parameter*>&) override {}
  void CollectParameters(std::vector<const Parameter*>&) const override {}

 private:
  int factor_;
};

class Sequential final : public Module {
 public:
  Sequential() = default;
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  template <typename M, typename... Args>
  M& Add(Args&&... args) {
    auto m = std::make_unique<M>(std::forward<Args>(args)...);
    M& ref = *m;
    layers_.push_back(std::move(m));
    return ref;
  }

  Tensor Forward(const Tensor& x, Trace* trace) const override;
  Tensor Backward(const Tensor& grad_out, const Trace& trace) override;
  Tensor Stream(const Tensor& block, StreamState& state) const override;
  void CollectParameters(std::vector<Parameter*>& out) override;
  void CollectParameters(std::vector<const Parameter*>& out) const override;

  std::size_t size() const { return layers_.size(); }
  Module& layer(std::size_t i) { return *layers_[i]; }

 private:
  std::vector<std::unique_ptr<Module>> layers_;
};

// y = x + body(x).
class Residual final : public Module {
 public:
  explicit Residual(Sequential body) : body_(std::move(body)) {}
  Tensor Forward(const Tensor& x, Trace* trace) const override;
  Tensor Backward(const Tensor& grad_out, const Trace& trace) override;
  Tensor Stream(const Tensor& block, StreamState& state) const override;
  void CollectParameters(std::vector<Parameter*>& out) override;
  void CollectParameters(std::vector<const Parameter*>& out) const override;

 private:
  Sequential body_;
};

// Non-overlapping mean pooling along time; the tail that does not fill a
// window is dropped. Not streamable.
Tensor AvgPool(const Tensor& x, int factor);
Tensor AvgPoolBackward(const Tensor& grad_out, int factor, int input_length);

}  // namespace vpconv::nn

#endif  // VPCONV_NN_LAYERS_H_
