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

#ifndef VPCONV_NN_TENSOR_H_
#define VPCONV_NN_TENSOR_H_

#include <cstddef>
#include <string>
#include <vector>

namespace vpconv::nn {

// Dense (batch, channels, length) float tensor, length fastest.
struct Tensor {
  int batch = 0;
  int channels = 0;
  int length = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(int b, int c, int l, float fill = 0.0f)
      : batch(b),
        channels(c),
        length(l),
        data(static_cast<std::size_t>(b) * c * l, fill) {}

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }

  float* row(int b, int c) {
    return data.data() + (static_cast<std::size_t>(b) * channels + c) * length;
  }
  const float* row(int b, int c) const {
    return data.data() + (static_cast<std::size_t>(b) * channels + c) * length;
  }
  float& at(int b, int c, int t) { return row(b, c)[t]; }
  float at(int b, int c, int t) const { return row(b, c)[t]; }

  bool SameShape(const Tensor& o) const {
    return batch == o.batch && channels == o.channels && length == o.length;
  }
  std::string ShapeString() const;
};

// Trainable weights with their accumulated gradient.
struct Parameter {
  std::string name;
  std::vector<int> shape;
  std::vector<float> value;
  std::vector<float> grad;

  Parameter() = default;
  Parameter(std::string n, std::vector<int> s);

  std::size_t size() const { return value.size(); }
  void ZeroGrad();
};

// Activations a module keeps from Forward for its Backward pass. Composite
// modules nest their children's traces.
struct Trace {
  std::vector<Tensor> saved;
  std::vector<Trace> children;
};

// Causal history carried between blocks in streaming inference.
struct StreamState {
  Tensor history;
  std::vector<StreamState> children;
};

// Concatenates along time; shapes must agree in batch and channels.
Tensor ConcatTime(const Tensor& a, const Tensor& b);
// Samples [begin, end) along time.
Tensor SliceTime(const Tensor& x, int begin, int end);
// Channels [begin, end).
Tensor SliceChannels(const Tensor& x, int begin, int end);

bool AllFinite(const Tensor& x);
bool AllFinite(const std::vector<float>& v);

}  // namespace vpconv::nn

#endif  // VPCONV_NN_TENSOR_H_
