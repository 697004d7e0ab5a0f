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

#include "vpconv/nn/layers.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>

#include "vpconv/error.h"

namespace vpconv::nn {

namespace {

[[noreturn]] void ShapeError(const std::string& what) {
  throw Error(ErrorCode::kInvalidArgument, what);
}

// Splits each of `rows` rows of length `len` into `stride` phases of length
// `phase_len`, zero-filled past the end: out[r][p][i] = in[r][i * stride + p].
std::vector<float> Deinterleave(const float* in, int rows, int len, int stride,
                                int phase_len) {
  std::vector<float> out(static_cast<std::size_t>(rows) * stride * phase_len,
                         0.0f);
  for (int r = 0; r < rows; ++r) {
    const float* src = in + static_cast<std::size_t>(r) * len;
    float* dst = out.data() + static_cast<std::size_t>(r) * stride * phase_len;
    for (int i = 0; i < len; ++i) {
      dst[(i % stride) * phase_len + i / stride] = src[i];
    }
  }
  return out;
}

typedef float V16 __attribute__((vector_size(64)));

inline V16 Load(const float* p) {
  V16 v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

inline void Store(float* p, V16 v) { std::memcpy(p, &v, sizeof(v)); }

inline float HorizontalSum(V16 v) {
  float sum = 0.0f;
  for (int i = 0; i < 16; ++i) sum += v[i];
  return sum;
}

// out[m][t] = init[m] + sum_j coef[m * coef_stride + j] * src[j][t] for MB
// rows m. Every element accumulates in increasing j regardless of which path
// (64-wide, 16-wide or scalar) computes it, so results do not depend on T.
template <int MB>
void MacRows(int J, const float* coef, int coef_stride, const float* const* src,
             const float* init, float* const* out, int T) {
  int t = 0;
  for (; t + 64 <= T; t += 64) {
    V16 acc[MB][4];
    for (int m = 0; m < MB; ++m) {
      for (int q = 0; q < 4; ++q) acc[m][q] = V16{} + init[m];
    }
    for (int j = 0; j < J; ++j) {
      const float* s = src[j] + t;
      const V16 s0 = Load(s), s1 = Load(s + 16), s2 = Load(s + 32), s3 = Load(s + 48);
      for (int m = 0; m < MB; ++m) {
        const float w = coef[m * coef_stride + j];
        acc[m][0] += w * s0;
        acc[m][1] += w * s1;
        acc[m][2] += w * s2;
        acc[m][3] += w * s3;
      }
    }
    for (int m = 0; m < MB; ++m) {
      for (int q = 0; q < 4; ++q) Store(out[m] + t + 16 * q, acc[m][q]);
    }
  }
  for (; t + 16 <= T; t += 16) {
    V16 acc[MB];
    for (int m = 0; m < MB; ++m) acc[m] = V16{} + init[m];
    for (int j = 0; j < J; ++j) {
      const V16 s0 = Load(src[j] + t);
      for (int m = 0; m < MB; ++m) acc[m] += coef[m * coef_stride + j] * s0;
    }
    for (int m = 0; m < MB; ++m) Store(out[m] + t, acc[m]);
  }
  for (; t < T; ++t) {
    for (int m = 0; m < MB; ++m) {
      float a = init[m];
      for (int j = 0; j < J; ++j) a += coef[m * coef_stride + j] * src[j][t];
      out[m][t] = a;
    }
  }
}

// Row-blocked driver for MacRows over M rows.
void Mac(int M, int J, const float* coef, int coef_stride, const float* const* src,
         const float* init, float* const* out, int T) {
  int m = 0;
  for (; m + 4 <= M; m += 4) {
    MacRows<4>(J, coef + static_cast<std::size_t>(m) * coef_stride, coef_stride, src,
               init + m, out + m, T);
  }
  for (; m < M; ++m) {
    MacRows<1>(J, coef + static_cast<std::size_t>(m) * coef_stride, coef_stride, src,
               init + m, out + m, T);
  }
}

// g[m * g_stride + j] += sum_t a[m][t] * b[j][t] for an MB x JB block.
template <int MB, int JB>
void GramBlock(int T, const float* const* a, const float* const* b, float* g,
               int g_stride) {
  V16 acc[MB][JB];
  for (int m = 0; m < MB; ++m) {
    for (int j = 0; j < JB; ++j) acc[m][j] = V16{};
  }
  int t = 0;
  for (; t + 16 <= T; t += 16) {
    V16 bv[JB];
    for (int j = 0; j < JB; ++j) bv[j] = Load(b[j] + t);
    for (int m = 0; m < MB; ++m) {
      const V16 av = Load(a[m] + t);
      for (int j = 0; j < JB; ++j) acc[m][j] += av * bv[j];
    }
  }
  for (int m = 0; m < MB; ++m) {
    for (int j = 0; j < JB; ++j) {
      float sum = HorizontalSum(acc[m][j]);
      for (int u = t; u < T; ++u) sum += a[m][u] * b[j][u];
      g[m * g_stride + j] += sum;
    }
  }
}

void Gram(int M, int J, int T, const float* const* a, const float* const* b, float* g,
          int g_stride) {
  int m = 0;
  for (; m + 4 <= M; m += 4) {
    int j = 0;
    for (; j + 4 <= J; j += 4) {
      GramBlock<4, 4>(T, a + m, b + j, g + static_cast<std::size_t>(m) * g_stride + j, g_stride);
    }
    for (; j < J; ++j) {
      GramBlock<4, 1>(T, a + m, b + j, g + static_cast<std::size_t>(m) * g_stride + j, g_stride);
    }
  }
  for (; m < M; ++m) {
    int j = 0;
    for (; j + 4 <= J; j += 4) {
      GramBlock<1, 4>(T, a + m, b + j, g + static_cast<std::size_t>(m) * g_stride + j, g_stride);
    }
    for (; j < J; ++j) {
      GramBlock<1, 1>(T, a + m, b + j, g + static_cast<std::size_t>(m) * g_stride + j, g_stride);
    }
  }
}

float Sum(const float* a, int n) {
  float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  int t = 0;
  for (; t + 8 <= n; t += 8) {
    for (int j = 0; j < 8; ++j) acc[j] += a[t + j];
  }
  float sum = 0.0f;
  for (int j = 0; j < 8; ++j) sum += acc[j];
  for (; t < n; ++t) sum += a[t];
  return sum;
}

}  // namespace

std::string Tensor::ShapeString() const {
  return "(" + std::to_string(batch) + ", " + std::to_string(channels) + ", " +
         std::to_string(length) + ")";
}

Parameter::Parameter(std::string n, std::vector<int> s)
    : name(std::move(n)), shape(std::move(s)) {
  std::size_t count = 1;
  for (int d : shape) count *= static_cast<std::size_t>(d);
  value.assign(count, 0.0f);
  grad.assign(count, 0.0f);
}

void Parameter::ZeroGrad() { std::fill(grad.begin(), grad.end(), 0.0f); }

Tensor ConcatTime(const Tensor& a, const Tensor& b) {
  if (a.batch != b.batch || a.channels != b.channels) {
    ShapeError("ConcatTime shape mismatch " + a.ShapeString() + " vs " +
               b.ShapeString());
  }
  Tensor out(a.batch, a.channels, a.length + b.length);
  for (int n = 0; n < a.batch; ++n) {
    for (int c = 0; c < a.channels; ++c) {
      std::copy_n(a.row(n, c), a.length, out.row(n, c));
      std::copy_n(b.row(n, c), b.length, out.row(n, c) + a.length);
    }
  }
  return out;
}

Tensor SliceTime(const Tensor& x, int begin, int end) {
  Tensor out(x.batch, x.channels, end - begin);
  for (int n = 0; n < x.batch; ++n) {
    for (int c = 0; c < x.channels; ++c) {
      std::copy_n(x.row(n, c) + begin, end - begin, out.row(n, c));
    }
  }
  return out;
}

Tensor SliceChannels(const Tensor& x, int begin, int end) {
  Tensor out(x.batch, end - begin, x.length);
  for (int n = 0; n < x.batch; ++n) {
    for (int c = begin; c < end; ++c) {
      std::copy_n(x.row(n, c), x.length, out.row(n, c - begin));
    }
  }
  return out;
}

bool AllFinite(const std::vector<float>& v) {
  return std::all_of(v.begin(), v.end(), [](float f) { return std::isfinite(f); });
}

bool AllFinite(const Tensor& x) { return AllFinite(x.data); }

CausalConv1d::CausalConv1d(std::string name, int in_channels, int out_channels,
                           int kernel, int stride, int dilation)
    : in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      dilation_(dilation),
      padding_((kernel - 1) * dilation - stride + 1),
      weight_(name + ".weight", {out_channels, in_channels, kernel}),
      bias_(name + ".bias", {out_channels}) {
  if (in_channels < 1 || out_channels < 1 || kernel < 1 || stride < 1 ||
      dilation < 1) {
    ShapeError(name + ": conv dimensions must be positive");
  }
  if (padding_ < 0) {
    ShapeError(name + ": receptive field shorter than the stride");
  }
}

void CausalConv1d::Initialize(std::mt19937_64& rng, float gain) {
  const float bound = gain * std::sqrt(3.0f / static_cast<float>(in_ * kernel_));
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (float& w : weight_.value) w = dist(rng);
  std::fill(bias_.value.begin(), bias_.value.end(), 0.0f);
}

Tensor CausalConv1d::Apply(const Tensor& padded, int out_length) const {
  const int lp = padded.length;
  const int phase_len = (lp + stride_ - 1) / stride_;
  const int taps = in_ * kernel_;
  Tensor y(padded.batch, out_, out_length);
  std::vector<float> phases;
  std::vector<const float*> src(static_cast<std::size_t>(taps));
  std::vector<float*> rows(static_cast<std::size_t>(out_));
  for (int n = 0; n < padded.batch; ++n) {
    const float* xp = padded.row(n, 0);
    int row_len = lp;
    if (stride_ > 1) {
      phases = Deinterleave(xp, in_, lp, stride_, phase_len);
      xp = phases.data();
      row_len = stride_ * phase_len;
    }
    for (int ic = 0; ic < in_; ++ic) {
      for (int k = 0; k < kernel_; ++k) {
        const int off = k * dilation_;
        src[static_cast<std::size_t>(ic) * kernel_ + k] =
            xp + static_cast<std::size_t>(ic) * row_len + (off % stride_) * phase_len +
            off / stride_;
      }
    }
    for (int oc = 0; oc < out_; ++oc) rows[oc] = y.row(n, oc);
    Mac(out_, taps, weight_.value.data(), taps, src.data(), bias_.value.data(),
        rows.data(), out_length);
  }
  return y;
}

Tensor CausalConv1d::Forward(const Tensor& x, Trace* trace) const {
  if (x.channels != in_) {
    ShapeError(weight_.name + ": expected " + std::to_string(in_) +
               " input channels, got " + x.ShapeString());
  }
  if (x.length % stride_ != 0) {
    ShapeError(weight_.name + ": length " + std::to_string(x.length) +
               " not divisible by stride " + std::to_string(stride_));
  }
  Tensor padded = padding_ > 0
                      ? ConcatTime(Tensor(x.batch, in_, padding_), x)
                      : x;
  Tensor y = Apply(padded, x.length / stride_);
  if (trace != nullptr) trace->saved = {std::move(padded)};
  return y;
}

Tensor CausalConv1d::Backward(const Tensor& grad_out, const Trace& trace) {
  const Tensor& padded = trace.saved.at(0);
  const int lp = padded.length;
  const int phase_len = (lp + stride_ - 1) / stride_;
  const int row_len = stride_ * phase_len;
  const int l_out = grad_out.length;
  const int taps = in_ * kernel_;

  // Taps grouped by input phase; for the input gradient each phase is an
  // ordinary correlation of the zero-padded output gradient.
  const int pad_left = ((kernel_ - 1) * dilation_) / stride_;
  const int gy_len = pad_left + phase_len;
  std::vector<std::vector<int>> phase_taps(static_cast<std::size_t>(stride_));
  for (int k = 0; k < kernel_; ++k) phase_taps[(k * dilation_) % stride_].push_back(k);
  std::vector<std::vector<float>> phase_coef(static_cast<std::size_t>(stride_));
  for (int ph = 0; ph < stride_; ++ph) {
    const auto& ks = phase_taps[ph];
    const int j_count = out_ * static_cast<int>(ks.size());
    auto& coef = phase_coef[ph];
    coef.resize(static_cast<std::size_t>(in_) * j_count);
    for (int ic = 0; ic < in_; ++ic) {
      for (int oc = 0; oc < out_; ++oc) {
        for (std::size_t u = 0; u < ks.size(); ++u) {
          coef[static_cast<std::size_t>(ic) * j_count + oc * ks.size() + u] =
              weight_.value[(static_cast<std::size_t>(oc) * in_ + ic) * kernel_ + ks[u]];
        }
      }
    }
  }
  const std::vector<float> zeros(static_cast<std::size_t>(in_), 0.0f);

  Tensor grad_in(padded.batch, in_, lp - padding_);
  std::vector<float> phases;
  std::vector<float> grad_phases(static_cast<std::size_t>(in_) * row_len);
  std::vector<float> gy_padded(static_cast<std::size_t>(out_) * gy_len);
  std::vector<const float*> gy_rows(static_cast<std::size_t>(out_));
  std::vector<const float*> src(static_cast<std::size_t>(taps));
  std::vector<const float*> gsrc;
  std::vector<float*> gdst(static_cast<std::size_t>(in_));
  for (int n = 0; n < padded.batch; ++n) {
    const float* xp = padded.row(n, 0);
    if (stride_ > 1) {
      phases = Deinterleave(xp, in_, lp, stride_, phase_len);
      xp = phases.data();
    }
    for (int oc = 0; oc < out_; ++oc) {
      gy_rows[oc] = grad_out.row(n, oc);
      bias_.grad[oc] += Sum(gy_rows[oc], l_out);
    }
    for (int ic = 0; ic < in_; ++ic) {
      for (int k = 0; k < kernel_; ++k) {
        const int off = k * dilation_;
        src[static_cast<std::size_t>(ic) * kernel_ + k] =
            xp + static_cast<std::size_t>(ic) * row_len + (off % stride_) * phase_len +
            off / stride_;
      }
    }
    Gram(out_, taps, l_out, gy_rows.data(), src.data(), weight_.grad.data(), taps);

    std::fill(gy_padded.begin(), gy_padded.end(), 0.0f);
    for (int oc = 0; oc < out_; ++oc) {
      std::copy_n(gy_rows[oc], l_out, gy_padded.data() + static_cast<std::size_t>(oc) * gy_len + pad_left);
    }
    for (int ph = 0; ph < stride_; ++ph) {
      const auto& ks = phase_taps[ph];
      gsrc.clear();
      for (int oc = 0; oc < out_; ++oc) {
        for (int k : ks) {
          gsrc.push_back(gy_padded.data() + static_cast<std::size_t>(oc) * gy_len + pad_left -
                         (k * dilation_) / stride_);
        }
      }
      for (int ic = 0; ic < in_; ++ic) {
        gdst[ic] = grad_phases.data() + static_cast<std::size_t>(ic) * row_len +
                   static_cast<std::size_t>(ph) * phase_len;
      }
      const int j_count = static_cast<int>(gsrc.size());
      if (j_count == 0) {
        for (int ic = 0; ic < in_; ++ic) std::fill_n(gdst[ic], phase_len, 0.0f);
        continue;
      }
      Mac(in_, j_count, phase_coef[ph].data(), j_count, gsrc.data(), zeros.data(),
          gdst.data(), phase_len);
    }
    for (int ic = 0; ic < in_; ++ic) {
      const float* gr = grad_phases.data() + static_cast<std::size_t>(ic) * row_len;
      float* out = grad_in.row(n, ic);
      for (int i = padding_; i < lp; ++i) {
        out[i - padding_] = gr[(i % stride_) * phase_len + i / stride_];
      }
    }
  }
  return grad_in;
}

Tensor CausalConv1d::Stream(const Tensor& block, StreamState& state) const {
  if (block.channels != in_ || block.length % stride_ != 0) {
    ShapeError(weight_.name + ": bad stream block " + block.ShapeString());
  }
  if (padding_ == 0) return Apply(block, block.length / stride_);
  if (state.history.batch != block.batch) {
    state.history = Tensor(block.batch, in_, padding_);
  }
  Tensor padded = ConcatTime(state.history, block);
  Tensor y = Apply(padded, block.length / stride_);
  state.history = SliceTime(padded, padded.length - padding_, padded.length);
  return y;
}

void CausalConv1d::CollectParameters(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

void CausalConv1d::CollectParameters(std::vector<const Parameter*>& out) const {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

Tensor LeakyRelu::Forward(const Tensor& x, Trace* trace) const {
  Tensor y = x;
  for (float& v : y.data) v = v >= 0.0f ? v : slope_ * v;
  if (trace != nullptr) trace->saved = {x};
  return y;
}

Tensor LeakyRelu::Backward(const Tensor& grad_out, const Trace& trace) {
  const Tensor& x = trace.saved.at(0);
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (x.data[i] < 0.0f) g.data[i] *= slope_;
  }
  return g;
}

Tensor LeakyRelu::Stream(const Tensor& block, StreamState&) const {
  return Forward(block, nullptr);
}

Tensor Tanh::Forward(const Tensor& x, Trace* trace) const {
  Tensor y = x;
  for (float& v : y.data) v = std::tanh(v);
  if (trace != nullptr) trace->saved = {y};
  return y;
}

Tensor Tanh::Backward(const Tensor& grad_out, const Trace& trace) {
  const Tensor& y = trace.saved.at(0);
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    g.data[i] *= 1.0f - y.data[i] * y.data[i];
  }
  return g;
}

Tensor Tanh::Stream(const Tensor& block, StreamState&) const {
  return Forward(block, nullptr);
}

Tensor PixelShuffle::Forward(const Tensor& x, Trace*) const {
  if (x.channels % factor_ != 0) {
    ShapeError("PixelShuffle: channels not divisible by factor");
  }
  const int c_out = x.channels / factor_;
  Tensor y(x.batch, c_out, x.length * factor_);
  for (int n = 0; n < x.batch; ++n) {
    for (int c = 0; c < c_out; ++c) {
      float* dst = y.row(n, c);
      for (int j = 0; j < factor_; ++j) {
        const float* src = x.row(n, c * factor_ + j);
        for (int t = 0; t < x.length; ++t) dst[t * factor_ + j] = src[t];
      }
    }
  }
  return y;
}

Tensor PixelShuffle::Backward(const Tensor& grad_out, const Trace&) {
  const int len = grad_out.length / factor_;
  Tensor g(grad_out.batch, grad_out.channels * factor_, len);
  for (int n = 0; n < grad_out.batch; ++n) {
    for (int c = 0; c < grad_out.channels; ++c) {
      const float* src = grad_out.row(n, c);
      for (int j = 0; j < factor_; ++j) {
        float* dst = g.row(n, c * factor_ + j);
        for (int t = 0; t < len; ++t) dst[t] = src[t * factor_ + j];
      }
    }
  }
  return g;
}

Tensor PixelShuffle::Stream(const Tensor& block, StreamState&) const {
  return Forward(block, nullptr);
}

Tensor Sequential::Forward(const Tensor& x, Trace* trace) const {
  if (trace != nullptr) trace->children.assign(layers_.size(), Trace{});
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i]->Forward(h, trace != nullptr ? &trace->children[i] : nullptr);
  }
  return h;
}

Tensor Sequential::Backward(const Tensor& grad_out, const Trace& trace) {
  Tensor g = grad_out;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    g = layers_[i]->Backward(g, trace.children.at(i));
  }
  return g;
}

Tensor Sequential::Stream(const Tensor& block, StreamState& state) const {
  if (state.children.size() != layers_.size()) {
    state.children.assign(layers_.size(), StreamState{});
  }
  Tensor h = block;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i]->Stream(h, state.children[i]);
  }
  return h;
}

void Sequential::CollectParameters(std::vector<Parameter*>& out) {
  for (auto& l : layers_) l->CollectParameters(out);
}

void Sequential::CollectParameters(std::vector<const Parameter*>& out) const {
  for (const auto& l : layers_) {
    static_cast<const Module&>(*l).CollectParameters(out);
  }
}

Tensor Residual::Forward(const Tensor& x, Trace* trace) const {
  if (trace != nullptr) trace->children.assign(1, Trace{});
  Tensor y = body_.Forward(x, trace != nullptr ? &trace->children[0] : nullptr);
  if (!y.SameShape(x)) ShapeError("Residual body changed the shape");
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += x.data[i];
  return y;
}

Tensor Residual::Backward(const Tensor& grad_out, const Trace& trace) {
  Tensor g = body_.Backward(grad_out, trace.children.at(0));
  for (std::size_t i = 0; i < g.size(); ++i) g.data[i] += grad_out.data[i];
  return g;
}

Tensor Residual::Stream(const Tensor& block, StreamState& state) const {
  if (state.children.size() != 1) state.children.assign(1, StreamState{});
  Tensor y = body_.Stream(block, state.children[0]);
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += block.data[i];
  return y;
}

void Residual::CollectParameters(std::vector<Parameter*>& out) {
  body_.CollectParameters(out);
}

void Residual::CollectParameters(std::vector<const Parameter*>& out) const {
  body_.CollectParameters(out);
}

Tensor AvgPool(const Tensor& x, int factor) {
  if (factor == 1) return x;
  const int len = x.length / factor;
  Tensor y(x.batch, x.channels, len);
  const float inv = 1.0f / static_cast<float>(factor);
  for (int n = 0; n < x.batch; ++n) {
    for (int c = 0; c < x.channels; ++c) {
      const float* src = x.row(n, c);
      float* dst = y.row(n, c);
      for (int t = 0; t < len; ++t) {
        float acc = 0.0f;
        for (int j = 0; j < factor; ++j) acc += src[t * factor + j];
        dst[t] = acc * inv;
      }
    }
  }
  return y;
}

Tensor AvgPoolBackward(const Tensor& grad_out, int factor, int input_length) {
  if (factor == 1) return grad_out;
  Tensor g(grad_out.batch, grad_out.channels, input_length);
  const float inv = 1.0f / static_cast<float>(factor);
  for (int n = 0; n < grad_out.batch; ++n) {
    for (int c = 0; c < grad_out.channels; ++c) {
      const float* src = grad_out.row(n, c);
      float* dst = g.row(n, c);
      for (int t = 0; t < grad_out.length; ++t) {
        for (int j = 0; j < factor; ++j) dst[t * factor + j] = src[t] * inv;
      }
    }
  }
  return g;
}

}  // namespace vpconv::nn
