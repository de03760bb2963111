// Copyright 2026 The unetprune Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "unetprune/infer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <sstream>

#include "unetprune/container.hpp"
#include "unetprune/error.hpp"

namespace unetprune {

namespace {

void CheckKernel(const WeightTensor& kernel, const char* what) {
  if (kernel.dims.size() != 4 || kernel.dims[2] != kernel.dims[3]) {
    throw Error(ErrorCode::kDimsMismatch, std::string(what) + " kernel must be [a, b, k, k]");
  }
}

}  // namespace

namespace {

// acc[x] += sum over taps i, in order, of w[i] * src[i][x], for x in [0, n).
// Blocks of 8 columns stay in registers across all taps.
void AccumulateTaps(double* acc, int n, const double* w, const double* const* src, int taps) {
  constexpr int kBlock = 8;
  int x = 0;
  for (; x + kBlock <= n; x += kBlock) {
    double t[kBlock];
    for (int j = 0; j < kBlock; ++j) t[j] = acc[x + j];
    for (int i = 0; i < taps; ++i) {
      const double wv = w[i];
      const double* s = src[i] + x;
      for (int j = 0; j < kBlock; ++j) t[j] += wv * s[j];
    }
    for (int j = 0; j < kBlock; ++j) acc[x + j] = t[j];
  }
  for (; x < n; ++x) {
    double t = acc[x];
    for (int i = 0; i < taps; ++i) t += w[i] * src[i][x];
    acc[x] = t;
  }
}

void StoreWithBias(const std::vector<double>& acc, double bias, float* dst) {
  for (std::size_t i = 0; i < acc.size(); ++i) dst[i] = static_cast<float>(acc[i] + bias);
}

// Rows narrower than this go through the channel-vectorized path.
constexpr int kNarrowRow = 16;
constexpr int kPixelTile = 8;

// Narrow maps: out[:, pixel] accumulates over (ic, ky, kx) in order with the
// inner loop running across output channels. `wt` is the kernel reordered to
// [ic][ky][kx][oc]; `source(pixel, ic, ky, kx)` returns the input element or
// null when the tap does not contribute.
template <typename Source>
void ChannelVectorized(int out_c, int in_c, int k, int pixels, const std::vector<double>& wt,
                       const WeightTensor* bias, Source source, float* out) {
  std::vector<double> acc(static_cast<std::size_t>(kPixelTile) * out_c);
  for (int p0 = 0; p0 < pixels; p0 += kPixelTile) {
    const int tile = std::min(kPixelTile, pixels - p0);
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int ic = 0; ic < in_c; ++ic) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const double* __restrict wrow =
              wt.data() + ((static_cast<std::size_t>(ic) * k + ky) * k + kx) * out_c;
          for (int t = 0; t < tile; ++t) {
            const float* x = source(p0 + t, ic, ky, kx);
            if (x == nullptr) continue;
            const double xv = *x;
            double* __restrict a = acc.data() + static_cast<std::size_t>(t) * out_c;
            for (int oc = 0; oc < out_c; ++oc) a[oc] += xv * wrow[oc];
          }
        }
      }
    }
    for (int oc = 0; oc < out_c; ++oc) {
      const double b = bias ? static_cast<double>(bias->data[oc]) : 0.0;
      for (int t = 0; t < tile; ++t) {
        out[static_cast<std::size_t>(oc) * pixels + p0 + t] =
            static_cast<float>(acc[static_cast<std::size_t>(t) * out_c + oc] + b);
      }
    }
  }
}

// Kernel reordered to [ic][ky][kx][oc]. Conv kernels are stored [oc][ic],
// transposed-conv kernels [ic][oc].
std::vector<double> ChannelsLast(const WeightTensor& kernel, bool out_first) {
  const int d0 = static_cast<int>(kernel.dims[0]);
  const int d1 = static_cast<int>(kernel.dims[1]);
  const int kk = static_cast<int>(kernel.dims[2] * kernel.dims[3]);
  const int out_c = out_first ? d0 : d1;
  std::vector<double> wt(kernel.data.size());
  for (int a = 0; a < d0; ++a) {
    for (int b = 0; b < d1; ++b) {
      const int oc = out_first ? a : b;
      const int ic = out_first ? b : a;
      for (int t = 0; t < kk; ++t) {
        wt[(static_cast<std::size_t>(ic) * kk + t) * out_c + oc] =
            kernel.data[(static_cast<std::size_t>(a) * d1 + b) * kk + t];
      }
    }
  }
  return wt;
}

}  // namespace

// The input is zero-padded, widened to double and split by column phase, so
// every tap of every output row reads one contiguous run. Padding taps add
// exact zeros.
Tensor3 Conv2d(const Tensor3& input, const WeightTensor& kernel, const WeightTensor* bias,
               int stride_h, int stride_w, int padding) {
  CheckKernel(kernel, "conv");
  const int out_c = static_cast<int>(kernel.dims[0]);
  const int in_c = static_cast<int>(kernel.dims[1]);
  const int k = static_cast<int>(kernel.dims[2]);
  if (in_c != input.shape.channels) {
    throw Error(ErrorCode::kChannelMismatch,
                "conv kernel expects " + std::to_string(in_c) + " channels, input has " +
                    std::to_string(input.shape.channels));
  }
  const int h = input.shape.height, w = input.shape.width;
  const int oh = ConvOutSize(h, k, stride_h, padding);
  const int ow = ConvOutSize(w, k, stride_w, padding);
  if (oh < 1 || ow < 1) {
    throw Error(ErrorCode::kValidation, "conv output would be empty");
  }
  if (ow < kNarrowRow && out_c >= kPixelTile) {
    Tensor3 out(TensorShape{out_c, oh, ow});
    const float* base = input.data.data();
    ChannelVectorized(
        out_c, in_c, k, oh * ow, ChannelsLast(kernel, true), bias,
        [&](int pixel, int ic, int ky, int kx) -> const float* {
          const int iy = (pixel / ow) * stride_h + ky - padding;
          const int ix = (pixel % ow) * stride_w + kx - padding;
          if (iy < 0 || iy >= h || ix < 0 || ix >= w) return nullptr;
          return base + (static_cast<std::size_t>(ic) * h + iy) * w + ix;
        },
        out.data.data());
    return out;
  }
  const int hp = h + 2 * padding;
  const int wp = w + 2 * padding;
  const int pw = (wp + stride_w - 1) / stride_w;
  const std::size_t phase_size = static_cast<std::size_t>(hp) * pw;
  const std::size_t plane_size = phase_size * stride_w;
  std::vector<double> phased(plane_size * in_c, 0.0);
  for (int ic = 0; ic < in_c; ++ic) {
    for (int y = 0; y < h; ++y) {
      const float* src = input.data.data() + (static_cast<std::size_t>(ic) * h + y) * w;
      const std::size_t row = static_cast<std::size_t>(y + padding) * pw;
      for (int x = 0; x < w; ++x) {
        const int c = x + padding;
        phased[ic * plane_size + (c % stride_w) * phase_size + row + c / stride_w] = src[x];
      }
    }
  }
  const std::vector<double> weights(kernel.data.begin(), kernel.data.end());
  const int taps = k * k;
  std::vector<const double*> src(taps);

  Tensor3 out(TensorShape{out_c, oh, ow});
  std::vector<double> acc(static_cast<std::size_t>(oh) * ow);
  for (int oc = 0; oc < out_c; ++oc) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (int ic = 0; ic < in_c; ++ic) {
      const double* plane = phased.data() + ic * plane_size;
      const double* wk = weights.data() + (static_cast<std::size_t>(oc) * in_c + ic) * taps;
      for (int oy = 0; oy < oh; ++oy) {
        for (int ky = 0; ky < k; ++ky) {
          const std::size_t row = static_cast<std::size_t>(oy * stride_h + ky) * pw;
          for (int kx = 0; kx < k; ++kx) {
            src[ky * k + kx] = plane + (kx % stride_w) * phase_size + row + kx / stride_w;
          }
        }
        AccumulateTaps(acc.data() + static_cast<std::size_t>(oy) * ow, ow, wk, src.data(), taps);
      }
    }
    StoreWithBias(acc, bias ? bias->data[oc] : 0.0,
                  out.data.data() + static_cast<std::size_t>(oc) * oh * ow);
  }
  return out;
}

// Gather form of the scatter definition. Output pixel (oy, ox) = (qy*s + py,
// qx*s + px) receives tap (ky, kx) from input (qy + dy, qx + dx) whenever
// py + p - ky = dy*s; taps are visited in ascending (ky, kx), the same order
// the scatter would add them.
Tensor3 ConvTranspose2d(const Tensor3& input, const WeightTensor& kernel,
                        const WeightTensor* bias, int stride_h, int stride_w,
                        int padding, int output_padding) {
  CheckKernel(kernel, "transposed conv");
  const int in_c = static_cast<int>(kernel.dims[0]);
  const int out_c = static_cast<int>(kernel.dims[1]);
  const int k = static_cast<int>(kernel.dims[2]);
  if (in_c != input.shape.channels) {
    throw Error(ErrorCode::kChannelMismatch,
                "transposed conv kernel expects " + std::to_string(in_c) +
                    " channels, input has " + std::to_string(input.shape.channels));
  }
  const int h = input.shape.height, w = input.shape.width;
  const int oh = ConvTransposeOutSize(h, k, stride_h, padding, output_padding);
  const int ow = ConvTransposeOutSize(w, k, stride_w, padding, output_padding);
  if (oh < 1 || ow < 1) {
    throw Error(ErrorCode::kValidation, "transposed conv output would be empty");
  }
  if ((ow + stride_w - 1) / stride_w < kNarrowRow && out_c >= kPixelTile) {
    Tensor3 out(TensorShape{out_c, oh, ow});
    const float* base = input.data.data();
    ChannelVectorized(
        out_c, in_c, k, oh * ow, ChannelsLast(kernel, false), bias,
        [&](int pixel, int ic, int ky, int kx) -> const float* {
          const int ny = pixel / ow + padding - ky;
          const int nx = pixel % ow + padding - kx;
          if (ny < 0 || nx < 0 || ny % stride_h || nx % stride_w) return nullptr;
          const int iy = ny / stride_h, ix = nx / stride_w;
          if (iy >= h || ix >= w) return nullptr;
          return base + (static_cast<std::size_t>(ic) * h + iy) * w + ix;
        },
        out.data.data());
    return out;
  }
  // A margin of k + p on every side covers every tap offset.
  const int margin = k + padding;
  const int hp = h + 2 * margin;
  const int wp = w + 2 * margin;
  const std::size_t plane_size = static_cast<std::size_t>(hp) * wp;
  std::vector<double> padded(plane_size * in_c, 0.0);
  for (int ic = 0; ic < in_c; ++ic) {
    for (int y = 0; y < h; ++y) {
      const float* src = input.data.data() + (static_cast<std::size_t>(ic) * h + y) * w;
      double* dst = padded.data() + ic * plane_size + static_cast<std::size_t>(y + margin) * wp + margin;
      for (int x = 0; x < w; ++x) dst[x] = src[x];
    }
  }
  const std::vector<double> weights(kernel.data.begin(), kernel.data.end());

  struct Tap {
    int k;
    int d;
  };
  auto taps_for = [&](int phase, int stride) {
    std::vector<Tap> t;
    for (int kk = 0; kk < k; ++kk) {
      const int num = phase + padding - kk;
      if (((num % stride) + stride) % stride == 0) t.push_back({kk, num >= 0 ? num / stride : -((-num) / stride)});
    }
    return t;
  };

  Tensor3 out(TensorShape{out_c, oh, ow});
  std::vector<double> acc;
  std::vector<double> wtap;
  std::vector<const double*> src;
  for (int py = 0; py < std::min(stride_h, oh); ++py) {
    const std::vector<Tap> ty = taps_for(py, stride_h);
    const int nqy = (oh - py + stride_h - 1) / stride_h;
    for (int px = 0; px < std::min(stride_w, ow); ++px) {
      const std::vector<Tap> tx = taps_for(px, stride_w);
      const int nqx = (ow - px + stride_w - 1) / stride_w;
      const int taps = static_cast<int>(ty.size() * tx.size());
      acc.assign(static_cast<std::size_t>(nqy) * nqx, 0.0);
      wtap.resize(taps);
      src.resize(taps);
      for (int oc = 0; oc < out_c; ++oc) {
        std::fill(acc.begin(), acc.end(), 0.0);
        if (taps > 0) {
          for (int ic = 0; ic < in_c; ++ic) {
            const double* plane = padded.data() + ic * plane_size;
            const double* wk = weights.data() + (static_cast<std::size_t>(ic) * out_c + oc) * k * k;
            int t = 0;
            for (const Tap& a : ty) {
              for (const Tap& b : tx) wtap[t++] = wk[a.k * k + b.k];
            }
            for (int qy = 0; qy < nqy; ++qy) {
              t = 0;
              for (const Tap& a : ty) {
                const double* row = plane + static_cast<std::size_t>(qy + a.d + margin) * wp + margin;
                for (const Tap& b : tx) src[t++] = row + b.d;
              }
              AccumulateTaps(acc.data() + static_cast<std::size_t>(qy) * nqx, nqx, wtap.data(),
                             src.data(), taps);
            }
          }
        }
        const double bv = bias ? static_cast<double>(bias->data[oc]) : 0.0;
        float* dst = out.data.data() + static_cast<std::size_t>(oc) * oh * ow;
        for (int qy = 0; qy < nqy; ++qy) {
          float* drow = dst + static_cast<std::size_t>(qy * stride_h + py) * ow + px;
          const double* arow = acc.data() + static_cast<std::size_t>(qy) * nqx;
          for (int qx = 0; qx < nqx; ++qx) drow[qx * stride_w] = static_cast<float>(arow[qx] + bv);
        }
      }
    }
  }
  return out;
}

Tensor3 NormForward(const Tensor3& input, NormKind kind, const NormParams& p) {
  if (kind == NormKind::kNone) return input;
  const int c = input.shape.channels;
  const std::size_t plane = static_cast<std::size_t>(input.shape.height) * input.shape.width;
  auto check = [&](std::span<const float> s) {
    if (static_cast<int>(s.size()) != c) {
      throw Error(ErrorCode::kChannelMismatch, "norm parameter length differs from channels");
    }
  };
  check(p.scale);
  check(p.shift);
  if (kind == NormKind::kBatch) {
    check(p.mean);
    check(p.var);
  }
  Tensor3 out(input.shape);
  for (int ch = 0; ch < c; ++ch) {
    const float* src = input.data.data() + ch * plane;
    float* dst = out.data.data() + ch * plane;
    double mean, var;
    if (kind == NormKind::kBatch) {
      mean = p.mean[ch];
      var = p.var[ch];
    } else {
      double sum = 0.0;
      for (std::size_t i = 0; i < plane; ++i) sum += src[i];
      mean = sum / static_cast<double>(plane);
      double sq = 0.0;
      for (std::size_t i = 0; i < plane; ++i) sq += (src[i] - mean) * (src[i] - mean);
      var = sq / static_cast<double>(plane);
    }
    const double inv = 1.0 / std::sqrt(var + kNormEpsilon);
    const double scale = p.scale[ch];
    const double shift = p.shift[ch];
    for (std::size_t i = 0; i < plane; ++i) {
      dst[i] = static_cast<float>((src[i] - mean) * inv * scale + shift);
    }
  }
  return out;
}

Tensor3 Activate(const Tensor3& input, const ActSpec& act) {
  Tensor3 out(input.shape);
  const std::size_t n = input.data.size();
  const float* src = input.data.data();
  float* dst = out.data.data();
  switch (act.kind) {
    case ActKind::kRelu:
      for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] > 0.0f ? src[i] : 0.0f;
      break;
    case ActKind::kLeakyRelu:
      for (std::size_t i = 0; i < n; ++i) dst[i] = src[i] > 0.0f ? src[i] : act.slope * src[i];
      break;
    case ActKind::kTanh:
      for (std::size_t i = 0; i < n; ++i) dst[i] = std::tanh(src[i]);
      break;
    case ActKind::kSigmoid:
      for (std::size_t i = 0; i < n; ++i) {
        dst[i] = static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(src[i]))));
      }
      break;
  }
  return out;
}

Tensor3 ConcatChannels(const std::vector<const Tensor3*>& inputs) {
  if (inputs.empty()) throw Error(ErrorCode::kInternal, "concat of nothing");
  TensorShape shape = inputs[0]->shape;
  shape.channels = 0;
  for (const Tensor3* t : inputs) {
    if (t->shape.height != shape.height || t->shape.width != shape.width) {
      throw Error(ErrorCode::kChannelMismatch, "concat inputs differ spatially");
    }
    shape.channels += t->shape.channels;
  }
  Tensor3 out;
  out.shape = shape;
  out.data.reserve(static_cast<std::size_t>(shape.size()));
  for (const Tensor3* t : inputs) out.data.insert(out.data.end(), t->data.begin(), t->data.end());
  return out;
}

namespace {

std::span<const float> Span(const WeightStore& store, const std::string& node, TensorRole role) {
  const auto& d = store.at(node, role).data;
  return {d.data(), d.size()};
}

}  // namespace

RunResult Run(const GeneratorGraph& graph, const WeightStore& store,
              const std::map<std::string, Tensor3>& inputs, const RunOptions& options) {
  const std::vector<int> order = graph.TopologicalOrder();
  std::map<int, int> remaining_uses;
  for (const auto& [id, n] : graph.nodes) {
    for (int in : n.inputs) remaining_uses[in]++;
  }
  std::map<int, Tensor3> live;
  RunResult result;

  for (int id : order) {
    const LayerNode& n = graph.node(id);
    auto arg = [&](std::size_t i) -> const Tensor3& {
      auto it = live.find(n.inputs[i]);
      if (it == live.end()) throw Error(ErrorCode::kInternal, "missing input for " + n.name);
      return it->second;
    };
    Tensor3 value = std::visit(
        [&](const auto& spec) -> Tensor3 {
          using T = std::decay_t<decltype(spec)>;
          if constexpr (std::is_same_v<T, InputSpec>) {
            auto it = inputs.find(n.name);
            if (it == inputs.end()) {
              throw Error(ErrorCode::kConfig, "no tensor supplied for input '" + n.name + "'");
            }
            if (!(it->second.shape == spec.shape)) {
              throw Error(ErrorCode::kConfig, "input '" + n.name + "' expects shape " +
                                                  spec.shape.ToString() + ", got " +
                                                  it->second.shape.ToString());
            }
            return it->second;
          } else if constexpr (std::is_same_v<T, ConvSpec>) {
            return Conv2d(arg(0), store.at(n.name, TensorRole::kKernel),
                          spec.has_bias ? &store.at(n.name, TensorRole::kBias) : nullptr,
                          spec.stride_h, spec.stride_w, spec.padding);
          } else if constexpr (std::is_same_v<T, ConvTransposeSpec>) {
            return ConvTranspose2d(arg(0), store.at(n.name, TensorRole::kKernel),
                                   spec.has_bias ? &store.at(n.name, TensorRole::kBias) : nullptr,
                                   spec.stride_h, spec.stride_w, spec.padding,
                                   spec.output_padding);
          } else if constexpr (std::is_same_v<T, NormSpec>) {
            if (spec.kind == NormKind::kNone) return arg(0);
            NormParams p;
            p.scale = Span(store, n.name, TensorRole::kNormScale);
            p.shift = Span(store, n.name, TensorRole::kNormShift);
            if (spec.kind == NormKind::kBatch) {
              p.mean = Span(store, n.name, TensorRole::kNormMean);
              p.var = Span(store, n.name, TensorRole::kNormVar);
            }
            return NormForward(arg(0), spec.kind, p);
          } else if constexpr (std::is_same_v<T, ActSpec>) {
            return Activate(arg(0), spec);
          } else if constexpr (std::is_same_v<T, ConcatSpec>) {
            std::vector<const Tensor3*> parts;
            for (std::size_t i = 0; i < n.inputs.size(); ++i) parts.push_back(&arg(i));
            return ConcatChannels(parts);
          } else {
            return arg(0);
          }
        },
        n.kind);

    for (int in : n.inputs) {
      if (--remaining_uses[in] == 0 && !options.keep_intermediates) live.erase(in);
    }
    if (options.keep_intermediates) result.nodes[n.name] = value;
    if (id == graph.output_id) {
      result.output = std::move(value);
    } else {
      live[id] = std::move(value);
    }
  }
  return result;
}

Tensor3 ReadTensorFile(const std::filesystem::path& path) {
  const std::string bytes = ReadFileBytes(path);
  const auto eol = bytes.find('\n');
  if (eol == std::string::npos) {
    throw Error(ErrorCode::kFormat, "tensor file '" + path.string() + "' has no shape line");
  }
  std::istringstream header(bytes.substr(0, eol));
  TensorShape s;
  if (!(header >> s.channels >> s.height >> s.width) || s.channels < 1 || s.height < 1 ||
      s.width < 1) {
    throw Error(ErrorCode::kFormat, "tensor file '" + path.string() + "' has a bad shape line");
  }
  Tensor3 t(s);
  const std::size_t need = t.data.size() * sizeof(float);
  if (bytes.size() - eol - 1 != need) {
    throw Error(ErrorCode::kTruncated, "tensor file '" + path.string() + "' payload size mismatch");
  }
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) {
      bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[eol + 1 + i * 4 + b]))
              << (8 * b);
    }
    t.data[i] = std::bit_cast<float>(bits);
  }
  return t;
}

void WriteTensorFile(const std::filesystem::path& path, const Tensor3& t) {
  std::string out = std::to_string(t.shape.channels) + " " + std::to_string(t.shape.height) +
                    " " + std::to_string(t.shape.width) + "\n";
  for (float v : t.data) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
  }
  WriteFileBytes(path, out);
}

}  // namespace unetprune
