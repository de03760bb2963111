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

// Fixtures and reference implementations shared by the unit tests. Nothing
// here calls into the code under test beyond its data types.

#ifndef UNETPRUNE_TESTS_TEST_UTIL_HPP_
#define UNETPRUNE_TESTS_TEST_UTIL_HPP_

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "unetprune/graph.hpp"
#include "unetprune/infer.hpp"
#include "unetprune/weights.hpp"

namespace unptest {

using unetprune::ConvSpec;
using unetprune::ConvTransposeSpec;
using unetprune::GeneratorGraph;
using unetprune::Tensor3;
using unetprune::TensorShape;
using unetprune::WeightTensor;

inline Tensor3 RandomTensor(TensorShape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  Tensor3 t(shape);
  for (float& v : t.data) v = dist(rng);
  return t;
}

inline WeightTensor RandomWeights(std::vector<std::int64_t> dims, std::uint64_t seed,
                                  float stddev = 1.0f) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, stddev);
  WeightTensor t;
  t.dims = std::move(dims);
  t.data.resize(static_cast<std::size_t>(t.numel()));
  for (float& v : t.data) v = dist(rng);
  return t;
}

// Direct definition: out[o][y][x] = b[o] + sum w[o][i][ky][kx] * in[i][y*s-p+ky][x*s-p+kx].
inline Tensor3 NaiveConv2d(const Tensor3& in, const WeightTensor& w, const WeightTensor* bias,
                           int sh, int sw, int p) {
  const int oc = static_cast<int>(w.dims[0]);
  const int ic = static_cast<int>(w.dims[1]);
  const int k = static_cast<int>(w.dims[2]);
  const int oh = (in.shape.height + 2 * p - k) / sh + 1;
  const int ow = (in.shape.width + 2 * p - k) / sw + 1;
  Tensor3 out(TensorShape{oc, oh, ow});
  for (int o = 0; o < oc; ++o) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        double acc = 0.0;
        for (int i = 0; i < ic; ++i) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int iy = y * sh - p + ky;
              const int ix = x * sw - p + kx;
              if (iy < 0 || ix < 0 || iy >= in.shape.height || ix >= in.shape.width) continue;
              acc += double{w.data[((static_cast<std::size_t>(o) * ic + i) * k + ky) * k + kx]} *
                     in.at(i, iy, ix);
            }
          }
        }
        if (bias != nullptr) acc += bias->data[o];
        out.at(o, y, x) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

// Scatter definition: every input pixel adds w[i][o] * v into the output
// window anchored at (y*s-p, x*s-p).
inline Tensor3 NaiveConvTranspose2d(const Tensor3& in, const WeightTensor& w,
                                    const WeightTensor* bias, int sh, int sw, int p, int op) {
  const int ic = static_cast<int>(w.dims[0]);
  const int oc = static_cast<int>(w.dims[1]);
  const int k = static_cast<int>(w.dims[2]);
  const int oh = (in.shape.height - 1) * sh - 2 * p + k + op;
  const int ow = (in.shape.width - 1) * sw - 2 * p + k + op;
  std::vector<double> acc(static_cast<std::size_t>(oc) * oh * ow, 0.0);
  for (int i = 0; i < ic; ++i) {
    for (int y = 0; y < in.shape.height; ++y) {
      for (int x = 0; x < in.shape.width; ++x) {
        const double v = in.at(i, y, x);
        for (int o = 0; o < oc; ++o) {
          for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
              const int oy = y * sh - p + ky;
              const int ox = x * sw - p + kx;
              if (oy < 0 || ox < 0 || oy >= oh || ox >= ow) continue;
              acc[(static_cast<std::size_t>(o) * oh + oy) * ow + ox] +=
                  v * w.data[((static_cast<std::size_t>(i) * oc + o) * k + ky) * k + kx];
            }
          }
        }
      }
    }
  }
  Tensor3 out(TensorShape{oc, oh, ow});
  for (int o = 0; o < oc; ++o) {
    for (std::size_t j = 0; j < static_cast<std::size_t>(oh) * ow; ++j) {
      double v = acc[static_cast<std::size_t>(o) * oh * ow + j];
      if (bias != nullptr) v += bias->data[o];
      out.data[static_cast<std::size_t>(o) * oh * ow + j] = static_cast<float>(v);
    }
  }
  return out;
}

inline double MaxAbsDiff(const Tensor3& a, const Tensor3& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    m = std::max(m, std::fabs(double{a.data[i]} - b.data[i]));
  }
  return m;
}

// Pix2Pix parameter count written out from the layer schedule: encoder
// 3→nF→2nF→4nF→8nF×5, decoder mirrored with doubled concat inputs, 4×4
// kernels, affine norms after C2..C7 and U8..U2, bias on C1 and U1 only.
inline std::int64_t Pix2PixParamsOracle(std::int64_t nf) {
  const std::int64_t enc[9] = {3, nf, 2 * nf, 4 * nf, 8 * nf, 8 * nf, 8 * nf, 8 * nf, 8 * nf};
  const std::int64_t dec[9] = {0, 3, nf, 2 * nf, 4 * nf, 8 * nf, 8 * nf, 8 * nf, 8 * nf};
  std::int64_t p = 0;
  for (int k = 1; k <= 8; ++k) {
    p += enc[k - 1] * enc[k] * 16;
    if (k >= 2 && k <= 7) p += 2 * enc[k];
  }
  p += nf;  // C1 bias
  for (int k = 8; k >= 1; --k) {
    const std::int64_t in = k == 8 ? enc[8] : 2 * dec[k + 1];
    p += in * dec[k] * 16;
    p += k >= 2 ? 2 * dec[k] : dec[k];  // norm affine, or U1 bias
  }
  return p;
}

// MACs on the output grid of every conv and transposed conv of a square
// Pix2Pix at `size`: Ck writes size/2^k, Uk writes size/2^(k-1).
inline std::int64_t Pix2PixMacsOracle(std::int64_t nf, std::int64_t size) {
  const std::int64_t enc[9] = {3, nf, 2 * nf, 4 * nf, 8 * nf, 8 * nf, 8 * nf, 8 * nf, 8 * nf};
  const std::int64_t dec[9] = {0, 3, nf, 2 * nf, 4 * nf, 8 * nf, 8 * nf, 8 * nf, 8 * nf};
  std::int64_t m = 0;
  for (int k = 1; k <= 8; ++k) {
    const std::int64_t s = size >> k;
    m += s * s * enc[k - 1] * enc[k] * 16;
  }
  for (int k = 8; k >= 1; --k) {
    const std::int64_t s = size >> (k - 1);
    const std::int64_t in = k == 8 ? enc[8] : 2 * dec[k + 1];
    m += s * s * in * dec[k] * 16;
  }
  return m;
}

// InitRandom rescaled so every conv and transposed conv keeps unit signal
// gain. The N(0, 0.02) init shrinks activations by about 10x per layer, which
// hides any error at the bottleneck from the output.
inline unetprune::WeightStore UnitGainStore(const GeneratorGraph& g, std::uint64_t seed) {
  unetprune::WeightStore s = unetprune::InitRandom(g, seed);
  for (const auto& [id, n] : g.nodes) {
    double fan_in = 0.0;
    if (const auto* c = std::get_if<ConvSpec>(&n.kind)) {
      fan_in = double{1.0} * c->in_channels * c->kernel * c->kernel;
    } else if (const auto* t = std::get_if<ConvTransposeSpec>(&n.kind)) {
      fan_in = double{1.0} * t->in_channels * t->kernel * t->kernel /
               (t->stride_h * t->stride_w);
    } else {
      continue;
    }
    const float scale = static_cast<float>(1.0 / (0.02 * std::sqrt(fan_in)));
    for (float& v : s.at(n.name, unetprune::TensorRole::kKernel).data) v *= scale;
  }
  return s;
}

// input(in_c, h, w) -> conv "A" (in_c -> n, k=1, no bias) -> output. The
// kernel rows are the filters, so a layer with n filters of in_c weights.
inline GeneratorGraph SingleConvGraph(int in_c, int n, int h = 2, int w = 2) {
  GeneratorGraph g;
  const int in = g.AddNode("input", unetprune::InputSpec{{in_c, h, w}}, {});
  g.input_ids = {in};
  const int a = g.AddNode("A", ConvSpec{in_c, n, 1, 1, 1, 0, false}, {in});
  g.output_id = g.AddNode("output", unetprune::OutputSpec{}, {a});
  return g;
}

// A random valid graph: one or two inputs, a chain of 1..8 ops drawn from
// conv, transposed conv, norm, activation and concat-with-an-earlier-tensor.
inline GeneratorGraph RandomGraph(std::uint64_t seed) {
  using namespace unetprune;
  std::mt19937_64 rng(seed);
  auto uniform = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  GeneratorGraph g;
  struct Live {
    int id;
    TensorShape shape;
  };
  std::vector<Live> history;
  const int h = uniform(3, 12);
  const int w = uniform(3, 12);
  const int n_inputs = uniform(1, 2);
  for (int i = 0; i < n_inputs; ++i) {
    const TensorShape s{uniform(1, 4), h, w};
    const int id = g.AddNode("in" + std::to_string(i), InputSpec{s}, {});
    g.input_ids.push_back(id);
    history.push_back({id, s});
  }
  Live cur = history.back();
  if (n_inputs == 2) {
    const Live a = history[0];
    const int cat = g.AddNode("merge", ConcatSpec{}, {a.id, cur.id});
    cur = {cat, {a.shape.channels + cur.shape.channels, h, w}};
    history.push_back(cur);
  }
  const int n_ops = uniform(1, 8);
  for (int op = 0; op < n_ops; ++op) {
    const std::string name = "n" + std::to_string(op);
    switch (uniform(0, 4)) {
      case 0: {
        const int k = uniform(0, 1) == 0 ? 1 : 3;
        const int s = cur.shape.height >= 4 && cur.shape.width >= 4 ? uniform(1, 2) : 1;
        const int p = k / 2;
        ConvSpec spec{cur.shape.channels, uniform(1, 6), k, s, s, p, uniform(0, 1) == 1};
        const int id = g.AddNode(name, spec, {cur.id});
        cur = {id,
               {spec.out_channels, ConvOutSize(cur.shape.height, k, s, p),
                ConvOutSize(cur.shape.width, k, s, p)}};
        break;
      }
      case 1: {
        if (cur.shape.height > 24 || cur.shape.width > 24) break;
        ConvTransposeSpec spec{cur.shape.channels, uniform(1, 6), 4, 2, 2, 1, 0,
                               uniform(0, 1) == 1};
        const int id = g.AddNode(name, spec, {cur.id});
        cur = {id, {spec.out_channels, 2 * cur.shape.height, 2 * cur.shape.width}};
        break;
      }
      case 2: {
        const NormKind kind = uniform(0, 1) == 0 ? NormKind::kBatch : NormKind::kInstance;
        cur.id = g.AddNode(name, NormSpec{kind, cur.shape.channels}, {cur.id});
        break;
      }
      case 3: {
        const ActKind kinds[] = {ActKind::kRelu, ActKind::kLeakyRelu, ActKind::kTanh,
                                 ActKind::kSigmoid};
        cur.id = g.AddNode(name, ActSpec{kinds[uniform(0, 3)], 0.2f}, {cur.id});
        break;
      }
      default: {
        for (const Live& h : history) {
          if (h.id != cur.id && h.shape.height == cur.shape.height &&
              h.shape.width == cur.shape.width) {
            const int id = g.AddNode(name, ConcatSpec{}, {h.id, cur.id});
            cur = {id, {h.shape.channels + cur.shape.channels, cur.shape.height,
                        cur.shape.width}};
            break;
          }
        }
        break;
      }
    }
    history.push_back(cur);
  }
  g.output_id = g.AddNode("output", OutputSpec{}, {cur.id});
  return g;
}

}  // namespace unptest

#endif  // UNETPRUNE_TESTS_TEST_UTIL_HPP_
