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

// Dense forward inference for generator graphs.
//
// Kernels are direct loops. Every output element accumulates its products in
// double, in a fixed (in_channel, ky, kx) order, and is rounded to float once,
// so results are bit-reproducible and a zero weight never perturbs a sum.

#ifndef UNETPRUNE_INFER_HPP_
#define UNETPRUNE_INFER_HPP_

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "unetprune/weights.hpp"

namespace unetprune {

// Channel-major, then rows, then columns.
struct Tensor3 {
  TensorShape shape;
  std::vector<float> data;

  Tensor3() = default;
  explicit Tensor3(TensorShape s)
      : shape(s), data(static_cast<std::size_t>(s.size()), 0.0f) {}

  float& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * shape.height + y) * shape.width + x];
  }
  float at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * shape.height + y) * shape.width + x];
  }
};

inline constexpr double kNormEpsilon = 1e-5;

// kernel: [out, in, k, k]. bias may be null.
Tensor3 Conv2d(const Tensor3& input, const WeightTensor& kernel, const WeightTensor* bias,
               int stride_h, int stride_w, int padding);
// kernel: [in, out, k, k]. Scatter-accumulate; output size
// (h-1)*s - 2p + k + output_padding.
Tensor3 ConvTranspose2d(const Tensor3& input, const WeightTensor& kernel,
                        const WeightTensor* bias, int stride_h, int stride_w,
                        int padding, int output_padding);

struct NormParams {
  std::span<const float> scale;
  std::span<const float> shift;
  std::span<const float> mean;  // batch norm only
  std::span<const float> var;   // batch norm only
};

// Batch norm uses the stored running statistics; instance norm computes
// per-channel statistics from the input itself.
Tensor3 NormForward(const Tensor3& input, NormKind kind, const NormParams& params);
Tensor3 Activate(const Tensor3& input, const ActSpec& act);
Tensor3 ConcatChannels(const std::vector<const Tensor3*>& inputs);

struct RunOptions {
  bool keep_intermediates = false;
};

struct RunResult {
  Tensor3 output;
  // Populated when keep_intermediates is set; keyed by node name.
  std::map<std::string, Tensor3> nodes;
};

// Inputs are keyed by input node name and must match the declared shapes.
RunResult Run(const GeneratorGraph& graph, const WeightStore& store,
              const std::map<std::string, Tensor3>& inputs, const RunOptions& options = {});

// Fixture files: one ASCII line "c h w\n" followed by c*h*w little-endian f32.
Tensor3 ReadTensorFile(const std::filesystem::path& path);
void WriteTensorFile(const std::filesystem::path& path, const Tensor3& t);

}  // namespace unetprune

#endif  // UNETPRUNE_INFER_HPP_
