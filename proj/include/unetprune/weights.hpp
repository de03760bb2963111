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

// Weight tensors and their canonical layouts.
//
//   conv kernel             [out_channels, in_channels, k, k]
//   transposed-conv kernel  [in_channels, out_channels, k, k]
//   bias, norm_*            [channels]
//
// The in-out layout stores every kernel as [in, out, k, k]; for plain convs
// that is the canonical layout with the first two axes swapped.

#ifndef UNETPRUNE_WEIGHTS_HPP_
#define UNETPRUNE_WEIGHTS_HPP_

#include <compare>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "unetprune/graph.hpp"

namespace unetprune {

enum class TensorRole { kKernel, kBias, kNormScale, kNormShift, kNormMean, kNormVar };

const char* TensorRoleName(TensorRole role);
TensorRole ParseTensorRole(std::string_view text);

struct WeightTensor {
  std::vector<std::int64_t> dims;
  std::vector<float> data;

  std::int64_t numel() const;
};

// Bitwise comparison (distinguishes -0.0f from 0.0f and NaN payloads).
bool BitEqual(const WeightTensor& a, const WeightTensor& b);

struct TensorKey {
  std::string node;
  TensorRole role = TensorRole::kKernel;
  auto operator<=>(const TensorKey&) const = default;
};

struct WeightStore {
  std::map<TensorKey, WeightTensor> entries;

  const WeightTensor& at(std::string_view node, TensorRole role) const;
  WeightTensor& at(std::string_view node, TensorRole role);
  const WeightTensor* find(std::string_view node, TensorRole role) const;
};

bool BitEqual(const WeightStore& a, const WeightStore& b);

struct TensorSpec {
  std::string node;
  TensorRole role;
  std::vector<std::int64_t> dims;
};

// Tensors the graph's parameterized nodes require, in topological order.
std::vector<TensorSpec> ExpectedTensors(const GeneratorGraph& graph);

// Throws kDimsMismatch naming the node on a missing, extra or misshaped tensor.
void CheckStoreMatchesGraph(const GeneratorGraph& graph, const WeightStore& store);

// Kernels and biases ~ N(0, 0.02), norm scale ~ N(1, 0.02), norm shift
// ~ N(0, 0.02), running mean 0, running var 1. Deterministic in `seed`.
WeightStore InitRandom(const GeneratorGraph& graph, std::uint64_t seed);

// Swaps the two leading axes of a rank-4 tensor. Applying it twice restores the
// original buffer.
WeightTensor SwapLeadingAxes(const WeightTensor& t);
WeightTensor KernelToInOutLayout(const WeightTensor& kernel, bool transposed_conv);
WeightTensor KernelFromInOutLayout(const WeightTensor& kernel, bool transposed_conv);

struct Model {
  GeneratorGraph graph;
  WeightStore store;
};

}  // namespace unetprune

#endif  // UNETPRUNE_WEIGHTS_HPP_
