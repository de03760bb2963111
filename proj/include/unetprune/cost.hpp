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

// Parameter and multiply-accumulate accounting.
//
// Params: conv/transposed conv = out*in*k*k (+out with bias); norms = 2*c
// affine. Batch-norm running statistics (2*c) are tallied separately and kept
// out of the headline total.
//
// MACs: conv = out_h*out_w*out_c*in_c*k*k. A transposed conv is counted on its
// output grid by default (out_h*out_w*in_c*out_c*k*k), which is how the
// published Pix2Pix/Wav2Lip figures were tallied; kInputGrid counts
// in_h*in_w*in_c*out_c*k*k, the number of multiplies a scatter implementation
// actually performs. Norms, activations and concats cost 0.

#ifndef UNETPRUNE_COST_HPP_
#define UNETPRUNE_COST_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "unetprune/graph.hpp"

namespace unetprune {

enum class MacConvention { kOutputGrid, kInputGrid };

const char* MacConventionName(MacConvention c);

struct LayerCost {
  std::string name;
  std::int64_t params = 0;
  std::int64_t macs = 0;
  std::int64_t running_stats = 0;
};

struct CostReport {
  MacConvention convention = MacConvention::kOutputGrid;
  std::vector<LayerCost> per_layer;
  std::int64_t total_params = 0;
  std::int64_t total_macs = 0;
  std::int64_t total_running_stats = 0;
};

// Input shapes default to the graph's declared inputs; `input_shapes` (keyed by
// input node name) overrides them.
CostReport CountCost(const GeneratorGraph& graph,
                     MacConvention convention = MacConvention::kOutputGrid,
                     const std::map<std::string, TensorShape>& input_shapes = {});
CostReport CountParams(const GeneratorGraph& graph);
CostReport CountMacs(const GeneratorGraph& graph,
                     const std::map<std::string, TensorShape>& input_shapes = {},
                     MacConvention convention = MacConvention::kOutputGrid);

struct CostReduction {
  std::int64_t original_params = 0;
  std::int64_t pruned_params = 0;
  std::int64_t original_macs = 0;
  std::int64_t pruned_macs = 0;
  double params_ratio = 1.0;  // original / pruned
  double macs_ratio = 1.0;

  std::string ToText() const;
};

// Throws kDivisionByZero if a pruned total is 0.
CostReduction DiffReports(const CostReport& original, const CostReport& pruned);

// "18.7×": original/pruned rendered to one decimal.
std::string FormatRatio(double ratio);
// 54414019 -> "54.4M", 18140364800 -> "18.14G".
std::string FormatCount(std::int64_t count, int decimals);

std::string RenderCostText(const CostReport& report);
std::string RenderCostCsv(const CostReport& report);
std::string RenderCostJson(const CostReport& report);

}  // namespace unetprune

#endif  // UNETPRUNE_COST_HPP_
