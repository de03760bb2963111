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

// Sensitivity sweep, masked-equivalence verification and latency benchmark.
//
// The sweep's divergence is a structural proxy: the mean over probe inputs of
// ||y - y'||_2 / numel(y) between the original and the pruned network's
// outputs. It says nothing about generation quality of a trained model.

#ifndef UNETPRUNE_HARNESS_HPP_
#define UNETPRUNE_HARNESS_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "unetprune/cost.hpp"
#include "unetprune/infer.hpp"
#include "unetprune/prune.hpp"

namespace unetprune {

using InputSet = std::map<std::string, Tensor3>;

inline constexpr int kDefaultProbes = 8;

// `count` sets of standard-normal inputs matching the graph's input nodes.
std::vector<InputSet> MakeProbes(const GeneratorGraph& graph, int count, std::uint64_t seed);

// ||a - b||_2 / numel. Throws kDimsMismatch on a shape mismatch.
double Divergence(const Tensor3& a, const Tensor3& b);

struct SensitivityRow {
  std::string layer;
  double ratio = 0.0;
  std::string criterion;
  std::int64_t params = 0;
  std::int64_t macs = 0;
  double divergence = 0.0;
};

struct SensitivityReport {
  std::vector<SensitivityRow> rows;
};

struct SweepOptions {
  std::vector<double> ratios = {0.25, 0.5, 0.75};
  Criterion criterion = Criterion::kL2;
  MacConvention convention = MacConvention::kOutputGrid;
};

// One row per (conv layer, ratio), layers in topological order, ratios
// ascending. The output layer keeps every filter, so its rows are empty-plan
// cells with the original cost and zero divergence.
SensitivityReport SensitivitySweep(const GeneratorGraph& graph, const WeightStore& store,
                                   const std::vector<InputSet>& probes,
                                   const SweepOptions& options = {});

// `layer,ratio,criterion,params,macs,divergence`; floats with 6 significant
// digits.
std::string RenderSensitivityCsv(const SensitivityReport& report);

// The reference side of the equivalence check: the original store with every
// conv kernel in-slice that reads a removed channel set to zero. Removed
// channels are the plan's filters plus every output channel of the decoder of
// a removed pair. Channel provenance is traced here independently of the
// prune transform.
WeightStore MaskedStore(const GeneratorGraph& graph, const WeightStore& store,
                        const PruningPlan& plan);

struct NodeSum {
  std::string node;
  double pruned = 0.0;
  double masked = 0.0;  // over the surviving channels only
};

struct VerifyReport {
  bool pass = true;
  double max_deviation = 0.0;
  double tolerance = 0.0;
  int probes = 0;
  int first_failing_probe = -1;
  // Populated for the first failing probe, in topological order.
  std::vector<NodeSum> node_sums;

  std::string ToText() const;
};

inline constexpr double kEquivalenceTolerance = 1e-5;

// Compares an already pruned model with the masked original.
VerifyReport VerifyPruned(const GeneratorGraph& graph, const WeightStore& store,
                          const PruningPlan& plan, const PruneResult& pruned, int n_probes,
                          std::uint64_t seed, double tol = kEquivalenceTolerance);

// Applies the plan (skip-slice pair init) and verifies the result.
VerifyReport VerifyMaskedEquivalence(const GeneratorGraph& graph, const WeightStore& store,
                                     const PruningPlan& plan, int n_probes, std::uint64_t seed,
                                     double tol = kEquivalenceTolerance);

struct BenchStats {
  std::vector<double> runs_ms;
  double median_ms = 0.0;
  double p90_ms = 0.0;
  std::optional<double> speedup;  // baseline median / this median
};

// Times full forward passes on one seeded probe. `input_shapes` (keyed by
// input node name) overrides the declared input sizes. Throws kConfig if
// n_runs < 3.
BenchStats Bench(const GeneratorGraph& graph, const WeightStore& store, int n_warmup, int n_runs,
                 const std::map<std::string, TensorShape>& input_shapes = {},
                 std::uint64_t seed = 0);

// Median of the sorted values (mean of the middle pair for even counts) and
// nearest-rank 90th percentile.
double Median(std::vector<double> values);
double Percentile90(std::vector<double> values);

// {"median_ms", "p90_ms", "runs", "speedup"?}.
std::string RenderBenchJson(const BenchStats& stats);
BenchStats ParseBenchJson(std::string_view text);

// Copy of `graph` with the named input nodes resized.
GeneratorGraph WithInputShapes(const GeneratorGraph& graph,
                               const std::map<std::string, TensorShape>& input_shapes);

}  // namespace unetprune

#endif  // UNETPRUNE_HARNESS_HPP_
