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

// Filter importance scores and pruning plans.
//
// A filter is everything that produces one output channel of a conv or
// transposed conv: kernel[i, :, :, :] for a conv, kernel[:, i, :, :] for a
// transposed conv. Biases never enter a score. Lower scores are removed first;
// ties go to the lower filter index.

#ifndef UNETPRUNE_CRITERIA_HPP_
#define UNETPRUNE_CRITERIA_HPP_

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "unetprune/weights.hpp"

namespace unetprune {

enum class Criterion { kL2, kGeometricMedian, kLamp };

const char* CriterionName(Criterion c);  // "l2", "gm", "lamp"
Criterion ParseCriterion(std::string_view text);

struct LayerScores {
  std::string layer;
  std::vector<double> scores;  // indexed by filter
};

// One entry per conv/transposed-conv layer, in topological order.
using ScoreTable = std::vector<LayerScores>;

// Flattened filter weights of one layer, row i = filter i.
std::vector<std::vector<double>> LayerFilters(const GeneratorGraph& graph,
                                              const WeightStore& store,
                                              std::string_view layer);

// ||F_i||_2.
ScoreTable ScoreL2(const GeneratorGraph& graph, const WeightStore& store);
// sum_j ||F_i - F_j||_2 over the filters of the same layer.
ScoreTable ScoreGeometricMedian(const GeneratorGraph& graph, const WeightStore& store);
// m_i / sum of m_j over filters ranked at or above i, with m = ||F||_2^2 and
// the ranking ascending by (m, index). A layer whose mass is 0 scores 0.
ScoreTable ScoreLamp(const GeneratorGraph& graph, const WeightStore& store);
ScoreTable Score(const GeneratorGraph& graph, const WeightStore& store, Criterion c);

// LAMP on a bare list of squared norms.
std::vector<double> LampFromSquaredNorms(const std::vector<double>& m);

// `layer,filter,score`.
std::string RenderScoresCsv(const ScoreTable& table);

struct FilterRemoval {
  std::string layer;
  std::vector<int> remove;  // strictly increasing
  friend bool operator==(const FilterRemoval&, const FilterRemoval&) = default;
};

// Removes the mirrored encoder/decoder pair; must be the innermost pair at the
// time it is applied.
struct PairRemoval {
  std::string encoder;
  std::string decoder;
  friend bool operator==(const PairRemoval&, const PairRemoval&) = default;
};

using PlanAction = std::variant<FilterRemoval, PairRemoval>;

struct PruningPlan {
  std::string criterion = "l2";
  std::string method;  // "uniform", "global", "inner", "preset:<name>", ...
  std::optional<double> ratio;
  std::vector<PlanAction> actions;

  bool empty() const { return actions.empty(); }
  friend bool operator==(const PruningPlan&, const PruningPlan&) = default;
};

// Indices of the `count` lowest scores, ordered by (score, index), returned
// ascending by index.
std::vector<int> SelectLowest(const std::vector<double>& scores, int count);

// floor(ratio * n) capped at n - 1.
int FilterCount(double ratio, int n);

// Uniform+: the first encoder layer and the last prunable decoder layer.
std::set<std::string> UniformPlusExclusions(const GeneratorGraph& graph);

// Removes floor(ratio * out) lowest filters from every prunable layer not in
// `exclusions`. The output layer is always excluded.
PruningPlan PlanUniform(const GeneratorGraph& graph, const ScoreTable& scores, double ratio,
                        const std::set<std::string>& exclusions = {});

// Ranks every prunable filter by score and removes the lowest
// floor(ratio * total) of them without emptying any layer.
PruningPlan PlanGlobal(const GeneratorGraph& graph, const ScoreTable& scores, double ratio,
                       const std::set<std::string>& exclusions = {});

// Per named layer, removes floor(ratio * out) lowest-scored filters.
PruningPlan PlanInner(const GeneratorGraph& graph, const ScoreTable& scores,
                      const std::vector<std::pair<std::string, double>>& layer_ratios);

struct Preset {
  std::string name;
  Arch arch;
  std::string summary;
  std::vector<std::pair<std::string, double>> layer_ratios;
  std::vector<std::pair<std::string, std::string>> pairs;  // outermost last
};

const std::vector<Preset>& Presets();
// Throws kConfig for an unknown name.
const Preset& FindPreset(std::string_view name);
// Layer-ratio presets rank filters with `criterion`; pair presets ignore it.
PruningPlan PlanPreset(const GeneratorGraph& graph, const WeightStore& store,
                       std::string_view name, Criterion criterion = Criterion::kL2);

// Structural checks against a graph: known filter layers, not the output
// layer, in-range and duplicate-free indices, no emptied layer, at most one
// filter action per layer. Throws kUnknownLayer or kPlan.
void CheckPlan(const GeneratorGraph& graph, const PruningPlan& plan);

// {"criterion", "method"?, "ratio"?, "actions": [{"layer", "remove"} |
// {"pair": [enc, dec]}]}. Indices are sorted on read; duplicates are kFormat.
std::string PlanToJson(const PruningPlan& plan);
PruningPlan PlanFromJson(std::string_view text);

}  // namespace unetprune

#endif  // UNETPRUNE_CRITERIA_HPP_
