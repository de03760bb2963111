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

// Structural rewrites of (graph, weights).
//
// Filter removal walks the graph once in topological order, carrying for every
// node the original indices of the output channels that survive. Convs slice
// their kernel rows by their own plan entry and their kernel columns by what
// survives of their input; norms slice their vectors; concats offset and
// join their inputs' sets. Since every layer only ever reads the original
// indices, the result does not depend on action order.

#ifndef UNETPRUNE_PRUNE_HPP_
#define UNETPRUNE_PRUNE_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "unetprune/criteria.hpp"

namespace unetprune {

// Surviving channels of one node's output tensor: kept[new] = old.
struct ChannelMap {
  std::string node;
  int original_channels = 0;
  std::vector<int> kept;
  friend bool operator==(const ChannelMap&, const ChannelMap&) = default;
};

struct PruneResult {
  GeneratorGraph graph;
  WeightStore store;
  // Every node whose output lost channels, in topological order of the input
  // graph.
  std::vector<ChannelMap> maps;
};

// How the decoder conv that used to read the removed pair is initialized.
enum class PairInit {
  kSkipSlice,  // keep the kernel slice that read the skip connection
  kRandom,     // redraw that slice from N(0, 0.02)
  kAverage,    // mean of the skip slice and the discarded decoder-path slice
};

const char* PairInitName(PairInit init);
PairInit ParsePairInit(std::string_view text);

struct PruneOptions {
  PairInit pair_init = PairInit::kSkipSlice;
  std::uint64_t seed = 0;  // kRandom only
};

// Returns a copy of `t` keeping only `keep` (ascending) along `axis`.
WeightTensor SliceAxis(const WeightTensor& t, int axis, const std::vector<int>& keep);

// Filter actions are applied in one pass, then pair actions in plan order.
// Throws kUnknownLayer or kPlan for a bad plan.
PruneResult ApplyPlan(const GeneratorGraph& graph, const WeightStore& store,
                      const PruningPlan& plan, const PruneOptions& options = {});

PruneResult ApplyFilterPrune(const GeneratorGraph& graph, const WeightStore& store,
                             const PruningPlan& plan);

// Removes the innermost encoder conv `encoder` and its mirrored decoder conv
// `decoder` together with their norm/activation nodes and the concat that
// joined the decoder output to the skip connection. The skip source then feeds
// the concat's consumers directly. Pix2Pix graphs only; at least five encoder
// convs must remain.
PruneResult RemoveLayerPair(const GeneratorGraph& graph, const WeightStore& store,
                            const std::string& encoder, const std::string& decoder,
                            const PruneOptions& options = {});

// The (encoder, decoder) pair adjacent to the bottleneck.
std::pair<std::string, std::string> InnermostPair(const GeneratorGraph& graph);

// Removes `depth` innermost pairs (C8/U8, then C7/U7, then C6/U6).
PruneResult RemoveInnerLayers(const GeneratorGraph& graph, const WeightStore& store,
                              int depth, const PruneOptions& options = {});

// Spatial size of the bottleneck: the output of the innermost encoder conv.
TensorShape BottleneckShape(const GeneratorGraph& graph);

// {"maps": [{"node", "original_channels", "kept"}]}.
std::string ChannelMapsToJson(const std::vector<ChannelMap>& maps);

}  // namespace unetprune

#endif  // UNETPRUNE_PRUNE_HPP_
