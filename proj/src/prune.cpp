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

#include "unetprune/prune.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <random>
#include <set>

#include "unetprune/error.hpp"

namespace unetprune {

using nlohmann::json;

const char* PairInitName(PairInit init) {
  switch (init) {
    case PairInit::kSkipSlice: return "skip-slice";
    case PairInit::kRandom: return "random";
    case PairInit::kAverage: return "average";
  }
  return "?";
}

PairInit ParsePairInit(std::string_view text) {
  if (text == "skip-slice") return PairInit::kSkipSlice;
  if (text == "random") return PairInit::kRandom;
  if (text == "average") return PairInit::kAverage;
  throw Error(ErrorCode::kConfig, "unknown pair init '" + std::string(text) +
                                      "' (expected skip-slice, random or average)");
}

WeightTensor SliceAxis(const WeightTensor& t, int axis, const std::vector<int>& keep) {
  if (axis < 0 || axis >= static_cast<int>(t.dims.size())) {
    throw Error(ErrorCode::kInternal, "slice axis out of range");
  }
  std::int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= t.dims[d];
  for (std::size_t d = axis + 1; d < t.dims.size(); ++d) inner *= t.dims[d];
  const std::int64_t extent = t.dims[axis];
  WeightTensor out;
  out.dims = t.dims;
  out.dims[axis] = static_cast<std::int64_t>(keep.size());
  out.data.reserve(static_cast<std::size_t>(outer * inner) * keep.size());
  for (std::int64_t o = 0; o < outer; ++o) {
    for (int k : keep) {
      if (k < 0 || k >= extent) throw Error(ErrorCode::kInternal, "slice index out of range");
      const auto begin = t.data.begin() + (o * extent + k) * inner;
      out.data.insert(out.data.end(), begin, begin + inner);
    }
  }
  return out;
}

namespace {

using Keep = std::optional<std::vector<int>>;

std::vector<int> Range(int begin, int end) {
  std::vector<int> v(static_cast<std::size_t>(std::max(0, end - begin)));
  std::iota(v.begin(), v.end(), begin);
  return v;
}

std::vector<int> Complement(const std::vector<int>& removed, int n) {
  std::vector<int> keep;
  keep.reserve(n - removed.size());
  std::size_t r = 0;
  for (int i = 0; i < n; ++i) {
    if (r < removed.size() && removed[r] == i) {
      ++r;
    } else {
      keep.push_back(i);
    }
  }
  return keep;
}

void SliceVector(WeightStore& store, const std::string& node, TensorRole role,
                 const std::vector<int>& keep) {
  auto it = store.entries.find(TensorKey{node, role});
  if (it != store.entries.end()) it->second = SliceAxis(it->second, 0, keep);
}

// The single propagation pass. `out_keep` gives surviving output channels of
// filter layers; `concat_keep` overrides a concat's surviving channels, which
// leaves the graph inconsistent until the caller rewires around that concat.
PruneResult Propagate(const GeneratorGraph& g, const WeightStore& s,
                      const std::map<int, std::vector<int>>& out_keep,
                      const std::map<int, std::vector<int>>& concat_keep) {
  const ValidationReport v = Validate(g);
  PruneResult r{g, s, {}};
  std::map<int, Keep> kept;

  for (int id : v.order) {
    const LayerNode& n = g.node(id);
    LayerNode& nn = r.graph.node(id);
    const int old_c = v.shapes.at(id).channels;
    auto input_keep = [&](std::size_t i) -> const Keep& { return kept.at(n.inputs[i]); };
    auto own = [&]() -> Keep {
      auto it = out_keep.find(id);
      return it == out_keep.end() ? Keep{} : Keep{it->second};
    };
    Keep mine;

    if (auto* c = std::get_if<ConvSpec>(&nn.kind)) {
      const Keep& in = input_keep(0);
      mine = own();
      WeightTensor& k = r.store.at(n.name, TensorRole::kKernel);
      if (mine) {
        k = SliceAxis(k, 0, *mine);
        SliceVector(r.store, n.name, TensorRole::kBias, *mine);
        c->out_channels = static_cast<int>(mine->size());
      }
      if (in) {
        k = SliceAxis(k, 1, *in);
        c->in_channels = static_cast<int>(in->size());
      }
    } else if (auto* t = std::get_if<ConvTransposeSpec>(&nn.kind)) {
      const Keep& in = input_keep(0);
      mine = own();
      WeightTensor& k = r.store.at(n.name, TensorRole::kKernel);
      if (mine) {
        k = SliceAxis(k, 1, *mine);
        SliceVector(r.store, n.name, TensorRole::kBias, *mine);
        t->out_channels = static_cast<int>(mine->size());
      }
      if (in) {
        k = SliceAxis(k, 0, *in);
        t->in_channels = static_cast<int>(in->size());
      }
    } else if (auto* norm = std::get_if<NormSpec>(&nn.kind)) {
      mine = input_keep(0);
      if (mine) {
        for (TensorRole role : {TensorRole::kNormScale, TensorRole::kNormShift,
                                TensorRole::kNormMean, TensorRole::kNormVar}) {
          SliceVector(r.store, n.name, role, *mine);
        }
        norm->channels = static_cast<int>(mine->size());
      }
    } else if (std::holds_alternative<ActSpec>(nn.kind)) {
      mine = input_keep(0);
    } else if (std::holds_alternative<ConcatSpec>(nn.kind)) {
      auto it = concat_keep.find(id);
      bool any = false;
      for (std::size_t i = 0; i < n.inputs.size(); ++i) any = any || input_keep(i).has_value();
      if (it != concat_keep.end()) {
        if (any) throw Error(ErrorCode::kInternal, "concat override on a changed input");
        mine = it->second;
      } else if (any) {
        std::vector<int> joined;
        int offset = 0;
        for (std::size_t i = 0; i < n.inputs.size(); ++i) {
          const int c = v.shapes.at(n.inputs[i]).channels;
          if (const Keep& k = input_keep(i)) {
            for (int x : *k) joined.push_back(offset + x);
          } else {
            for (int x = 0; x < c; ++x) joined.push_back(offset + x);
          }
          offset += c;
        }
        mine = std::move(joined);
      }
    } else if (std::holds_alternative<OutputSpec>(nn.kind)) {
      if (input_keep(0)) {
        throw Error(ErrorCode::kPlan, "plan would remove channels of the network output");
      }
    }

    if (mine) r.maps.push_back(ChannelMap{n.name, old_c, *mine});
    kept[id] = std::move(mine);
  }
  return r;
}

// Folds the maps of a later pass into maps that refer to the original graph.
void ComposeMaps(std::vector<ChannelMap>& total, const std::vector<ChannelMap>& step,
                 const std::set<std::string>& removed) {
  for (const ChannelMap& m : step) {
    auto it = std::find_if(total.begin(), total.end(),
                           [&](const ChannelMap& t) { return t.node == m.node; });
    if (it == total.end()) {
      total.push_back(m);
      continue;
    }
    std::vector<int> kept;
    kept.reserve(m.kept.size());
    for (int i : m.kept) kept.push_back(it->kept[i]);
    it->kept = std::move(kept);
  }
  std::erase_if(total, [&](const ChannelMap& t) { return removed.count(t.node) > 0; });
}

int CountEncoderConvs(const GeneratorGraph& g) {
  int count = 0;
  for (const auto& [id, n] : g.nodes) count += n.is_conv() ? 1 : 0;
  return count;
}

constexpr int kMinEncoderConvs = 5;

}  // namespace

PruneResult ApplyFilterPrune(const GeneratorGraph& graph, const WeightStore& store,
                             const PruningPlan& plan) {
  CheckPlan(graph, plan);
  std::map<int, std::vector<int>> out_keep;
  for (const PlanAction& action : plan.actions) {
    const auto* f = std::get_if<FilterRemoval>(&action);
    if (f == nullptr) {
      throw Error(ErrorCode::kPlan, "filter pruning cannot apply a layer-pair action");
    }
    if (f->remove.empty()) continue;
    const LayerNode& n = graph.ByName(f->layer);
    const int out = n.is_conv() ? std::get<ConvSpec>(n.kind).out_channels
                                : std::get<ConvTransposeSpec>(n.kind).out_channels;
    out_keep[n.id] = Complement(f->remove, out);
  }
  PruneResult r = Propagate(graph, store, out_keep, {});
  Validate(r.graph);
  return r;
}

std::pair<std::string, std::string> InnermostPair(const GeneratorGraph& graph) {
  for (int id : graph.TopologicalOrder()) {
    const LayerNode& d = graph.node(id);
    if (!d.is_conv_transpose()) continue;
    int cur = d.inputs.at(0);
    while (graph.node(cur).is_channelwise()) cur = graph.node(cur).inputs.at(0);
    if (graph.node(cur).is_conv()) return {graph.node(cur).name, d.name};
  }
  throw Error(ErrorCode::kPlan, "graph has no mirrored encoder/decoder pair at its bottleneck");
}

PruneResult RemoveLayerPair(const GeneratorGraph& graph, const WeightStore& store,
                            const std::string& encoder, const std::string& decoder,
                            const PruneOptions& options) {
  if (graph.arch != Arch::kPix2Pix) {
    throw Error(ErrorCode::kPlan, "layer removal is only defined for Pix2Pix graphs");
  }
  const LayerNode& e = graph.ByName(encoder);
  const LayerNode& d = graph.ByName(decoder);
  if (!e.is_conv() || !d.is_conv_transpose()) {
    throw Error(ErrorCode::kPlan, "pair (" + encoder + ", " + decoder +
                                      ") must be an encoder conv and a decoder transposed conv");
  }
  const std::string pair_text = "(" + encoder + ", " + decoder + ")";

  // Encoder output must reach the decoder through per-channel nodes only.
  std::vector<int> doomed = {e.id};
  for (int cur = d.inputs.at(0); cur != e.id; cur = graph.node(cur).inputs.at(0)) {
    if (!graph.node(cur).is_channelwise()) {
      throw Error(ErrorCode::kPlan, pair_text + " is not the innermost pair");
    }
    doomed.push_back(cur);
  }
  for (int id : doomed) {
    if (graph.Consumers(id).size() != 1) {
      throw Error(ErrorCode::kPlan, "'" + graph.node(id).name +
                                        "' has other consumers; cannot remove " + pair_text);
    }
  }
  doomed.push_back(d.id);

  int tail = d.id;
  int concat = -1;
  while (concat < 0) {
    const std::vector<int> next = graph.Consumers(tail);
    if (next.size() != 1) {
      throw Error(ErrorCode::kPlan, "'" + graph.node(tail).name + "' must have one consumer");
    }
    const LayerNode& n = graph.node(next[0]);
    if (std::holds_alternative<ConcatSpec>(n.kind)) {
      concat = n.id;
    } else if (n.is_channelwise()) {
      doomed.push_back(n.id);
      tail = n.id;
    } else {
      throw Error(ErrorCode::kPlan, decoder + " does not feed a skip concat");
    }
  }
  const LayerNode& x = graph.node(concat);
  const int skip_source = e.inputs.at(0);
  if (x.inputs.size() != 2 ||
      !((x.inputs[0] == skip_source && x.inputs[1] == tail) ||
        (x.inputs[1] == skip_source && x.inputs[0] == tail))) {
    throw Error(ErrorCode::kPlan, "concat '" + x.name + "' does not join " + decoder +
                                      " with the input of " + encoder);
  }
  doomed.push_back(x.id);
  if (CountEncoderConvs(graph) - 1 < kMinEncoderConvs) {
    throw Error(ErrorCode::kPlan, "removing " + pair_text + " would leave fewer than " +
                                      std::to_string(kMinEncoderConvs) + " encoder layers");
  }

  const ValidationReport v = Validate(graph);
  const int skip_c = v.shapes.at(skip_source).channels;
  const int path_c = v.shapes.at(tail).channels;
  const bool skip_first = x.inputs[0] == skip_source;
  const std::vector<int> skip_range = skip_first ? Range(0, skip_c) : Range(path_c, path_c + skip_c);
  const std::vector<int> path_range = skip_first ? Range(skip_c, skip_c + path_c) : Range(0, path_c);

  // Filter layers that read the concat through per-channel nodes.
  std::vector<int> readers;
  std::vector<int> frontier = graph.Consumers(x.id);
  while (!frontier.empty()) {
    const int id = frontier.back();
    frontier.pop_back();
    const LayerNode& n = graph.node(id);
    if (n.is_filter_layer()) {
      readers.push_back(id);
    } else if (n.is_channelwise()) {
      for (int c : graph.Consumers(id)) frontier.push_back(c);
    } else {
      throw Error(ErrorCode::kPlan, "'" + x.name + "' must feed conv layers directly");
    }
  }

  PruneResult r = Propagate(graph, store, {}, {{x.id, skip_range}});

  for (int reader : readers) {
    const LayerNode& n = graph.node(reader);
    const int in_axis = n.is_conv() ? 1 : 0;
    WeightTensor& k = r.store.at(n.name, TensorRole::kKernel);
    if (options.pair_init == PairInit::kAverage) {
      if (skip_c != path_c) {
        throw Error(ErrorCode::kPlan, "average init needs equal skip and decoder widths");
      }
      const WeightTensor path = SliceAxis(store.at(n.name, TensorRole::kKernel), in_axis, path_range);
      for (std::size_t i = 0; i < k.data.size(); ++i) {
        k.data[i] = static_cast<float>(0.5 * (static_cast<double>(k.data[i]) + path.data[i]));
      }
    } else if (options.pair_init == PairInit::kRandom) {
      std::mt19937_64 rng(options.seed);
      std::normal_distribution<float> dist(0.0f, 0.02f);
      for (float& w : k.data) w = dist(rng);
    }
  }

  // Rewire the concat's consumers to the skip source and drop the pair.
  for (auto& [id, n] : r.graph.nodes) {
    for (int& in : n.inputs) {
      if (in == x.id) in = skip_source;
    }
  }
  std::set<std::string> removed_names;
  for (int id : doomed) {
    removed_names.insert(graph.node(id).name);
    r.graph.nodes.erase(id);
  }
  std::erase_if(r.store.entries,
                [&](const auto& kv) { return removed_names.count(kv.first.node) > 0; });
  std::erase_if(r.graph.skip_edges, [&](const SkipEdge& s) {
    return !r.graph.nodes.count(s.encoder) || !r.graph.nodes.count(s.concat);
  });
  std::erase_if(r.maps, [&](const ChannelMap& m) { return removed_names.count(m.node) > 0; });
  Validate(r.graph);
  CheckStoreMatchesGraph(r.graph, r.store);
  return r;
}

namespace {

void ApplyPairStep(PruneResult& r, const PairRemoval& p, const PruneOptions& options) {
  std::set<std::string> before;
  for (const auto& [id, n] : r.graph.nodes) before.insert(n.name);
  PruneResult step = RemoveLayerPair(r.graph, r.store, p.encoder, p.decoder, options);
  std::set<std::string> removed;
  for (const std::string& name : before) {
    if (!step.graph.FindByName(name)) removed.insert(name);
  }
  ComposeMaps(r.maps, step.maps, removed);
  r.graph = std::move(step.graph);
  r.store = std::move(step.store);
}

}  // namespace

PruneResult ApplyPlan(const GeneratorGraph& graph, const WeightStore& store,
                      const PruningPlan& plan, const PruneOptions& options) {
  PruningPlan filters = plan;
  std::erase_if(filters.actions,
                [](const PlanAction& a) { return std::holds_alternative<PairRemoval>(a); });
  PruneResult r;
  if (filters.empty()) {
    CheckPlan(graph, plan);
    r = PruneResult{graph, store, {}};
  } else {
    r = ApplyFilterPrune(graph, store, filters);
  }
  for (const PlanAction& action : plan.actions) {
    if (const auto* p = std::get_if<PairRemoval>(&action)) ApplyPairStep(r, *p, options);
  }
  return r;
}

PruneResult RemoveInnerLayers(const GeneratorGraph& graph, const WeightStore& store, int depth,
                              const PruneOptions& options) {
  if (depth < 1 || depth > 3) {
    throw Error(ErrorCode::kConfig, "layer-removal depth must be 1, 2 or 3");
  }
  if (graph.arch != Arch::kPix2Pix) {
    throw Error(ErrorCode::kPlan, "layer removal is only defined for Pix2Pix graphs");
  }
  PruneResult r{graph, store, {}};
  for (int i = 0; i < depth; ++i) {
    const auto [enc, dec] = InnermostPair(r.graph);
    ApplyPairStep(r, PairRemoval{enc, dec}, options);
  }
  return r;
}

TensorShape BottleneckShape(const GeneratorGraph& graph) {
  const ValidationReport v = Validate(graph);
  std::optional<TensorShape> best;
  for (int id : v.order) {
    if (!graph.node(id).is_conv()) continue;
    const TensorShape& s = v.shapes.at(id);
    if (!best || std::int64_t{s.height} * s.width <
                     std::int64_t{best->height} * best->width) {
      best = s;
    }
  }
  if (!best) throw Error(ErrorCode::kValidation, "graph has no encoder conv");
  return *best;
}

std::string ChannelMapsToJson(const std::vector<ChannelMap>& maps) {
  json arr = json::array();
  for (const ChannelMap& m : maps) {
    arr.push_back({{"node", m.node}, {"original_channels", m.original_channels}, {"kept", m.kept}});
  }
  return json{{"maps", arr}}.dump(2) + "\n";
}

}  // namespace unetprune
