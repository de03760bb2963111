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

#include "unetprune/criteria.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "unetprune/error.hpp"

namespace unetprune {

using nlohmann::json;

const char* CriterionName(Criterion c) {
  switch (c) {
    case Criterion::kL2: return "l2";
    case Criterion::kGeometricMedian: return "gm";
    case Criterion::kLamp: return "lamp";
  }
  return "?";
}

Criterion ParseCriterion(std::string_view text) {
  if (text == "l2") return Criterion::kL2;
  if (text == "gm" || text == "geometric-median") return Criterion::kGeometricMedian;
  if (text == "lamp") return Criterion::kLamp;
  throw Error(ErrorCode::kConfig, "unknown criterion '" + std::string(text) +
                                      "' (expected l2, gm or lamp)");
}

namespace {

struct FilterGeometry {
  int out = 0;
  int in = 0;
  int taps = 0;
  bool transposed = false;
};

FilterGeometry GeometryOf(const LayerNode& n) {
  if (const auto* c = std::get_if<ConvSpec>(&n.kind)) {
    return {c->out_channels, c->in_channels, c->kernel * c->kernel, false};
  }
  if (const auto* t = std::get_if<ConvTransposeSpec>(&n.kind)) {
    return {t->out_channels, t->in_channels, t->kernel * t->kernel, true};
  }
  throw Error(ErrorCode::kPlan, "'" + n.name + "' is not a conv layer");
}

ScoreTable ScoreEach(const GeneratorGraph& graph, const WeightStore& store,
                     std::vector<double> (*fn)(const std::vector<std::vector<double>>&)) {
  ScoreTable table;
  for (const std::string& name : graph.FilterLayerNames()) {
    table.push_back({name, fn(LayerFilters(graph, store, name))});
  }
  return table;
}

double SquaredNorm(const std::vector<double>& f) {
  double s = 0.0;
  for (double v : f) s += v * v;
  return s;
}

std::vector<double> L2Of(const std::vector<std::vector<double>>& filters) {
  std::vector<double> out;
  out.reserve(filters.size());
  for (const auto& f : filters) out.push_back(std::sqrt(SquaredNorm(f)));
  return out;
}

std::vector<double> GmOf(const std::vector<std::vector<double>>& filters) {
  const std::size_t n = filters.size();
  std::vector<double> dist(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      const auto& a = filters[i];
      const auto& b = filters[j];
      for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
      }
      dist[i * n + j] = dist[j * n + i] = std::sqrt(s);
    }
  }
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i] += dist[i * n + j];
  }
  return out;
}

std::vector<double> LampOf(const std::vector<std::vector<double>>& filters) {
  std::vector<double> m;
  m.reserve(filters.size());
  for (const auto& f : filters) m.push_back(SquaredNorm(f));
  return LampFromSquaredNorms(m);
}

std::vector<int> RankAscending(const std::vector<double>& scores) {
  std::vector<int> idx(scores.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return scores[a] < scores[b]; });
  return idx;
}

const LayerScores& ScoresFor(const ScoreTable& table, const std::string& layer) {
  for (const LayerScores& s : table) {
    if (s.layer == layer) return s;
  }
  throw Error(ErrorCode::kUnknownLayer, "no scores for layer '" + layer + "'");
}

void CheckRatio(double ratio) {
  if (!(ratio > 0.0 && ratio < 1.0)) {
    throw Error(ErrorCode::kConfig, "pruning ratio must lie in (0, 1)");
  }
}

}  // namespace

std::vector<std::vector<double>> LayerFilters(const GeneratorGraph& graph,
                                              const WeightStore& store,
                                              std::string_view layer) {
  const LayerNode& n = graph.ByName(layer);
  const FilterGeometry g = GeometryOf(n);
  const WeightTensor& k = store.at(n.name, TensorRole::kKernel);
  std::vector<std::vector<double>> filters(g.out);
  for (int o = 0; o < g.out; ++o) {
    auto& f = filters[o];
    f.reserve(static_cast<std::size_t>(g.in) * g.taps);
    for (int i = 0; i < g.in; ++i) {
      const std::size_t base = g.transposed
                                   ? (static_cast<std::size_t>(i) * g.out + o) * g.taps
                                   : (static_cast<std::size_t>(o) * g.in + i) * g.taps;
      for (int t = 0; t < g.taps; ++t) f.push_back(k.data[base + t]);
    }
  }
  return filters;
}

std::vector<double> LampFromSquaredNorms(const std::vector<double>& m) {
  const std::vector<int> order = RankAscending(m);
  std::vector<double> out(m.size(), 0.0);
  double suffix = 0.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    suffix += m[*it];
    out[*it] = suffix > 0.0 ? m[*it] / suffix : 0.0;
  }
  return out;
}

ScoreTable ScoreL2(const GeneratorGraph& graph, const WeightStore& store) {
  return ScoreEach(graph, store, L2Of);
}

ScoreTable ScoreGeometricMedian(const GeneratorGraph& graph, const WeightStore& store) {
  return ScoreEach(graph, store, GmOf);
}

ScoreTable ScoreLamp(const GeneratorGraph& graph, const WeightStore& store) {
  return ScoreEach(graph, store, LampOf);
}

ScoreTable Score(const GeneratorGraph& graph, const WeightStore& store, Criterion c) {
  switch (c) {
    case Criterion::kL2: return ScoreL2(graph, store);
    case Criterion::kGeometricMedian: return ScoreGeometricMedian(graph, store);
    case Criterion::kLamp: return ScoreLamp(graph, store);
  }
  throw Error(ErrorCode::kInternal, "bad criterion");
}

std::string RenderScoresCsv(const ScoreTable& table) {
  std::string out = "layer,filter,score\n";
  char buf[64];
  for (const LayerScores& s : table) {
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
      std::snprintf(buf, sizeof(buf), ",%zu,%.10g\n", i, s.scores[i]);
      out += s.layer;
      out += buf;
    }
  }
  return out;
}

std::vector<int> SelectLowest(const std::vector<double>& scores, int count) {
  std::vector<int> order = RankAscending(scores);
  order.resize(std::clamp<std::size_t>(count, 0, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

int FilterCount(double ratio, int n) {
  // The epsilon keeps products such as 0.29 * 100 from flooring one short.
  const int k = static_cast<int>(std::floor(ratio * n + 1e-9));
  return std::clamp(k, 0, std::max(0, n - 1));
}

std::set<std::string> UniformPlusExclusions(const GeneratorGraph& graph) {
  std::set<std::string> out;
  const std::vector<std::string> prunable = PrunableLayers(graph);
  if (!prunable.empty()) {
    out.insert(prunable.front());
    out.insert(prunable.back());
  }
  return out;
}

PruningPlan PlanUniform(const GeneratorGraph& graph, const ScoreTable& scores, double ratio,
                        const std::set<std::string>& exclusions) {
  CheckRatio(ratio);
  PruningPlan plan;
  plan.method = exclusions.empty() ? "uniform" : "uniform+";
  plan.ratio = ratio;
  for (const std::string& layer : PrunableLayers(graph)) {
    if (exclusions.count(layer)) continue;
    const LayerScores& s = ScoresFor(scores, layer);
    const int k = FilterCount(ratio, static_cast<int>(s.scores.size()));
    if (k > 0) plan.actions.push_back(FilterRemoval{layer, SelectLowest(s.scores, k)});
  }
  return plan;
}

PruningPlan PlanGlobal(const GeneratorGraph& graph, const ScoreTable& scores, double ratio,
                       const std::set<std::string>& exclusions) {
  CheckRatio(ratio);
  struct Candidate {
    double score;
    int layer;
    int filter;
  };
  const std::vector<std::string> layers = PrunableLayers(graph);
  std::vector<Candidate> all;
  std::vector<int> sizes(layers.size(), 0);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (exclusions.count(layers[l])) continue;
    const LayerScores& s = ScoresFor(scores, layers[l]);
    sizes[l] = static_cast<int>(s.scores.size());
    for (std::size_t i = 0; i < s.scores.size(); ++i) {
      all.push_back({s.scores[i], static_cast<int>(l), static_cast<int>(i)});
    }
  }
  std::sort(all.begin(), all.end(), [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score < b.score;
    if (a.layer != b.layer) return a.layer < b.layer;
    return a.filter < b.filter;
  });
  const auto budget =
      static_cast<std::size_t>(std::floor(ratio * static_cast<double>(all.size()) + 1e-9));
  std::vector<std::vector<int>> removed(layers.size());
  std::size_t taken = 0;
  for (const Candidate& c : all) {
    if (taken == budget) break;
    if (static_cast<int>(removed[c.layer].size()) + 1 >= sizes[c.layer]) continue;
    removed[c.layer].push_back(c.filter);
    ++taken;
  }
  PruningPlan plan;
  plan.method = "global";
  plan.ratio = ratio;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (removed[l].empty()) continue;
    std::sort(removed[l].begin(), removed[l].end());
    plan.actions.push_back(FilterRemoval{layers[l], std::move(removed[l])});
  }
  return plan;
}

PruningPlan PlanInner(const GeneratorGraph& graph, const ScoreTable& scores,
                      const std::vector<std::pair<std::string, double>>& layer_ratios) {
  const std::set<std::string> protected_layers = ProtectedOutputLayers(graph);
  PruningPlan plan;
  plan.method = "inner";
  for (const auto& [layer, ratio] : layer_ratios) {
    const LayerNode& n = graph.ByName(layer);
    if (!n.is_filter_layer()) {
      throw Error(ErrorCode::kPlan, "'" + layer + "' is not a conv layer");
    }
    if (protected_layers.count(layer)) {
      throw Error(ErrorCode::kPlan, "'" + layer + "' produces the network output");
    }
    CheckRatio(ratio);
    const LayerScores& s = ScoresFor(scores, layer);
    const int k = FilterCount(ratio, static_cast<int>(s.scores.size()));
    if (k > 0) plan.actions.push_back(FilterRemoval{layer, SelectLowest(s.scores, k)});
  }
  return plan;
}

const std::vector<Preset>& Presets() {
  static const std::vector<Preset> presets = {
      {"e2s-filter", Arch::kPix2Pix,
       "edges2shoes: 50% of C6, C7, C8, 54.4M -> 39.7M params at nF=64",
       {{"C6", 0.5}, {"C7", 0.5}, {"C8", 0.5}},
       {}},
      {"e2s-filter-bold", Arch::kPix2Pix,
       "edges2shoes: 50% of C6, C7, C8 plus 25% of U8, U7, 54.4M -> 35.8M params at nF=64",
       {{"C6", 0.5}, {"C7", 0.5}, {"C8", 0.5}, {"U8", 0.25}, {"U7", 0.25}},
       {}},
      {"facades-filter", Arch::kPix2Pix,
       "facades: 50% of C6, 75% of C7, C8, U8, U7, 54.4M -> 27.7M params at nF=64",
       {{"C6", 0.5}, {"C7", 0.75}, {"C8", 0.75}, {"U8", 0.75}, {"U7", 0.75}},
       {}},
      {"facades-filter-bold", Arch::kPix2Pix,
       "facades: 50% of C6, 75% of C7, C8, U8, U7, 25% of U6, 54.4M -> 25.8M params at nF=64",
       {{"C6", 0.5}, {"C7", 0.75}, {"C8", 0.75}, {"U8", 0.75}, {"U7", 0.75}, {"U6", 0.25}},
       {}},
      {"cut-c8u8", Arch::kPix2Pix,
       "remove the innermost pair C8/U8, bottleneck 2x2, 54.4M -> 41.8M params at nF=64",
       {},
       {{"C8", "U8"}}},
      {"cut-c7c8u8u7", Arch::kPix2Pix,
       "remove C8/U8 then C7/U7, bottleneck 4x4, 54.4M -> 29.2M params at nF=64",
       {},
       {{"C8", "U8"}, {"C7", "U7"}}},
      {"wav2lip-filter", Arch::kWav2Lip,
       "Wav2Lip: 50% of CA5-7, CV6-8, U6, U5 and 67% of U4, 5.0M -> 1.7M params",
       {{"CA5", 0.5}, {"CA6", 0.5}, {"CA7", 0.5}, {"CV6", 0.5}, {"CV7", 0.5},
        {"CV8", 0.5}, {"U6", 0.5}, {"U5", 0.5}, {"U4", 0.67}},
       {}},
  };
  return presets;
}

const Preset& FindPreset(std::string_view name) {
  for (const Preset& p : Presets()) {
    if (p.name == name) return p;
  }
  throw Error(ErrorCode::kConfig, "unknown preset '" + std::string(name) + "'");
}

PruningPlan PlanPreset(const GeneratorGraph& graph, const WeightStore& store,
                       std::string_view name, Criterion criterion) {
  const Preset& preset = FindPreset(name);
  PruningPlan plan;
  if (!preset.layer_ratios.empty()) {
    plan = PlanInner(graph, Score(graph, store, criterion), preset.layer_ratios);
    plan.criterion = CriterionName(criterion);
  } else {
    plan.criterion = "none";
  }
  for (const auto& [enc, dec] : preset.pairs) plan.actions.push_back(PairRemoval{enc, dec});
  plan.method = "preset:" + preset.name;
  return plan;
}

void CheckPlan(const GeneratorGraph& graph, const PruningPlan& plan) {
  const std::set<std::string> protected_layers = ProtectedOutputLayers(graph);
  std::set<std::string> seen;
  for (const PlanAction& action : plan.actions) {
    const auto* f = std::get_if<FilterRemoval>(&action);
    if (f == nullptr) continue;
    const LayerNode& n = graph.ByName(f->layer);
    if (!n.is_filter_layer()) {
      throw Error(ErrorCode::kPlan, "'" + f->layer + "' is not a conv layer");
    }
    if (protected_layers.count(f->layer)) {
      throw Error(ErrorCode::kPlan,
                  "'" + f->layer + "' produces the network output and cannot lose filters");
    }
    if (!seen.insert(f->layer).second) {
      throw Error(ErrorCode::kPlan, "'" + f->layer + "' appears in more than one action");
    }
    const int out = GeometryOf(n).out;
    for (std::size_t i = 0; i < f->remove.size(); ++i) {
      if (f->remove[i] < 0 || f->remove[i] >= out) {
        throw Error(ErrorCode::kPlan, "filter index " + std::to_string(f->remove[i]) +
                                          " out of range for '" + f->layer + "'");
      }
      if (i > 0 && f->remove[i] <= f->remove[i - 1]) {
        throw Error(ErrorCode::kPlan,
                    "filter indices for '" + f->layer + "' must be strictly increasing");
      }
    }
    if (static_cast<int>(f->remove.size()) >= out) {
      throw Error(ErrorCode::kPlan, "plan would remove every filter of '" + f->layer + "'");
    }
  }
}

std::string PlanToJson(const PruningPlan& plan) {
  json actions = json::array();
  for (const PlanAction& action : plan.actions) {
    if (const auto* f = std::get_if<FilterRemoval>(&action)) {
      actions.push_back({{"layer", f->layer}, {"remove", f->remove}});
    } else {
      const auto& p = std::get<PairRemoval>(action);
      actions.push_back({{"pair", {p.encoder, p.decoder}}});
    }
  }
  json doc;
  doc["criterion"] = plan.criterion;
  if (!plan.method.empty()) doc["method"] = plan.method;
  if (plan.ratio) doc["ratio"] = *plan.ratio;
  doc["actions"] = std::move(actions);
  return doc.dump(2) + "\n";
}

PruningPlan PlanFromJson(std::string_view text) {
  const json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw Error(ErrorCode::kFormat, "plan is not a JSON object");
  }
  PruningPlan plan;
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key != "criterion" && key != "method" && key != "ratio" && key != "actions") {
        throw Error(ErrorCode::kFormat, "unknown plan field '" + key + "'");
      }
    }
    plan.criterion = doc.at("criterion").get<std::string>();
    if (doc.contains("method")) plan.method = doc["method"].get<std::string>();
    if (doc.contains("ratio")) plan.ratio = doc["ratio"].get<double>();
    for (const json& a : doc.at("actions")) {
      if (!a.is_object()) throw Error(ErrorCode::kFormat, "plan action is not an object");
      if (a.contains("pair")) {
        if (a.size() != 1 || !a["pair"].is_array() || a["pair"].size() != 2) {
          throw Error(ErrorCode::kFormat, "pair action must be {\"pair\": [enc, dec]}");
        }
        plan.actions.push_back(
            PairRemoval{a["pair"][0].get<std::string>(), a["pair"][1].get<std::string>()});
        continue;
      }
      if (a.size() != 2 || !a.contains("layer") || !a.contains("remove")) {
        throw Error(ErrorCode::kFormat, "filter action must be {\"layer\", \"remove\"}");
      }
      FilterRemoval f{a["layer"].get<std::string>(), a["remove"].get<std::vector<int>>()};
      std::sort(f.remove.begin(), f.remove.end());
      if (std::adjacent_find(f.remove.begin(), f.remove.end()) != f.remove.end()) {
        throw Error(ErrorCode::kFormat, "duplicate filter index for '" + f.layer + "'");
      }
      plan.actions.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("malformed plan: ") + e.what());
  }
  return plan;
}

}  // namespace unetprune
