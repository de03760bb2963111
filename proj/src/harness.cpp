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

#include "unetprune/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <sstream>

#include "unetprune/error.hpp"

namespace unetprune {

using nlohmann::json;

GeneratorGraph WithInputShapes(const GeneratorGraph& graph,
                               const std::map<std::string, TensorShape>& input_shapes) {
  GeneratorGraph g = graph;
  for (const auto& [name, shape] : input_shapes) {
    auto* in = std::get_if<InputSpec>(&g.node(g.ByName(name).id).kind);
    if (in == nullptr) throw Error(ErrorCode::kConfig, "'" + name + "' is not an input node");
    in->shape = shape;
  }
  return g;
}

std::vector<InputSet> MakeProbes(const GeneratorGraph& graph, int count, std::uint64_t seed) {
  if (count < 1) throw Error(ErrorCode::kConfig, "need at least one probe");
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<InputSet> probes(count);
  for (InputSet& set : probes) {
    for (int id : graph.input_ids) {
      const LayerNode& n = graph.node(id);
      Tensor3 t(std::get<InputSpec>(n.kind).shape);
      for (float& v : t.data) v = dist(rng);
      set.emplace(n.name, std::move(t));
    }
  }
  return probes;
}

double Divergence(const Tensor3& a, const Tensor3& b) {
  if (!(a.shape == b.shape)) {
    throw Error(ErrorCode::kDimsMismatch, "divergence of differently shaped outputs " +
                                              a.shape.ToString() + " vs " + b.shape.ToString());
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    s += d * d;
  }
  return std::sqrt(s) / static_cast<double>(a.data.size());
}

SensitivityReport SensitivitySweep(const GeneratorGraph& graph, const WeightStore& store,
                                   const std::vector<InputSet>& probes,
                                   const SweepOptions& options) {
  if (probes.empty()) throw Error(ErrorCode::kConfig, "sweep needs at least one probe");
  for (double r : options.ratios) {
    if (!(r > 0.0 && r < 1.0)) throw Error(ErrorCode::kConfig, "sweep ratios must lie in (0, 1)");
  }
  std::vector<double> ratios = options.ratios;
  std::sort(ratios.begin(), ratios.end());

  std::vector<Tensor3> reference;
  for (const InputSet& p : probes) reference.push_back(Run(graph, store, p).output);
  const CostReport base = CountCost(graph, options.convention);
  const ScoreTable scores = Score(graph, store, options.criterion);
  const std::set<std::string> protected_layers = ProtectedOutputLayers(graph);

  SensitivityReport report;
  for (const std::string& layer : graph.FilterLayerNames()) {
    for (double ratio : ratios) {
      SensitivityRow row{layer, ratio, CriterionName(options.criterion),
                         base.total_params, base.total_macs, 0.0};
      PruningPlan plan;
      if (!(protected_layers.count(layer))) {
        plan = PlanInner(graph, scores, {{layer, ratio}});
      }
      if (!plan.empty()) {
        const PruneResult pruned = ApplyFilterPrune(graph, store, plan);
        const CostReport cost = CountCost(pruned.graph, options.convention);
        row.params = cost.total_params;
        row.macs = cost.total_macs;
        double sum = 0.0;
        for (std::size_t i = 0; i < probes.size(); ++i) {
          sum += Divergence(reference[i], Run(pruned.graph, pruned.store, probes[i]).output);
        }
        row.divergence = sum / static_cast<double>(probes.size());
      }
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

std::string RenderSensitivityCsv(const SensitivityReport& report) {
  std::string out = "layer,ratio,criterion,params,macs,divergence\n";
  char buf[256];
  for (const SensitivityRow& r : report.rows) {
    std::snprintf(buf, sizeof(buf), "%s,%.6g,%s,%lld,%lld,%.6g\n", r.layer.c_str(), r.ratio,
                  r.criterion.c_str(), static_cast<long long>(r.params),
                  static_cast<long long>(r.macs), r.divergence);
    out += buf;
  }
  return out;
}

namespace {

using Provenance = std::pair<std::string, int>;  // (producing node, channel)

// For every node, where each of its output channels was produced.
std::map<int, std::vector<Provenance>> TraceProvenance(const GeneratorGraph& graph,
                                                       const ValidationReport& shapes) {
  std::map<int, std::vector<Provenance>> prov;
  for (int id : shapes.order) {
    const LayerNode& n = graph.node(id);
    std::vector<Provenance> p;
    if (n.is_filter_layer() || std::holds_alternative<InputSpec>(n.kind)) {
      for (int c = 0; c < shapes.shapes.at(id).channels; ++c) p.emplace_back(n.name, c);
    } else {
      for (int in : n.inputs) {
        const auto& src = prov.at(in);
        p.insert(p.end(), src.begin(), src.end());
      }
    }
    prov[id] = std::move(p);
  }
  return prov;
}

}  // namespace

WeightStore MaskedStore(const GeneratorGraph& graph, const WeightStore& store,
                        const PruningPlan& plan) {
  const ValidationReport shapes = Validate(graph);
  std::set<Provenance> removed;
  for (const PlanAction& action : plan.actions) {
    if (const auto* f = std::get_if<FilterRemoval>(&action)) {
      for (int c : f->remove) removed.emplace(f->layer, c);
    } else {
      const auto& p = std::get<PairRemoval>(action);
      const LayerNode& d = graph.ByName(p.decoder);
      for (int c = 0; c < shapes.shapes.at(d.id).channels; ++c) removed.emplace(d.name, c);
    }
  }

  const auto prov = TraceProvenance(graph, shapes);
  WeightStore masked = store;
  for (int id : shapes.order) {
    const LayerNode& n = graph.node(id);
    if (!n.is_filter_layer()) continue;
    WeightTensor& k = masked.at(n.name, TensorRole::kKernel);
    const auto& in = prov.at(n.inputs.at(0));
    const std::size_t taps = static_cast<std::size_t>(k.dims[2] * k.dims[3]);
    const std::size_t d0 = k.dims[0], d1 = k.dims[1];
    std::vector<char> zero(in.size(), 0);
    bool any = false;
    for (std::size_t i = 0; i < in.size(); ++i) {
      zero[i] = removed.count(in[i]) > 0;
      any = any || zero[i];
    }
    if (!any) continue;
    // Conv kernels are [out, in, k, k]; transposed ones [in, out, k, k].
    for (std::size_t a = 0; a < d0; ++a) {
      for (std::size_t b = 0; b < d1; ++b) {
        if (zero[n.is_conv() ? b : a]) std::fill_n(k.data.begin() + (a * d1 + b) * taps, taps, 0.0f);
      }
    }
  }
  return masked;
}

std::string VerifyReport::ToText() const {
  std::ostringstream os;
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%s: max |delta| %.3g over %d probes (tolerance %.3g)\n",
                pass ? "PASS" : "FAIL", max_deviation, probes, tolerance);
  os << buf;
  if (!pass) {
    os << "first failing probe: " << first_failing_probe << "\n";
    os << "node sums (pruned vs masked, surviving channels):\n";
    bool flagged = false;
    for (const NodeSum& s : node_sums) {
      const double diff = std::abs(s.pruned - s.masked);
      const bool off = diff > tolerance * std::max(1.0, std::abs(s.masked));
      std::snprintf(buf, sizeof(buf), "  %-16s %16.8g %16.8g%s\n", s.node.c_str(), s.pruned,
                    s.masked, off && !flagged ? "   <- first divergence" : "");
      flagged = flagged || off;
      os << buf;
    }
  }
  return os.str();
}

VerifyReport VerifyPruned(const GeneratorGraph& graph, const WeightStore& store,
                          const PruningPlan& plan, const PruneResult& pruned, int n_probes,
                          std::uint64_t seed, double tol) {
  const WeightStore masked = MaskedStore(graph, store, plan);
  const std::vector<InputSet> probes = MakeProbes(graph, n_probes, seed);
  VerifyReport report;
  report.tolerance = tol;
  report.probes = n_probes;
  for (int i = 0; i < n_probes; ++i) {
    const Tensor3 a = Run(pruned.graph, pruned.store, probes[i]).output;
    const Tensor3 b = Run(graph, masked, probes[i]).output;
    if (!(a.shape == b.shape)) {
      throw Error(ErrorCode::kInternal, "pruned output shape differs from the original");
    }
    double worst = 0.0;
    for (std::size_t j = 0; j < a.data.size(); ++j) {
      const double d = std::abs(static_cast<double>(a.data[j]) - b.data[j]);
      // NaN compares false, so test for the failing direction explicitly.
      if (!(d <= worst)) worst = d;
    }
    report.max_deviation = std::max(report.max_deviation, worst);
    if (!(worst <= tol) && report.pass) {
      report.pass = false;
      report.first_failing_probe = i;
    }
  }

  if (!report.pass) {
    const InputSet& probe = probes[report.first_failing_probe];
    const RunResult a = Run(pruned.graph, pruned.store, probe, {true});
    const RunResult b = Run(graph, masked, probe, {true});
    std::map<std::string, const ChannelMap*> maps;
    for (const ChannelMap& m : pruned.maps) maps[m.node] = &m;
    for (int id : pruned.graph.TopologicalOrder()) {
      const std::string& name = pruned.graph.node(id).name;
      auto pa = a.nodes.find(name);
      auto pb = b.nodes.find(name);
      if (pa == a.nodes.end() || pb == b.nodes.end()) continue;
      NodeSum s{name, 0.0, 0.0};
      for (float v : pa->second.data) s.pruned += v;
      const Tensor3& t = pb->second;
      const std::size_t plane = static_cast<std::size_t>(t.shape.height) * t.shape.width;
      std::vector<int> channels;
      if (auto m = maps.find(name); m != maps.end()) {
        channels = m->second->kept;
      } else {
        for (int c = 0; c < t.shape.channels; ++c) channels.push_back(c);
      }
      for (int c : channels) {
        if (c >= t.shape.channels) continue;
        for (std::size_t j = 0; j < plane; ++j) s.masked += t.data[c * plane + j];
      }
      report.node_sums.push_back(s);
    }
  }
  return report;
}

VerifyReport VerifyMaskedEquivalence(const GeneratorGraph& graph, const WeightStore& store,
                                     const PruningPlan& plan, int n_probes, std::uint64_t seed,
                                     double tol) {
  const PruneResult pruned = ApplyPlan(graph, store, plan);
  return VerifyPruned(graph, store, plan, pruned, n_probes, seed, tol);
}

double Median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double Percentile90(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(v.size())));
  return v[std::max<std::size_t>(rank, 1) - 1];
}

BenchStats Bench(const GeneratorGraph& graph, const WeightStore& store, int n_warmup, int n_runs,
                 const std::map<std::string, TensorShape>& input_shapes, std::uint64_t seed) {
  if (n_runs < 3) throw Error(ErrorCode::kConfig, "bench needs at least 3 runs");
  const GeneratorGraph g = input_shapes.empty() ? graph : WithInputShapes(graph, input_shapes);
  Validate(g);
  const InputSet probe = MakeProbes(g, 1, seed).front();
  for (int i = 0; i < n_warmup; ++i) Run(g, store, probe);
  BenchStats stats;
  for (int i = 0; i < n_runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Run(g, store, probe);
    const auto t1 = std::chrono::steady_clock::now();
    stats.runs_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  stats.median_ms = Median(stats.runs_ms);
  stats.p90_ms = Percentile90(stats.runs_ms);
  return stats;
}

std::string RenderBenchJson(const BenchStats& stats) {
  json doc{{"median_ms", stats.median_ms},
           {"p90_ms", stats.p90_ms},
           {"runs", static_cast<int>(stats.runs_ms.size())}};
  if (stats.speedup) doc["speedup"] = *stats.speedup;
  return doc.dump(2) + "\n";
}

BenchStats ParseBenchJson(std::string_view text) {
  const json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw Error(ErrorCode::kFormat, "benchmark report is not a JSON object");
  }
  try {
    BenchStats s;
    s.median_ms = doc.at("median_ms").get<double>();
    s.p90_ms = doc.at("p90_ms").get<double>();
    s.runs_ms.assign(doc.at("runs").get<int>(), s.median_ms);
    if (doc.contains("speedup")) s.speedup = doc["speedup"].get<double>();
    return s;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("malformed benchmark report: ") + e.what());
  }
}

}  // namespace unetprune
