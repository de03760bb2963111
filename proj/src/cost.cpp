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

#include "unetprune/cost.hpp"

#include <cstdio>
#include <iomanip>
#include <sstream>

#include "unetprune/error.hpp"

namespace unetprune {

const char* MacConventionName(MacConvention c) {
  return c == MacConvention::kOutputGrid ? "output-grid" : "input-grid";
}

CostReport CountCost(const GeneratorGraph& graph, MacConvention convention,
                     const std::map<std::string, TensorShape>& input_shapes) {
  const GeneratorGraph* g = &graph;
  GeneratorGraph resized;
  if (!input_shapes.empty()) {
    resized = graph;
    for (const auto& [name, shape] : input_shapes) {
      const LayerNode& n = resized.ByName(name);
      auto* in = std::get_if<InputSpec>(&resized.node(n.id).kind);
      if (in == nullptr) {
        throw Error(ErrorCode::kConfig, "'" + name + "' is not an input node");
      }
      in->shape = shape;
    }
    g = &resized;
  }
  const ValidationReport shapes = Validate(*g);

  CostReport report;
  report.convention = convention;
  for (int id : shapes.order) {
    const LayerNode& n = g->node(id);
    LayerCost cost;
    cost.name = n.name;
    if (const auto* c = std::get_if<ConvSpec>(&n.kind)) {
      const std::int64_t taps = std::int64_t{c->out_channels} * c->in_channels * c->kernel * c->kernel;
      const TensorShape out = shapes.shapes.at(id);
      cost.params = taps + (c->has_bias ? c->out_channels : 0);
      cost.macs = taps * out.height * out.width;
    } else if (const auto* t = std::get_if<ConvTransposeSpec>(&n.kind)) {
      const std::int64_t taps = std::int64_t{t->out_channels} * t->in_channels * t->kernel * t->kernel;
      const TensorShape grid = convention == MacConvention::kOutputGrid
                                   ? shapes.shapes.at(id)
                                   : shapes.shapes.at(n.inputs[0]);
      cost.params = taps + (t->has_bias ? t->out_channels : 0);
      cost.macs = taps * grid.height * grid.width;
    } else if (const auto* s = std::get_if<NormSpec>(&n.kind)) {
      if (s->kind == NormKind::kNone) continue;
      cost.params = 2 * std::int64_t{s->channels};
      if (s->kind == NormKind::kBatch) cost.running_stats = 2 * std::int64_t{s->channels};
    } else {
      continue;
    }
    report.total_params += cost.params;
    report.total_macs += cost.macs;
    report.total_running_stats += cost.running_stats;
    report.per_layer.push_back(std::move(cost));
  }
  return report;
}

CostReport CountParams(const GeneratorGraph& graph) { return CountCost(graph); }

CostReport CountMacs(const GeneratorGraph& graph,
                     const std::map<std::string, TensorShape>& input_shapes,
                     MacConvention convention) {
  return CountCost(graph, convention, input_shapes);
}

std::string FormatRatio(double ratio) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f×", ratio);
  return buf;
}

std::string FormatCount(std::int64_t count, int decimals) {
  const char* suffix = "";
  double v = static_cast<double>(count);
  if (count >= 1'000'000'000) {
    v /= 1e9;
    suffix = "G";
  } else if (count >= 1'000'000) {
    v /= 1e6;
    suffix = "M";
  } else if (count >= 1'000) {
    v /= 1e3;
    suffix = "K";
  }
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f%s", decimals, v, suffix);
  return buf;
}

CostReduction DiffReports(const CostReport& original, const CostReport& pruned) {
  if (pruned.total_params == 0 || pruned.total_macs == 0) {
    throw Error(ErrorCode::kDivisionByZero, "pruned report has a zero total");
  }
  CostReduction r;
  r.original_params = original.total_params;
  r.pruned_params = pruned.total_params;
  r.original_macs = original.total_macs;
  r.pruned_macs = pruned.total_macs;
  r.params_ratio = static_cast<double>(original.total_params) / pruned.total_params;
  r.macs_ratio = static_cast<double>(original.total_macs) / pruned.total_macs;
  return r;
}

std::string CostReduction::ToText() const {
  std::ostringstream os;
  os << "params " << FormatCount(original_params, 1) << " -> "
     << FormatCount(pruned_params, 1) << " (" << FormatRatio(params_ratio) << ")\n"
     << "MACs   " << FormatCount(original_macs, 2) << " -> "
     << FormatCount(pruned_macs, 2) << " (" << FormatRatio(macs_ratio) << ")\n";
  return os.str();
}

namespace {

std::string ConventionHeader(MacConvention c) {
  std::string s =
      "# params: kernel + bias + norm affine (running stats listed separately)\n"
      "# MACs: conv = out_h*out_w*out_c*in_c*k*k; transposed conv = ";
  s += c == MacConvention::kOutputGrid ? "out_h*out_w" : "in_h*in_w";
  s += "*in_c*out_c*k*k; norm/act/concat = 0\n";
  return s;
}

}  // namespace

std::string RenderCostText(const CostReport& r) {
  std::ostringstream os;
  os << ConventionHeader(r.convention);
  os << std::left << std::setw(16) << "layer" << std::right << std::setw(14) << "params"
     << std::setw(16) << "macs" << "\n";
  for (const LayerCost& c : r.per_layer) {
    os << std::left << std::setw(16) << c.name << std::right << std::setw(14) << c.params
       << std::setw(16) << c.macs << "\n";
  }
  os << std::left << std::setw(16) << "TOTAL" << std::right << std::setw(14)
     << r.total_params << std::setw(16) << r.total_macs << "\n";
  os << "params " << FormatCount(r.total_params, 1) << ", MACs "
     << FormatCount(r.total_macs, 2) << ", running stats " << r.total_running_stats
     << "\n";
  return os.str();
}

std::string RenderCostCsv(const CostReport& r) {
  std::ostringstream os;
  os << "layer,params,macs\n";
  for (const LayerCost& c : r.per_layer) {
    os << c.name << "," << c.params << "," << c.macs << "\n";
  }
  os << "TOTAL," << r.total_params << "," << r.total_macs << "\n";
  return os.str();
}

std::string RenderCostJson(const CostReport& r) {
  nlohmann::json layers = nlohmann::json::array();
  for (const LayerCost& c : r.per_layer) {
    layers.push_back({{"layer", c.name},
                      {"params", c.params},
                      {"macs", c.macs},
                      {"running_stats", c.running_stats}});
  }
  nlohmann::json doc{{"convention", MacConventionName(r.convention)},
                     {"layers", layers},
                     {"total_params", r.total_params},
                     {"total_macs", r.total_macs},
                     {"total_running_stats", r.total_running_stats}};
  return doc.dump(2) + "\n";
}

}  // namespace unetprune
