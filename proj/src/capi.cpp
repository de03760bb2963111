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

#include "unetprune/unetprune.h"

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <string>
#include <utility>

#include "unetprune/builders.hpp"
#include "unetprune/container.hpp"
#include "unetprune/cost.hpp"
#include "unetprune/criteria.hpp"
#include "unetprune/error.hpp"
#include "unetprune/graph.hpp"
#include "unetprune/harness.hpp"
#include "unetprune/prune.hpp"
#include "unetprune/weights.hpp"

struct unp_graph {
  unetprune::GeneratorGraph graph;
};

struct unp_model {
  unetprune::Model model;
};

struct unp_plan {
  unetprune::PruningPlan plan;
};

namespace {

using unetprune::Error;
using unetprune::ErrorCode;

thread_local std::string g_last_error;

// Thrown for null pointers and out-of-range scalars at the boundary.
struct InvalidArgument {
  std::string message;
};

void Require(bool condition, const char* message) {
  if (!condition) throw InvalidArgument{message};
}

unp_status StatusFor(ErrorCode code) {
  return static_cast<unp_status>(static_cast<int>(code));
}

template <typename F>
unp_status Guard(F&& body) {
  try {
    body();
    g_last_error.clear();
    return UNP_OK;
  } catch (const InvalidArgument& e) {
    g_last_error = e.message;
    return UNP_ERR_INVALID_ARGUMENT;
  } catch (const Error& e) {
    g_last_error = e.what();
    return StatusFor(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return UNP_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return UNP_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown exception";
    return UNP_ERR_INTERNAL;
  }
}

char* CopyString(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size());
  out[s.size()] = '\0';
  return out;
}

void SetString(char** out, const std::string& s) {
  if (out != nullptr) *out = CopyString(s);
}

unetprune::MacConvention ToConvention(unp_mac_convention c) {
  switch (c) {
    case UNP_MACS_OUTPUT_GRID:
      return unetprune::MacConvention::kOutputGrid;
    case UNP_MACS_INPUT_GRID:
      return unetprune::MacConvention::kInputGrid;
  }
  throw InvalidArgument{"unknown MAC convention"};
}

unetprune::Criterion ToCriterion(unp_criterion c) {
  switch (c) {
    case UNP_CRITERION_L2:
      return unetprune::Criterion::kL2;
    case UNP_CRITERION_GM:
      return unetprune::Criterion::kGeometricMedian;
    case UNP_CRITERION_LAMP:
      return unetprune::Criterion::kLamp;
  }
  throw InvalidArgument{"unknown criterion"};
}

unetprune::PairInit ToPairInit(unp_pair_init init) {
  switch (init) {
    case UNP_PAIR_INIT_SKIP_SLICE:
      return unetprune::PairInit::kSkipSlice;
    case UNP_PAIR_INIT_RANDOM:
      return unetprune::PairInit::kRandom;
    case UNP_PAIR_INIT_AVERAGE:
      return unetprune::PairInit::kAverage;
  }
  throw InvalidArgument{"unknown pair init"};
}

unetprune::NormKind ToNorm(const char* norm) {
  return norm == nullptr ? unetprune::NormKind::kBatch : unetprune::ParseNormKind(norm);
}

// "name=CxHxW[;name=CxHxW]".
std::map<std::string, unetprune::TensorShape> ParseShapes(const char* text) {
  std::map<std::string, unetprune::TensorShape> shapes;
  if (text == nullptr) return shapes;
  std::string s(text);
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t end = s.find(';', pos);
    if (end == std::string::npos) end = s.size();
    const std::string item = s.substr(pos, end - pos);
    pos = end + 1;
    if (item.empty()) continue;
    const std::size_t eq = item.find('=');
    unetprune::TensorShape shape;
    char tail = 0;
    if (eq == std::string::npos || eq == 0 ||
        std::sscanf(item.c_str() + eq + 1, "%dx%dx%d%c", &shape.channels, &shape.height,
                    &shape.width, &tail) != 3 ||
        shape.channels <= 0 || shape.height <= 0 || shape.width <= 0) {
      throw Error(ErrorCode::kConfig, "bad input shape '" + item + "', expected name=CxHxW");
    }
    shapes[item.substr(0, eq)] = shape;
  }
  return shapes;
}

}  // namespace

extern "C" {

const char* unp_version(void) { return "0.1.0"; }

const char* unp_last_error(void) { return g_last_error.c_str(); }

const char* unp_status_name(unp_status status) {
  switch (status) {
    case UNP_OK:
      return "ok";
    case UNP_ERR_INVALID_ARGUMENT:
      return "invalid_argument";
    default:
      break;
  }
  const int v = static_cast<int>(status);
  if (v >= static_cast<int>(ErrorCode::kConfig) && v <= static_cast<int>(ErrorCode::kInternal)) {
    return unetprune::ErrorCodeName(static_cast<ErrorCode>(v));
  }
  return "unknown";
}

void unp_string_free(char* s) { std::free(s); }

void unp_buffer_free(void* p) { std::free(p); }

unp_status unp_graph_build_pix2pix(int nf, int height, int width, const char* norm,
                                   unp_graph** out) {
  return Guard([&] {
    Require(out != nullptr, "out is null");
    unetprune::ArchConfig cfg;
    cfg.arch = unetprune::Arch::kPix2Pix;
    cfg.nf = nf;
    cfg.input = {3, height, width};
    cfg.norm = ToNorm(norm);
    auto g = std::make_unique<unp_graph>(unp_graph{unetprune::BuildPix2Pix(cfg)});
    *out = g.release();
  });
}

unp_status unp_graph_build_wav2lip(int nvf, int naf, int ndf, const char* table_json,
                                   int face_height, int face_width, const char* norm,
                                   unp_graph** out) {
  return Guard([&] {
    Require(out != nullptr, "out is null");
    Require(face_height >= 0 && face_width >= 0, "negative face size");
    Require((face_height == 0) == (face_width == 0), "face size needs both height and width");
    unetprune::ArchConfig cfg;
    cfg.arch = unetprune::Arch::kWav2Lip;
    cfg.nvf = nvf;
    cfg.naf = naf;
    cfg.ndf = ndf;
    cfg.norm = ToNorm(norm);
    const unetprune::WavLayerTable table = table_json == nullptr
                                               ? unetprune::DefaultWavLayerTable()
                                               : unetprune::ParseWavLayerTable(table_json);
    if (face_height > 0) {
      cfg.face_input = unetprune::TensorShape{table.face_input.channels, face_height, face_width};
    }
    auto g = std::make_unique<unp_graph>(unp_graph{unetprune::BuildWav2Lip(cfg, table)});
    *out = g.release();
  });
}

unp_status unp_graph_from_json(const char* text, unp_graph** out) {
  return Guard([&] {
    Require(text != nullptr && out != nullptr, "null argument");
    auto g = std::make_unique<unp_graph>(unp_graph{unetprune::GraphFromJsonString(text)});
    unetprune::Validate(g->graph);
    *out = g.release();
  });
}

unp_status unp_graph_to_json(const unp_graph* graph, char** out) {
  return Guard([&] {
    Require(graph != nullptr && out != nullptr, "null argument");
    SetString(out, unetprune::GraphToJsonString(graph->graph));
  });
}

unp_status unp_graph_validate(const unp_graph* graph, char** report) {
  return Guard([&] {
    Require(graph != nullptr, "graph is null");
    const unetprune::ValidationReport r = unetprune::Validate(graph->graph);
    SetString(report, r.ToText(graph->graph));
  });
}

unp_status unp_graph_set_input_shape(unp_graph* graph, const char* input, int channels,
                                     int height, int width) {
  return Guard([&] {
    Require(graph != nullptr && input != nullptr, "null argument");
    Require(channels > 0 && height > 0 && width > 0, "input shape must be positive");
    unetprune::GeneratorGraph g = unetprune::WithInputShapes(
        graph->graph, {{input, unetprune::TensorShape{channels, height, width}}});
    unetprune::Validate(g);
    graph->graph = std::move(g);
  });
}

unp_status unp_graph_bottleneck(const unp_graph* graph, int* channels, int* height, int* width) {
  return Guard([&] {
    Require(graph != nullptr, "graph is null");
    const unetprune::TensorShape s = unetprune::BottleneckShape(graph->graph);
    if (channels != nullptr) *channels = s.channels;
    if (height != nullptr) *height = s.height;
    if (width != nullptr) *width = s.width;
  });
}

unp_status unp_graph_layers(const unp_graph* graph, char** out) {
  return Guard([&] {
    Require(graph != nullptr && out != nullptr, "null argument");
    SetString(out, nlohmann::json(graph->graph.FilterLayerNames()).dump());
  });
}

unp_status unp_graph_clone(const unp_graph* graph, unp_graph** out) {
  return Guard([&] {
    Require(graph != nullptr && out != nullptr, "null argument");
    *out = new unp_graph{graph->graph};
  });
}

void unp_graph_free(unp_graph* graph) { delete graph; }

unp_status unp_model_init_random(const unp_graph* graph, uint64_t seed, unp_model** out) {
  return Guard([&] {
    Require(graph != nullptr && out != nullptr, "null argument");
    unetprune::Validate(graph->graph);
    auto m = std::make_unique<unp_model>();
    m->model.graph = graph->graph;
    m->model.store = unetprune::InitRandom(graph->graph, seed);
    *out = m.release();
  });
}

unp_status unp_model_read(const char* path, unp_model** out) {
  return Guard([&] {
    Require(path != nullptr && out != nullptr, "null argument");
    *out = new unp_model{unetprune::ReadContainer(path)};
  });
}

unp_status unp_model_write(const unp_model* model, const char* path) {
  return Guard([&] {
    Require(model != nullptr && path != nullptr, "null argument");
    unetprune::WriteContainer(model->model.graph, model->model.store, path);
  });
}

unp_status unp_model_from_bytes(const void* data, size_t size, unp_model** out) {
  return Guard([&] {
    Require(out != nullptr && (data != nullptr || size == 0), "null argument");
    const std::string_view bytes(static_cast<const char*>(data), size);
    *out = new unp_model{unetprune::ParseContainer(bytes)};
  });
}

unp_status unp_model_to_bytes(const unp_model* model, void** data, size_t* size) {
  return Guard([&] {
    Require(model != nullptr && data != nullptr && size != nullptr, "null argument");
    const std::string bytes = unetprune::SerializeContainer(model->model.graph,
                                                            model->model.store);
    void* buf = std::malloc(bytes.size());
    if (buf == nullptr) throw std::bad_alloc();
    std::memcpy(buf, bytes.data(), bytes.size());
    *data = buf;
    *size = bytes.size();
  });
}

unp_status unp_model_graph(const unp_model* model, unp_graph** out) {
  return Guard([&] {
    Require(model != nullptr && out != nullptr, "null argument");
    *out = new unp_graph{model->model.graph};
  });
}

void unp_model_free(unp_model* model) { delete model; }

unp_status unp_cost_totals(const unp_graph* graph, unp_mac_convention convention,
                           int64_t* params, int64_t* macs) {
  return Guard([&] {
    Require(graph != nullptr, "graph is null");
    const unetprune::CostReport r = unetprune::CountCost(graph->graph, ToConvention(convention));
    if (params != nullptr) *params = r.total_params;
    if (macs != nullptr) *macs = r.total_macs;
  });
}

unp_status unp_cost_report(const unp_graph* graph, unp_mac_convention convention,
                           unp_format format, char** out) {
  return Guard([&] {
    Require(graph != nullptr && out != nullptr, "null argument");
    const unetprune::CostReport r = unetprune::CountCost(graph->graph, ToConvention(convention));
    switch (format) {
      case UNP_FORMAT_TEXT:
        SetString(out, unetprune::RenderCostText(r));
        return;
      case UNP_FORMAT_CSV:
        SetString(out, unetprune::RenderCostCsv(r));
        return;
      case UNP_FORMAT_JSON:
        SetString(out, unetprune::RenderCostJson(r));
        return;
    }
    throw InvalidArgument{"unknown format"};
  });
}

unp_status unp_cost_diff(const unp_graph* original, const unp_graph* pruned,
                         unp_mac_convention convention, char** out) {
  return Guard([&] {
    Require(original != nullptr && pruned != nullptr && out != nullptr, "null argument");
    const auto c = ToConvention(convention);
    SetString(out, unetprune::DiffReports(unetprune::CountCost(original->graph, c),
                                          unetprune::CountCost(pruned->graph, c))
                       .ToText());
  });
}

unp_status unp_scores_csv(const unp_model* model, unp_criterion criterion, char** out) {
  return Guard([&] {
    Require(model != nullptr && out != nullptr, "null argument");
    SetString(out, unetprune::RenderScoresCsv(unetprune::Score(
                       model->model.graph, model->model.store, ToCriterion(criterion))));
  });
}

unp_status unp_plan_preset(const unp_model* model, const char* name, unp_criterion criterion,
                           unp_plan** out) {
  return Guard([&] {
    Require(model != nullptr && name != nullptr && out != nullptr, "null argument");
    *out = new unp_plan{unetprune::PlanPreset(model->model.graph, model->model.store, name,
                                              ToCriterion(criterion))};
  });
}

unp_status unp_plan_uniform(const unp_model* model, unp_criterion criterion, double ratio,
                            int plus, unp_plan** out) {
  return Guard([&] {
    Require(model != nullptr && out != nullptr, "null argument");
    const auto& g = model->model.graph;
    const auto c = ToCriterion(criterion);
    const auto scores = unetprune::Score(g, model->model.store, c);
    std::set<std::string> exclusions;
    if (plus != 0) exclusions = unetprune::UniformPlusExclusions(g);
    unetprune::PruningPlan plan = unetprune::PlanUniform(g, scores, ratio, exclusions);
    plan.criterion = unetprune::CriterionName(c);
    *out = new unp_plan{std::move(plan)};
  });
}

unp_status unp_plan_global(const unp_model* model, unp_criterion criterion, double ratio,
                           unp_plan** out) {
  return Guard([&] {
    Require(model != nullptr && out != nullptr, "null argument");
    const auto& g = model->model.graph;
    const auto c = ToCriterion(criterion);
    unetprune::PruningPlan plan =
        unetprune::PlanGlobal(g, unetprune::Score(g, model->model.store, c), ratio);
    plan.criterion = unetprune::CriterionName(c);
    *out = new unp_plan{std::move(plan)};
  });
}

unp_status unp_plan_inner(const unp_model* model, unp_criterion criterion,
                          const char* const* layers, const double* ratios, size_t count,
                          unp_plan** out) {
  return Guard([&] {
    Require(model != nullptr && out != nullptr, "null argument");
    Require(count == 0 || (layers != nullptr && ratios != nullptr), "null layer list");
    std::vector<std::pair<std::string, double>> layer_ratios;
    for (size_t i = 0; i < count; ++i) {
      Require(layers[i] != nullptr, "null layer name");
      layer_ratios.emplace_back(layers[i], ratios[i]);
    }
    const auto& g = model->model.graph;
    const auto c = ToCriterion(criterion);
    unetprune::PruningPlan plan =
        unetprune::PlanInner(g, unetprune::Score(g, model->model.store, c), layer_ratios);
    plan.criterion = unetprune::CriterionName(c);
    *out = new unp_plan{std::move(plan)};
  });
}

unp_status unp_plan_from_json(const char* text, unp_plan** out) {
  return Guard([&] {
    Require(text != nullptr && out != nullptr, "null argument");
    *out = new unp_plan{unetprune::PlanFromJson(text)};
  });
}

unp_status unp_plan_to_json(const unp_plan* plan, char** out) {
  return Guard([&] {
    Require(plan != nullptr && out != nullptr, "null argument");
    SetString(out, unetprune::PlanToJson(plan->plan));
  });
}

size_t unp_plan_action_count(const unp_plan* plan) {
  return plan == nullptr ? 0 : plan->plan.actions.size();
}

void unp_plan_free(unp_plan* plan) { delete plan; }

unp_status unp_presets_describe(char** out) {
  return Guard([&] {
    Require(out != nullptr, "out is null");
    std::string text;
    char line[512];
    for (const unetprune::Preset& p : unetprune::Presets()) {
      std::snprintf(line, sizeof(line), "  %-20s %-8s %s\n", p.name.c_str(),
                    unetprune::ArchName(p.arch), p.summary.c_str());
      text += line;
    }
    SetString(out, text);
  });
}

unp_status unp_prune(const unp_model* model, const unp_plan* plan, unp_model** out,
                     char** channel_maps) {
  return Guard([&] {
    Require(model != nullptr && plan != nullptr && out != nullptr, "null argument");
    unetprune::PruneResult r =
        unetprune::ApplyPlan(model->model.graph, model->model.store, plan->plan);
    auto m = std::make_unique<unp_model>();
    m->model.graph = std::move(r.graph);
    m->model.store = std::move(r.store);
    SetString(channel_maps, unetprune::ChannelMapsToJson(r.maps));
    *out = m.release();
  });
}

unp_status unp_cut_layers(const unp_model* model, int depth, unp_pair_init init, uint64_t seed,
                          unp_model** out, char** channel_maps) {
  return Guard([&] {
    Require(model != nullptr && out != nullptr, "null argument");
    unetprune::PruneOptions options;
    options.pair_init = ToPairInit(init);
    options.seed = seed;
    unetprune::PruneResult r = unetprune::RemoveInnerLayers(model->model.graph,
                                                            model->model.store, depth, options);
    auto m = std::make_unique<unp_model>();
    m->model.graph = std::move(r.graph);
    m->model.store = std::move(r.store);
    SetString(channel_maps, unetprune::ChannelMapsToJson(r.maps));
    *out = m.release();
  });
}

unp_status unp_sweep(const unp_model* model, const double* ratios, size_t n_ratios,
                     unp_criterion criterion, int n_probes, uint64_t seed, char** csv) {
  return Guard([&] {
    Require(model != nullptr && csv != nullptr, "null argument");
    Require(n_probes > 0, "n_probes must be positive");
    unetprune::SweepOptions options;
    options.criterion = ToCriterion(criterion);
    if (ratios != nullptr) options.ratios.assign(ratios, ratios + n_ratios);
    const auto probes = unetprune::MakeProbes(model->model.graph, n_probes, seed);
    SetString(csv, unetprune::RenderSensitivityCsv(unetprune::SensitivitySweep(
                       model->model.graph, model->model.store, probes, options)));
  });
}

unp_status unp_verify(const unp_model* model, const unp_plan* plan, int n_probes, uint64_t seed,
                      double tolerance, unp_verify_result* result, char** report) {
  return Guard([&] {
    Require(model != nullptr && plan != nullptr && result != nullptr, "null argument");
    Require(n_probes > 0, "n_probes must be positive");
    Require(tolerance >= 0.0, "tolerance must be non-negative");
    const unetprune::VerifyReport r = unetprune::VerifyMaskedEquivalence(
        model->model.graph, model->model.store, plan->plan, n_probes, seed, tolerance);
    result->pass = r.pass ? 1 : 0;
    result->max_deviation = r.max_deviation;
    result->probes = r.probes;
    result->first_failing_probe = r.first_failing_probe;
    SetString(report, r.ToText());
  });
}

unp_status unp_bench(const unp_model* model, int n_warmup, int n_runs, const char* input_shapes,
                     uint64_t seed, const char* baseline_json, unp_bench_result* result,
                     char** json) {
  return Guard([&] {
    Require(model != nullptr, "model is null");
    Require(n_warmup >= 0, "n_warmup must be non-negative");
    std::optional<double> baseline_median;
    if (baseline_json != nullptr) {
      baseline_median = unetprune::ParseBenchJson(baseline_json).median_ms;
    }
    unetprune::BenchStats stats =
        unetprune::Bench(model->model.graph, model->model.store, n_warmup, n_runs,
                         ParseShapes(input_shapes), seed);
    if (baseline_median) {
      if (stats.median_ms <= 0.0) {
        throw Error(ErrorCode::kDivisionByZero, "benchmark median is zero");
      }
      stats.speedup = *baseline_median / stats.median_ms;
    }
    if (result != nullptr) {
      result->median_ms = stats.median_ms;
      result->p90_ms = stats.p90_ms;
      result->runs = static_cast<int>(stats.runs_ms.size());
      result->speedup = stats.speedup.value_or(0.0);
    }
    SetString(json, unetprune::RenderBenchJson(stats));
  });
}

}  // extern "C"
