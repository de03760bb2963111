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

// unetprune: command-line front end over the C API.
//
// Exit codes: 0 success, 1 verification failure, 2 usage or configuration
// error, 3 I/O or format error.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "unetprune/unetprune.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitIo = 3;

struct Failure {
  int exit_code;
  std::string message;
};

int ExitCodeFor(unp_status status) {
  switch (status) {
    case UNP_OK:
      return kExitOk;
    case UNP_ERR_IO:
    case UNP_ERR_FORMAT:
    case UNP_ERR_BAD_MAGIC:
    case UNP_ERR_VERSION_MISMATCH:
    case UNP_ERR_TRUNCATED:
    case UNP_ERR_DIMS_MISMATCH:
    case UNP_ERR_INTERNAL:
      return kExitIo;
    default:
      return kExitUsage;
  }
}

void Check(unp_status status) {
  if (status != UNP_OK) {
    throw Failure{ExitCodeFor(status),
                  std::string(unp_status_name(status)) + ": " + unp_last_error()};
  }
}

struct Deleter {
  void operator()(unp_graph* p) const { unp_graph_free(p); }
  void operator()(unp_model* p) const { unp_model_free(p); }
  void operator()(unp_plan* p) const { unp_plan_free(p); }
  void operator()(char* p) const { unp_string_free(p); }
};
using GraphPtr = std::unique_ptr<unp_graph, Deleter>;
using ModelPtr = std::unique_ptr<unp_model, Deleter>;
using PlanPtr = std::unique_ptr<unp_plan, Deleter>;

// Takes ownership of a C string returned by the library.
std::string Take(char* s) {
  std::unique_ptr<char, Deleter> owned(s);
  return s == nullptr ? std::string() : std::string(s);
}

struct GlobalFlags {
  std::uint64_t seed = 0;
  std::string format = "text";
  std::string out;
};

void RequireInputFile(const std::string& path) {
  std::error_code ec;
  if (!std::filesystem::is_regular_file(path, ec)) {
    throw Failure{kExitIo, "cannot read '" + path + "': no such file"};
  }
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw Failure{kExitIo, "cannot read '" + path + "'"};
}

void RequireOutputPath(const std::string& path) {
  if (path.empty()) return;
  const std::filesystem::path p(path);
  const std::filesystem::path parent = p.has_parent_path() ? p.parent_path() : ".";
  std::error_code ec;
  if (!std::filesystem::is_directory(parent, ec)) {
    throw Failure{kExitIo, "cannot write '" + path + "': directory does not exist"};
  }
  if (std::filesystem::is_directory(p, ec)) {
    throw Failure{kExitIo, "cannot write '" + path + "': is a directory"};
  }
}

std::string ReadText(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{kExitIo, "cannot read '" + path + "'"};
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void Emit(const std::string& out, const std::string& text) {
  if (out.empty()) {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  f << text;
  f.close();
  if (!f) throw Failure{kExitIo, "cannot write '" + out + "'"};
}

bool IsContainer(const std::string& bytes) { return bytes.compare(0, 4, "UNPR") == 0; }

ModelPtr LoadModel(const std::string& path) {
  const std::string bytes = ReadText(path);
  unp_model* m = nullptr;
  Check(unp_model_from_bytes(bytes.data(), bytes.size(), &m));
  return ModelPtr(m);
}

// Graph JSON or a weights container.
GraphPtr LoadGraph(const std::string& path) {
  const std::string bytes = ReadText(path);
  unp_graph* g = nullptr;
  if (IsContainer(bytes)) {
    unp_model* m = nullptr;
    Check(unp_model_from_bytes(bytes.data(), bytes.size(), &m));
    ModelPtr model(m);
    Check(unp_model_graph(model.get(), &g));
  } else {
    Check(unp_graph_from_json(bytes.c_str(), &g));
  }
  return GraphPtr(g);
}

PlanPtr LoadPlan(const std::string& path) {
  unp_plan* p = nullptr;
  Check(unp_plan_from_json(ReadText(path).c_str(), &p));
  return PlanPtr(p);
}

std::string GraphJson(const unp_graph* g) {
  char* s = nullptr;
  Check(unp_graph_to_json(g, &s));
  return Take(s);
}

unp_criterion ParseCriterion(const std::string& name) {
  if (name == "l2") return UNP_CRITERION_L2;
  if (name == "gm" || name == "geometric-median") return UNP_CRITERION_GM;
  if (name == "lamp") return UNP_CRITERION_LAMP;
  throw Failure{kExitUsage, "unknown criterion '" + name + "'"};
}

unp_format ParseFormat(const std::string& name) {
  if (name == "text") return UNP_FORMAT_TEXT;
  if (name == "csv") return UNP_FORMAT_CSV;
  if (name == "json") return UNP_FORMAT_JSON;
  throw Failure{kExitUsage, "unknown format '" + name + "'"};
}

unp_mac_convention ParseConvention(const std::string& name) {
  if (name == "output-grid") return UNP_MACS_OUTPUT_GRID;
  if (name == "input-grid") return UNP_MACS_INPUT_GRID;
  throw Failure{kExitUsage, "unknown MAC convention '" + name + "'"};
}

unp_pair_init ParsePairInit(const std::string& name) {
  if (name == "skip-slice") return UNP_PAIR_INIT_SKIP_SLICE;
  if (name == "random") return UNP_PAIR_INIT_RANDOM;
  if (name == "average") return UNP_PAIR_INIT_AVERAGE;
  throw Failure{kExitUsage, "unknown pair init '" + name + "'"};
}

std::pair<int, int> ParseSize(const std::string& text) {
  int h = 0;
  int w = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%dx%d%c", &h, &w, &tail) != 2 || h <= 0 || w <= 0) {
    throw Failure{kExitUsage, "bad size '" + text + "', expected HxW"};
  }
  return {h, w};
}

// "C6=0.5,C7=0.75".
std::vector<std::pair<std::string, double>> ParseLayerRatios(const std::string& text) {
  std::vector<std::pair<std::string, double>> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const std::size_t eq = item.find('=');
    double ratio = 0.0;
    std::size_t used = 0;
    try {
      if (eq == std::string::npos || eq == 0) throw std::invalid_argument(item);
      ratio = std::stod(item.substr(eq + 1), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || eq + 1 + used != item.size()) {
      throw Failure{kExitUsage, "bad layer ratio '" + item + "', expected LAYER=RATIO"};
    }
    out.emplace_back(item.substr(0, eq), ratio);
  }
  if (out.empty()) throw Failure{kExitUsage, "--inner needs at least one LAYER=RATIO"};
  return out;
}

std::string PresetHelp() {
  char* s = nullptr;
  if (unp_presets_describe(&s) != UNP_OK) return {};
  return "Presets (plan --preset NAME):\n" + Take(s);
}

void AddGlobalFlags(CLI::App& app, GlobalFlags& flags) {
  app.add_option("--seed", flags.seed, "Seed for weights, probes and random pair init")
      ->capture_default_str();
  app.add_option("--format", flags.format, "Report format")
      ->check(CLI::IsMember({"text", "csv", "json"}))
      ->capture_default_str();
  app.add_option("-o,--out", flags.out, "Output file (default: stdout)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structured pruning for U-Net GAN generators"};
  app.require_subcommand(1);
  app.fallthrough();
  app.footer(PresetHelp());
  GlobalFlags flags;
  AddGlobalFlags(app, flags);

  // build
  std::string arch;
  int nf = 64;
  std::vector<int> scales;
  std::string input_size;
  std::string norm = "batch";
  std::string table_path;
  CLI::App* build = app.add_subcommand("build", "Build a generator graph and write its JSON");
  build->add_option("--arch", arch, "pix2pix or wav2lip")
      ->required()
      ->check(CLI::IsMember({"pix2pix", "wav2lip"}));
  CLI::Option* nf_opt = build->add_option("--nf", nf, "Pix2Pix base filter count")
                            ->capture_default_str();
  CLI::Option* scales_opt =
      build->add_option("--scales", scales, "Wav2Lip face,audio,decoder filter scales")
          ->delimiter(',')
          ->expected(3);
  build->add_option("--input-size", input_size, "Input HxW (Wav2Lip: face input)");
  build->add_option("--norm", norm, "batch, instance or none")->capture_default_str();
  build->add_option("--table", table_path, "Wav2Lip layer table JSON");

  // cost
  std::string graph_path;
  std::string weights_path;
  std::string baseline_path;
  std::string convention = "output-grid";
  CLI::App* cost = app.add_subcommand("cost", "Per-layer parameters and MACs");
  cost->add_option("graph", graph_path, "Graph JSON or weights container")->required();
  cost->add_option("--weights", weights_path, "Weights container that must match the graph");
  cost->add_option("--baseline", baseline_path,
                   "Original graph or container; appends the reduction (text format)");
  cost->add_option("--convention", convention, "Transposed-conv MAC grid")
      ->check(CLI::IsMember({"output-grid", "input-grid"}))
      ->capture_default_str();

  // init-weights
  CLI::App* init = app.add_subcommand("init-weights", "Seeded random weights for a graph");
  init->add_option("graph", graph_path, "Graph JSON")->required();

  // score
  std::string model_path;
  std::string criterion;
  CLI::App* score = app.add_subcommand("score", "Per-filter importance scores as CSV");
  score->add_option("weights", model_path, "Weights container")->required();
  score->add_option("--criterion", criterion, "l2, gm or lamp")->default_val("l2");

  // plan
  std::string preset;
  double uniform = -1.0;
  double uniform_plus = -1.0;
  double global = -1.0;
  std::string inner;
  CLI::App* plan = app.add_subcommand("plan", "Write a pruning plan JSON");
  plan->add_option("weights", model_path, "Weights container")->required();
  CLI::Option* o_preset = plan->add_option("--preset", preset, "Named preset (see below)");
  CLI::Option* o_uniform = plan->add_option("--uniform", uniform, "Same ratio in every layer");
  CLI::Option* o_uplus = plan->add_option(
      "--uniform-plus", uniform_plus, "Uniform, excluding the first and last prunable layers");
  CLI::Option* o_global = plan->add_option("--global", global,
                                           "Global threshold over all layers (default lamp)");
  CLI::Option* o_inner = plan->add_option("--inner", inner, "Per-layer ratios, C6=0.5,C7=0.5");
  o_preset->excludes(o_uniform, o_uplus, o_global, o_inner);
  o_uniform->excludes(o_uplus, o_global, o_inner);
  o_uplus->excludes(o_global, o_inner);
  o_global->excludes(o_inner);
  plan->add_option("--criterion", criterion, "l2, gm or lamp");

  // prune
  std::string plan_path;
  std::string maps_path;
  CLI::App* prune = app.add_subcommand("prune", "Apply a plan and write the pruned container");
  prune->add_option("weights", model_path, "Weights container")->required();
  prune->add_option("plan", plan_path, "Plan JSON")->required();
  prune->add_option("--maps", maps_path, "Write channel maps JSON here");

  // cut-layers
  int depth = 1;
  std::string pair_init = "skip-slice";
  CLI::App* cut = app.add_subcommand("cut-layers", "Remove innermost encoder/decoder pairs");
  cut->add_option("weights", model_path, "Weights container")->required();
  cut->add_option("--depth", depth, "Pairs to remove, 1..3")->required();
  cut->add_option("--init", pair_init, "skip-slice, random or average")->capture_default_str();
  cut->add_option("--maps", maps_path, "Write channel maps JSON here");

  // sweep
  std::vector<double> ratios = {0.25, 0.5, 0.75};
  int probes = 8;
  CLI::App* sweep = app.add_subcommand("sweep", "Per-layer sensitivity CSV");
  sweep->add_option("weights", model_path, "Weights container")->required();
  sweep->add_option("--ratios", ratios, "Ratios to try per layer")
      ->delimiter(',')
      ->capture_default_str();
  sweep->add_option("--criterion", criterion, "l2, gm or lamp")->default_val("l2");
  sweep->add_option("--probes", probes, "Random probe inputs")->capture_default_str();

  // verify
  double tolerance = 1e-5;
  CLI::App* verify = app.add_subcommand(
      "verify", "Check the pruned model against the slice-zeroed original");
  verify->add_option("weights", model_path, "Original weights container")->required();
  verify->add_option("plan", plan_path, "Plan JSON")->required();
  verify->add_option("--probes", probes, "Random probe inputs")->capture_default_str();
  verify->add_option("--tol", tolerance, "Elementwise tolerance")->capture_default_str();

  // bench
  int warmup = 2;
  int runs = 10;
  std::string inputs;
  CLI::App* bench = app.add_subcommand("bench", "Forward-pass latency as JSON");
  bench->add_option("weights", model_path, "Weights container")->required();
  bench->add_option("--warmup", warmup, "Untimed runs")->capture_default_str();
  bench->add_option("--runs", runs, "Timed runs (>= 3)")->capture_default_str();
  bench->add_option("--baseline", baseline_path, "Earlier bench JSON; adds the speedup");
  bench->add_option("--input", inputs, "Input sizes, name=CxHxW[;name=CxHxW]");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (build->parsed()) {
      const bool pix = arch == "pix2pix";
      if (pix && scales_opt->count() > 0) throw Failure{kExitUsage, "--scales is for wav2lip"};
      if (!pix && nf_opt->count() > 0) throw Failure{kExitUsage, "--nf is for pix2pix"};
      if (pix && !table_path.empty()) throw Failure{kExitUsage, "--table is for wav2lip"};
      if (!table_path.empty()) RequireInputFile(table_path);
      RequireOutputPath(flags.out);
      unp_graph* g = nullptr;
      if (pix) {
        const auto [h, w] = input_size.empty() ? std::pair{256, 256} : ParseSize(input_size);
        Check(unp_graph_build_pix2pix(nf, h, w, norm.c_str(), &g));
      } else {
        if (scales.empty()) scales = {8, 16, 16};
        const auto [h, w] = input_size.empty() ? std::pair{0, 0} : ParseSize(input_size);
        const std::string table = table_path.empty() ? std::string() : ReadText(table_path);
        Check(unp_graph_build_wav2lip(scales[0], scales[1], scales[2],
                                      table_path.empty() ? nullptr : table.c_str(), h, w,
                                      norm.c_str(), &g));
      }
      GraphPtr graph(g);
      Emit(flags.out, GraphJson(graph.get()) + "\n");
      return kExitOk;
    }

    if (cost->parsed()) {
      RequireInputFile(graph_path);
      if (!weights_path.empty()) RequireInputFile(weights_path);
      if (!baseline_path.empty()) {
        RequireInputFile(baseline_path);
        if (flags.format != "text") throw Failure{kExitUsage, "--baseline needs --format text"};
      }
      RequireOutputPath(flags.out);
      const unp_format format = ParseFormat(flags.format);
      const unp_mac_convention conv = ParseConvention(convention);
      GraphPtr graph = LoadGraph(graph_path);
      if (!weights_path.empty()) {
        ModelPtr model = LoadModel(weights_path);
        unp_graph* wg = nullptr;
        Check(unp_model_graph(model.get(), &wg));
        GraphPtr weights_graph(wg);
        if (GraphJson(weights_graph.get()) != GraphJson(graph.get())) {
          throw Failure{kExitIo, "weights in '" + weights_path + "' do not match the graph"};
        }
      }
      char* report = nullptr;
      Check(unp_cost_report(graph.get(), conv, format, &report));
      std::string text = Take(report);
      if (!baseline_path.empty()) {
        GraphPtr original = LoadGraph(baseline_path);
        char* diff = nullptr;
        Check(unp_cost_diff(original.get(), graph.get(), conv, &diff));
        text += Take(diff);
      }
      Emit(flags.out, text);
      return kExitOk;
    }

    if (init->parsed()) {
      RequireInputFile(graph_path);
      if (flags.out.empty()) throw Failure{kExitUsage, "init-weights needs --out"};
      RequireOutputPath(flags.out);
      GraphPtr graph = LoadGraph(graph_path);
      unp_model* m = nullptr;
      Check(unp_model_init_random(graph.get(), flags.seed, &m));
      ModelPtr model(m);
      Check(unp_model_write(model.get(), flags.out.c_str()));
      return kExitOk;
    }

    if (score->parsed()) {
      RequireInputFile(model_path);
      RequireOutputPath(flags.out);
      const unp_criterion c = ParseCriterion(criterion);
      ModelPtr model = LoadModel(model_path);
      char* csv = nullptr;
      Check(unp_scores_csv(model.get(), c, &csv));
      Emit(flags.out, Take(csv));
      return kExitOk;
    }

    if (plan->parsed()) {
      RequireInputFile(model_path);
      RequireOutputPath(flags.out);
      if (o_preset->count() + o_uniform->count() + o_uplus->count() + o_global->count() +
              o_inner->count() !=
          1) {
        throw Failure{kExitUsage,
                      "plan needs one of --preset, --uniform, --uniform-plus, --global, --inner"};
      }
      const unp_criterion c =
          ParseCriterion(criterion.empty() ? (o_global->count() > 0 ? "lamp" : "l2") : criterion);
      const auto layer_ratios = inner.empty() ? decltype(ParseLayerRatios(inner)){}
                                              : ParseLayerRatios(inner);
      ModelPtr model = LoadModel(model_path);
      unp_plan* p = nullptr;
      if (o_preset->count() > 0) {
        Check(unp_plan_preset(model.get(), preset.c_str(), c, &p));
      } else if (o_uniform->count() > 0) {
        Check(unp_plan_uniform(model.get(), c, uniform, 0, &p));
      } else if (o_uplus->count() > 0) {
        Check(unp_plan_uniform(model.get(), c, uniform_plus, 1, &p));
      } else if (o_global->count() > 0) {
        Check(unp_plan_global(model.get(), c, global, &p));
      } else {
        std::vector<const char*> names;
        std::vector<double> values;
        for (const auto& [layer, ratio] : layer_ratios) {
          names.push_back(layer.c_str());
          values.push_back(ratio);
        }
        Check(unp_plan_inner(model.get(), c, names.data(), values.data(), names.size(), &p));
      }
      PlanPtr result(p);
      char* json = nullptr;
      Check(unp_plan_to_json(result.get(), &json));
      Emit(flags.out, Take(json) + "\n");
      return kExitOk;
    }

    if (prune->parsed() || cut->parsed()) {
      RequireInputFile(model_path);
      if (prune->parsed()) RequireInputFile(plan_path);
      if (flags.out.empty()) throw Failure{kExitUsage, "pruning needs --out"};
      RequireOutputPath(flags.out);
      RequireOutputPath(maps_path);
      const unp_pair_init init_kind = ParsePairInit(pair_init);
      ModelPtr model = LoadModel(model_path);
      unp_model* m = nullptr;
      char* maps = nullptr;
      char** maps_out = maps_path.empty() ? nullptr : &maps;
      if (prune->parsed()) {
        PlanPtr p = LoadPlan(plan_path);
        Check(unp_prune(model.get(), p.get(), &m, maps_out));
      } else {
        Check(unp_cut_layers(model.get(), depth, init_kind, flags.seed, &m, maps_out));
      }
      ModelPtr pruned(m);
      const std::string maps_json = Take(maps);
      Check(unp_model_write(pruned.get(), flags.out.c_str()));
      if (!maps_path.empty()) Emit(maps_path, maps_json + "\n");
      unp_graph* before = nullptr;
      unp_graph* after = nullptr;
      Check(unp_model_graph(model.get(), &before));
      GraphPtr before_graph(before);
      Check(unp_model_graph(pruned.get(), &after));
      GraphPtr after_graph(after);
      char* diff = nullptr;
      Check(unp_cost_diff(before_graph.get(), after_graph.get(), UNP_MACS_OUTPUT_GRID, &diff));
      std::cout << Take(diff);
      return kExitOk;
    }

    if (sweep->parsed()) {
      RequireInputFile(model_path);
      RequireOutputPath(flags.out);
      const unp_criterion c = ParseCriterion(criterion);
      ModelPtr model = LoadModel(model_path);
      char* csv = nullptr;
      Check(unp_sweep(model.get(), ratios.data(), ratios.size(), c, probes, flags.seed, &csv));
      Emit(flags.out, Take(csv));
      return kExitOk;
    }

    if (verify->parsed()) {
      RequireInputFile(model_path);
      RequireInputFile(plan_path);
      RequireOutputPath(flags.out);
      ModelPtr model = LoadModel(model_path);
      PlanPtr p = LoadPlan(plan_path);
      unp_verify_result result{};
      char* report = nullptr;
      Check(unp_verify(model.get(), p.get(), probes, flags.seed, tolerance, &result, &report));
      Emit(flags.out, Take(report));
      return result.pass != 0 ? kExitOk : kExitVerifyFailed;
    }

    if (bench->parsed()) {
      RequireInputFile(model_path);
      if (!baseline_path.empty()) RequireInputFile(baseline_path);
      RequireOutputPath(flags.out);
      const std::string baseline = baseline_path.empty() ? std::string()
                                                         : ReadText(baseline_path);
      ModelPtr model = LoadModel(model_path);
      unp_bench_result result{};
      char* json = nullptr;
      Check(unp_bench(model.get(), warmup, runs, inputs.empty() ? nullptr : inputs.c_str(),
                      flags.seed, baseline_path.empty() ? nullptr : baseline.c_str(), &result,
                      &json));
      Emit(flags.out, Take(json) + "\n");
      return kExitOk;
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return f.exit_code;
  }
  return kExitUsage;
}
