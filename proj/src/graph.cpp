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

#include "unetprune/graph.hpp"

#include <algorithm>
#include <queue>
#include <set>
#include <sstream>

#include "unetprune/error.hpp"

namespace unetprune {

using nlohmann::json;

const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kValidation: return "validation";
    case ErrorCode::kCycle: return "cycle";
    case ErrorCode::kDanglingInput: return "dangling-input";
    case ErrorCode::kChannelMismatch: return "channel-mismatch";
    case ErrorCode::kUnreachable: return "unreachable";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kBadMagic: return "bad-magic";
    case ErrorCode::kVersionMismatch: return "version-mismatch";
    case ErrorCode::kTruncated: return "truncated";
    case ErrorCode::kDimsMismatch: return "dims-mismatch";
    case ErrorCode::kPlan: return "plan";
    case ErrorCode::kUnknownLayer: return "unknown-layer";
    case ErrorCode::kDivisionByZero: return "division-by-zero";
    case ErrorCode::kInternal: return "internal";
  }
  return "unknown";
}

std::string TensorShape::ToString() const {
  std::ostringstream os;
  os << "(" << channels << "," << height << "," << width << ")";
  return os.str();
}

const char* ArchName(Arch arch) {
  switch (arch) {
    case Arch::kPix2Pix: return "pix2pix";
    case Arch::kWav2Lip: return "wav2lip";
    case Arch::kCustom: return "custom";
  }
  return "custom";
}

const char* NormKindName(NormKind kind) {
  switch (kind) {
    case NormKind::kBatch: return "batch";
    case NormKind::kInstance: return "instance";
    case NormKind::kNone: return "none";
  }
  return "none";
}

const char* ActKindName(ActKind kind) {
  switch (kind) {
    case ActKind::kRelu: return "relu";
    case ActKind::kLeakyRelu: return "leaky_relu";
    case ActKind::kTanh: return "tanh";
    case ActKind::kSigmoid: return "sigmoid";
  }
  return "relu";
}

NormKind ParseNormKind(std::string_view text) {
  if (text == "batch") return NormKind::kBatch;
  if (text == "instance") return NormKind::kInstance;
  if (text == "none") return NormKind::kNone;
  throw Error(ErrorCode::kConfig, "unknown norm kind '" + std::string(text) + "'");
}

namespace {

Arch ParseArch(std::string_view text) {
  if (text == "pix2pix") return Arch::kPix2Pix;
  if (text == "wav2lip") return Arch::kWav2Lip;
  if (text == "custom") return Arch::kCustom;
  throw Error(ErrorCode::kFormat, "unknown arch '" + std::string(text) + "'");
}

ActKind ParseActKind(std::string_view text) {
  if (text == "relu") return ActKind::kRelu;
  if (text == "leaky_relu") return ActKind::kLeakyRelu;
  if (text == "tanh") return ActKind::kTanh;
  if (text == "sigmoid") return ActKind::kSigmoid;
  throw Error(ErrorCode::kFormat, "unknown activation '" + std::string(text) + "'");
}

}  // namespace

int GeneratorGraph::AddNode(std::string name, NodeKind kind,
                            std::vector<int> inputs) {
  const int id = nodes.empty() ? 0 : nodes.rbegin()->first + 1;
  nodes.emplace(id, LayerNode{id, std::move(name), std::move(kind),
                              std::move(inputs)});
  return id;
}

const LayerNode& GeneratorGraph::node(int id) const {
  auto it = nodes.find(id);
  if (it == nodes.end()) {
    throw Error(ErrorCode::kDanglingInput,
                "no node with id " + std::to_string(id));
  }
  return it->second;
}

LayerNode& GeneratorGraph::node(int id) {
  auto it = nodes.find(id);
  if (it == nodes.end()) {
    throw Error(ErrorCode::kDanglingInput,
                "no node with id " + std::to_string(id));
  }
  return it->second;
}

const LayerNode* GeneratorGraph::FindByName(std::string_view name) const {
  for (const auto& [id, n] : nodes) {
    if (n.name == name) return &n;
  }
  return nullptr;
}

const LayerNode& GeneratorGraph::ByName(std::string_view name) const {
  const LayerNode* n = FindByName(name);
  if (n == nullptr) {
    throw Error(ErrorCode::kUnknownLayer,
                "unknown layer '" + std::string(name) + "'");
  }
  return *n;
}

std::vector<int> GeneratorGraph::Consumers(int id) const {
  std::vector<int> out;
  for (const auto& [nid, n] : nodes) {
    if (std::find(n.inputs.begin(), n.inputs.end(), id) != n.inputs.end()) {
      out.push_back(nid);
    }
  }
  return out;
}

std::vector<int> GeneratorGraph::TopologicalOrder() const {
  std::map<int, int> indegree;
  for (const auto& [id, n] : nodes) {
    indegree[id] += 0;
    for (int in : n.inputs) {
      if (!nodes.count(in)) {
        throw Error(ErrorCode::kDanglingInput,
                    "node '" + n.name + "' reads missing node id " +
                        std::to_string(in));
      }
      indegree[id]++;
    }
  }
  std::map<int, std::vector<int>> consumers;
  for (const auto& [id, n] : nodes) {
    for (int in : n.inputs) consumers[in].push_back(id);
  }
  std::priority_queue<int, std::vector<int>, std::greater<>> ready;
  for (const auto& [id, d] : indegree) {
    if (d == 0) ready.push(id);
  }
  std::vector<int> order;
  order.reserve(nodes.size());
  while (!ready.empty()) {
    const int id = ready.top();
    ready.pop();
    order.push_back(id);
    for (int c : consumers[id]) {
      // A node may list the same input twice; each edge counts once.
      if (--indegree[c] == 0) ready.push(c);
    }
  }
  if (order.size() != nodes.size()) {
    for (const auto& [id, d] : indegree) {
      if (d > 0) {
        throw Error(ErrorCode::kCycle,
                    "cycle detected through node '" + node(id).name + "'");
      }
    }
  }
  return order;
}

std::vector<std::string> GeneratorGraph::FilterLayerNames() const {
  std::vector<std::string> names;
  for (int id : TopologicalOrder()) {
    const LayerNode& n = node(id);
    if (n.is_filter_layer()) names.push_back(n.name);
  }
  return names;
}

int ConvOutSize(int in, int kernel, int stride, int padding) {
  const int span = in + 2 * padding - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

int ConvTransposeOutSize(int in, int kernel, int stride, int padding,
                         int output_padding) {
  return (in - 1) * stride - 2 * padding + kernel + output_padding;
}

namespace {

void CheckArity(const LayerNode& n) {
  const std::size_t arity = n.inputs.size();
  bool ok = true;
  if (std::holds_alternative<InputSpec>(n.kind)) {
    ok = arity == 0;
  } else if (std::holds_alternative<ConcatSpec>(n.kind)) {
    ok = arity >= 2;
  } else {
    ok = arity == 1;
  }
  if (!ok) {
    throw Error(ErrorCode::kValidation,
                "node '" + n.name + "' has " + std::to_string(arity) +
                    " inputs, which its kind does not allow");
  }
}

template <typename Spec>
void CheckWindowSpec(const LayerNode& n, const Spec& s) {
  if (s.in_channels < 1 || s.out_channels < 1 || s.kernel < 1 ||
      s.stride_h < 1 || s.stride_w < 1 || s.padding < 0) {
    throw Error(ErrorCode::kValidation,
                "node '" + n.name + "' has a non-positive conv parameter");
  }
}

TensorShape PropagateOne(const GeneratorGraph& g, const LayerNode& n,
                         const std::map<int, TensorShape>& shapes) {
  auto in_shape = [&](std::size_t i) { return shapes.at(n.inputs[i]); };
  auto mismatch = [&](int expected, int got) {
    return Error(ErrorCode::kChannelMismatch,
                 "channel mismatch at '" + n.name + "': expects " +
                     std::to_string(expected) + " input channels but is fed " +
                     std::to_string(got));
  };
  return std::visit(
      [&](const auto& spec) -> TensorShape {
        using T = std::decay_t<decltype(spec)>;
        if constexpr (std::is_same_v<T, InputSpec>) {
          const TensorShape& s = spec.shape;
          if (s.channels < 1 || s.height < 1 || s.width < 1) {
            throw Error(ErrorCode::kValidation,
                        "input '" + n.name + "' has a non-positive dimension");
          }
          return s;
        } else if constexpr (std::is_same_v<T, ConvSpec>) {
          CheckWindowSpec(n, spec);
          const TensorShape in = in_shape(0);
          if (in.channels != spec.in_channels) {
            throw mismatch(spec.in_channels, in.channels);
          }
          const TensorShape out{
              spec.out_channels,
              ConvOutSize(in.height, spec.kernel, spec.stride_h, spec.padding),
              ConvOutSize(in.width, spec.kernel, spec.stride_w, spec.padding)};
          if (out.height < 1 || out.width < 1) {
            throw Error(ErrorCode::kValidation,
                        "conv '" + n.name + "' produces an empty map from " +
                            in.ToString());
          }
          return out;
        } else if constexpr (std::is_same_v<T, ConvTransposeSpec>) {
          CheckWindowSpec(n, spec);
          const TensorShape in = in_shape(0);
          if (in.channels != spec.in_channels) {
            throw mismatch(spec.in_channels, in.channels);
          }
          const TensorShape out{
              spec.out_channels,
              ConvTransposeOutSize(in.height, spec.kernel, spec.stride_h,
                                   spec.padding, spec.output_padding),
              ConvTransposeOutSize(in.width, spec.kernel, spec.stride_w,
                                   spec.padding, spec.output_padding)};
          if (out.height < 1 || out.width < 1) {
            throw Error(ErrorCode::kValidation,
                        "transposed conv '" + n.name +
                            "' produces an empty map");
          }
          return out;
        } else if constexpr (std::is_same_v<T, NormSpec>) {
          const TensorShape in = in_shape(0);
          if (in.channels != spec.channels) {
            throw mismatch(spec.channels, in.channels);
          }
          return in;
        } else if constexpr (std::is_same_v<T, ConcatSpec>) {
          TensorShape out = in_shape(0);
          for (std::size_t i = 1; i < n.inputs.size(); ++i) {
            const TensorShape s = in_shape(i);
            if (s.height != out.height || s.width != out.width) {
              throw Error(ErrorCode::kChannelMismatch,
                          "concat '" + n.name + "' joins " + out.ToString() +
                              " with " + s.ToString() +
                              " (spatial sizes differ)");
            }
            out.channels += s.channels;
          }
          return out;
        } else {
          // act, output
          return in_shape(0);
        }
      },
      n.kind);
  (void)g;
}

}  // namespace

ValidationReport Validate(const GeneratorGraph& g) {
  if (g.input_ids.empty()) {
    throw Error(ErrorCode::kValidation, "graph declares no inputs");
  }
  if (!g.nodes.count(g.output_id) ||
      !std::holds_alternative<OutputSpec>(g.node(g.output_id).kind)) {
    throw Error(ErrorCode::kValidation, "graph output is not an output node");
  }
  std::set<std::string> names;
  std::set<int> declared_inputs(g.input_ids.begin(), g.input_ids.end());
  for (const auto& [id, n] : g.nodes) {
    if (!names.insert(n.name).second) {
      throw Error(ErrorCode::kValidation, "duplicate node name '" + n.name + "'");
    }
    for (int in : n.inputs) {
      if (!g.nodes.count(in)) {
        throw Error(ErrorCode::kDanglingInput,
                    "node '" + n.name + "' reads missing node id " +
                        std::to_string(in));
      }
    }
    CheckArity(n);
    const bool is_input = std::holds_alternative<InputSpec>(n.kind);
    if (is_input != (declared_inputs.count(id) > 0)) {
      throw Error(ErrorCode::kValidation,
                  "node '" + n.name + "' input declaration is inconsistent");
    }
    if (std::holds_alternative<OutputSpec>(n.kind) && id != g.output_id) {
      throw Error(ErrorCode::kValidation, "second output node '" + n.name + "'");
    }
  }

  ValidationReport report;
  report.order = g.TopologicalOrder();
  for (int id : report.order) {
    report.shapes[id] = PropagateOne(g, g.node(id), report.shapes);
  }

  // The output must be reachable from every input.
  std::map<int, std::vector<int>> consumers;
  for (const auto& [id, n] : g.nodes) {
    for (int in : n.inputs) consumers[in].push_back(id);
  }
  for (int input : g.input_ids) {
    std::set<int> seen{input};
    std::vector<int> stack{input};
    while (!stack.empty()) {
      const int cur = stack.back();
      stack.pop_back();
      for (int c : consumers[cur]) {
        if (seen.insert(c).second) stack.push_back(c);
      }
    }
    if (!seen.count(g.output_id)) {
      throw Error(ErrorCode::kUnreachable,
                  "output is unreachable from input '" + g.node(input).name +
                      "'");
    }
  }

  for (const SkipEdge& e : g.skip_edges) {
    if (!g.nodes.count(e.encoder) || !g.nodes.count(e.concat) ||
        !std::holds_alternative<ConcatSpec>(g.node(e.concat).kind)) {
      throw Error(ErrorCode::kValidation, "skip edge refers to invalid nodes");
    }
  }
  return report;
}

std::string ValidationReport::ToText(const GeneratorGraph& g) const {
  std::ostringstream os;
  os << "validated " << order.size() << " nodes\n";
  for (int id : order) {
    const LayerNode& n = g.node(id);
    const char* kind = std::visit(
        [](const auto& s) -> const char* {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, InputSpec>) return "input";
          else if constexpr (std::is_same_v<T, ConvSpec>) return "conv";
          else if constexpr (std::is_same_v<T, ConvTransposeSpec>) return "conv_transpose";
          else if constexpr (std::is_same_v<T, NormSpec>) return "norm";
          else if constexpr (std::is_same_v<T, ActSpec>) return "act";
          else if constexpr (std::is_same_v<T, ConcatSpec>) return "concat";
          else return "output";
        },
        n.kind);
    os << "  " << n.name << " [" << kind << "] -> " << shapes.at(id).ToString()
       << "\n";
  }
  return os.str();
}

std::set<std::string> ProtectedOutputLayers(const GeneratorGraph& g) {
  std::set<std::string> out;
  if (!g.nodes.count(g.output_id)) return out;
  std::vector<int> frontier = g.node(g.output_id).inputs;
  std::set<int> seen;
  while (!frontier.empty()) {
    const int id = frontier.back();
    frontier.pop_back();
    if (!seen.insert(id).second || !g.nodes.count(id)) continue;
    const LayerNode& n = g.node(id);
    if (n.is_filter_layer()) {
      out.insert(n.name);
    } else if (n.is_channelwise() || std::holds_alternative<ConcatSpec>(n.kind)) {
      frontier.insert(frontier.end(), n.inputs.begin(), n.inputs.end());
    }
  }
  return out;
}

std::vector<std::string> PrunableLayers(const GeneratorGraph& g) {
  const std::set<std::string> protected_layers = ProtectedOutputLayers(g);
  std::vector<std::string> out;
  for (auto& name : g.FilterLayerNames()) {
    if (protected_layers.count(name)) continue;
    out.push_back(std::move(name));
  }
  return out;
}

// ---------------------------------------------------------------------------
// JSON topology format.

namespace {

json StrideToJson(int h, int w) {
  if (h == w) return h;
  return json::array({h, w});
}

void StrideFromJson(const json& j, int* h, int* w) {
  if (j.is_number_integer()) {
    *h = *w = j.get<int>();
  } else if (j.is_array() && j.size() == 2) {
    *h = j[0].get<int>();
    *w = j[1].get<int>();
  } else {
    throw Error(ErrorCode::kFormat, "stride must be an integer or [h, w]");
  }
}

void RejectUnknown(const json& obj, std::initializer_list<const char*> allowed,
                   const std::string& where) {
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (const char* a : allowed) {
      if (key == a) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw Error(ErrorCode::kFormat,
                  "unknown field '" + key + "' in " + where);
    }
  }
}

template <typename T>
T Required(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw Error(ErrorCode::kFormat,
                std::string("missing field '") + key + "' in " + where);
  }
  return it->get<T>();
}

}  // namespace

json GraphToJson(const GeneratorGraph& g) {
  json nodes = json::array();
  for (const auto& [id, n] : g.nodes) {
    json j;
    j["id"] = id;
    j["name"] = n.name;
    j["inputs"] = n.inputs;
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, InputSpec>) {
            j["kind"] = "input";
            j["channels"] = s.shape.channels;
            j["height"] = s.shape.height;
            j["width"] = s.shape.width;
          } else if constexpr (std::is_same_v<T, ConvSpec> ||
                               std::is_same_v<T, ConvTransposeSpec>) {
            j["kind"] = std::is_same_v<T, ConvSpec> ? "conv" : "conv_transpose";
            j["in_channels"] = s.in_channels;
            j["out_channels"] = s.out_channels;
            j["kernel"] = s.kernel;
            j["stride"] = StrideToJson(s.stride_h, s.stride_w);
            j["padding"] = s.padding;
            j["bias"] = s.has_bias;
            if constexpr (std::is_same_v<T, ConvTransposeSpec>) {
              j["output_padding"] = s.output_padding;
            }
          } else if constexpr (std::is_same_v<T, NormSpec>) {
            j["kind"] = "norm";
            j["norm"] = NormKindName(s.kind);
            j["channels"] = s.channels;
          } else if constexpr (std::is_same_v<T, ActSpec>) {
            j["kind"] = "act";
            j["act"] = ActKindName(s.kind);
            if (s.kind == ActKind::kLeakyRelu) j["slope"] = s.slope;
          } else if constexpr (std::is_same_v<T, ConcatSpec>) {
            j["kind"] = "concat";
          } else {
            j["kind"] = "output";
          }
        },
        n.kind);
    nodes.push_back(std::move(j));
  }
  json skips = json::array();
  for (const SkipEdge& e : g.skip_edges) {
    skips.push_back(json::array({e.encoder, e.concat}));
  }
  json doc;
  doc["arch"] = ArchName(g.arch);
  doc["nodes"] = std::move(nodes);
  doc["inputs"] = g.input_ids;
  doc["output"] = g.output_id;
  doc["skip_edges"] = std::move(skips);
  return doc;
}

GeneratorGraph GraphFromJson(const json& doc) {
  try {
    if (!doc.is_object()) {
      throw Error(ErrorCode::kFormat, "graph document must be an object");
    }
    RejectUnknown(doc, {"arch", "nodes", "inputs", "output", "skip_edges"},
                  "graph");
    GeneratorGraph g;
    g.arch = ParseArch(Required<std::string>(doc, "arch", "graph"));
    for (const json& j : Required<json>(doc, "nodes", "graph")) {
      const std::string where =
          "node " + (j.contains("name") ? j["name"].get<std::string>()
                                        : std::string("?"));
      const auto kind = Required<std::string>(j, "kind", where);
      LayerNode n;
      n.id = Required<int>(j, "id", where);
      n.name = Required<std::string>(j, "name", where);
      n.inputs = Required<std::vector<int>>(j, "inputs", where);
      if (kind == "input") {
        RejectUnknown(j, {"id", "name", "kind", "inputs", "channels", "height", "width"}, where);
        n.kind = InputSpec{TensorShape{Required<int>(j, "channels", where),
                                       Required<int>(j, "height", where),
                                       Required<int>(j, "width", where)}};
      } else if (kind == "conv") {
        RejectUnknown(j, {"id", "name", "kind", "inputs", "in_channels", "out_channels",
                          "kernel", "stride", "padding", "bias"}, where);
        ConvSpec s;
        s.in_channels = Required<int>(j, "in_channels", where);
        s.out_channels = Required<int>(j, "out_channels", where);
        s.kernel = Required<int>(j, "kernel", where);
        StrideFromJson(Required<json>(j, "stride", where), &s.stride_h, &s.stride_w);
        s.padding = Required<int>(j, "padding", where);
        s.has_bias = Required<bool>(j, "bias", where);
        n.kind = s;
      } else if (kind == "conv_transpose") {
        RejectUnknown(j, {"id", "name", "kind", "inputs", "in_channels", "out_channels",
                          "kernel", "stride", "padding", "output_padding", "bias"}, where);
        ConvTransposeSpec s;
        s.in_channels = Required<int>(j, "in_channels", where);
        s.out_channels = Required<int>(j, "out_channels", where);
        s.kernel = Required<int>(j, "kernel", where);
        StrideFromJson(Required<json>(j, "stride", where), &s.stride_h, &s.stride_w);
        s.padding = Required<int>(j, "padding", where);
        s.output_padding = j.value("output_padding", 0);
        s.has_bias = Required<bool>(j, "bias", where);
        n.kind = s;
      } else if (kind == "norm") {
        RejectUnknown(j, {"id", "name", "kind", "inputs", "norm", "channels"}, where);
        NormSpec s;
        s.kind = ParseNormKind(Required<std::string>(j, "norm", where));
        s.channels = Required<int>(j, "channels", where);
        n.kind = s;
      } else if (kind == "act") {
        RejectUnknown(j, {"id", "name", "kind", "inputs", "act", "slope"}, where);
        ActSpec s;
        s.kind = ParseActKind(Required<std::string>(j, "act", where));
        s.slope = j.value("slope", 0.2f);
        n.kind = s;
      } else if (kind == "concat") {
        RejectUnknown(j, {"id", "name", "kind", "inputs"}, where);
        n.kind = ConcatSpec{};
      } else if (kind == "output") {
        RejectUnknown(j, {"id", "name", "kind", "inputs"}, where);
        n.kind = OutputSpec{};
      } else {
        throw Error(ErrorCode::kFormat, "unknown node kind '" + kind + "'");
      }
      if (!g.nodes.emplace(n.id, n).second) {
        throw Error(ErrorCode::kFormat, "duplicate node id " + std::to_string(n.id));
      }
    }
    g.input_ids = Required<std::vector<int>>(doc, "inputs", "graph");
    g.output_id = Required<int>(doc, "output", "graph");
    if (doc.contains("skip_edges")) {
      for (const json& e : doc["skip_edges"]) {
        if (!e.is_array() || e.size() != 2) {
          throw Error(ErrorCode::kFormat, "skip edge must be [encoder, concat]");
        }
        g.skip_edges.push_back({e[0].get<int>(), e[1].get<int>()});
      }
    }
    return g;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("malformed graph JSON: ") + e.what());
  }
}

std::string GraphToJsonString(const GeneratorGraph& g) {
  return GraphToJson(g).dump(2) + "\n";
}

GeneratorGraph GraphFromJsonString(std::string_view text) {
  json doc = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded()) {
    throw Error(ErrorCode::kFormat, "graph file is not valid JSON");
  }
  return GraphFromJson(doc);
}

}  // namespace unetprune
