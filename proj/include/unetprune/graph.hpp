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

// Computation-graph representation for U-Net generators.
//
// A GeneratorGraph is a DAG of LayerNodes keyed by integer id. Node names are
// unique human labels ("C6", "U7", "CA5", "C2.bn", ...) and are what plans,
// weight stores and reports refer to. Batch size is implicitly 1.

#ifndef UNETPRUNE_GRAPH_HPP_
#define UNETPRUNE_GRAPH_HPP_

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

namespace unetprune {

struct TensorShape {
  int channels = 1;
  int height = 1;
  int width = 1;

  std::int64_t size() const {
    return std::int64_t{channels} * height * width;
  }
  std::string ToString() const;
  friend bool operator==(const TensorShape&, const TensorShape&) = default;
};

enum class NormKind { kBatch, kInstance, kNone };
enum class ActKind { kRelu, kLeakyRelu, kTanh, kSigmoid };

struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride_h = 1;
  int stride_w = 1;
  int padding = 0;
  bool has_bias = false;
};

// Kernel layout is [in_channels, out_channels, k, k].
struct ConvTransposeSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride_h = 1;
  int stride_w = 1;
  int padding = 0;
  int output_padding = 0;
  bool has_bias = false;
};

struct NormSpec {
  NormKind kind = NormKind::kBatch;
  int channels = 0;
};

struct ActSpec {
  ActKind kind = ActKind::kRelu;
  float slope = 0.2f;  // leaky_relu only
};

struct ConcatSpec {};

struct InputSpec {
  TensorShape shape;
};

struct OutputSpec {};

using NodeKind = std::variant<InputSpec, ConvSpec, ConvTransposeSpec, NormSpec,
                              ActSpec, ConcatSpec, OutputSpec>;

struct LayerNode {
  int id = 0;
  std::string name;
  NodeKind kind;
  std::vector<int> inputs;

  bool is_conv() const { return std::holds_alternative<ConvSpec>(kind); }
  bool is_conv_transpose() const {
    return std::holds_alternative<ConvTransposeSpec>(kind);
  }
  // Conv or transposed conv: the nodes that own filters.
  bool is_filter_layer() const { return is_conv() || is_conv_transpose(); }
  // Per-channel nodes that neither mix nor reorder channels.
  bool is_channelwise() const {
    return std::holds_alternative<NormSpec>(kind) ||
           std::holds_alternative<ActSpec>(kind);
  }
};

enum class Arch { kPix2Pix, kWav2Lip, kCustom };

const char* ArchName(Arch arch);
const char* NormKindName(NormKind kind);
const char* ActKindName(ActKind kind);
NormKind ParseNormKind(std::string_view text);

// Annotation: the encoder conv whose features reach `concat` via a skip path.
struct SkipEdge {
  int encoder = 0;
  int concat = 0;
  friend bool operator==(const SkipEdge&, const SkipEdge&) = default;
};

struct GeneratorGraph {
  Arch arch = Arch::kCustom;
  std::map<int, LayerNode> nodes;
  std::vector<int> input_ids;
  int output_id = -1;
  std::vector<SkipEdge> skip_edges;

  int AddNode(std::string name, NodeKind kind, std::vector<int> inputs);

  const LayerNode& node(int id) const;
  LayerNode& node(int id);
  const LayerNode* FindByName(std::string_view name) const;
  // Throws kUnknownLayer.
  const LayerNode& ByName(std::string_view name) const;

  std::vector<int> Consumers(int id) const;
  // Kahn order, ties broken by ascending id. Throws kCycle / kDanglingInput.
  std::vector<int> TopologicalOrder() const;
  // Names of conv and transposed-conv nodes in topological order.
  std::vector<std::string> FilterLayerNames() const;
};

// Output size of a strided window: floor((in + 2p - k) / s) + 1.
int ConvOutSize(int in, int kernel, int stride, int padding);
int ConvTransposeOutSize(int in, int kernel, int stride, int padding,
                         int output_padding);

struct ValidationReport {
  std::vector<int> order;
  std::map<int, TensorShape> shapes;

  std::string ToText(const GeneratorGraph& graph) const;
};

// Shape propagation plus structural checks. Throws Error with kCycle,
// kDanglingInput, kChannelMismatch, kUnreachable or kValidation.
ValidationReport Validate(const GeneratorGraph& graph);

// Filter layers whose output channels reach the network output through
// channelwise and concat nodes only. Their filters can never be pruned.
std::set<std::string> ProtectedOutputLayers(const GeneratorGraph& graph);

// Filter layers in topological order minus the protected output layer.
std::vector<std::string> PrunableLayers(const GeneratorGraph& graph);

nlohmann::json GraphToJson(const GeneratorGraph& graph);
// Throws kFormat on unknown/missing fields. Does not run Validate.
GeneratorGraph GraphFromJson(const nlohmann::json& doc);

std::string GraphToJsonString(const GeneratorGraph& graph);
GeneratorGraph GraphFromJsonString(std::string_view text);

}  // namespace unetprune

#endif  // UNETPRUNE_GRAPH_HPP_
