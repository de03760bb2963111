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

#include "unetprune/builders.hpp"

#include <cctype>
#include <map>

#include "unetprune/error.hpp"

namespace unetprune {

extern const char kDefaultWavLayerTableJson[];

using nlohmann::json;

namespace {

constexpr int kPix2PixDepth = 8;

// Appends [norm] -> act after `id` and returns the last node id.
int AppendNormAct(GeneratorGraph& g, int id, const std::string& owner,
                  int channels, NormKind norm, std::optional<ActSpec> act) {
  if (norm != NormKind::kNone) {
    id = g.AddNode(owner + ".norm", NormSpec{norm, channels}, {id});
  }
  if (act) id = g.AddNode(owner + ".act", *act, {id});
  return id;
}

}  // namespace

GeneratorGraph BuildPix2Pix(const ArchConfig& cfg) {
  const TensorShape& in = cfg.input;
  constexpr int kDivisor = 1 << kPix2PixDepth;
  if (in.height < kDivisor || in.width < kDivisor || in.height % kDivisor ||
      in.width % kDivisor) {
    throw Error(ErrorCode::kConfig,
                "pix2pix input " + std::to_string(in.height) + "x" +
                    std::to_string(in.width) + " must be a multiple of " +
                    std::to_string(kDivisor) + " in both dimensions");
  }
  if (cfg.nf < 1 || in.channels < 1) {
    throw Error(ErrorCode::kConfig, "pix2pix needs nf >= 1 and channels >= 1");
  }
  const int nf = cfg.nf;
  const NormKind norm = cfg.norm;
  // Batch norm carries its own shift, so the preceding conv drops its bias.
  const bool normed_bias = norm != NormKind::kBatch;

  const int enc_out[kPix2PixDepth + 1] = {in.channels, nf,     2 * nf,
                                          4 * nf,      8 * nf, 8 * nf,
                                          8 * nf,      8 * nf, 8 * nf};
  // dec_out[k] is the output channel count of Uk.
  const int dec_out[kPix2PixDepth + 1] = {0,      3,      nf,     2 * nf, 4 * nf,
                                          8 * nf, 8 * nf, 8 * nf, 8 * nf};
  const ActSpec leaky{ActKind::kLeakyRelu, 0.2f};
  const ActSpec relu{ActKind::kRelu, 0.0f};

  GeneratorGraph g;
  g.arch = Arch::kPix2Pix;
  const int input = g.AddNode("input", InputSpec{in}, {});
  g.input_ids = {input};

  // skip_src[k] is the (activated) output of Ck that feeds both C(k+1) and the
  // decoder concat.
  int skip_src[kPix2PixDepth + 1] = {};
  int encoder_conv[kPix2PixDepth + 1] = {};
  int cur = input;
  for (int k = 1; k <= kPix2PixDepth; ++k) {
    const std::string name = "C" + std::to_string(k);
    const bool has_norm = k >= 2 && k <= 7;
    ConvSpec spec{enc_out[k - 1], enc_out[k], 4, 2, 2, 1,
                  k == 1 || !has_norm || normed_bias};
    if (k == kPix2PixDepth) spec.has_bias = normed_bias;
    cur = g.AddNode(name, spec, {cur});
    encoder_conv[k] = cur;
    // Innermost block: relu (not leaky) precedes U8.
    cur = AppendNormAct(g, cur, name, enc_out[k],
                        has_norm ? norm : NormKind::kNone,
                        k == kPix2PixDepth ? relu : leaky);
    skip_src[k] = cur;
  }

  for (int k = kPix2PixDepth; k >= 1; --k) {
    const std::string name = "U" + std::to_string(k);
    const int in_ch =
        k == kPix2PixDepth ? enc_out[kPix2PixDepth] : 2 * dec_out[k + 1];
    ConvTransposeSpec spec{in_ch, dec_out[k], 4, 2, 2, 1, 0,
                           k == 1 || normed_bias};
    cur = g.AddNode(name, spec, {cur});
    if (k == 1) {
      cur = g.AddNode(name + ".act", ActSpec{ActKind::kTanh, 0.0f}, {cur});
      break;
    }
    cur = AppendNormAct(g, cur, name, dec_out[k], norm, std::nullopt);
    const int cat = g.AddNode(name + ".cat", ConcatSpec{}, {skip_src[k - 1], cur});
    g.skip_edges.push_back({encoder_conv[k - 1], cat});
    cur = g.AddNode(name + ".cat.act", relu, {cat});
  }
  g.output_id = g.AddNode("output", OutputSpec{}, {cur});
  return g;
}

// ---------------------------------------------------------------------------
// Wav2Lip.

int EvalChannelExpr(std::string_view expr, int nvf, int naf, int ndf) {
  auto fail = [&]() {
    return Error(ErrorCode::kConfig,
                 "bad channel expression '" + std::string(expr) + "'");
  };
  int total = 0;
  std::size_t pos = 0;
  auto skip_ws = [&]() {
    while (pos < expr.size() && std::isspace(static_cast<unsigned char>(expr[pos]))) ++pos;
  };
  while (true) {
    skip_ws();
    int term = 1;
    bool any = false;
    // term := factor ('*' factor)*
    while (true) {
      skip_ws();
      if (pos < expr.size() && std::isdigit(static_cast<unsigned char>(expr[pos]))) {
        int v = 0;
        while (pos < expr.size() && std::isdigit(static_cast<unsigned char>(expr[pos]))) {
          v = v * 10 + (expr[pos] - '0');
          ++pos;
        }
        term *= v;
      } else if (expr.substr(pos, 3) == "nVF") {
        term *= nvf;
        pos += 3;
      } else if (expr.substr(pos, 3) == "nAF") {
        term *= naf;
        pos += 3;
      } else if (expr.substr(pos, 3) == "nDF") {
        term *= ndf;
        pos += 3;
      } else {
        throw fail();
      }
      any = true;
      skip_ws();
      if (pos < expr.size() && expr[pos] == '*') {
        ++pos;
        continue;
      }
      break;
    }
    if (!any) throw fail();
    total += term;
    skip_ws();
    if (pos == expr.size()) break;
    if (expr[pos] != '+') throw fail();
    ++pos;
  }
  return total;
}

namespace {

WavLayerRow ParseRow(const json& j, bool transpose_default) {
  static const char* kAllowed[] = {"name", "type", "in", "out", "kernel", "stride",
                                   "padding", "output_padding", "bias", "norm",
                                   "act", "skip"};
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : kAllowed) ok = ok || key == a;
    if (!ok) throw Error(ErrorCode::kFormat, "unknown layer-table field '" + key + "'");
  }
  WavLayerRow r;
  r.name = j.at("name").get<std::string>();
  r.transpose = transpose_default;
  if (j.contains("type")) {
    const auto t = j["type"].get<std::string>();
    if (t != "conv" && t != "conv_transpose") {
      throw Error(ErrorCode::kFormat, "layer '" + r.name + "' has unknown type " + t);
    }
    r.transpose = t == "conv_transpose";
  }
  r.in = j.at("in").get<std::string>();
  r.out = j.at("out").get<std::string>();
  r.kernel = j.at("kernel").get<int>();
  const json& s = j.at("stride");
  if (s.is_array()) {
    r.stride_h = s.at(0).get<int>();
    r.stride_w = s.at(1).get<int>();
  } else {
    r.stride_h = r.stride_w = s.get<int>();
  }
  r.padding = j.at("padding").get<int>();
  r.output_padding = j.value("output_padding", 0);
  r.bias = j.value("bias", true);
  r.norm = j.value("norm", true);
  r.act = j.value("act", std::string("relu"));
  r.skip = j.value("skip", std::string());
  return r;
}

std::pair<std::string, TensorShape> ParseInput(const json& j) {
  return {j.at("name").get<std::string>(),
          TensorShape{j.at("channels").get<int>(), j.at("height").get<int>(),
                      j.at("width").get<int>()}};
}

std::optional<ActSpec> ActFromName(const std::string& name) {
  if (name == "relu") return ActSpec{ActKind::kRelu, 0.0f};
  if (name == "leaky_relu") return ActSpec{ActKind::kLeakyRelu, 0.2f};
  if (name == "tanh") return ActSpec{ActKind::kTanh, 0.0f};
  if (name == "sigmoid") return ActSpec{ActKind::kSigmoid, 0.0f};
  if (name == "none" || name.empty()) return std::nullopt;
  throw Error(ErrorCode::kFormat, "unknown activation '" + name + "' in layer table");
}

}  // namespace

WavLayerTable ParseWavLayerTable(std::string_view json_text) {
  const json doc = json::parse(json_text, nullptr, false);
  if (doc.is_discarded()) {
    throw Error(ErrorCode::kFormat, "layer table is not valid JSON");
  }
  try {
    WavLayerTable t;
    std::tie(t.face_name, t.face_input) = ParseInput(doc.at("face_input"));
    std::tie(t.audio_name, t.audio_input) = ParseInput(doc.at("audio_input"));
    for (const json& r : doc.at("face_encoder")) t.face_encoder.push_back(ParseRow(r, false));
    for (const json& r : doc.at("audio_encoder")) t.audio_encoder.push_back(ParseRow(r, false));
    for (const json& r : doc.at("decoder")) t.decoder.push_back(ParseRow(r, true));
    for (const json& r : doc.at("output_block")) t.output_block.push_back(ParseRow(r, false));
    if (t.face_encoder.empty() || t.audio_encoder.empty() || t.output_block.empty()) {
      throw Error(ErrorCode::kFormat, "layer table has an empty section");
    }
    return t;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("malformed layer table: ") + e.what());
  }
}

const WavLayerTable& DefaultWavLayerTable() {
  static const WavLayerTable table = ParseWavLayerTable(kDefaultWavLayerTableJson);
  return table;
}

GeneratorGraph BuildWav2Lip(const ArchConfig& cfg, const WavLayerTable& table) {
  if (cfg.nvf < 1 || cfg.naf < 1 || cfg.ndf < 1) {
    throw Error(ErrorCode::kConfig, "wav2lip scales must be positive");
  }
  GeneratorGraph g;
  g.arch = Arch::kWav2Lip;
  auto channels = [&](const std::string& expr) {
    return EvalChannelExpr(expr, cfg.nvf, cfg.naf, cfg.ndf);
  };
  // Channel count produced by each node, tracked while building so that table
  // mistakes are reported against the row that declares them.
  std::map<int, int> produced;

  auto add_row = [&](const WavLayerRow& r, int src) {
    const int in_ch = channels(r.in);
    const int out_ch = channels(r.out);
    if (produced.at(src) != in_ch) {
      throw Error(ErrorCode::kChannelMismatch,
                  "layer table mismatch at '" + r.name + "': declares " +
                      std::to_string(in_ch) + " input channels but is fed " +
                      std::to_string(produced.at(src)));
    }
    const bool bias = r.bias;
    int id;
    if (r.transpose) {
      id = g.AddNode(r.name,
                     ConvTransposeSpec{in_ch, out_ch, r.kernel, r.stride_h,
                                       r.stride_w, r.padding, r.output_padding,
                                       bias},
                     {src});
    } else {
      id = g.AddNode(r.name,
                     ConvSpec{in_ch, out_ch, r.kernel, r.stride_h, r.stride_w,
                              r.padding, bias},
                     {src});
    }
    const int conv_id = id;
    id = AppendNormAct(g, id, r.name, out_ch, r.norm ? cfg.norm : NormKind::kNone,
                       ActFromName(r.act));
    produced[id] = out_ch;
    return std::pair{conv_id, id};
  };

  const TensorShape face_shape = cfg.face_input.value_or(table.face_input);
  const int face = g.AddNode(table.face_name, InputSpec{face_shape}, {});
  const int audio = g.AddNode(table.audio_name, InputSpec{table.audio_input}, {});
  g.input_ids = {face, audio};
  produced[face] = face_shape.channels;
  produced[audio] = table.audio_input.channels;

  std::map<std::string, std::pair<int, int>> face_layers;  // name -> (conv, act)
  int cur = face;
  for (const WavLayerRow& r : table.face_encoder) {
    auto ids = add_row(r, cur);
    face_layers[r.name] = ids;
    cur = ids.second;
  }
  const int face_embedding = cur;
  cur = audio;
  for (const WavLayerRow& r : table.audio_encoder) cur = add_row(r, cur).second;
  const int audio_embedding = cur;

  cur = g.AddNode("bottleneck", ConcatSpec{}, {audio_embedding, face_embedding});
  produced[cur] = produced[audio_embedding] + produced[face_embedding];

  for (const WavLayerRow& r : table.decoder) {
    cur = add_row(r, cur).second;
    if (r.skip.empty()) continue;
    auto it = face_layers.find(r.skip);
    if (it == face_layers.end()) {
      throw Error(ErrorCode::kConfig,
                  "decoder layer '" + r.name + "' skips from unknown layer '" +
                      r.skip + "'");
    }
    const int skip_src = it->second.second;
    const int cat = g.AddNode(r.name + ".cat", ConcatSpec{}, {cur, skip_src});
    produced[cat] = produced[cur] + produced[skip_src];
    g.skip_edges.push_back({it->second.first, cat});
    cur = cat;
  }
  for (const WavLayerRow& r : table.output_block) cur = add_row(r, cur).second;
  g.output_id = g.AddNode("output", OutputSpec{}, {cur});
  return g;
}

}  // namespace unetprune
