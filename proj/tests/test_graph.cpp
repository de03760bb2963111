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

#include <doctest.h>

#include <set>
#include <string>
#include <vector>

#include "test_util.hpp"
#include "unetprune/builders.hpp"
#include "unetprune/error.hpp"
#include "unetprune/graph.hpp"

using namespace unetprune;

namespace {

ErrorCode CodeOf(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::kInternal;
}

std::string MessageOf(const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

GeneratorGraph Pix(int nf, int size = 256) {
  ArchConfig cfg;
  cfg.nf = nf;
  cfg.input = {3, size, size};
  return BuildPix2Pix(cfg);
}

GeneratorGraph Wav() {
  ArchConfig cfg;
  cfg.arch = Arch::kWav2Lip;
  return BuildWav2Lip(cfg, DefaultWavLayerTable());
}

}  // namespace

TEST_SUITE("graph") {

TEST_CASE("pix2pix has sixteen conv-type layers in topological order") {
  const GeneratorGraph g = Pix(64);
  const std::vector<std::string> expected = {"C1", "C2", "C3", "C4", "C5", "C6", "C7", "C8",
                                             "U8", "U7", "U6", "U5", "U4", "U3", "U2", "U1"};
  CHECK(g.FilterLayerNames() == expected);
  CHECK(g.arch == Arch::kPix2Pix);
  CHECK(g.skip_edges.size() == 7);
}

TEST_CASE("pix2pix spatial trace halves to 1x1 and doubles back") {
  const GeneratorGraph g = Pix(64);
  const ValidationReport r = Validate(g);
  int expected = 256;
  for (int k = 1; k <= 8; ++k) {
    expected /= 2;
    const TensorShape s = r.shapes.at(g.ByName("C" + std::to_string(k)).id);
    CHECK(s.height == expected);
    CHECK(s.width == expected);
  }
  CHECK(r.shapes.at(g.ByName("C8").id) == TensorShape{512, 1, 1});
  for (int k = 8; k >= 1; --k) {
    expected *= 2;
    CHECK(r.shapes.at(g.ByName("U" + std::to_string(k)).id).height == expected);
  }
  CHECK(r.shapes.at(g.output_id) == TensorShape{3, 256, 256});
  CHECK(r.ToText(g).find("C8") != std::string::npos);
}

TEST_CASE("pix2pix channel schedule") {
  const GeneratorGraph g = Pix(32);
  CHECK(std::get<ConvSpec>(g.ByName("C4").kind).out_channels == 256);
  CHECK(std::get<ConvSpec>(g.ByName("C1").kind).in_channels == 3);
  CHECK(std::get<ConvTransposeSpec>(g.ByName("U8").kind).in_channels == 256);
  CHECK(std::get<ConvTransposeSpec>(g.ByName("U7").kind).in_channels == 512);
  CHECK(std::get<ConvTransposeSpec>(g.ByName("U4").kind).out_channels == 128);
  CHECK(std::get<ConvTransposeSpec>(g.ByName("U1").kind).in_channels == 64);
  CHECK(std::get<ConvTransposeSpec>(g.ByName("U1").kind).out_channels == 3);
  CHECK(std::get<ConvSpec>(g.ByName("C1").kind).has_bias);
  CHECK_FALSE(std::get<ConvSpec>(g.ByName("C2").kind).has_bias);
  CHECK(std::get<ConvTransposeSpec>(g.ByName("U1").kind).has_bias);
  CHECK_FALSE(std::get<ConvTransposeSpec>(g.ByName("U2").kind).has_bias);
}

TEST_CASE("skip concats join tensors of equal spatial size") {
  const GeneratorGraph g = Pix(8);
  const ValidationReport r = Validate(g);
  for (const SkipEdge& e : g.skip_edges) {
    const LayerNode& cat = g.node(e.concat);
    REQUIRE(cat.inputs.size() == 2);
    const TensorShape a = r.shapes.at(cat.inputs[0]);
    const TensorShape b = r.shapes.at(cat.inputs[1]);
    CHECK(a.height == b.height);
    CHECK(a.width == b.width);
  }
}

TEST_CASE("builder is deterministic") {
  CHECK(GraphToJsonString(Pix(16)) == GraphToJsonString(Pix(16)));
  CHECK(GraphToJsonString(Wav()) == GraphToJsonString(Wav()));
}

TEST_CASE("pix2pix rejects sizes outside the stride chain") {
  CHECK(CodeOf([] { Pix(64, 100); }) == ErrorCode::kConfig);
  CHECK(CodeOf([] { Pix(64, 128); }) == ErrorCode::kConfig);
  CHECK(CodeOf([] { Pix(0); }) == ErrorCode::kConfig);
  CHECK_NOTHROW(Pix(8, 512));
}

TEST_CASE("wav2lip is a dual-input graph with 1x1 embeddings") {
  const GeneratorGraph g = Wav();
  CHECK(g.arch == Arch::kWav2Lip);
  REQUIRE(g.input_ids.size() == 2);
  const ValidationReport r = Validate(g);
  const TensorShape face = r.shapes.at(g.ByName("CV8").id);
  const TensorShape audio = r.shapes.at(g.ByName("CA7").id);
  CHECK(face.height == 1);
  CHECK(face.width == 1);
  CHECK(audio.height == 1);
  CHECK(audio.width == 1);
  // The first decoder layer reads the bottleneck concat.
  const int u6_in = g.ByName("U6").inputs[0];
  int cat = u6_in;
  while (!std::holds_alternative<ConcatSpec>(g.node(cat).kind)) cat = g.node(cat).inputs[0];
  CHECK(r.shapes.at(cat).channels == face.channels + audio.channels);
  CHECK(r.shapes.at(g.output_id).channels == 3);
}

TEST_CASE("wav2lip table parsing and channel expressions") {
  CHECK(EvalChannelExpr("nVF*4", 8, 16, 16) == 32);
  CHECK(EvalChannelExpr("2*nDF + nVF", 8, 16, 16) == 40);
  CHECK(EvalChannelExpr("6", 8, 16, 16) == 6);
  CHECK(CodeOf([] { EvalChannelExpr("nVF+", 8, 16, 16); }) == ErrorCode::kConfig);
  CHECK(CodeOf([] { ParseWavLayerTable("{"); }) == ErrorCode::kFormat);
  CHECK(CodeOf([] {
          ArchConfig cfg;
          cfg.arch = Arch::kWav2Lip;
          cfg.nvf = 0;
          BuildWav2Lip(cfg, DefaultWavLayerTable());
        }) == ErrorCode::kConfig);
}

TEST_CASE("channel mismatch names the consumer") {
  GeneratorGraph g = Pix(64);
  // Feed U7 a 768-channel tensor: shrink U8 so the concat carries 512+256.
  auto& u8 = std::get<ConvTransposeSpec>(g.node(g.ByName("U8").id).kind);
  u8.out_channels = 256;
  for (auto& [id, n] : g.nodes) {
    if (n.name.rfind("U8.", 0) == 0) {
      if (auto* norm = std::get_if<NormSpec>(&n.kind)) norm->channels = 256;
    }
  }
  CHECK(CodeOf([&] { Validate(g); }) == ErrorCode::kChannelMismatch);
  const std::string msg = MessageOf([&] { Validate(g); });
  CHECK(msg.find("'U7'") != std::string::npos);
  CHECK(msg.find("1024") != std::string::npos);
  CHECK(msg.find("768") != std::string::npos);
}

TEST_CASE("output unreachable from the audio input") {
  GeneratorGraph g = unptest::SingleConvGraph(2, 2);
  const int audio = g.AddNode("audio", InputSpec{{1, 4, 4}}, {});
  g.input_ids.push_back(audio);
  g.AddNode("CA1", ConvSpec{1, 2, 1, 1, 1, 0, false}, {audio});
  CHECK(CodeOf([&] { Validate(g); }) == ErrorCode::kUnreachable);
  CHECK(MessageOf([&] { Validate(g); }).find("'audio'") != std::string::npos);
}

TEST_CASE("structural errors") {
  SUBCASE("cycle") {
    GeneratorGraph g = unptest::SingleConvGraph(2, 2);
    const int a = g.ByName("A").id;
    const int b = g.AddNode("B", ConvSpec{2, 2, 1, 1, 1, 0, false}, {a});
    g.node(a).inputs = {b};
    CHECK(CodeOf([&] { Validate(g); }) == ErrorCode::kCycle);
  }
  SUBCASE("dangling input") {
    GeneratorGraph g = unptest::SingleConvGraph(2, 2);
    g.node(g.ByName("A").id).inputs = {999};
    CHECK(CodeOf([&] { Validate(g); }) == ErrorCode::kDanglingInput);
  }
  SUBCASE("no inputs") {
    GeneratorGraph g = unptest::SingleConvGraph(2, 2);
    g.input_ids.clear();
    CHECK(CodeOf([&] { Validate(g); }) == ErrorCode::kValidation);
  }
  SUBCASE("duplicate names") {
    GeneratorGraph g = unptest::SingleConvGraph(2, 2);
    const int a = g.ByName("A").id;
    g.AddNode("A", ActSpec{}, {a});
    CHECK_THROWS_AS(Validate(g), Error);
  }
  SUBCASE("conv input channel mismatch") {
    GeneratorGraph g = unptest::SingleConvGraph(2, 2);
    std::get<ConvSpec>(g.node(g.ByName("A").id).kind).in_channels = 3;
    CHECK(CodeOf([&] { Validate(g); }) == ErrorCode::kChannelMismatch);
  }
  SUBCASE("spatial collapse") {
    GeneratorGraph g = unptest::SingleConvGraph(2, 2, 1, 1);
    auto& spec = std::get<ConvSpec>(g.node(g.ByName("A").id).kind);
    spec.kernel = 3;
    CHECK_THROWS_AS(Validate(g), Error);
  }
}

TEST_CASE("graph JSON round-trip") {
  for (const GeneratorGraph& g : {Pix(8), Wav(), unptest::SingleConvGraph(3, 4)}) {
    const std::string text = GraphToJsonString(g);
    const GeneratorGraph back = GraphFromJsonString(text);
    CHECK(GraphToJsonString(back) == text);
    CHECK(back.FilterLayerNames() == g.FilterLayerNames());
    CHECK(back.skip_edges == g.skip_edges);
  }
  CHECK(CodeOf([] { GraphFromJsonString("not json"); }) == ErrorCode::kFormat);
  CHECK(CodeOf([] { GraphFromJsonString("[1,2]"); }) == ErrorCode::kFormat);
}

TEST_CASE("protected and prunable layers") {
  const GeneratorGraph p = Pix(8);
  CHECK(ProtectedOutputLayers(p) == std::set<std::string>{"U1"});
  const auto prunable = PrunableLayers(p);
  CHECK(prunable.size() == 15);
  CHECK(prunable.front() == "C1");
  CHECK(prunable.back() == "U2");
  const GeneratorGraph w = Wav();
  CHECK(ProtectedOutputLayers(w) == std::set<std::string>{"CO2"});

  // Every filter layer feeding an output concat is protected.
  GeneratorGraph c;
  const int in = c.AddNode("input", InputSpec{{2, 4, 4}}, {});
  c.input_ids = {in};
  const int a = c.AddNode("A", ConvSpec{2, 3, 1, 1, 1, 0, false}, {in});
  const int b = c.AddNode("B", ConvSpec{3, 3, 1, 1, 1, 0, false}, {a});
  const int act = c.AddNode("act", ActSpec{ActKind::kTanh, 0.0f}, {b});
  const int cat = c.AddNode("cat", ConcatSpec{}, {a, act});
  c.output_id = c.AddNode("output", OutputSpec{}, {cat});
  CHECK(ProtectedOutputLayers(c) == std::set<std::string>{"A", "B"});
  CHECK(PrunableLayers(c).empty());
}

TEST_CASE("shape formulas") {
  CHECK(ConvOutSize(256, 4, 2, 1) == 128);
  CHECK(ConvOutSize(96, 3, 2, 1) == 48);
  CHECK(ConvOutSize(5, 3, 2, 1) == 3);
  CHECK(ConvTransposeOutSize(128, 4, 2, 1, 0) == 256);
  CHECK(ConvTransposeOutSize(3, 3, 2, 1, 1) == 6);
  for (int s = 2; s <= 256; s *= 2) {
    CHECK(ConvTransposeOutSize(ConvOutSize(s, 4, 2, 1), 4, 2, 1, 0) == s);
  }
}

TEST_CASE("parsers") {
  CHECK(ParseNormKind("batch") == NormKind::kBatch);
  CHECK(ParseNormKind("instance") == NormKind::kInstance);
  CHECK(ParseNormKind("none") == NormKind::kNone);
  CHECK(CodeOf([] { ParseNormKind("group"); }) == ErrorCode::kConfig);
}

}  // TEST_SUITE
