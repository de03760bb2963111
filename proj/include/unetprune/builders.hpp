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

#ifndef UNETPRUNE_BUILDERS_HPP_
#define UNETPRUNE_BUILDERS_HPP_

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "unetprune/graph.hpp"

namespace unetprune {

struct ArchConfig {
  Arch arch = Arch::kPix2Pix;
  // Pix2Pix base filter count.
  int nf = 64;
  // Wav2Lip (face, audio, decoder) base filter counts.
  int nvf = 8;
  int naf = 16;
  int ndf = 16;
  // Pix2Pix input; Wav2Lip input sizes come from the layer table unless
  // face_input is set.
  TensorShape input{3, 256, 256};
  std::optional<TensorShape> face_input;
  NormKind norm = NormKind::kBatch;
};

// 8-down/8-up U-Net with the reference Pix2Pix schedule: 4x4 stride-2 pad-1
// windows, channel caps at 8*nf, norm after C2..C7 and U8..U2, bias only on
// C1 and U1 when batch norm is used. Skip concats are [encoder, decoder].
// Throws kConfig if height or width is not a multiple of 256.
GeneratorGraph BuildPix2Pix(const ArchConfig& cfg);

// One row of the Wav2Lip layer table. Channel counts are expressions over the
// base filters, e.g. "32*nVF" or "16*nAF+32*nVF".
struct WavLayerRow {
  std::string name;
  bool transpose = false;
  std::string in;
  std::string out;
  int kernel = 1;
  int stride_h = 1;
  int stride_w = 1;
  int padding = 0;
  int output_padding = 0;
  bool bias = true;
  bool norm = true;
  std::string act = "relu";
  std::string skip;  // decoder rows: face-encoder layer concatenated after
};

struct WavLayerTable {
  std::string face_name = "face";
  TensorShape face_input{6, 96, 96};
  std::string audio_name = "audio";
  TensorShape audio_input{1, 80, 16};
  std::vector<WavLayerRow> face_encoder;
  std::vector<WavLayerRow> audio_encoder;
  std::vector<WavLayerRow> decoder;
  std::vector<WavLayerRow> output_block;
};

WavLayerTable ParseWavLayerTable(std::string_view json_text);
// The table shipped in data/wav2lip_layers.json, compiled in.
const WavLayerTable& DefaultWavLayerTable();

// Evaluates a channel expression ("16*nAF+32*nVF", "3", "nDF").
int EvalChannelExpr(std::string_view expr, int nvf, int naf, int ndf);

// Dual-encoder Wav2Lip generator without residual blocks. Throws
// kChannelMismatch naming the offending layer if a row's declared input
// channels disagree with what feeds it.
GeneratorGraph BuildWav2Lip(const ArchConfig& cfg, const WavLayerTable& table);

}  // namespace unetprune

#endif  // UNETPRUNE_BUILDERS_HPP_
