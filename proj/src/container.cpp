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

#include "unetprune/container.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "unetprune/error.hpp"

namespace unetprune {

using nlohmann::json;

namespace {

constexpr std::uint64_t kPreambleSize = 16;

std::uint64_t AlignUp(std::uint64_t v) {
  return (v + kBlobAlignment - 1) / kBlobAlignment * kBlobAlignment;
}

template <typename T>
void PutLE(std::string& out, T value) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
  }
}

template <typename T>
T GetLE(std::string_view in, std::size_t pos) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<T>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  return v;
}

void AppendFloatsLE(std::string& out, const std::vector<float>& data) {
  const std::size_t start = out.size();
  out.resize(start + data.size() * sizeof(float));
  if constexpr (std::endian::native == std::endian::little) {
    if (!data.empty()) std::memcpy(&out[start], data.data(), data.size() * sizeof(float));
  } else {
    for (std::size_t i = 0; i < data.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(data[i]);
      for (int b = 0; b < 4; ++b) {
        out[start + i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
      }
    }
  }
}

std::vector<float> ReadFloatsLE(std::string_view in, std::size_t pos, std::size_t count) {
  std::vector<float> data(count);
  if constexpr (std::endian::native == std::endian::little) {
    if (count) std::memcpy(data.data(), in.data() + pos, count * sizeof(float));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      data[i] = std::bit_cast<float>(GetLE<std::uint32_t>(in, pos + i * 4));
    }
  }
  return data;
}

}  // namespace

std::string SerializeContainer(const GeneratorGraph& graph, const WeightStore& store) {
  CheckStoreMatchesGraph(graph, store);

  // Offsets depend on the header length, which depends on the offsets'
  // decimal widths; iterate until the layout is stable.
  const auto specs = ExpectedTensors(graph);
  std::uint64_t data_start = 0;
  std::string header;
  for (int attempt = 0; attempt < 8; ++attempt) {
    json tensors = json::array();
    std::uint64_t offset = data_start;
    for (const TensorSpec& spec : specs) {
      offset = AlignUp(offset);
      const std::uint64_t length = store.at(spec.node, spec.role).data.size() * sizeof(float);
      tensors.push_back({{"name", spec.node},
                         {"role", TensorRoleName(spec.role)},
                         {"dims", spec.dims},
                         {"offset", offset},
                         {"length", length}});
      offset += length;
    }
    json doc;
    doc["graph"] = GraphToJson(graph);
    doc["tensors"] = std::move(tensors);
    header = doc.dump();
    const std::uint64_t needed = AlignUp(kPreambleSize + header.size());
    if (needed == data_start) break;
    data_start = needed;
  }

  std::string out;
  out.append(kContainerMagic, 4);
  PutLE<std::uint32_t>(out, kContainerVersion);
  PutLE<std::uint64_t>(out, header.size());
  out += header;
  for (const TensorSpec& spec : specs) {
    out.resize(AlignUp(out.size()), '\0');
    AppendFloatsLE(out, store.at(spec.node, spec.role).data);
  }
  return out;
}

Model ParseContainer(std::string_view in) {
  if (in.size() < 4 || std::memcmp(in.data(), kContainerMagic, 4) != 0) {
    throw Error(ErrorCode::kBadMagic, "not a UNPR container (bad magic)");
  }
  if (in.size() < kPreambleSize) {
    throw Error(ErrorCode::kTruncated, "container preamble is truncated");
  }
  const auto version = GetLE<std::uint32_t>(in, 4);
  if (version != kContainerVersion) {
    throw Error(ErrorCode::kVersionMismatch,
                "container version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(kContainerVersion) + ")");
  }
  const auto header_len = GetLE<std::uint64_t>(in, 8);
  if (header_len > in.size() - kPreambleSize) {
    throw Error(ErrorCode::kTruncated, "header length " + std::to_string(header_len) +
                                           " exceeds the file size");
  }
  const json doc = json::parse(in.substr(kPreambleSize, header_len), nullptr, false);
  if (doc.is_discarded() || !doc.is_object() || !doc.contains("graph") ||
      !doc.contains("tensors")) {
    throw Error(ErrorCode::kFormat, "container header is not a valid JSON index");
  }

  Model model;
  model.graph = GraphFromJson(doc["graph"]);
  Validate(model.graph);
  try {
    for (const json& t : doc["tensors"]) {
      const auto name = t.at("name").get<std::string>();
      const TensorRole role = ParseTensorRole(t.at("role").get<std::string>());
      WeightTensor tensor;
      tensor.dims = t.at("dims").get<std::vector<std::int64_t>>();
      const auto offset = t.at("offset").get<std::uint64_t>();
      const auto length = t.at("length").get<std::uint64_t>();
      for (auto d : tensor.dims) {
        if (d < 0) throw Error(ErrorCode::kFormat, "negative dim for '" + name + "'");
      }
      if (static_cast<std::uint64_t>(tensor.numel()) * sizeof(float) != length) {
        throw Error(ErrorCode::kDimsMismatch,
                    "tensor '" + name + "' " + TensorRoleName(role) +
                        " byte length disagrees with its dims");
      }
      if (offset > in.size() || length > in.size() - offset) {
        throw Error(ErrorCode::kTruncated, "blob for '" + name + "' " +
                                               TensorRoleName(role) + " runs past end of file");
      }
      tensor.data = ReadFloatsLE(in, offset, length / sizeof(float));
      if (!model.store.entries.emplace(TensorKey{name, role}, std::move(tensor)).second) {
        throw Error(ErrorCode::kFormat, "duplicate tensor entry for '" + name + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("malformed tensor index: ") + e.what());
  }
  CheckStoreMatchesGraph(model.graph, model.store);
  return model;
}

std::string ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kIo, "cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  if (f.bad()) throw Error(ErrorCode::kIo, "read error on '" + path.string() + "'");
  return std::move(ss).str();
}

void WriteFileBytes(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error(ErrorCode::kIo, "cannot write '" + path.string() + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error(ErrorCode::kIo, "write error on '" + path.string() + "'");
}

void WriteContainer(const GeneratorGraph& graph, const WeightStore& store,
                    const std::filesystem::path& path) {
  WriteFileBytes(path, SerializeContainer(graph, store));
}

Model ReadContainer(const std::filesystem::path& path) {
  return ParseContainer(ReadFileBytes(path));
}

}  // namespace unetprune
