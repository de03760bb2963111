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

// UNPR container:
//
//   offset 0   "UNPR"
//   offset 4   u32 LE  format version (1)
//   offset 8   u64 LE  header length N
//   offset 16  N bytes UTF-8 JSON {"graph": <topology>, "tensors": [
//                {"name", "role", "dims", "offset", "length"}, ...]}
//   then       raw little-endian f32 blobs; every blob starts at an absolute
//              file offset that is a multiple of 64, gaps are zero-filled.

#ifndef UNETPRUNE_CONTAINER_HPP_
#define UNETPRUNE_CONTAINER_HPP_

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "unetprune/weights.hpp"

namespace unetprune {

inline constexpr char kContainerMagic[4] = {'U', 'N', 'P', 'R'};
inline constexpr std::uint32_t kContainerVersion = 1;
inline constexpr std::uint64_t kBlobAlignment = 64;

// Both throw kDimsMismatch if the store does not match the graph.
std::string SerializeContainer(const GeneratorGraph& graph, const WeightStore& store);
void WriteContainer(const GeneratorGraph& graph, const WeightStore& store,
                    const std::filesystem::path& path);

// Distinct error codes: kBadMagic, kVersionMismatch, kTruncated, kFormat,
// kDimsMismatch (names the node), plus graph validation errors.
Model ParseContainer(std::string_view bytes);
Model ReadContainer(const std::filesystem::path& path);

// Whole-file helpers shared by the CLI surface.
std::string ReadFileBytes(const std::filesystem::path& path);
void WriteFileBytes(const std::filesystem::path& path, std::string_view bytes);

}  // namespace unetprune

#endif  // UNETPRUNE_CONTAINER_HPP_
