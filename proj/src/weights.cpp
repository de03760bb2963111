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

#include "unetprune/weights.hpp"

#include <cstring>
#include <random>
#include <set>

#include "unetprune/error.hpp"

namespace unetprune {

const char* TensorRoleName(TensorRole role) {
  switch (role) {
    case TensorRole::kKernel: return "kernel";
    case TensorRole::kBias: return "bias";
    case TensorRole::kNormScale: return "norm_scale";
    case TensorRole::kNormShift: return "norm_shift";
    case TensorRole::kNormMean: return "norm_mean";
    case TensorRole::kNormVar: return "norm_var";
  }
  return "kernel";
}

TensorRole ParseTensorRole(std::string_view text) {
  if (text == "kernel") return TensorRole::kKernel;
  if (text == "bias") return TensorRole::kBias;
  if (text == "norm_scale") return TensorRole::kNormScale;
  if (text == "norm_shift") return TensorRole::kNormShift;
  if (text == "norm_mean") return TensorRole::kNormMean;
  if (text == "norm_var") return TensorRole::kNormVar;
  throw Error(ErrorCode::kFormat, "unknown tensor role '" + std::string(text) + "'");
}

std::int64_t WeightTensor::numel() const {
  std::int64_t n = 1;
  for (std::int64_t d : dims) n *= d;
  return n;
}

bool BitEqual(const WeightTensor& a, const WeightTensor& b) {
  return a.dims == b.dims && a.data.size() == b.data.size() &&
         (a.data.empty() ||
          std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0);
}

bool BitEqual(const WeightStore& a, const WeightStore& b) {
  if (a.entries.size() != b.entries.size()) return false;
  for (auto ia = a.entries.begin(), ib = b.entries.begin(); ia != a.entries.end();
       ++ia, ++ib) {
    if (ia->first != ib->first || !BitEqual(ia->second, ib->second)) return false;
  }
  return true;
}

const WeightTensor* WeightStore::find(std::string_view node, TensorRole role) const {
  auto it = entries.find(TensorKey{std::string(node), role});
  return it == entries.end() ? nullptr : &it->second;
}

const WeightTensor& WeightStore::at(std::string_view node, TensorRole role) const {
  const WeightTensor* t = find(node, role);
  if (t == nullptr) {
    throw Error(ErrorCode::kDimsMismatch, "store has no " +
                                              std::string(TensorRoleName(role)) +
                                              " for '" + std::string(node) + "'");
  }
  return *t;
}

WeightTensor& WeightStore::at(std::string_view node, TensorRole role) {
  return const_cast<WeightTensor&>(std::as_const(*this).at(node, role));
}

std::vector<TensorSpec> ExpectedTensors(const GeneratorGraph& g) {
  std::vector<TensorSpec> out;
  for (int id : g.TopologicalOrder()) {
    const LayerNode& n = g.node(id);
    if (const auto* c = std::get_if<ConvSpec>(&n.kind)) {
      out.push_back({n.name, TensorRole::kKernel,
                     {c->out_channels, c->in_channels, c->kernel, c->kernel}});
      if (c->has_bias) out.push_back({n.name, TensorRole::kBias, {c->out_channels}});
    } else if (const auto* t = std::get_if<ConvTransposeSpec>(&n.kind)) {
      out.push_back({n.name, TensorRole::kKernel,
                     {t->in_channels, t->out_channels, t->kernel, t->kernel}});
      if (t->has_bias) out.push_back({n.name, TensorRole::kBias, {t->out_channels}});
    } else if (const auto* s = std::get_if<NormSpec>(&n.kind)) {
      if (s->kind == NormKind::kNone) continue;
      out.push_back({n.name, TensorRole::kNormScale, {s->channels}});
      out.push_back({n.name, TensorRole::kNormShift, {s->channels}});
      if (s->kind == NormKind::kBatch) {
        out.push_back({n.name, TensorRole::kNormMean, {s->channels}});
        out.push_back({n.name, TensorRole::kNormVar, {s->channels}});
      }
    }
  }
  return out;
}

void CheckStoreMatchesGraph(const GeneratorGraph& g, const WeightStore& store) {
  std::set<TensorKey> expected;
  for (const TensorSpec& spec : ExpectedTensors(g)) {
    const WeightTensor* t = store.find(spec.node, spec.role);
    if (t == nullptr) {
      throw Error(ErrorCode::kDimsMismatch, "node '" + spec.node + "' is missing its " +
                                                TensorRoleName(spec.role) + " tensor");
    }
    if (t->dims != spec.dims) {
      std::string want, got;
      for (auto d : spec.dims) want += std::to_string(d) + ",";
      for (auto d : t->dims) got += std::to_string(d) + ",";
      throw Error(ErrorCode::kDimsMismatch,
                  "dims mismatch at node '" + spec.node + "' " +
                      TensorRoleName(spec.role) + ": expected [" + want +
                      "] got [" + got + "]");
    }
    if (static_cast<std::int64_t>(t->data.size()) != t->numel()) {
      throw Error(ErrorCode::kDimsMismatch,
                  "tensor data length disagrees with dims at node '" + spec.node + "'");
    }
    expected.insert(TensorKey{spec.node, spec.role});
  }
  for (const auto& [key, t] : store.entries) {
    if (!expected.count(key)) {
      throw Error(ErrorCode::kDimsMismatch, "store has an extra " +
                                                std::string(TensorRoleName(key.role)) +
                                                " tensor for node '" + key.node + "'");
    }
  }
}

WeightStore InitRandom(const GeneratorGraph& g, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  WeightStore store;
  for (const TensorSpec& spec : ExpectedTensors(g)) {
    WeightTensor t;
    t.dims = spec.dims;
    t.data.resize(static_cast<std::size_t>(t.numel()));
    float mean = 0.0f;
    float stddev = 0.02f;
    switch (spec.role) {
      case TensorRole::kNormScale: mean = 1.0f; break;
      case TensorRole::kNormMean: stddev = 0.0f; break;
      case TensorRole::kNormVar: mean = 1.0f; stddev = 0.0f; break;
      default: break;
    }
    if (stddev == 0.0f) {
      std::fill(t.data.begin(), t.data.end(), mean);
    } else {
      std::normal_distribution<float> dist(mean, stddev);
      for (float& v : t.data) v = dist(rng);
    }
    store.entries.emplace(TensorKey{spec.node, spec.role}, std::move(t));
  }
  return store;
}

WeightTensor SwapLeadingAxes(const WeightTensor& t) {
  if (t.dims.size() != 4) {
    throw Error(ErrorCode::kDimsMismatch, "layout conversion needs a rank-4 kernel");
  }
  const std::int64_t a = t.dims[0], b = t.dims[1];
  const std::int64_t inner = t.dims[2] * t.dims[3];
  WeightTensor out;
  out.dims = {b, a, t.dims[2], t.dims[3]};
  out.data.resize(t.data.size());
  for (std::int64_t i = 0; i < a; ++i) {
    for (std::int64_t j = 0; j < b; ++j) {
      std::memcpy(&out.data[(j * a + i) * inner], &t.data[(i * b + j) * inner],
                  static_cast<std::size_t>(inner) * sizeof(float));
    }
  }
  return out;
}

WeightTensor KernelToInOutLayout(const WeightTensor& kernel, bool transposed_conv) {
  return transposed_conv ? kernel : SwapLeadingAxes(kernel);
}

WeightTensor KernelFromInOutLayout(const WeightTensor& kernel, bool transposed_conv) {
  return transposed_conv ? kernel : SwapLeadingAxes(kernel);
}

}  // namespace unetprune
