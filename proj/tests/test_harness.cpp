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

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "test_util.hpp"
#include "unetprune/builders.hpp"
#include "unetprune/error.hpp"
#include "unetprune/harness.hpp"

using namespace unetprune;

namespace {

GeneratorGraph Pix(int nf) {
  ArchConfig cfg;
  cfg.nf = nf;
  return BuildPix2Pix(cfg);
}

int CodeOf(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return static_cast<int>(e.code());
  }
  return 0;
}

std::string NormAfter(const GeneratorGraph& g, const std::string& layer) {
  for (int c : g.Consumers(g.ByName(layer).id)) {
    if (std::holds_alternative<NormSpec>(g.node(c).kind)) return g.node(c).name;
  }
  return {};
}

// Zeroes the kernel rows, bias entries and norm shift of `filters` so those
// output channels are exactly zero after the norm and activation.
void ZeroFilters(const GeneratorGraph& g, WeightStore& s, const std::string& layer,
                 const std::vector<int>& filters) {
  WeightTensor& k = s.at(layer, TensorRole::kKernel);
  const std::size_t row = static_cast<std::size_t>(k.numel() / k.dims[0]);
  for (int f : filters) std::fill_n(k.data.begin() + f * row, row, 0.0f);
  if (s.find(layer, TensorRole::kBias) != nullptr) {
    for (int f : filters) s.at(layer, TensorRole::kBias).data[f] = 0.0f;
  }
  const std::string norm = NormAfter(g, layer);
  if (!norm.empty()) {
    for (int f : filters) {
      s.at(norm, TensorRole::kNormShift).data[f] = 0.0f;
      s.at(norm, TensorRole::kNormMean).data[f] = 0.0f;
    }
  }
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("probes are seeded standard normal inputs") {
  const GeneratorGraph g = Pix(1);
  const auto a = MakeProbes(g, 3, 7);
  const auto b = MakeProbes(g, 3, 7);
  const auto c = MakeProbes(g, 3, 8);
  REQUIRE(a.size() == 3);
  CHECK(a[0].at("input").shape == TensorShape{3, 256, 256});
  CHECK(a[1].at("input").data == b[1].at("input").data);
  CHECK(a[0].at("input").data != c[0].at("input").data);
  CHECK(a[0].at("input").data != a[1].at("input").data);
  double sum = 0.0;
  double sq = 0.0;
  for (float v : a[0].at("input").data) {
    sum += v;
    sq += double{v} * v;
  }
  const double n = static_cast<double>(a[0].at("input").data.size());
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(sq / n == doctest::Approx(1.0).epsilon(0.01));
  CHECK(CodeOf([&] { MakeProbes(g, 0, 1); }) == static_cast<int>(ErrorCode::kConfig));
}

TEST_CASE("divergence is the output-size normalized l2 distance") {
  Tensor3 a(TensorShape{1, 2, 2});
  Tensor3 b(TensorShape{1, 2, 2});
  b.data = {3, 4, 0, 0};
  CHECK(Divergence(a, b) == 1.25);
  CHECK(Divergence(b, b) == 0.0);
  CHECK(Divergence(a, b) == Divergence(b, a));
  CHECK(CodeOf([&] { Divergence(a, Tensor3(TensorShape{1, 1, 4})); }) ==
        static_cast<int>(ErrorCode::kDimsMismatch));
}

TEST_CASE("sensitivity sweep rows, order, monotonicity, determinism") {
  const GeneratorGraph g = Pix(2);
  const WeightStore s = InitRandom(g, 3);
  const auto probes = MakeProbes(g, 2, 5);
  SweepOptions opt;
  opt.ratios = {0.75, 0.25, 0.5};
  const SensitivityReport r = SensitivitySweep(g, s, probes, opt);
  REQUIRE(r.rows.size() == 48);
  const std::vector<std::string> order = {"C1", "C2", "C3", "C4", "C5", "C6", "C7", "C8",
                                          "U8", "U7", "U6", "U5", "U4", "U3", "U2", "U1"};
  const std::int64_t base = CountCost(g).total_params;
  for (std::size_t l = 0; l < order.size(); ++l) {
    const SensitivityRow& q = r.rows[3 * l];
    const SensitivityRow& h = r.rows[3 * l + 1];
    const SensitivityRow& t = r.rows[3 * l + 2];
    CHECK(q.layer == order[l]);
    CHECK(t.layer == order[l]);
    CHECK(q.ratio == 0.25);
    CHECK(h.ratio == 0.5);
    CHECK(t.ratio == 0.75);
    CHECK(t.macs <= q.macs);
    CHECK(t.params <= h.params);
    CHECK(h.params <= q.params);
    for (const SensitivityRow* row : {&q, &h, &t}) {
      CHECK(row->divergence >= 0.0);
      CHECK(row->criterion == "l2");
    }
    if (order[l] == "U1") {
      CHECK(t.params == base);
      CHECK(t.divergence == 0.0);
    } else {
      CHECK(h.params < base);
      CHECK(h.divergence > 0.0);
    }
  }
  const std::string csv = RenderSensitivityCsv(r);
  CHECK(csv.rfind("layer,ratio,criterion,params,macs,divergence\n", 0) == 0);
  CHECK(csv.find("\nC1,0.25,l2,") != std::string::npos);
  CHECK(RenderSensitivityCsv(SensitivitySweep(g, s, probes, opt)) == csv);
  // The original store is untouched.
  CHECK(BitEqual(s, InitRandom(g, 3)));
  opt.ratios = {1.0};
  CHECK(CodeOf([&] { SensitivitySweep(g, s, probes, opt); }) ==
        static_cast<int>(ErrorCode::kConfig));
  CHECK(CodeOf([&] { SensitivitySweep(g, s, {}); }) == static_cast<int>(ErrorCode::kConfig));
}

TEST_CASE("near-zero innermost filters are the least sensitive") {
  const GeneratorGraph g = Pix(2);
  WeightStore s = InitRandom(g, 4);
  for (float& v : s.at("C8", TensorRole::kKernel).data) v *= 1e-6f;
  SweepOptions opt;
  opt.ratios = {0.5};
  const SensitivityReport r = SensitivitySweep(g, s, MakeProbes(g, 2, 1), opt);
  const SensitivityRow* best = nullptr;
  for (const SensitivityRow& row : r.rows) {
    if (row.layer == "U1") continue;
    if (best == nullptr || row.divergence < best->divergence) best = &row;
  }
  REQUIRE(best != nullptr);
  CHECK(best->layer == "C8");
}

TEST_CASE("removing exactly-zero filters changes nothing") {
  const GeneratorGraph g = Pix(2);
  WeightStore s = InitRandom(g, 5);
  ZeroFilters(g, s, "C5", {0, 3, 9});
  ZeroFilters(g, s, "U6", {1});
  PruningPlan plan;
  plan.actions = {FilterRemoval{"C5", {0, 3, 9}}, FilterRemoval{"U6", {1}}};
  const PruneResult pruned = ApplyPlan(g, s, plan);
  for (const InputSet& probe : MakeProbes(g, 2, 3)) {
    const Tensor3 a = Run(g, s, probe).output;
    const Tensor3 b = Run(pruned.graph, pruned.store, probe).output;
    CHECK(Divergence(a, b) <= kEquivalenceTolerance);
    CHECK(unptest::MaxAbsDiff(a, b) <= kEquivalenceTolerance);
  }
}

TEST_CASE("masked store zeroes exactly the consumer slices of removed channels") {
  const GeneratorGraph g = Pix(2);
  const WeightStore s = InitRandom(g, 6);
  PruningPlan plan;
  plan.actions = {FilterRemoval{"C7", {2, 5}}};
  const WeightStore m = MaskedStore(g, s, plan);
  // C8 reads C7 directly; U7 reads C7 through the skip concat after U8.
  const WeightTensor& c8 = m.at("C8", TensorRole::kKernel);
  const std::size_t taps = 16;
  for (int o = 0; o < c8.dims[0]; ++o) {
    for (int i = 0; i < c8.dims[1]; ++i) {
      const bool zero = i == 2 || i == 5;
      for (std::size_t t = 0; t < taps; ++t) {
        const float v = c8.data[(o * c8.dims[1] + i) * taps + t];
        const float orig = s.at("C8", TensorRole::kKernel).data[(o * c8.dims[1] + i) * taps + t];
        CHECK(v == (zero ? 0.0f : orig));
      }
    }
  }
  std::size_t zeroed = 0;
  for (float v : m.at("U7", TensorRole::kKernel).data) zeroed += v == 0.0f;
  CHECK(zeroed == 2 * 16 * 16);
  CHECK(BitEqual(m.at("C7", TensorRole::kKernel), s.at("C7", TensorRole::kKernel)));
  CHECK(BitEqual(m.at("U6", TensorRole::kKernel), s.at("U6", TensorRole::kKernel)));
}

TEST_CASE("masked equivalence holds for presets and random plans") {
  const GeneratorGraph g = Pix(2);
  const WeightStore s = unptest::UnitGainStore(g, 7);
  const VerifyReport empty = VerifyMaskedEquivalence(g, s, PruningPlan{}, 2, 1);
  CHECK(empty.pass);
  CHECK(empty.max_deviation == 0.0);
  for (const Preset& p : Presets()) {
    if (p.arch != Arch::kPix2Pix) continue;
    const VerifyReport r = VerifyMaskedEquivalence(g, s, PlanPreset(g, s, p.name), 2, 9);
    CHECK_MESSAGE(r.pass, p.name << " " << r.max_deviation);
    CHECK(r.probes == 2);
  }
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    const GeneratorGraph rg = unptest::RandomGraph(seed);
    const WeightStore rs = unptest::UnitGainStore(rg, seed);
    const ScoreTable t = ScoreL2(rg, rs);
    if (PrunableLayers(rg).empty()) continue;
    const PruningPlan plan = PlanUniform(rg, t, 0.5);
    const VerifyReport r = VerifyMaskedEquivalence(rg, rs, plan, 3, seed);
    CHECK_MESSAGE(r.pass, "graph seed " << seed << " deviation " << r.max_deviation);
  }
}

TEST_CASE("wav2lip preset passes masked equivalence") {
  ArchConfig cfg;
  cfg.arch = Arch::kWav2Lip;
  cfg.nvf = 2;
  cfg.naf = 2;
  cfg.ndf = 2;
  const GeneratorGraph g = BuildWav2Lip(cfg, DefaultWavLayerTable());
  const WeightStore s = InitRandom(g, 1);
  const VerifyReport r = VerifyMaskedEquivalence(g, s, PlanPreset(g, s, "wav2lip-filter"), 2, 3);
  CHECK(r.pass);
}

TEST_CASE("a corrupted channel map is caught") {
  const GeneratorGraph g = Pix(2);
  const WeightStore s = unptest::UnitGainStore(g, 8);
  const PruningPlan plan = PlanInner(g, ScoreL2(g, s), {{"C2", 0.5}, {"C7", 0.5}});
  PruneResult pruned = ApplyPlan(g, s, plan);
  REQUIRE(VerifyPruned(g, s, plan, pruned, 2, 4).pass);
  // Re-slice C3's input axis with every kept index shifted by one.
  const std::string src = g.node(g.ByName("C3").inputs[0]).name;
  std::vector<int> shifted;
  for (const ChannelMap& m : pruned.maps) {
    if (m.node != src) continue;
    for (int k : m.kept) shifted.push_back((k + 1) % m.original_channels);
  }
  REQUIRE(!shifted.empty());
  std::sort(shifted.begin(), shifted.end());
  pruned.store.at("C3", TensorRole::kKernel) = SliceAxis(s.at("C3", TensorRole::kKernel), 1, shifted);
  const VerifyReport r = VerifyPruned(g, s, plan, pruned, 2, 4);
  CHECK_FALSE(r.pass);
  CHECK(r.first_failing_probe == 0);
  CHECK(r.max_deviation > 1e3 * kEquivalenceTolerance);
  CHECK_FALSE(r.node_sums.empty());
  const std::string text = r.ToText();
  CHECK(text.rfind("FAIL", 0) == 0);
  CHECK(text.find("first divergence") != std::string::npos);
}

TEST_CASE("median and p90") {
  CHECK(Median({3, 1, 2}) == 2.0);
  CHECK(Median({4, 1, 3, 2}) == 2.5);
  CHECK(Median({}) == 0.0);
  CHECK(Percentile90({1, 2, 3, 4, 5, 6, 7, 8, 9, 10}) == 9.0);
  CHECK(Percentile90({5}) == 5.0);
  CHECK(Percentile90({2, 1, 3}) == 3.0);
}

TEST_CASE("bench stats and json") {
  const GeneratorGraph g = unptest::SingleConvGraph(4, 4, 16, 16);
  const WeightStore s = InitRandom(g, 1);
  const BenchStats b = Bench(g, s, 1, 5);
  CHECK(b.runs_ms.size() == 5);
  CHECK(b.median_ms > 0.0);
  CHECK(b.median_ms <= b.p90_ms);
  const BenchStats back = ParseBenchJson(RenderBenchJson(b));
  CHECK(back.median_ms == doctest::Approx(b.median_ms));
  CHECK(back.p90_ms == doctest::Approx(b.p90_ms));
  CHECK(back.runs_ms.size() == 5);
  CHECK_FALSE(back.speedup);
  BenchStats with = b;
  with.speedup = 1.5;
  CHECK(*ParseBenchJson(RenderBenchJson(with)).speedup == doctest::Approx(1.5));
  CHECK(CodeOf([&] { Bench(g, s, 0, 2); }) == static_cast<int>(ErrorCode::kConfig));
  CHECK(CodeOf([] { ParseBenchJson("{}"); }) == static_cast<int>(ErrorCode::kFormat));
  CHECK(CodeOf([] { ParseBenchJson("nope"); }) == static_cast<int>(ErrorCode::kFormat));
  CHECK(CodeOf([&] { WithInputShapes(g, {{"A", {4, 8, 8}}}); }) ==
        static_cast<int>(ErrorCode::kConfig));
  CHECK(Bench(g, s, 0, 3, {{"input", {4, 8, 8}}}).runs_ms.size() == 3);
}

TEST_CASE("doubling each side roughly quadruples conv time") {
  GeneratorGraph g = unptest::SingleConvGraph(16, 16, 64, 64);
  auto& spec = std::get<ConvSpec>(g.node(g.ByName("A").id).kind);
  spec.kernel = 3;
  spec.padding = 1;
  const WeightStore s = InitRandom(g, 2);
  const double small = Bench(g, s, 1, 7).median_ms;
  const double big = Bench(g, s, 1, 7, {{"input", {16, 128, 128}}}).median_ms;
  const double ratio = big / small;
  CHECK_MESSAGE(ratio >= 2.0, "ratio " << ratio);
  CHECK_MESSAGE(ratio <= 8.0, "ratio " << ratio);
}

}  // TEST_SUITE
