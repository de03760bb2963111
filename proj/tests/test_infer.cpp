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
#include <filesystem>
#include <fstream>
#include <span>
#include <random>
#include <string>

#include "test_util.hpp"
#include "unetprune/builders.hpp"
#include "unetprune/error.hpp"
#include "unetprune/infer.hpp"

using namespace unetprune;
using unptest::MaxAbsDiff;
using unptest::RandomTensor;
using unptest::RandomWeights;

namespace {

double MaxAbs(const Tensor3& t) {
  double m = 0.0;
  for (float v : t.data) m = std::max(m, double{std::fabs(v)});
  return m;
}

GeneratorGraph Pix(int nf, int size = 256) {
  ArchConfig cfg;
  cfg.nf = nf;
  cfg.input = {3, size, size};
  return BuildPix2Pix(cfg);
}

std::map<std::string, Tensor3> InputsFor(const GeneratorGraph& g, std::uint64_t seed) {
  std::map<std::string, Tensor3> in;
  for (int id : g.input_ids) {
    in[g.node(id).name] = RandomTensor(std::get<InputSpec>(g.node(id).kind).shape, seed++);
  }
  return in;
}

}  // namespace

TEST_SUITE("infer") {

TEST_CASE("conv hand examples") {
  Tensor3 x(TensorShape{1, 2, 2});
  x.data = {1, 2, 3, 4};
  const WeightTensor k{{1, 1, 1, 1}, {2.0f}};
  const WeightTensor b{{1}, {0.0f}};
  const Tensor3 y = Conv2d(x, k, &b, 1, 1, 0);
  CHECK(y.data == std::vector<float>{2, 4, 6, 8});

  Tensor3 ones(TensorShape{1, 3, 3});
  std::fill(ones.data.begin(), ones.data.end(), 1.0f);
  const WeightTensor k3{{1, 1, 3, 3}, std::vector<float>(9, 1.0f)};
  const Tensor3 z = Conv2d(ones, k3, nullptr, 1, 1, 1);
  CHECK(z.at(0, 1, 1) == 9.0f);
  CHECK(z.at(0, 0, 0) == 4.0f);
  CHECK(z.at(0, 0, 1) == 6.0f);

  const Tensor3 big(TensorShape{1, 256, 256});
  const Tensor3 down = Conv2d(big, WeightTensor{{2, 1, 4, 4}, std::vector<float>(32)}, nullptr,
                              2, 2, 1);
  CHECK(down.shape == TensorShape{2, 128, 128});
}

TEST_CASE("transposed conv hand examples") {
  Tensor3 x(TensorShape{1, 1, 1});
  x.data = {3.0f};
  const WeightTensor k = RandomWeights({1, 1, 4, 4}, 5);
  const Tensor3 y = ConvTranspose2d(x, k, nullptr, 2, 2, 1, 0);
  REQUIRE(y.shape == TensorShape{1, 2, 2});
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      CHECK(y.at(0, r, c) == doctest::Approx(3.0f * k.data[(r + 1) * 4 + (c + 1)]));
    }
  }
  const Tensor3 zero(TensorShape{4, 5, 5});
  const Tensor3 z = ConvTranspose2d(zero, RandomWeights({4, 3, 4, 4}, 6), nullptr, 2, 2, 1, 0);
  CHECK(MaxAbs(z) == 0.0);
  // Down then up restores the size.
  const Tensor3 d = Conv2d(Tensor3(TensorShape{2, 64, 64}),
                           WeightTensor{{3, 2, 4, 4}, std::vector<float>(96)}, nullptr, 2, 2, 1);
  const Tensor3 u = ConvTranspose2d(d, WeightTensor{{3, 2, 4, 4}, std::vector<float>(96)},
                                    nullptr, 2, 2, 1, 0);
  CHECK(u.shape == TensorShape{2, 64, 64});
}

TEST_CASE("conv matches the direct definition across shapes and code paths") {
  std::mt19937 rng(17);
  auto pick = [&](std::vector<int> v) { return v[rng() % v.size()]; };
  int cases = 0;
  for (int trial = 0; trial < 160; ++trial) {
    const int k = pick({1, 3, 4, 7});
    const int sh = pick({1, 2, 3});
    const int sw = pick({1, 2});
    const int p = static_cast<int>(rng() % (k / 2 + 1));
    const int h = k + static_cast<int>(rng() % 40);
    const int w = k + static_cast<int>(rng() % 70);
    const int ic = pick({1, 2, 5});
    const int oc = pick({1, 3, 8, 17});
    const Tensor3 x = RandomTensor({ic, h, w}, 100 + trial);
    const WeightTensor wt = RandomWeights({oc, ic, k, k}, 200 + trial);
    const WeightTensor b = RandomWeights({oc}, 300 + trial);
    const bool with_bias = trial % 2 == 0;
    const Tensor3 got = Conv2d(x, wt, with_bias ? &b : nullptr, sh, sw, p);
    const Tensor3 want = unptest::NaiveConv2d(x, wt, with_bias ? &b : nullptr, sh, sw, p);
    REQUIRE(got.shape == want.shape);
    CHECK_MESSAGE(MaxAbsDiff(got, want) <= 1e-5 * (1.0 + MaxAbs(want)),
                  "k=" << k << " s=" << sh << "x" << sw << " p=" << p << " in=" << ic << "x" << h
                       << "x" << w << " oc=" << oc);
    ++cases;
  }
  CHECK(cases == 160);
}

TEST_CASE("transposed conv matches the scatter definition across shapes and code paths") {
  std::mt19937 rng(23);
  auto pick = [&](std::vector<int> v) { return v[rng() % v.size()]; };
  for (int trial = 0; trial < 160; ++trial) {
    const int k = pick({1, 3, 4});
    const int s = pick({1, 2});
    const int p = static_cast<int>(rng() % (k / 2 + 1));
    const int op = s > 1 ? static_cast<int>(rng() % 2) : 0;
    const int h = 1 + static_cast<int>(rng() % 12);
    const int w = 1 + static_cast<int>(rng() % 40);
    const int ic = pick({1, 3, 6});
    const int oc = pick({1, 3, 8, 19});
    if ((h - 1) * s - 2 * p + k + op < 1 || (w - 1) * s - 2 * p + k + op < 1) continue;
    const Tensor3 x = RandomTensor({ic, h, w}, 400 + trial);
    const WeightTensor wt = RandomWeights({ic, oc, k, k}, 500 + trial);
    const WeightTensor b = RandomWeights({oc}, 600 + trial);
    const bool with_bias = trial % 3 == 0;
    const Tensor3 got = ConvTranspose2d(x, wt, with_bias ? &b : nullptr, s, s, p, op);
    const Tensor3 want =
        unptest::NaiveConvTranspose2d(x, wt, with_bias ? &b : nullptr, s, s, p, op);
    REQUIRE(got.shape == want.shape);
    CHECK_MESSAGE(MaxAbsDiff(got, want) <= 1e-5 * (1.0 + MaxAbs(want)),
                  "k=" << k << " s=" << s << " p=" << p << " op=" << op << " in=" << ic << "x"
                       << h << "x" << w << " oc=" << oc);
  }
}

TEST_CASE("linearity in the input") {
  const Tensor3 x = RandomTensor({4, 16, 16}, 1);
  const Tensor3 y = RandomTensor({4, 16, 16}, 2);
  const float a = 0.7f;
  const float b = -1.9f;
  Tensor3 mix(x.shape);
  for (std::size_t i = 0; i < mix.data.size(); ++i) mix.data[i] = a * x.data[i] + b * y.data[i];
  const WeightTensor kc = RandomWeights({6, 4, 4, 4}, 3);
  const WeightTensor kt = RandomWeights({4, 6, 4, 4}, 4);
  auto check = [&](auto f) {
    const Tensor3 fm = f(mix);
    const Tensor3 fx = f(x);
    const Tensor3 fy = f(y);
    Tensor3 lin(fm.shape);
    for (std::size_t i = 0; i < lin.data.size(); ++i) {
      lin.data[i] = a * fx.data[i] + b * fy.data[i];
    }
    CHECK(MaxAbsDiff(fm, lin) <= 1e-4 * MaxAbs(lin));
  };
  check([&](const Tensor3& t) { return Conv2d(t, kc, nullptr, 2, 2, 1); });
  check([&](const Tensor3& t) { return ConvTranspose2d(t, kt, nullptr, 2, 2, 1, 0); });
}

TEST_CASE("zeroing an input channel equals zeroing its kernel slice") {
  Tensor3 x = RandomTensor({5, 9, 9}, 8);
  WeightTensor kc = RandomWeights({4, 5, 3, 3}, 9);
  WeightTensor kt = RandomWeights({5, 4, 4, 4}, 10);
  const int c = 2;
  Tensor3 xz = x;
  for (int y = 0; y < 9; ++y) {
    for (int xx = 0; xx < 9; ++xx) xz.at(c, y, xx) = 0.0f;
  }
  WeightTensor kcz = kc;
  for (int o = 0; o < 4; ++o) {
    for (int j = 0; j < 9; ++j) kcz.data[(o * 5 + c) * 9 + j] = 0.0f;
  }
  WeightTensor ktz = kt;
  for (int j = 0; j < 4 * 16; ++j) ktz.data[c * 4 * 16 + j] = 0.0f;
  CHECK(Conv2d(xz, kc, nullptr, 1, 1, 1).data == Conv2d(x, kcz, nullptr, 1, 1, 1).data);
  CHECK(ConvTranspose2d(xz, kt, nullptr, 2, 2, 1, 0).data ==
        ConvTranspose2d(x, ktz, nullptr, 2, 2, 1, 0).data);
}

TEST_CASE("kernel argument errors") {
  const Tensor3 x = RandomTensor({3, 4, 4}, 1);
  CHECK_THROWS_AS(Conv2d(x, WeightTensor{{2, 4, 1, 1}, std::vector<float>(8)}, nullptr, 1, 1, 0),
                  Error);
  CHECK_THROWS_AS(Conv2d(x, WeightTensor{{2, 3}, std::vector<float>(6)}, nullptr, 1, 1, 0),
                  Error);
  CHECK_THROWS_AS(Conv2d(x, WeightTensor{{2, 3, 7, 7}, std::vector<float>(294)}, nullptr, 1, 1,
                         0),
                  Error);
}

TEST_CASE("batch norm") {
  const Tensor3 x = RandomTensor({3, 4, 5}, 2);
  const std::vector<float> one(3, 1.0f);
  const std::vector<float> zero(3, 0.0f);
  const Tensor3 id = NormForward(x, NormKind::kBatch, {one, zero, zero, one});
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    CHECK(id.data[i] == doctest::Approx(x.data[i]).epsilon(1e-5));
  }
  const std::vector<float> scale = {2.0f, 0.5f, -1.0f};
  const std::vector<float> shift = {0.1f, 0.2f, 0.3f};
  const std::vector<float> mean = {1.0f, -1.0f, 0.0f};
  const std::vector<float> var = {4.0f, 0.25f, 1.0f};
  const Tensor3 y = NormForward(x, NormKind::kBatch, {scale, shift, mean, var});
  for (int c = 0; c < 3; ++c) {
    const double expected = (x.at(c, 1, 2) - mean[c]) / std::sqrt(var[c] + kNormEpsilon) *
                                scale[c] +
                            shift[c];
    CHECK(y.at(c, 1, 2) == doctest::Approx(expected).epsilon(1e-6));
  }
}

TEST_CASE("instance norm") {
  Tensor3 x = RandomTensor({2, 6, 6}, 3);
  for (float& v : std::span(x.data).subspan(0, 36)) v = 4.25f;
  const std::vector<float> scale = {3.0f, 1.0f};
  const std::vector<float> shift = {0.5f, 0.0f};
  const Tensor3 y = NormForward(x, NormKind::kInstance, {scale, shift, {}, {}});
  for (int i = 0; i < 36; ++i) CHECK(y.data[i] == doctest::Approx(0.5f));
  double mean = 0.0;
  double sq = 0.0;
  for (int i = 36; i < 72; ++i) {
    mean += y.data[i];
    sq += double{y.data[i]} * y.data[i];
  }
  mean /= 36;
  CHECK(mean == doctest::Approx(0.0).epsilon(1e-6).scale(1.0));
  CHECK(sq / 36 - mean * mean == doctest::Approx(1.0).epsilon(1e-3));
}

TEST_CASE("norms are per-channel independent") {
  const Tensor3 x = RandomTensor({3, 5, 5}, 4);
  Tensor3 two(TensorShape{2, 5, 5});
  std::copy(x.data.begin(), x.data.begin() + 25, two.data.begin());
  std::copy(x.data.begin() + 50, x.data.end(), two.data.begin() + 25);
  const std::vector<float> s3 = {1.1f, 1.2f, 1.3f};
  const std::vector<float> b3 = {0.1f, 0.2f, 0.3f};
  const std::vector<float> m3 = {0.0f, 0.5f, -0.5f};
  const std::vector<float> v3 = {1.0f, 2.0f, 3.0f};
  const std::vector<float> s2 = {1.1f, 1.3f};
  const std::vector<float> b2 = {0.1f, 0.3f};
  const std::vector<float> m2 = {0.0f, -0.5f};
  const std::vector<float> v2 = {1.0f, 3.0f};
  for (NormKind kind : {NormKind::kBatch, NormKind::kInstance}) {
    const Tensor3 full = NormForward(x, kind, {s3, b3, m3, v3});
    const Tensor3 part = NormForward(two, kind, {s2, b2, m2, v2});
    CHECK(std::equal(part.data.begin(), part.data.begin() + 25, full.data.begin()));
    CHECK(std::equal(part.data.begin() + 25, part.data.end(), full.data.begin() + 50));
  }
  CHECK_THROWS_AS(NormForward(x, NormKind::kBatch, {s2, b2, m2, v2}), Error);
}

TEST_CASE("activations") {
  Tensor3 x(TensorShape{1, 1, 4});
  x.data = {-2.0f, -0.5f, 0.0f, 3.0f};
  CHECK(Activate(x, {ActKind::kRelu, 0.0f}).data == std::vector<float>{0, 0, 0, 3});
  const Tensor3 leaky = Activate(x, {ActKind::kLeakyRelu, 0.2f});
  CHECK(leaky.data[0] == doctest::Approx(-0.4f));
  CHECK(leaky.data[3] == 3.0f);
  const Tensor3 t = Activate(x, {ActKind::kTanh, 0.0f});
  CHECK(t.data[0] == doctest::Approx(std::tanh(-2.0)));
  const Tensor3 s = Activate(x, {ActKind::kSigmoid, 0.0f});
  CHECK(s.data[2] == 0.5f);
  CHECK(s.data[3] == doctest::Approx(1.0 / (1.0 + std::exp(-3.0))));
}

TEST_CASE("concat joins channels in order") {
  const Tensor3 a = RandomTensor({2, 3, 3}, 1);
  const Tensor3 b = RandomTensor({1, 3, 3}, 2);
  const Tensor3 c = ConcatChannels({&a, &b});
  CHECK(c.shape == TensorShape{3, 3, 3});
  CHECK(std::equal(a.data.begin(), a.data.end(), c.data.begin()));
  CHECK(std::equal(b.data.begin(), b.data.end(), c.data.begin() + 18));
  const Tensor3 d = RandomTensor({1, 2, 3}, 3);
  CHECK_THROWS_AS(ConcatChannels({&a, &d}), Error);
}

TEST_CASE("pix2pix forward: shape, tanh range, determinism, shape contract") {
  const GeneratorGraph g = Pix(4);
  const WeightStore s = InitRandom(g, 1);
  const auto in = InputsFor(g, 9);
  const RunResult r1 = Run(g, s, in, {true});
  const RunResult r2 = Run(g, s, in);
  CHECK(r1.output.shape == TensorShape{3, 256, 256});
  CHECK(r1.output.data == r2.output.data);
  for (float v : r1.output.data) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
  const ValidationReport vr = Validate(g);
  for (const auto& [id, shape] : vr.shapes) {
    const std::string& name = g.node(id).name;
    if (r1.nodes.count(name)) CHECK_MESSAGE(r1.nodes.at(name).shape == shape, name);
  }
  CHECK(r1.nodes.size() >= g.nodes.size() - 1);
}

TEST_CASE("wav2lip forward: sigmoid range") {
  ArchConfig cfg;
  cfg.arch = Arch::kWav2Lip;
  cfg.nvf = 2;
  cfg.naf = 2;
  cfg.ndf = 2;
  const GeneratorGraph g = BuildWav2Lip(cfg, DefaultWavLayerTable());
  const WeightStore s = InitRandom(g, 2);
  const RunResult r = Run(g, s, InputsFor(g, 4));
  CHECK(r.output.shape == TensorShape{3, 96, 96});
  for (float v : r.output.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("run input errors") {
  const GeneratorGraph g = Pix(1);
  const WeightStore s = InitRandom(g, 1);
  std::map<std::string, Tensor3> wrong;
  wrong["input"] = Tensor3(TensorShape{3, 128, 128});
  try {
    Run(g, s, wrong);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConfig);
  }
  try {
    Run(g, s, {});
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kConfig);
  }
}

TEST_CASE("tensor files round-trip") {
  const auto path = std::filesystem::temp_directory_path() / "unetprune_tensor_test.bin";
  const Tensor3 t = RandomTensor({2, 3, 4}, 5);
  WriteTensorFile(path, t);
  const Tensor3 back = ReadTensorFile(path);
  CHECK(back.shape == t.shape);
  CHECK(back.data == t.data);
  {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << "2 3 4\n" << "abc";
  }
  CHECK_THROWS_AS(ReadTensorFile(path), Error);
  std::filesystem::remove(path);
}

}  // TEST_SUITE
