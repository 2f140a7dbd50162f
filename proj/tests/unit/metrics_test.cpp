// Copyright 2026 The prvq Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "prvq/error.hpp"
#include "prvq/metrics.hpp"
#include "prvq/random.hpp"

using namespace prvq;
using namespace prvq::metrics;

namespace {

signal::MelSpectrogram random_mel(std::size_t t, std::size_t m, std::uint64_t seed) {
  rnd::Engine rng(seed);
  signal::MelSpectrogram s;
  s.values = Tensor(t, m);
  for (auto& v : s.values.values()) v = -5.0 + 2.0 * rnd::normal(rng);
  return s;
}

signal::PitchContour contour(std::vector<double> f0) {
  signal::PitchContour c;
  for (double v : f0) c.voiced.push_back(v > 0.0);
  c.f0 = std::move(f0);
  return c;
}

// Plain recursion over all alignments; exponential but exact.
template <typename Seq>
std::size_t brute_distance(const Seq& a, const Seq& b, std::size_t i, std::size_t j) {
  if (i == a.size()) return b.size() - j;
  if (j == b.size()) return a.size() - i;
  const std::size_t sub = brute_distance(a, b, i + 1, j + 1) + (a[i] == b[j] ? 0 : 1);
  return std::min({sub, brute_distance(a, b, i + 1, j) + 1, brute_distance(a, b, i, j + 1) + 1});
}

std::vector<std::string> all_strings(std::size_t max_len) {
  std::vector<std::string> out{""};
  for (std::size_t start = 0; start < out.size(); ++start) {
    if (out[start].size() == max_len) continue;
    for (char c : {'a', 'b', 'c'}) out.push_back(out[start] + c);
  }
  return out;
}

}  // namespace

TEST(Psnr, Examples) {
  const auto ref = random_mel(20, 8, 1);
  EXPECT_EQ(psnr_mel(ref, ref), kPsnrCap);
  const auto r = ref.values.map();
  const double range = r.maxCoeff() - r.minCoeff();
  auto hyp = ref;
  for (auto& v : hyp.values.values()) v += range;
  EXPECT_NEAR(psnr_mel(ref, hyp), 0.0, 1e-12);

  const auto other = random_mel(20, 8, 2);
  double mse = 0.0;
  for (std::size_t i = 0; i < ref.values.size(); ++i) mse += std::pow(ref.values[i] - other.values[i], 2);
  mse /= double(ref.values.size());
  EXPECT_NEAR(psnr_mel(ref, other), 10.0 * std::log10(range * range / mse), 1e-12);
  EXPECT_THROW(psnr_mel(ref, random_mel(19, 8, 3)), ShapeError);
}

TEST(Mcd, UnitCepstralOffset) {
  const auto ref = random_mel(6, 20, 4);
  EXPECT_EQ(mcd(ref, ref), 0.0);
  Tensor c = mel_cepstrum(ref, 14);
  Tensor shifted = c;
  for (std::size_t t = 0; t < c.rows(); ++t) shifted(t, 1) += 1.0;
  EXPECT_NEAR(mcd_from_cepstra(c, shifted), 6.142, 5e-4);
  EXPECT_NEAR(mcd_from_cepstra(c, shifted), 10.0 / std::log(10.0) * std::sqrt(2.0), 1e-12);

  // The same offset applied through an inverse DCT of the mel frames.
  auto hyp = ref;
  const std::size_t m = ref.bands();
  for (std::size_t t = 0; t < hyp.frames(); ++t) {
    for (std::size_t n = 0; n < m; ++n) {
      hyp.values(t, n) += std::sqrt(2.0 / double(m)) * std::cos(std::numbers::pi * (double(n) + 0.5) / double(m));
    }
  }
  EXPECT_NEAR(mcd(ref, hyp), 10.0 / std::log(10.0) * std::sqrt(2.0), 1e-9);
  // A constant shift only touches c0.
  auto level = ref;
  for (auto& v : level.values.values()) v += 3.0;
  EXPECT_NEAR(mcd(ref, level), 0.0, 1e-9);
}

TEST(Mcd, SymmetricInError) {
  const auto a = random_mel(10, 16, 5), b = random_mel(10, 16, 6);
  EXPECT_NEAR(mcd(a, b), mcd(b, a), 1e-12);
  EXPECT_NEAR(psnr_mel(a, b) - psnr_mel(a, b), 0.0, 0.0);
}

TEST(F0Errors, Examples) {
  const auto ref = contour({100, 110, 120, 0, 0, 130, 140, 150, 160, 170});
  auto same = f0_errors(ref, ref);
  EXPECT_EQ(same.vde, 0.0);
  EXPECT_EQ(same.gpe, 0.0);
  EXPECT_EQ(same.ffe, 0.0);

  const auto flips = contour({100, 0, 120, 90, 0, 130, 140, 150, 160, 170});
  auto e = f0_errors(ref, flips);
  EXPECT_DOUBLE_EQ(e.vde, 0.2);
  EXPECT_DOUBLE_EQ(e.ffe, 0.2);
  EXPECT_EQ(e.gpe, 0.0);

  const auto voiced = contour(std::vector<double>(10, 200.0));
  auto off = voiced;
  off.f0[4] = 250.0;
  e = f0_errors(voiced, off);
  EXPECT_DOUBLE_EQ(e.gpe, 0.1);
  EXPECT_DOUBLE_EQ(e.ffe, 0.1);
  EXPECT_EQ(e.vde, 0.0);
  off.f0[4] = 239.0;  // 19.5%: not gross
  EXPECT_EQ(f0_errors(voiced, off).gpe, 0.0);
  EXPECT_THROW(f0_errors(voiced, contour({100})), ShapeError);
}

TEST(F0Errors, FfeComposition) {
  rnd::Engine rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(30), b(30);
    for (std::size_t i = 0; i < 30; ++i) {
      a[i] = rnd::uniform01(rng) < 0.3 ? 0.0 : rnd::uniform(rng, 80, 300);
      b[i] = rnd::uniform01(rng) < 0.3 ? 0.0 : rnd::uniform(rng, 80, 300);
    }
    const auto ca = contour(a), cb = contour(b);
    const auto e = f0_errors(ca, cb);
    std::size_t both = 0;
    for (std::size_t i = 0; i < 30; ++i) both += ca.voiced[i] && cb.voiced[i];
    EXPECT_NEAR(e.ffe, e.vde + e.gpe * double(both) / 30.0, 1e-12);
    EXPECT_GE(e.ffe, e.vde);
  }
}

TEST(Pearson, Examples) {
  const std::vector<double> x{1, 2, 3, 5, 8};
  std::vector<double> neg;
  for (double v : x) neg.push_back(-v);
  EXPECT_NEAR(pearson(x, x), 1.0, 1e-15);
  EXPECT_NEAR(pearson(x, neg), -1.0, 1e-15);
  EXPECT_THROW(pearson(x, std::vector<double>(5, 2.0)), NumericError);
  EXPECT_THROW(pearson(std::vector<double>{1}, std::vector<double>{1}), ContractError);
  const auto a = contour({100, 0, 120, 130, 140}), b = contour({200, 180, 0, 260, 280});
  EXPECT_NEAR(pearson_voiced(a, b), 1.0, 1e-12);  // frames 0, 3, 4
}

TEST(Spearman, RanksAndOracle) {
  EXPECT_EQ(ranks(std::vector<double>{10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
  const std::vector<double> x{0.1, 0.4, 0.2, 0.9, 0.5};
  std::vector<double> cubed;
  for (double v : x) cubed.push_back(v * v * v);
  EXPECT_NEAR(spearman(x, cubed), 1.0, 1e-15);

  // Without ties: 1 - 6 sum d^2 / (n (n^2 - 1)).
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(9), b(9);
    for (auto& v : a) v = g(rng);
    for (auto& v : b) v = g(rng);
    const auto ra = ranks(a), rb = ranks(b);
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d2 += (ra[i] - rb[i]) * (ra[i] - rb[i]);
    EXPECT_NEAR(spearman(a, b), 1.0 - 6.0 * d2 / (9.0 * 80.0), 1e-12);
  }
}

TEST(WerCer, Examples) {
  auto r = wer_cer("the cat sat", "the cat sat");
  EXPECT_EQ(r.wer, 0.0);
  EXPECT_EQ(r.cer, 0.0);
  EXPECT_DOUBLE_EQ(wer_cer("a b c", "a x c").wer, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(wer_cer("abc", "ab").cer, 1.0 / 3.0);
  EXPECT_EQ(wer_cer("Hello, World!", "hello world").wer, 0.0);
  EXPECT_THROW(wer_cer("  ?! ", "x"), ContractError);
}

TEST(WerCer, MatchesBruteForceOnShortStrings) {
  const auto strings = all_strings(8);
  std::vector<std::string> sample;
  for (std::size_t i = 0; i < strings.size(); i += 37) sample.push_back(strings[i]);
  for (const auto& a : all_strings(4)) sample.push_back(a);
  std::size_t checked = 0;
  for (const auto& a : sample) {
    for (const auto& b : sample) {
      if (a.size() + b.size() > 12) continue;
      ASSERT_EQ(edit_distance(a, b), brute_distance(a, b, 0, 0)) << a << " / " << b;
      if (!a.empty()) {
        EXPECT_DOUBLE_EQ(wer_cer(a, b).cer, double(brute_distance(a, b, 0, 0)) / double(a.size()));
      }
      ++checked;
    }
  }
  EXPECT_GT(checked, 10000u);
}

TEST(CosineSimilarity, Basics) {
  EXPECT_NEAR(cosine_similarity(std::vector<double>{1, 2}, std::vector<double>{2, 4}), 1.0, 1e-15);
  EXPECT_NEAR(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 3}), 0.0, 1e-15);
  EXPECT_THROW(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 1}), NumericError);
}

TEST(MetricReport, JsonAndCsv) {
  MetricReport r;
  r.mcd = 3.5;
  r.vde = 0.25;
  const auto j = nlohmann::json::parse(r.to_json());
  EXPECT_EQ(j.size(), 2u);
  EXPECT_EQ(j["mcd"], 3.5);
  EXPECT_EQ(r.csv_row(), ",3.5,0.25,,,,,,,");
  r.gpe = 1.5;
  EXPECT_THROW(r.validate(), ContractError);
}
