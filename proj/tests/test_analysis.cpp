/*
 * Copyright 2026 The fuselab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "fuselab/analysis.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace fuselab;

namespace {

double pair_count_u(const std::vector<double> &a, const std::vector<double> &b)
{
  double u = 0.0;
  for(double x : a)
    for(double y : b)
      u += x > y ? 1.0 : (x == y ? 0.5 : 0.0);
  return u;
}

std::vector<bool> step_up(const std::vector<double> &p, double q)
{
  const std::size_t m = p.size();
  std::vector<double> s = p;
  std::sort(s.begin(), s.end());
  std::size_t k = 0;
  for(std::size_t i = 1; i <= m; ++i)
    if(s[i - 1] <= double(i) * q / double(m))
      k = i;
  std::vector<bool> out(m, false);
  for(std::size_t i = 0; i < m && k > 0; ++i)
    out[i] = p[i] <= s[k - 1];
  return out;
}

} // namespace

TEST(Dice, Examples)
{
  const Dims dims{8, 1, 1};
  const LabelVolume a(dims, std::vector<std::uint16_t>{1, 1, 1, 1, 0, 0, 0, 0});
  const LabelVolume b(dims, std::vector<std::uint16_t>{0, 0, 1, 1, 1, 1, 0, 2});
  const std::vector<std::uint16_t> labels{1, 2, 3};
  const auto r = dice(a, b, labels);
  EXPECT_DOUBLE_EQ(r.per_label.at(1), 0.5);
  EXPECT_DOUBLE_EQ(r.per_label.at(2), 0.0);
  EXPECT_DOUBLE_EQ(r.per_label.at(3), 1.0);
  EXPECT_DOUBLE_EQ(r.average, 0.5);

  const auto same = dice(a, a, labels);
  for(const auto &[l, d] : same.per_label)
    EXPECT_DOUBLE_EQ(d, 1.0);
}

TEST(Dice, Symmetric)
{
  std::mt19937_64 rng(3);
  const Dims dims{7, 6, 5};
  const auto a = fuselab::testing::random_labels(dims, 5, rng);
  const auto b = fuselab::testing::random_labels(dims, 5, rng);
  const auto labels = present_labels(a, b);
  EXPECT_EQ(dice(a, b, labels).per_label, dice(b, a, labels).per_label);
}

TEST(Dice, UnassignedNeverMatches)
{
  const Dims dims{2, 1, 1};
  const LabelVolume a(dims, std::vector<std::uint16_t>{kUnassigned, 1});
  const std::vector<std::uint16_t> bad{kUnassigned};
  EXPECT_THROW(dice(a, a, bad), ValidationError);
  EXPECT_EQ(present_labels(a, a), std::vector<std::uint16_t>{1});
  const std::vector<std::uint16_t> none;
  EXPECT_THROW(dice(a, a, none), ValidationError);
  const std::vector<std::uint16_t> one{1};
  EXPECT_THROW(dice(a, LabelVolume(Dims{1, 2, 1}, std::uint16_t(1)), one), ValidationError);
}

TEST(Dice, JsonRoundTrip)
{
  DiceReport r;
  r.per_label = {{1, 0.25}, {17, 0.875}};
  r.average = 0.5625;
  const auto j = to_json(r);
  EXPECT_EQ(j.dump(), R"({"per_label":{"1":0.25,"17":0.875},"average":0.5625})");
  const auto back = dice_report_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.per_label, r.per_label);
  EXPECT_EQ(back.average, r.average);
  EXPECT_THROW(dice_report_from_json(nlohmann::json::parse(R"({"per_label":{"x":1},"average":1})")),
               ValidationError);
}

TEST(TScore, WelchValue)
{
  const std::vector<double> c{0.1, 0.2}, w{0.8, 0.9};
  EXPECT_NEAR(one_sided_tscore(w, c), 9.899494936611665, 1e-9);
  EXPECT_NEAR(one_sided_tscore(c, w), -9.899494936611665, 1e-9);
  const std::vector<double> e{0.4, 0.6};
  EXPECT_EQ(one_sided_tscore(e, e), 0.0);
}

TEST(TScore, Sentinels)
{
  const std::vector<double> empty, one{0.3}, two{0.2, 0.4}, flat{0.5, 0.5}, low{0.1, 0.1};
  EXPECT_EQ(one_sided_tscore(empty, two), 1000.0);
  EXPECT_EQ(one_sided_tscore(two, empty), -1000.0);
  EXPECT_EQ(one_sided_tscore(one, two), 1000.0);
  EXPECT_EQ(one_sided_tscore(two, one), -1000.0);
  EXPECT_EQ(one_sided_tscore(std::vector<double>{0.7}, one), 1000.0);
  EXPECT_EQ(one_sided_tscore(one, std::vector<double>{0.7}), -1000.0);
  EXPECT_EQ(one_sided_tscore(one, one), 0.0);
  EXPECT_EQ(one_sided_tscore(flat, low), 1000.0);
  EXPECT_EQ(one_sided_tscore(low, flat), -1000.0);
  EXPECT_EQ(one_sided_tscore(flat, flat), 0.0);
  // large but finite statistic is clamped
  const std::vector<double> w{0.9, 0.9 + 1e-9}, c{0.1, 0.1 + 1e-9};
  EXPECT_EQ(one_sided_tscore(w, c), 1000.0);
}

TEST(TScore, MapSplitsByTargetAgreement)
{
  const Dims dims{2, 1, 1};
  const LabelVolume target(dims, std::vector<std::uint16_t>{1, 1});
  const std::vector<LabelVolume> segs{
    LabelVolume(dims, std::vector<std::uint16_t>{1, 1}), LabelVolume(dims, std::vector<std::uint16_t>{1, 1}),
    LabelVolume(dims, std::vector<std::uint16_t>{2, 1}), LabelVolume(dims, std::vector<std::uint16_t>{2, 1})};
  const std::vector<ProbabilityVolume> errors{
    ProbabilityVolume(dims, std::vector<float>{0.1f, 0.3f}), ProbabilityVolume(dims, std::vector<float>{0.2f, 0.3f}),
    ProbabilityVolume(dims, std::vector<float>{0.8f, 0.3f}), ProbabilityVolume(dims, std::vector<float>{0.9f, 0.3f})};
  const std::vector<ErrorField> fields(errors.begin(), errors.end());
  const auto t = tscore_map(target, segs, fields);
  EXPECT_NEAR(t[0], 9.899494936611665, 1e-5);
  EXPECT_EQ(t[1], 1000.0f);

  // every W above every C with spread on both sides
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 0.4);
  for(int i = 0; i < 100; ++i)
    {
    std::vector<double> c{u(rng), u(rng), u(rng)}, w{0.5 + u(rng), 0.5 + u(rng)};
    EXPECT_GT(one_sided_tscore(w, c), 0.0);
    }
  const std::vector<ErrorField> short_fields(fields.begin(), fields.begin() + 2);
  EXPECT_THROW(tscore_map(target, segs, short_fields), ValidationError);
}

TEST(Oracle, NoiselessValues)
{
  const Dims dims{3, 1, 1};
  const LabelVolume target(dims, std::vector<std::uint16_t>{1, 2, 3});
  const std::vector<LabelVolume> segs{LabelVolume(dims, std::vector<std::uint16_t>{1, 0, 3})};
  OracleConfig cfg;
  cfg.sigma = 0.0;
  for(auto mode : {OracleMode::G, OracleMode::GS})
    {
    cfg.mode = mode;
    const auto p = oracle_error_probs(target, segs, cfg);
    ASSERT_EQ(p.size(), 1u);
    EXPECT_FLOAT_EQ(p[0][0], 0.4f);
    EXPECT_FLOAT_EQ(p[0][1], 0.6f);
    EXPECT_FLOAT_EQ(p[0][2], 0.4f);
    }
}

TEST(Oracle, SharedNoiseIsCommonAcrossAtlases)
{
  std::mt19937_64 rng(8);
  const Dims dims{10, 10, 10};
  const auto target = fuselab::testing::random_labels(dims, 3, rng);
  std::vector<LabelVolume> segs;
  for(int i = 0; i < 4; ++i)
    segs.push_back(fuselab::testing::random_labels(dims, 3, rng));
  OracleConfig cfg;
  cfg.mode = OracleMode::GS;
  cfg.sigma = 0.05;
  cfg.seed = 12;
  const auto p = oracle_error_probs(target, segs, cfg);
  for(std::size_t x = 0; x < dims.count(); ++x)
    {
    const double base0 = segs[0][x] == target[x] ? 0.4 : 0.6;
    for(std::size_t i = 1; i < segs.size(); ++i)
      {
      const double base = segs[i][x] == target[x] ? 0.4 : 0.6;
      // sigma 0.05 keeps values off the clamp bounds here
      ASSERT_NEAR(p[i][x] - base, p[0][x] - base0, 1e-6);
      }
    }

  cfg.mode = OracleMode::G;
  const auto g = oracle_error_probs(target, segs, cfg);
  std::size_t differing = 0;
  for(std::size_t x = 0; x < dims.count(); ++x)
    differing += (g[0][x] - (segs[0][x] == target[x] ? 0.4f : 0.6f)) !=
                 (g[1][x] - (segs[1][x] == target[x] ? 0.4f : 0.6f));
  EXPECT_GT(differing, dims.count() * 9 / 10);
}

TEST(Oracle, DeterministicAndSeedDependent)
{
  std::mt19937_64 rng(9);
  const Dims dims{9, 8, 7};
  const auto target = fuselab::testing::random_labels(dims, 3, rng);
  const std::vector<LabelVolume> segs{fuselab::testing::random_labels(dims, 3, rng),
                                      fuselab::testing::random_labels(dims, 3, rng)};
  OracleConfig cfg;
  cfg.seed = 100;
  const auto a = oracle_error_probs(target, segs, cfg, 1);
  const auto b = oracle_error_probs(target, segs, cfg, 4);
  EXPECT_EQ(a, b);
  cfg.seed = 101;
  const auto c = oracle_error_probs(target, segs, cfg);
  EXPECT_NE(a[0], c[0]);
  for(const auto &v : a)
    for(float x : v.data())
      {
      EXPECT_GE(x, 0.0f);
      EXPECT_LE(x, 1.0f);
      }
}

TEST(Oracle, NoiseMoments)
{
  const Dims dims{40, 40, 40};
  const LabelVolume target(dims, std::uint16_t(1));
  const std::vector<LabelVolume> segs{target};
  OracleConfig cfg;
  cfg.sigma = 0.05;
  cfg.seed = 4;
  const auto p = oracle_error_probs(target, segs, cfg);
  double s = 0.0, s2 = 0.0;
  for(float x : p[0].data())
    {
    s += x - 0.4;
    s2 += (x - 0.4) * (x - 0.4);
    }
  const double n = double(dims.count());
  EXPECT_NEAR(s / n, 0.0, 5.0 * 0.05 / std::sqrt(n));
  EXPECT_NEAR(std::sqrt(s2 / n), 0.05, 0.002);
}

TEST(Oracle, RejectsInvalidConfig)
{
  const Dims dims{1, 1, 1};
  const LabelVolume t(dims, std::uint16_t(1));
  const std::vector<LabelVolume> segs{t};
  OracleConfig cfg;
  cfg.sigma = -1.0;
  EXPECT_THROW(oracle_error_probs(t, segs, cfg), ValidationError);
  cfg = {};
  cfg.p_correct = 0.7;
  EXPECT_THROW(oracle_error_probs(t, segs, cfg), ValidationError);
  const std::vector<LabelVolume> bad{LabelVolume(Dims{2, 1, 1}, std::uint16_t(1))};
  EXPECT_THROW(oracle_error_probs(t, bad, {}), ValidationError);
}

TEST(MannWhitney, Examples)
{
  EXPECT_EQ(mann_whitney_u(std::vector<double>{1, 2}, std::vector<double>{3, 4}).u, 0.0);
  const std::vector<double> a{1, 2, 2, 5};
  EXPECT_EQ(mann_whitney_u(a, a).u, 8.0);
  const auto single = mann_whitney_u(std::vector<double>{5}, std::vector<double>{1});
  EXPECT_EQ(single.u, 1.0);
  EXPECT_NEAR(single.p_value, 1.0, 1e-12);
  EXPECT_THROW(mann_whitney_u(std::vector<double>{}, a), ValidationError);
}

TEST(MannWhitney, ReferenceValues)
{
  const std::vector<double> a{0.81, 0.79, 0.83, 0.80, 0.82}, b{0.78, 0.77, 0.80, 0.76, 0.79, 0.75};
  const auto two = mann_whitney_u(a, b);
  EXPECT_EQ(two.u, 28.0);
  EXPECT_NEAR(two.p_value, 0.021869769467892982, 1e-12);
  const auto one = mann_whitney_u(a, b, Alternative::Greater);
  EXPECT_NEAR(one.p_value, 0.010934884733946491, 1e-12);

  std::vector<double> c(10), d(12);
  std::iota(c.begin(), c.end(), 1.0);
  std::iota(d.begin(), d.end(), 5.0);
  const auto ties = mann_whitney_u(c, d);
  EXPECT_EQ(ties.u, 18.0);
  EXPECT_NEAR(ties.p_value, 0.006123830881178351, 1e-12);

  const std::vector<double> e{3.1, 4.2, 5.5}, f{1.0, 2.0, 0.5};
  EXPECT_EQ(mann_whitney_u(e, f).u, 9.0);
  EXPECT_NEAR(mann_whitney_u(e, f).p_value, 0.1, 1e-12);
  EXPECT_NEAR(mann_whitney_u(e, f, Alternative::Greater).p_value, 0.05, 1e-12);
}

TEST(MannWhitney, ComplementAndEnumeration)
{
  std::mt19937_64 rng(77);
  std::uniform_int_distribution<int> v(0, 6);
  for(int trial = 0; trial < 200; ++trial)
    {
    std::vector<double> a(1 + rng() % 9), b(1 + rng() % 9);
    for(auto &x : a)
      x = v(rng);
    for(auto &x : b)
      x = v(rng);
    const auto ab = mann_whitney_u(a, b), ba = mann_whitney_u(b, a);
    EXPECT_EQ(ab.u, pair_count_u(a, b));
    EXPECT_EQ(ab.u + ba.u, double(a.size() * b.size()));
    EXPECT_NEAR(ab.p_value, ba.p_value, 1e-12);
    EXPECT_GE(ab.p_value, 0.0);
    EXPECT_LE(ab.p_value, 1.0);
    }
}

TEST(BenjaminiHochberg, Examples)
{
  EXPECT_EQ(benjamini_hochberg(std::vector<double>{0.01, 0.02, 0.5}, 0.05), (std::vector<bool>{true, true, false}));
  EXPECT_EQ(benjamini_hochberg(std::vector<double>{1, 1, 1}, 0.05), (std::vector<bool>{false, false, false}));
  EXPECT_EQ(benjamini_hochberg(std::vector<double>{0.01}, 0.05), (std::vector<bool>{true}));
  // step-up: the 0.04 at rank 4 admits the smaller ones even though 0.03 > 2 * 0.05 / 4
  EXPECT_EQ(benjamini_hochberg(std::vector<double>{0.04, 0.03, 0.035, 0.001}, 0.05),
            (std::vector<bool>{true, true, true, true}));
  EXPECT_THROW(benjamini_hochberg(std::vector<double>{1.5}, 0.05), ValidationError);
  EXPECT_THROW(benjamini_hochberg(std::vector<double>{0.5}, 1.0), ValidationError);
}

TEST(BenjaminiHochberg, MatchesStepUpAndIsMonotone)
{
  std::mt19937_64 rng(13);
  std::uniform_real_distribution<double> u(0.0, 0.2);
  for(int trial = 0; trial < 200; ++trial)
    {
    std::vector<double> p(1 + rng() % 20);
    for(auto &x : p)
      x = u(rng);
    EXPECT_EQ(benjamini_hochberg(p, 0.05), step_up(p, 0.05));
    const auto lo = benjamini_hochberg(p, 0.05), hi = benjamini_hochberg(p, 0.1);
    for(std::size_t i = 0; i < p.size(); ++i)
      EXPECT_TRUE(!lo[i] || hi[i]);
    }
}
