/*
 * Copyright 2026 The mvguide Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include "mvguide/stats.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "mvguide/rng.hpp"
#include "oracles.hpp"

namespace mvguide {
namespace {

ContingencyTable make_table(std::size_t r, std::size_t c,
                            std::initializer_list<std::int64_t> counts) {
  ContingencyTable t(r, c);
  std::size_t i = 0;
  for (auto v : counts) t.counts[i++] = v;
  return t;
}

TEST(ChisqStatistic, IdenticalRowsGiveZero) {
  auto t = make_table(2, 2, {10, 10, 10, 10});
  auto res = chisq_statistic(t);
  ASSERT_TRUE(res.has_value());
  EXPECT_DOUBLE_EQ(res->stat, 0.0);
  EXPECT_EQ(res->df, 1);
}

TEST(ChisqStatistic, HandComputedTwoByTwo) {
  // totals 3/7 and 4/6 over 10: expected {1.2, 1.8, 2.8, 4.2}
  auto t = make_table(2, 2, {1, 2, 3, 4});
  auto res = chisq_statistic(t);
  ASSERT_TRUE(res.has_value());
  EXPECT_NEAR(res->stat, 0.07936507936507936, 1e-14);
  EXPECT_EQ(res->df, 1);
}

TEST(ChisqStatistic, QuadraticExamplePanels) {
  auto left = make_table(4, 2, {5, 17, 16, 12, 17, 10, 6, 17});
  auto right = make_table(4, 2, {9, 16, 14, 11, 9, 16, 12, 13});
  auto lres = chisq_statistic(left);
  auto rres = chisq_statistic(right);
  ASSERT_TRUE(lres && rres);
  EXPECT_EQ(lres->df, 3);
  EXPECT_NEAR(chisq_pvalue(lres->stat, lres->df), 0.005, 5e-4);
  EXPECT_NEAR(chisq_pvalue(rres->stat, rres->df), 0.404, 5e-4);
}

TEST(ChisqStatistic, DropsZeroRowsAndColumns) {
  auto t = make_table(3, 3, {5, 0, 5, 0, 0, 0, 3, 0, 3});
  auto res = chisq_statistic(t);
  ASSERT_TRUE(res.has_value());
  EXPECT_EQ(res->df, 1);  // reduced to 2x2
  EXPECT_NEAR(res->stat, 0.0, 1e-12);
}

TEST(ChisqStatistic, DegenerateTableSignalsNoInformation) {
  EXPECT_FALSE(chisq_statistic(make_table(1, 4, {3, 4, 5, 6})).has_value());
  EXPECT_FALSE(chisq_statistic(make_table(3, 2, {4, 6, 0, 0, 0, 0})));
  EXPECT_THROW(
      (void)chisq_statistic(make_table(2, 2, {1, -1, 2, 2})),
      std::invalid_argument);
}

TEST(ChisqStatistic, RowAndColumnPermutationInvariance) {
  Rng rng(11, 0);
  for (int rep = 0; rep < 20; ++rep) {
    std::size_t r = 2 + rng.next_below(4);
    std::size_t c = 2 + rng.next_below(4);
    ContingencyTable t(r, c);
    for (auto& v : t.counts) v = static_cast<std::int64_t>(rng.next_below(9));
    auto base = chisq_statistic(t);
    if (!base) continue;
    // swap two rows and two columns
    ContingencyTable p(r, c);
    std::vector<std::size_t> rp(r), cp(c);
    for (std::size_t i = 0; i < r; ++i) rp[i] = i;
    for (std::size_t i = 0; i < c; ++i) cp[i] = i;
    rng.shuffle(rp);
    rng.shuffle(cp);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < c; ++j) p.at(i, j) = t.at(rp[i], cp[j]);
    }
    auto perm = chisq_statistic(p);
    ASSERT_TRUE(perm.has_value());
    EXPECT_NEAR(perm->stat, base->stat, 1e-9 * (1 + base->stat));
    EXPECT_EQ(perm->df, base->df);
  }
}

TEST(ChisqStatistic, DuplicateRowMergeAndCountScaling) {
  auto t = make_table(3, 2, {4, 8, 4, 8, 10, 2});
  auto merged = make_table(2, 2, {8, 16, 10, 2});
  auto a = chisq_statistic(t);
  auto b = chisq_statistic(merged);
  ASSERT_TRUE(a && b);
  EXPECT_NEAR(a->stat, b->stat, 1e-10);
  EXPECT_EQ(a->df, 2);
  EXPECT_EQ(b->df, 1);

  ContingencyTable scaled = t;
  for (auto& v : scaled.counts) v *= 7;
  auto s = chisq_statistic(scaled);
  ASSERT_TRUE(s.has_value());
  EXPECT_NEAR(s->stat, 7.0 * a->stat, 1e-9 * (1 + s->stat));
}

TEST(ChisqPvalue, BasicShape) {
  EXPECT_DOUBLE_EQ(chisq_pvalue(0.0, 1), 1.0);
  EXPECT_DOUBLE_EQ(chisq_pvalue(0.0, 50), 1.0);
  EXPECT_DOUBLE_EQ(chisq_pvalue(1e6, 1), 1e-300);  // tail saturation
  EXPECT_THROW(chisq_pvalue(1.0, 0), std::invalid_argument);
}

TEST(ChisqPvalue, TwoDfClosedForm) {
  for (double stat : {0.1, 0.5, 1.0, 3.0, 10.0, 40.0}) {
    EXPECT_NEAR(chisq_pvalue(stat, 2), std::exp(-0.5 * stat), 1e-13);
  }
}

TEST(ChisqPvalue, MatchesQuadratureOracle) {
  for (int df : {1, 2, 3, 5, 10, 50}) {
    for (double mult : {0.2, 0.5, 1.0, 1.5, 2.5}) {
      double stat = mult * df;
      double p = chisq_pvalue(stat, df);
      double q = oracles::chisq_upper_tail(stat, df);
      EXPECT_NEAR(p, q, 1e-10) << "df=" << df << " stat=" << stat;
    }
  }
}

TEST(ChisqPvalue, StrictlyDecreasingInStat) {
  for (int df : {1, 3, 10, 100}) {
    double prev = 2.0;
    for (double stat = 0.25; stat < 8.0 * df; stat *= 1.7) {
      double p = chisq_pvalue(stat, df);
      EXPECT_LT(p, prev);
      prev = p;
    }
  }
}

TEST(CurveEval, InterpolationAndClamping) {
  Curve c;
  c.u = {0.0, 2.0};
  c.s = {0.0, 4.0};
  EXPECT_DOUBLE_EQ(curve_eval(c, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(curve_eval(c, -5.0), 0.0);
  EXPECT_DOUBLE_EQ(curve_eval(c, 9.0), 4.0);
  EXPECT_DOUBLE_EQ(curve_eval(c, 2.0), 4.0);
}

TEST(CurveEval, ExactOnKnots) {
  Rng rng(5, 0);
  Curve c;
  double u = 0;
  for (int i = 0; i < 12; ++i) {
    u += 0.1 + rng.next_double();
    c.u.push_back(u);
    c.s.push_back(rng.next_normal());
  }
  for (std::size_t i = 0; i < c.u.size(); ++i) {
    EXPECT_DOUBLE_EQ(curve_eval(c, c.u[i]), c.s[i]);
  }
}

TEST(Lowess, ReproducesConstants) {
  std::vector<double> u{1, 2, 3, 4, 5, 6}, y(6, 3.25);
  Curve c = lowess(u, y, 0.7, 3);
  for (double s : c.s) EXPECT_NEAR(s, 3.25, 1e-12);
}

TEST(Lowess, ExactOnLines) {
  std::vector<double> u, y;
  for (int i = 0; i < 15; ++i) {
    u.push_back(0.3 * i - 1.0);
    y.push_back(2.5 - 1.25 * u.back());
  }
  Curve c = lowess(u, y, 0.5, 2);
  for (std::size_t i = 0; i < c.u.size(); ++i) {
    EXPECT_NEAR(c.s[i], 2.5 - 1.25 * c.u[i], 1e-9);
  }
}

std::pair<std::vector<double>, std::vector<double>> noisy_sine_20() {
  Rng rng(77, 0);
  std::vector<double> u, y;
  for (int i = 0; i < 20; ++i) {
    double x = 0.35 * i;
    u.push_back(x);
    y.push_back(std::sin(x) + 0.3 * rng.next_normal());
  }
  return {u, y};
}

TEST(Lowess, MatchesBruteForceOracleOnNoisySine) {
  auto [u, y] = noisy_sine_20();
  Curve c = lowess(u, y, 0.5, 3);
  auto oracle = oracles::lowess_oracle(u, y, 0.5, 3);
  ASSERT_EQ(c.u.size(), oracle.u.size());
  for (std::size_t i = 0; i < c.u.size(); ++i) {
    EXPECT_DOUBLE_EQ(c.u[i], oracle.u[i]);
    EXPECT_NEAR(c.s[i], oracle.s[i], 1e-9) << "knot " << i;
  }
}

TEST(Lowess, MatchesOracleWithDuplicatesAndMixedSpans) {
  Rng rng(78, 0);
  for (int rep = 0; rep < 8; ++rep) {
    std::vector<double> u, y;
    int n = 10 + static_cast<int>(rng.next_below(30));
    for (int i = 0; i < n; ++i) {
      u.push_back(static_cast<double>(rng.next_below(12)));  // duplicates
      y.push_back(rng.next_normal());
    }
    double span = 0.3 + 0.7 * rng.next_double();
    int iters = static_cast<int>(rng.next_below(4));
    Curve c = lowess(u, y, span, iters);
    auto oracle = oracles::lowess_oracle(u, y, span, iters);
    ASSERT_EQ(c.u.size(), oracle.u.size());
    for (std::size_t i = 0; i < c.u.size(); ++i) {
      EXPECT_NEAR(c.s[i], oracle.s[i], 1e-9);
    }
  }
}

TEST(Lowess, InputOrderInvariance) {
  auto [u, y] = noisy_sine_20();
  Curve base = lowess(u, y, 0.6, 2);
  Rng rng(79, 0);
  std::vector<std::size_t> perm(u.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  rng.shuffle(perm);
  std::vector<double> pu, py;
  for (std::size_t i : perm) {
    pu.push_back(u[i]);
    py.push_back(y[i]);
  }
  Curve shuffled = lowess(pu, py, 0.6, 2);
  ASSERT_EQ(base.u.size(), shuffled.u.size());
  for (std::size_t i = 0; i < base.u.size(); ++i) {
    EXPECT_NEAR(base.s[i], shuffled.s[i], 1e-12);
  }
}

TEST(Lowess, TimeShiftInvariance) {
  auto [u, y] = noisy_sine_20();
  Curve base = lowess(u, y, 0.6, 1);
  std::vector<double> shifted = u;
  for (double& v : shifted) v += 41.0;
  Curve moved = lowess(shifted, y, 0.6, 1);
  for (std::size_t i = 0; i < base.u.size(); ++i) {
    EXPECT_DOUBLE_EQ(moved.u[i], base.u[i] + 41.0);
    EXPECT_NEAR(moved.s[i], base.s[i], 1e-9);
  }
}

TEST(Lowess, ErrorsOnDegenerateInput) {
  std::vector<double> one_u{1.0, 1.0, 1.0}, y3{1, 2, 3};
  EXPECT_THROW(lowess(one_u, y3), std::invalid_argument);
  std::vector<double> single{1.0}, y1{2.0};
  EXPECT_THROW(lowess(single, y1), std::invalid_argument);
  std::vector<double> u2{1.0, 2.0}, y2{1.0, 2.0};
  EXPECT_THROW(lowess(u2, y2, 0.0, 0), std::invalid_argument);
}

TEST(Lowess, AggregatedEqualsPointLevel) {
  Rng rng(80, 0);
  for (int rep = 0; rep < 10; ++rep) {
    std::size_t m = 3 + rng.next_below(8);
    std::vector<double> u, count, sum;
    std::vector<double> pts_u, pts_y;
    double base = rng.next_normal();
    for (std::size_t j = 0; j < m; ++j) {
      base += 0.2 + rng.next_double();
      std::size_t c = 1 + rng.next_below(5);
      double s = 0.0;
      for (std::size_t t = 0; t < c; ++t) {
        double yv = rng.next_normal();
        pts_u.push_back(base);
        pts_y.push_back(yv);
        s += yv;
      }
      u.push_back(base);
      count.push_back(static_cast<double>(c));
      sum.push_back(s);
    }
    double span = 0.4 + 0.6 * rng.next_double();
    Curve agg = lowess_aggregated(u, count, sum, span);
    Curve pts = lowess(pts_u, pts_y, span, 0);
    ASSERT_EQ(agg.u.size(), pts.u.size());
    for (std::size_t i = 0; i < agg.u.size(); ++i) {
      EXPECT_NEAR(agg.s[i], pts.s[i], 1e-9);
    }
  }
}

}  // namespace
}  // namespace mvguide
