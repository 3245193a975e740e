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
#include "mvguide/splitter.hpp"

#include <gtest/gtest.h>

#include <numeric>

#include "mvguide/rng.hpp"
#include "oracles.hpp"

namespace mvguide {
namespace {

struct TestNode {
  Dataset ds;
  std::vector<std::size_t> rows;
};

TestNode make_node(std::vector<double> x, std::vector<std::uint8_t> xmiss,
                   std::vector<std::vector<double>> ys,
                   std::vector<std::vector<std::uint8_t>> ymiss = {},
                   bool categorical = false, int n_categories = 0) {
  TestNode node;
  node.ds.layout = Layout::kMultiresponse;
  node.ds.n_rows = x.size();
  Column xc{"x",
            categorical ? ColumnRole::kCategoricalPredictor
                        : ColumnRole::kNumericPredictor,
            std::move(x), std::move(xmiss), {}};
  for (int c = 0; c < n_categories; ++c) {
    xc.categories.push_back(std::string(1, static_cast<char>('A' + c)));
  }
  node.ds.columns.push_back(std::move(xc));
  for (std::size_t k = 0; k < ys.size(); ++k) {
    Column yc{"y" + std::to_string(k + 1), ColumnRole::kResponse, ys[k], {}, {}};
    yc.missing = ymiss.empty() ? std::vector<std::uint8_t>(node.ds.n_rows, 0)
                               : ymiss[k];
    node.ds.columns.push_back(std::move(yc));
  }
  node.rows.resize(node.ds.n_rows);
  std::iota(node.rows.begin(), node.rows.end(), 0);
  return node;
}

oracles::Matrix matrix_of(const TestNode& node) {
  oracles::Matrix m;
  for (std::size_t c : node.ds.response_indices()) {
    m.y.push_back(node.ds.columns[c].values);
    m.miss.push_back(node.ds.columns[c].missing);
  }
  return m;
}

TEST(NodeImpurity, BaseCases) {
  auto single = make_node({1}, {0}, {{5.0}});
  EXPECT_DOUBLE_EQ(node_impurity(single.ds, single.rows), 0.0);

  auto two = make_node({1, 2}, {0, 0}, {{0, 2}, {1, 1}});
  EXPECT_DOUBLE_EQ(node_impurity(two.ds, two.rows), 2.0);
}

TEST(NodeImpurity, MatchesBruteForceOracle) {
  Rng rng(61, 0);
  for (int rep = 0; rep < 25; ++rep) {
    std::vector<double> x(10);
    std::vector<std::uint8_t> xm(10, 0);
    std::vector<std::vector<double>> ys(3, std::vector<double>(10));
    std::vector<std::vector<std::uint8_t>> ym(
        3, std::vector<std::uint8_t>(10, 0));
    for (int i = 0; i < 10; ++i) {
      x[static_cast<std::size_t>(i)] = rng.next_normal();
      for (int k = 0; k < 3; ++k) {
        ys[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] =
            rng.next_normal() * 3;
        ym[static_cast<std::size_t>(k)][static_cast<std::size_t>(i)] =
            rng.next_double() < 0.2;
      }
    }
    auto node = make_node(x, xm, ys, ym);
    auto m = matrix_of(node);
    EXPECT_NEAR(node_impurity(node.ds, node.rows),
                oracles::sse_of(m, node.rows), 1e-12);
  }
}

TEST(NodeImpurityLong, SquaredResidualsAboutTheCurve) {
  Curve c;
  c.u = {0.0, 10.0};
  c.s = {0.0, 10.0};
  SubjectSeries s;
  s.id = "a";
  s.obs = {{0.0, 1.0}, {5.0, 5.0}, {10.0, 8.0}};
  std::vector<SubjectSeries> all{s};
  std::vector<std::size_t> idx{0};
  EXPECT_DOUBLE_EQ(node_impurity_long(all, idx, c), 1.0 + 0.0 + 4.0);
}

TEST(BestNumericSplit, PerfectSeparation) {
  auto node = make_node({1, 2, 3, 4}, {0, 0, 0, 0}, {{0, 0, 10, 10}});
  auto se = best_numeric_split(node.ds, node.rows, 0);
  ASSERT_TRUE(se.has_value());
  const auto& rule = std::get<NumericSplit>(se->rule.rule);
  EXPECT_DOUBLE_EQ(rule.threshold, 2.5);
  EXPECT_FALSE(rule.all_missing_split);
  EXPECT_DOUBLE_EQ(se->report.parent_sse, 100.0);
  EXPECT_NEAR(se->report.gain, 100.0, 1e-12);
  EXPECT_NEAR(se->report.left_sse, 0.0, 1e-12);
  EXPECT_NEAR(se->report.right_sse, 0.0, 1e-12);
}

TEST(BestNumericSplit, NoMissingNeverReturnsTheMissingRule) {
  Rng rng(62, 0);
  for (int rep = 0; rep < 10; ++rep) {
    std::vector<double> x(20), y(20);
    for (int i = 0; i < 20; ++i) {
      x[static_cast<std::size_t>(i)] = rng.next_normal();
      y[static_cast<std::size_t>(i)] = rng.next_normal();
    }
    auto node = make_node(x, std::vector<std::uint8_t>(20, 0), {y});
    auto se = best_numeric_split(node.ds, node.rows, 0);
    ASSERT_TRUE(se.has_value());
    EXPECT_FALSE(std::get<NumericSplit>(se->rule.rule).all_missing_split);
  }
}

TEST(BestNumericSplit, Unsplittable) {
  auto node = make_node({3, 3, 3}, {0, 0, 0}, {{1, 2, 3}});
  EXPECT_FALSE(best_numeric_split(node.ds, node.rows, 0).has_value());
}

std::vector<std::size_t> left_rows_of(const TestNode& node,
                                      const SplitRule& rule) {
  std::vector<std::size_t> out;
  const Column& x = node.ds.columns[0];
  for (std::size_t r : node.rows) {
    if (apply_split(rule, x.values[r], x.missing[r] != 0) == Side::kLeft) {
      out.push_back(r);
    }
  }
  return out;
}

TEST(BestNumericSplit, MatchesExhaustiveOracleWithMissingValues) {
  Rng rng(63, 0);
  for (int rep = 0; rep < 50; ++rep) {
    std::size_t n = 10 + rng.next_below(21);
    std::vector<double> x(n);
    std::vector<std::uint8_t> xm(n, 0);
    std::vector<std::vector<double>> ys(2, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = std::round(rng.next_normal() * 4.0) / 2.0;  // induce ties
      xm[i] = rng.next_double() < 0.25;
      ys[0][i] = rng.next_normal();
      ys[1][i] = rng.next_normal() + (x[i] > 0 ? 1.0 : 0.0);
    }
    auto node = make_node(x, xm, ys);
    auto impl = best_numeric_split(node.ds, node.rows, 0);
    auto oracle = oracles::numeric_split_oracle(x, xm, matrix_of(node));
    ASSERT_EQ(impl.has_value(), oracle.has_value());
    if (!impl) continue;
    EXPECT_NEAR(impl->report.gain, oracle->gain,
                1e-9 * (1.0 + std::fabs(oracle->gain)));
    EXPECT_EQ(left_rows_of(node, impl->rule), oracle->left);
  }
}

TEST(BestCategoricalSplit, TwoCategoriesGiveTheOnlySplit) {
  auto node = make_node({0, 1, 0, 1}, {0, 0, 0, 0}, {{0, 5, 1, 6}}, {}, true,
                        2);
  auto z = sign_vectors_multi(node.ds, node.rows);
  auto se = best_categorical_split(node.ds, node.rows, 0, z);
  ASSERT_TRUE(se.has_value());
  const auto& rule = std::get<CategoricalSplit>(se->rule.rule);
  EXPECT_EQ(rule.left_categories, std::vector<int>{0});
}

TEST(BestCategoricalSplit, PerfectSubsetSeparation) {
  // category A has mean 0, categories B and C mean 10
  auto node = make_node({0, 1, 2, 0, 1, 2}, {0, 0, 0, 0, 0, 0},
                        {{0, 10, 10, 0, 10, 10}}, {}, true, 3);
  auto z = sign_vectors_multi(node.ds, node.rows);
  auto se = best_categorical_split(node.ds, node.rows, 0, z);
  ASSERT_TRUE(se.has_value());
  const auto& rule = std::get<CategoricalSplit>(se->rule.rule);
  EXPECT_EQ(rule.left_categories, std::vector<int>{0});
  EXPECT_NEAR(se->report.left_sse, 0.0, 1e-12);
  EXPECT_NEAR(se->report.right_sse, 0.0, 1e-12);
}

TEST(BestCategoricalSplit, SingleCategoryIsUnsplittable) {
  auto node = make_node({0, 0, 0}, {0, 0, 0}, {{1, 2, 3}}, {}, true, 1);
  auto z = sign_vectors_multi(node.ds, node.rows);
  EXPECT_FALSE(best_categorical_split(node.ds, node.rows, 0, z).has_value());
}

TEST(BestCategoricalSplit, ExhaustiveMatchesOracle) {
  Rng rng(64, 0);
  for (int rep = 0; rep < 40; ++rep) {
    std::size_t n = 14 + rng.next_below(20);
    int n_cats = 3 + static_cast<int>(rng.next_below(4));
    std::vector<double> x(n);
    std::vector<std::uint8_t> xm(n, 0);
    std::vector<std::vector<double>> ys(2, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng.next_below(n_cats));
      xm[i] = rng.next_double() < 0.15;
      ys[0][i] = rng.next_normal() + x[i];
      ys[1][i] = rng.next_normal();
    }
    auto node = make_node(x, xm, ys, {}, true, n_cats);
    auto z = sign_vectors_multi(node.ds, node.rows);
    auto impl = best_categorical_split(node.ds, node.rows, 0, z);
    auto oracle = oracles::categorical_split_oracle(x, xm, matrix_of(node));
    if (!oracle.has_value()) continue;
    ASSERT_TRUE(impl.has_value());
    EXPECT_NEAR(impl->report.gain, oracle->gain,
                1e-9 * (1.0 + std::fabs(oracle->gain)));
  }
}

TEST(BestCategoricalSplit, HeuristicStaysCloseToExhaustive) {
  Rng rng(65, 0);
  int ok = 0;
  const int reps = 200;
  for (int rep = 0; rep < reps; ++rep) {
    std::size_t n = 30 + rng.next_below(40);
    int n_cats = 5 + static_cast<int>(rng.next_below(5));
    std::vector<double> x(n);
    std::vector<std::uint8_t> xm(n, 0);
    std::vector<std::vector<double>> ys(2, std::vector<double>(n));
    std::vector<double> cat_effect(static_cast<std::size_t>(n_cats));
    for (auto& e : cat_effect) e = rng.next_normal();
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = static_cast<double>(rng.next_below(n_cats));
      ys[0][i] = cat_effect[static_cast<std::size_t>(x[i])] + rng.next_normal();
      ys[1][i] = 0.5 * cat_effect[static_cast<std::size_t>(x[i])] +
                 rng.next_normal();
    }
    auto node = make_node(x, xm, ys, {}, true, n_cats);
    auto z = sign_vectors_multi(node.ds, node.rows);
    SplitOptions heuristic_only;
    heuristic_only.categorical_exhaustive_limit = 0;
    auto heur = best_categorical_split(node.ds, node.rows, 0, z, false,
                                       heuristic_only);
    auto exact = best_categorical_split(node.ds, node.rows, 0, z);
    ASSERT_TRUE(heur && exact);
    if (heur->report.gain >= 0.95 * exact->report.gain) ++ok;
  }
  EXPECT_GE(ok, static_cast<int>(0.9 * reps));
}

TEST(ApplySplit, NumericEdgeCases) {
  SplitRule rule;
  rule.rule = NumericSplit{0, 2.5, false, false};
  EXPECT_EQ(apply_split(rule, 2.5, false), Side::kLeft);   // inclusive <=
  EXPECT_EQ(apply_split(rule, 2.500001, false), Side::kRight);
  EXPECT_EQ(apply_split(rule, 0.0, true), Side::kRight);   // missing right
  rule.rule = NumericSplit{0, 2.5, true, false};
  EXPECT_EQ(apply_split(rule, 0.0, true), Side::kLeft);
  rule.rule = NumericSplit{0, 0.0, true, true};
  EXPECT_EQ(apply_split(rule, 99.0, false), Side::kRight);
  EXPECT_EQ(apply_split(rule, 0.0, true), Side::kLeft);
}

TEST(ApplySplit, CategoricalMembership) {
  SplitRule rule;
  rule.rule = CategoricalSplit{0, {0, 2}, false};
  EXPECT_EQ(apply_split(rule, 0, false), Side::kLeft);
  EXPECT_EQ(apply_split(rule, 1, false), Side::kRight);
  EXPECT_EQ(apply_split(rule, 2, false), Side::kLeft);
  EXPECT_EQ(apply_split(rule, 0, true), Side::kRight);
  rule.rule = CategoricalSplit{0, {1}, true};
  EXPECT_EQ(apply_split(rule, 0, true), Side::kLeft);
}

TEST(SplitReports, RecomputeFromScratchReproducesGain) {
  Rng rng(66, 0);
  for (int rep = 0; rep < 30; ++rep) {
    std::size_t n = 12 + rng.next_below(30);
    std::vector<double> x(n);
    std::vector<std::uint8_t> xm(n, 0);
    std::vector<std::vector<double>> ys(3, std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = rng.next_normal();
      xm[i] = rng.next_double() < 0.2;
      for (auto& yk : ys) yk[i] = rng.next_normal();
    }
    auto node = make_node(x, xm, ys);
    auto se = best_numeric_split(node.ds, node.rows, 0);
    ASSERT_TRUE(se.has_value());
    auto left = left_rows_of(node, se->rule);
    std::vector<std::size_t> right;
    for (std::size_t r : node.rows) {
      if (std::find(left.begin(), left.end(), r) == left.end()) {
        right.push_back(r);
      }
    }
    ASSERT_FALSE(left.empty());
    ASSERT_FALSE(right.empty());
    double parent = node_impurity(node.ds, node.rows);
    double l = node_impurity(node.ds, left);
    double r = node_impurity(node.ds, right);
    EXPECT_NEAR(se->report.gain, parent - l - r, 1e-9);
    EXPECT_GE(se->report.gain, -1e-9);
  }
}

TEST(BestNumericSplit, MonotoneTransformKeepsThePartition) {
  Rng rng(67, 0);
  for (int rep = 0; rep < 15; ++rep) {
    std::size_t n = 15 + rng.next_below(15);
    std::vector<double> x(n);
    std::vector<std::uint8_t> xm(n, 0);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = 0.5 + rng.next_double() * 3.0;  // positive, so cube is monotone
      y[i] = rng.next_normal() + x[i];
    }
    auto node = make_node(x, xm, {y});
    auto base = best_numeric_split(node.ds, node.rows, 0);
    std::vector<double> cubed = x;
    for (auto& v : cubed) v = v * v * v;
    auto tnode = make_node(cubed, xm, {y});
    auto trans = best_numeric_split(tnode.ds, tnode.rows, 0);
    ASSERT_TRUE(base && trans);
    EXPECT_EQ(left_rows_of(node, base->rule), left_rows_of(tnode, trans->rule));
    EXPECT_NEAR(base->report.gain, trans->report.gain, 1e-9);
  }
}

TEST(InteractionPairSplit, FindsTheQuadrantBoundary) {
  Rng rng(68, 0);
  Dataset ds;
  ds.layout = Layout::kMultiresponse;
  ds.n_rows = 200;
  Column a{"a", ColumnRole::kNumericPredictor, {}, {}, {}};
  Column b{"b", ColumnRole::kNumericPredictor, {}, {}, {}};
  Column y{"y", ColumnRole::kResponse, {}, {}, {}};
  for (std::size_t i = 0; i < ds.n_rows; ++i) {
    double av = rng.uniform(-1, 1), bv = rng.uniform(-1, 1);
    a.values.push_back(av);
    b.values.push_back(bv);
    y.values.push_back((av * bv > 0 ? 2.0 : -2.0) + 0.3 * rng.next_normal());
    a.missing.push_back(0);
    b.missing.push_back(0);
    y.missing.push_back(0);
  }
  ds.columns = {a, b, y};
  std::vector<std::size_t> rows(ds.n_rows);
  std::iota(rows.begin(), rows.end(), 0);
  NodePredictors np = NodePredictors::from_rows(ds, rows);
  MultiResponseSse eval(ds, rows, response_weights(ds, false));
  auto se = interaction_pair_split(np.vars[0], 0, np.vars[1], 1, eval);
  ASSERT_TRUE(se.has_value());
  const auto& rule = std::get<NumericSplit>(se->rule.rule);
  EXPECT_LT(std::fabs(rule.threshold), 0.08);
}

}  // namespace
}  // namespace mvguide
