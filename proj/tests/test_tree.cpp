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
#include "mvguide/tree.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <set>

#include "mvguide/rng.hpp"
#include "mvguide/simharness.hpp"

namespace mvguide {
namespace {

TEST(Grow, ConstantResponseGivesSingleNode) {
  Dataset ds;
  ds.layout = Layout::kMultiresponse;
  ds.n_rows = 40;
  Column x{"x", ColumnRole::kNumericPredictor, {}, {}, {}};
  Column y{"y", ColumnRole::kResponse, {}, {}, {}};
  for (std::size_t i = 0; i < ds.n_rows; ++i) {
    x.values.push_back(static_cast<double>(i));
    x.missing.push_back(0);
    y.values.push_back(3.5);
    y.missing.push_back(0);
  }
  ds.columns = {x, y};
  Tree t = grow(ds, GrowConfig{});
  EXPECT_EQ(t.n_leaves(), 1);
  EXPECT_DOUBLE_EQ(t.root->mean[0], 3.5);
}

TEST(Grow, TooFewRowsGiveSingleNode) {
  sim::ScenarioSpec spec;
  spec.kind = sim::ScenarioKind::kIndepUniform1;
  spec.n = 8;  // below the default minimum of 10
  spec.seed = 11;
  Tree t = grow(sim::gen_scenario(spec), GrowConfig{});
  EXPECT_EQ(t.n_leaves(), 1);
}

TEST(Grow, EmptyDatasetIsAnError) {
  Dataset ds;
  EXPECT_THROW(grow(ds, GrowConfig{}), std::invalid_argument);
}

TEST(Grow, CrossProductScenarioSplitsOnTheActivePairFirst) {
  int good = 0;
  const int reps = 100;
  for (int rep = 0; rep < reps; ++rep) {
    sim::ScenarioSpec spec;
    spec.kind = sim::ScenarioKind::kIndepUniform3;
    spec.n = 400;
    spec.seed = 606;
    Dataset ds = sim::gen_scenario(spec, static_cast<std::uint64_t>(rep));
    Tree t = grow(ds, GrowConfig{});
    if (t.root->is_leaf()) continue;
    // the top two levels should split on exactly the interacting pair,
    // in either order
    std::set<std::string> top;
    top.insert(
        t.predictors[static_cast<std::size_t>(t.root->rule->var())].name);
    for (const TreeNode* child : {t.root->left.get(), t.root->right.get()}) {
      if (!child->is_leaf()) {
        top.insert(
            t.predictors[static_cast<std::size_t>(child->rule->var())].name);
      }
    }
    if (top == std::set<std::string>{"x1", "x2"}) ++good;
  }
  EXPECT_GE(good, 80);
}

Tree hand_tree_from_json() {
  // root (sse 100) -> A (sse 50 -> leaves 10, 10) + leaf B (sse 5)
  const char* doc = R"({
    "version": 1, "method": "guide", "layout": "multiresponse",
    "roles": {"predictors": [{"name": "x", "kind": "numeric"}],
              "responses": ["y"]},
    "normalize": false, "intervals": 3,
    "nodes": [
      {"id": 1, "n": 20, "sse": 100.0, "mean": [0.0],
       "rule": {"var": "x", "kind": "numeric", "threshold": 0.0,
                 "missing_left": false},
       "left": 2, "right": 3},
      {"id": 2, "n": 12, "sse": 50.0, "mean": [-1.0],
       "rule": {"var": "x", "kind": "numeric", "threshold": -1.0,
                 "missing_left": false},
       "left": 4, "right": 5},
      {"id": 3, "n": 8, "sse": 5.0, "mean": [2.0]},
      {"id": 4, "n": 6, "sse": 10.0, "mean": [-2.0]},
      {"id": 5, "n": 6, "sse": 10.0, "mean": [-0.5]}
    ]})";
  return deserialize(doc);
}

TEST(PruneSequence, SingleNodeTree) {
  Dataset ds;
  ds.layout = Layout::kMultiresponse;
  ds.n_rows = 5;
  Column x{"x", ColumnRole::kNumericPredictor, {1, 1, 1, 1, 1},
           std::vector<std::uint8_t>(5, 0), {}};
  Column y{"y", ColumnRole::kResponse, {2, 2, 2, 2, 2},
           std::vector<std::uint8_t>(5, 0), {}};
  ds.columns = {x, y};
  Tree t = grow(ds, GrowConfig{});
  auto seq = prune_sequence(t);
  ASSERT_EQ(seq.entries.size(), 1u);
  EXPECT_DOUBLE_EQ(seq.entries[0].alpha, 0.0);
  EXPECT_EQ(seq.entries[0].n_leaves, 1);
}

TEST(PruneSequence, HandComputedWeakestLinks) {
  Tree t = hand_tree_from_json();
  auto seq = prune_sequence(t);
  // g(A) = (50 - 20) / 1 = 30; g(root) = (100 - 25) / 2 = 37.5
  // after collapsing A: g(root) = (100 - 55) / 1 = 45
  ASSERT_EQ(seq.entries.size(), 3u);
  EXPECT_DOUBLE_EQ(seq.entries[0].alpha, 0.0);
  EXPECT_EQ(seq.entries[0].n_leaves, 3);
  EXPECT_DOUBLE_EQ(seq.entries[0].train_sse, 25.0);
  EXPECT_DOUBLE_EQ(seq.entries[1].alpha, 30.0);
  EXPECT_EQ(seq.entries[1].n_leaves, 2);
  EXPECT_DOUBLE_EQ(seq.entries[1].train_sse, 55.0);
  EXPECT_DOUBLE_EQ(seq.entries[2].alpha, 45.0);
  EXPECT_EQ(seq.entries[2].n_leaves, 1);
  EXPECT_DOUBLE_EQ(seq.entries[2].train_sse, 100.0);
  EXPECT_EQ(seq.entries[1].collapsed, std::vector<int>{2});
}

TEST(PruneSequence, SizesDecreaseAndSubtreesNest) {
  Dataset ds = sim::concrete_clone();
  Tree t = grow(ds, GrowConfig{});
  auto seq = prune_sequence(t);
  ASSERT_GE(seq.entries.size(), 2u);
  double prev_alpha = -1.0;
  int prev_leaves = t.n_leaves() + 1;
  double prev_sse = -1.0;
  std::set<int> prev_collapsed;
  for (const auto& e : seq.entries) {
    EXPECT_GT(e.alpha, prev_alpha);
    EXPECT_LT(e.n_leaves, prev_leaves);
    EXPECT_GT(e.train_sse, prev_sse);
    std::set<int> collapsed(e.collapsed.begin(), e.collapsed.end());
    for (int id : prev_collapsed) EXPECT_TRUE(collapsed.count(id));
    prev_alpha = e.alpha;
    prev_leaves = e.n_leaves;
    prev_sse = e.train_sse;
    prev_collapsed = std::move(collapsed);
  }
  EXPECT_EQ(seq.entries.front().n_leaves, t.n_leaves());
  EXPECT_EQ(seq.entries.back().n_leaves, 1);
  // training error ordering: full tree <= every subtree <= root
  EXPECT_LE(seq.entries.front().train_sse, seq.entries.back().train_sse);
  EXPECT_NEAR(seq.entries.back().train_sse, t.root->sse, 1e-9);
}

TEST(CrossValidate, PureNoisePrunesToTheRootMostOfTheTime) {
  int roots = 0;
  const int reps = 50;
  for (int rep = 0; rep < reps; ++rep) {
    Rng rng(707, static_cast<std::uint64_t>(rep));
    Dataset ds;
    ds.layout = Layout::kMultiresponse;
    ds.n_rows = 80;
    for (const char* name : {"a", "b", "c"}) {
      Column c{name, ColumnRole::kNumericPredictor, {}, {}, {}};
      for (std::size_t i = 0; i < ds.n_rows; ++i) {
        c.values.push_back(rng.next_normal());
        c.missing.push_back(0);
      }
      ds.columns.push_back(std::move(c));
    }
    for (const char* name : {"y1", "y2"}) {
      Column c{name, ColumnRole::kResponse, {}, {}, {}};
      for (std::size_t i = 0; i < ds.n_rows; ++i) {
        c.values.push_back(rng.next_normal());
        c.missing.push_back(0);
      }
      ds.columns.push_back(std::move(c));
    }
    GrowConfig cfg;
    cfg.seed = rng.next_u64();
    Tree t = cross_validate(ds, cfg, 10);
    roots += t.n_leaves() == 1;
  }
  EXPECT_GE(roots, 35);  // >= 70%
}

TEST(Predict, SingleNodeAndThresholdEdge) {
  Tree t = hand_tree_from_json();
  std::vector<double> x{0.0};
  std::vector<std::uint8_t> miss{0};
  // x exactly on the root threshold goes left
  EXPECT_EQ(&route(t, x, miss), t.root->left->right.get());
  x[0] = -1.0;
  EXPECT_DOUBLE_EQ(predict(t, x, miss)[0], -2.0);
  x[0] = 5.0;
  EXPECT_DOUBLE_EQ(predict(t, x, miss)[0], 2.0);

  Tree pruned = prune_to(t, {1});
  EXPECT_EQ(pruned.n_leaves(), 1);
  EXPECT_DOUBLE_EQ(predict(pruned, x, miss)[0], 0.0);
}

TEST(Predict, DuplicateTrainingRowsOnlyChangeSummaries) {
  sim::ScenarioSpec spec;
  spec.kind = sim::ScenarioKind::kIndepUniform1;
  spec.n = 60;
  spec.seed = 31;
  Dataset ds = sim::gen_scenario(spec);
  Tree t = grow(ds, GrowConfig{});
  std::vector<double> x(7, 0.1);
  std::vector<std::uint8_t> miss(7, 0);
  auto p1 = predict(t, x, miss);
  auto p2 = predict(t, x, miss);
  EXPECT_EQ(p1, p2);
}

TEST(Serialize, RoundTripPredictsIdentically) {
  Dataset ds = sim::concrete_clone();
  GrowConfig cfg;
  cfg.normalize = true;
  Tree t = cross_validate(ds, cfg, 10);
  Tree back = deserialize(serialize(t));
  EXPECT_EQ(back.n_leaves(), t.n_leaves());
  auto preds = ds.predictor_indices();
  for (std::size_t r = 0; r < ds.n_rows; ++r) {
    std::vector<double> x;
    std::vector<std::uint8_t> miss;
    for (std::size_t c : preds) {
      x.push_back(ds.columns[c].values[r]);
      miss.push_back(ds.columns[c].missing[r]);
    }
    EXPECT_EQ(predict(t, x, miss), predict(back, x, miss));
  }
}

TEST(Serialize, MalformedDocumentsAreErrors) {
  Tree t = hand_tree_from_json();
  std::string doc = serialize(t);
  EXPECT_THROW(deserialize(doc.substr(0, doc.size() / 2)),
               std::runtime_error);
  EXPECT_THROW(deserialize("{}"), std::runtime_error);
  std::string wrong_version = doc;
  wrong_version.replace(wrong_version.find("\"version\": 1"),
                        std::string("\"version\": 1").size(),
                        "\"version\": 99");
  EXPECT_THROW(deserialize(wrong_version), std::runtime_error);
}

TEST(RenderText, ShowsConditionsAndPredictions) {
  Tree t = hand_tree_from_json();
  std::string text = render_text(t);
  EXPECT_NE(text.find("x <= 0"), std::string::npos);
  EXPECT_NE(text.find("pred = (2)"), std::string::npos);
  EXPECT_NE(text.find("n=20"), std::string::npos);
}

TEST(LongitudinalGrow, RecoversAStepInTheFixedCovariate) {
  sim::ScenarioSpec spec;
  spec.kind = sim::ScenarioKind::kLongStep;
  spec.n = 150;
  spec.seed = 77;
  Dataset ds = sim::gen_scenario(spec);
  GrowConfig cfg;
  Tree t = cross_validate(ds, cfg, 10);
  ASSERT_FALSE(t.root->is_leaf());
  EXPECT_EQ(t.predictors[static_cast<std::size_t>(t.root->rule->var())].name,
            "x1");
  const auto& rule = std::get<NumericSplit>(t.root->rule->rule);
  EXPECT_LT(std::fabs(rule.threshold), 0.25);
  // left child (x1 <= 0) sits about 2.5 above the right at the same time
  double left_mid = curve_eval(t.root->left->curve, 5.0);
  double right_mid = curve_eval(t.root->right->curve, 5.0);
  EXPECT_NEAR(left_mid - right_mid, 2.5, 0.6);
}

TEST(CrossValidate, LongitudinalFoldsPartitionSubjects) {
  sim::ScenarioSpec spec;
  spec.kind = sim::ScenarioKind::kLongLinear;
  spec.n = 40;
  spec.seed = 78;
  Dataset ds = sim::gen_scenario(spec);
  // would throw if folds cut within subjects (time-fixed validation)
  Tree t = cross_validate(ds, GrowConfig{}, 5);
  EXPECT_GE(t.n_leaves(), 1);
}

}  // namespace
}  // namespace mvguide
