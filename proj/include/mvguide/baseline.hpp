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
#ifndef MVGUIDE_BASELINE_HPP_
#define MVGUIDE_BASELINE_HPP_

#include <algorithm>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mvguide/dataset.hpp"
#include "mvguide/splitter.hpp"
#include "mvguide/tree.hpp"

namespace mvguide {

/// CART-style one-step search: every variable, every split, maximum
/// multivariate impurity reduction. Gains are computed over the rows
/// nonmissing in the candidate variable only and downweighted by the
/// observed fraction, which deliberately reproduces the comparator's bias
/// toward variables with many split points and few missing values.
inline std::optional<SplitEval> cart_best_split(
    const Dataset& ds, std::span<const std::size_t> rows,
    bool normalize = false, const SplitOptions& base_opt = {15, true}) {
  if (rows.size() < 2) return std::nullopt;
  NodePredictors np = NodePredictors::from_rows(ds, rows);
  auto weights = response_weights(ds, normalize);

  std::optional<SplitEval> best;
  double best_adjusted = -std::numeric_limits<double>::infinity();
  for (std::size_t v = 0; v < np.vars.size(); ++v) {
    const auto& xv = np.vars[v];
    // complete-case view of this variable
    std::vector<std::size_t> nm_local, nm_rows;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (!xv.missing[i]) {
        nm_local.push_back(i);
        nm_rows.push_back(rows[i]);
      }
    }
    if (nm_rows.size() < 2) continue;
    NodePredictors::Var sub;
    sub.name = xv.name;
    sub.categorical = xv.categorical;
    sub.n_categories = xv.n_categories;
    sub.value.reserve(nm_local.size());
    sub.missing.assign(nm_local.size(), 0);
    for (std::size_t i : nm_local) sub.value.push_back(xv.value[i]);

    MultiResponseSse eval(ds, nm_rows, weights);
    std::optional<SplitEval> cand;
    if (xv.categorical) {
      cand = best_categorical_split(sub, static_cast<int>(v), eval, nullptr,
                                    base_opt);
    } else {
      cand = best_numeric_split(sub, static_cast<int>(v), eval, base_opt);
    }
    if (!cand) continue;
    double fraction = static_cast<double>(nm_rows.size()) /
                      static_cast<double>(rows.size());
    double adjusted = cand->report.gain * fraction;
    if (adjusted > best_adjusted) {
      best_adjusted = adjusted;
      best = std::move(cand);
    }
  }
  return best;
}

namespace detail {

struct BaselineGrower {
  const Dataset& ds;
  const GrowConfig& cfg;
  std::vector<std::size_t> resp;
  std::vector<double> weights;
  int min_node;
  int next_id = 1;

  BaselineGrower(const Dataset& dataset, const GrowConfig& config)
      : ds(dataset), cfg(config) {
    resp = ds.response_indices();
    weights = response_weights(ds, cfg.normalize);
    min_node = cfg.resolved_min_node_size(Layout::kMultiresponse);
  }

  std::vector<double> node_mean(std::span<const std::size_t> rows) const {
    std::vector<double> mean(resp.size(), 0.0);
    for (std::size_t k = 0; k < resp.size(); ++k) {
      const Column& col = ds.columns[resp[k]];
      double sum = 0.0;
      for (std::size_t r : rows) sum += col.values[r];
      mean[k] = sum / static_cast<double>(rows.size());
    }
    return mean;
  }

  bool constant_response(std::span<const std::size_t> rows) const {
    for (std::size_t k : resp) {
      const Column& col = ds.columns[k];
      for (std::size_t r : rows) {
        if (col.values[r] != col.values[rows.front()]) return false;
      }
    }
    return true;
  }

  std::unique_ptr<TreeNode> build(const std::vector<std::size_t>& rows,
                                  int depth) {
    auto node = std::make_unique<TreeNode>();
    node->id = next_id++;
    node->n = rows.size();
    node->mean = node_mean(rows);
    MultiResponseSse eval(ds, rows, weights);
    node->sse = eval.sse(eval.total_acc());

    if (static_cast<int>(rows.size()) < min_node || depth >= cfg.max_depth ||
        constant_response(rows)) {
      return node;
    }
    SplitOptions opt{15, true,
                     std::max<std::size_t>(
                         1, static_cast<std::size_t>(min_node) / 3)};
    auto split = cart_best_split(ds, rows, cfg.normalize, opt);
    if (!split || split->report.gain <= 0.0) return node;

    // rows missing the split variable are dropped here, as in the
    // complete-case comparator
    const Column& col =
        ds.columns[ds.predictor_indices()[static_cast<std::size_t>(
            split->rule.var())]];
    std::vector<std::size_t> left_rows, right_rows;
    for (std::size_t r : rows) {
      if (col.missing[r]) continue;
      Side side = apply_split(split->rule, col.values[r], false);
      (side == Side::kLeft ? left_rows : right_rows).push_back(r);
    }
    if (left_rows.empty() || right_rows.empty()) return node;
    // prediction-time missing values follow the larger child
    if (auto* num = std::get_if<NumericSplit>(&split->rule.rule)) {
      if (!num->all_missing_split) {
        num->missing_goes_left = left_rows.size() >= right_rows.size();
      }
    } else {
      std::get<CategoricalSplit>(split->rule.rule).missing_in_left =
          left_rows.size() >= right_rows.size();
    }
    node->rule = split->rule;
    node->left = build(left_rows, depth + 1);
    node->right = build(right_rows, depth + 1);
    return node;
  }
};

}  // namespace detail

/// Grows the comparator tree. Rows missing any response are dropped up
/// front (complete-case analysis); rows missing the split variable are
/// dropped at each split.
inline Tree grow_baseline(const Dataset& ds, const GrowConfig& cfg) {
  if (ds.n_rows == 0) throw std::invalid_argument("grow_baseline: empty dataset");
  if (ds.layout != Layout::kMultiresponse) {
    throw std::invalid_argument("grow_baseline: multiresponse only");
  }
  std::vector<std::size_t> complete;
  auto resp = ds.response_indices();
  for (std::size_t r = 0; r < ds.n_rows; ++r) {
    bool ok = true;
    for (std::size_t k : resp) ok = ok && !ds.columns[k].missing[r];
    if (ok) complete.push_back(r);
  }
  if (complete.empty()) {
    throw std::invalid_argument("grow_baseline: no complete-response rows");
  }
  Dataset cc = detail::subset_rows(ds, complete);
  Tree t;
  t.layout = Layout::kMultiresponse;
  t.method = "baseline";
  t.normalize = cfg.normalize;
  t.intervals = cfg.intervals;
  t.predictors = detail::predictor_meta(cc);
  for (std::size_t k : resp) t.response_names.push_back(ds.columns[k].name);
  detail::BaselineGrower grower(cc, cfg);
  std::vector<std::size_t> rows(cc.n_rows);
  std::iota(rows.begin(), rows.end(), 0);
  t.root = grower.build(rows, 0);
  return t;
}

/// Cross-validated pruning with the comparator's split search.
inline Tree cross_validate_baseline(const Dataset& ds, const GrowConfig& cfg,
                                    int folds = 10, double se_rule = 0.0,
                                    PruneSequence* seq_out = nullptr) {
  return detail::cross_validate_impl(
      ds, cfg, folds, se_rule,
      [](const Dataset& d, const GrowConfig& c) { return grow_baseline(d, c); },
      seq_out);
}

}  // namespace mvguide

#endif  // MVGUIDE_BASELINE_HPP_
