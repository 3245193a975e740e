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
#ifndef MVGUIDE_TREE_HPP_
#define MVGUIDE_TREE_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mvguide/dataset.hpp"
#include "mvguide/rng.hpp"
#include "mvguide/selector.hpp"
#include "mvguide/splitter.hpp"
#include "mvguide/stats.hpp"

namespace mvguide {

struct GrowConfig {
  int min_node_size = 0;  // 0 = auto: 10 rows (multiresponse), 5 subjects
  int max_depth = 30;
  int intervals = 3;      // longitudinal sign-vector interval count
  int missing_y_sign = -1;
  bool normalize = false;
  double lowess_span = 2.0 / 3.0;
  int lowess_iters = 3;
  std::uint64_t seed = 17;
  SplitOptions split_options{};

  int resolved_min_node_size(Layout layout) const {
    if (min_node_size > 0) return min_node_size;
    return layout == Layout::kMultiresponse ? 10 : 5;
  }
};

struct PredictorMeta {
  std::string name;
  bool categorical = false;
  std::vector<std::string> categories;
};

struct TreeNode {
  int id = 0;
  std::size_t n = 0;
  double sse = 0.0;
  std::optional<SplitRule> rule;
  std::unique_ptr<TreeNode> left;
  std::unique_ptr<TreeNode> right;
  std::vector<double> mean;  // multiresponse summary (kept on internals too)
  Curve curve;               // longitudinal summary

  bool is_leaf() const { return !rule.has_value(); }
};

struct Tree {
  Layout layout = Layout::kMultiresponse;
  std::string method = "guide";
  bool normalize = false;
  int intervals = 3;
  std::vector<PredictorMeta> predictors;
  std::vector<std::string> response_names;
  std::string time_name;
  std::string subject_name;
  std::unique_ptr<TreeNode> root;

  int n_leaves() const { return count_leaves(root.get()); }
  int n_nodes() const { return count_nodes(root.get()); }

 private:
  static int count_leaves(const TreeNode* n) {
    if (!n) return 0;
    if (n->is_leaf()) return 1;
    return count_leaves(n->left.get()) + count_leaves(n->right.get());
  }
  static int count_nodes(const TreeNode* n) {
    if (!n) return 0;
    return 1 + count_nodes(n->left.get()) + count_nodes(n->right.get());
  }
};

namespace detail {

inline std::unique_ptr<TreeNode> clone_node(const TreeNode* n,
                                            const std::set<int>* collapse) {
  auto out = std::make_unique<TreeNode>();
  out->id = n->id;
  out->n = n->n;
  out->sse = n->sse;
  out->mean = n->mean;
  out->curve = n->curve;
  bool cut = collapse && collapse->count(n->id) > 0;
  if (!n->is_leaf() && !cut) {
    out->rule = n->rule;
    out->left = clone_node(n->left.get(), collapse);
    out->right = clone_node(n->right.get(), collapse);
  }
  return out;
}

inline Tree clone_tree(const Tree& t, const std::set<int>* collapse = nullptr) {
  Tree out;
  out.layout = t.layout;
  out.method = t.method;
  out.normalize = t.normalize;
  out.intervals = t.intervals;
  out.predictors = t.predictors;
  out.response_names = t.response_names;
  out.time_name = t.time_name;
  out.subject_name = t.subject_name;
  out.root = clone_node(t.root.get(), collapse);
  return out;
}

inline std::vector<PredictorMeta> predictor_meta(const Dataset& ds) {
  std::vector<PredictorMeta> out;
  for (std::size_t ci : ds.predictor_indices()) {
    const Column& col = ds.columns[ci];
    PredictorMeta m;
    m.name = col.name;
    m.categorical = col.role == ColumnRole::kCategoricalPredictor;
    m.categories = col.categories;
    out.push_back(std::move(m));
  }
  return out;
}

// -------- multiresponse growth --------

struct MultiGrower {
  const Dataset& ds;
  const GrowConfig& cfg;
  std::vector<std::size_t> resp;
  std::vector<double> weights;
  int d;
  int min_node;
  int next_id = 1;

  SplitOptions split_opt;

  MultiGrower(const Dataset& dataset, const GrowConfig& config)
      : ds(dataset), cfg(config) {
    resp = ds.response_indices();
    weights = response_weights(ds, cfg.normalize);
    d = static_cast<int>(resp.size());
    min_node = cfg.resolved_min_node_size(Layout::kMultiresponse);
    split_opt = cfg.split_options;
    split_opt.min_child = std::max<std::size_t>(
        split_opt.min_child, static_cast<std::size_t>(min_node) / 3);
    for (std::size_t k : resp) {
      const Column& col = ds.columns[k];
      bool any = false;
      for (std::size_t r = 0; r < ds.n_rows; ++r) any = any || !col.missing[r];
      if (!any) {
        throw std::invalid_argument("response " + col.name +
                                    " has no observed values");
      }
    }
  }

  std::vector<double> node_mean(std::span<const std::size_t> rows,
                                const std::vector<double>& fallback) const {
    std::vector<double> mean(resp.size(), 0.0);
    for (std::size_t k = 0; k < resp.size(); ++k) {
      const Column& col = ds.columns[resp[k]];
      double sum = 0.0;
      std::size_t n = 0;
      for (std::size_t r : rows) {
        if (!col.missing[r]) {
          sum += col.values[r];
          ++n;
        }
      }
      mean[k] = n > 0 ? sum / static_cast<double>(n)
                      : (fallback.empty() ? 0.0 : fallback[k]);
    }
    return mean;
  }

  bool constant_response(std::span<const std::size_t> rows) const {
    for (std::size_t k : resp) {
      const Column& col = ds.columns[k];
      bool seen = false;
      double first = 0.0;
      for (std::size_t r : rows) {
        if (col.missing[r]) continue;
        if (!seen) {
          first = col.values[r];
          seen = true;
        } else if (col.values[r] != first) {
          return false;
        }
      }
    }
    return true;
  }

  std::unique_ptr<TreeNode> build(const std::vector<std::size_t>& rows,
                                  int depth,
                                  const std::vector<double>& parent_mean) {
    auto node = std::make_unique<TreeNode>();
    node->id = next_id++;
    node->n = rows.size();
    node->mean = node_mean(rows, parent_mean);
    MultiResponseSse eval(ds, rows, weights);
    node->sse = eval.sse(eval.total_acc());

    if (static_cast<int>(rows.size()) < min_node || depth >= cfg.max_depth ||
        constant_response(rows)) {
      return node;
    }
    NodePredictors np = NodePredictors::from_rows(ds, rows);
    SignMatrix z;
    bool have_missing_dim = false;
    for (std::size_t k : resp) {
      const Column& col = ds.columns[k];
      bool any = false;
      for (std::size_t r : rows) any = any || !col.missing[r];
      have_missing_dim = have_missing_dim || !any;
    }
    if (have_missing_dim) return node;  // no sign information for some dim
    z = sign_vectors_multi(ds, rows, cfg.missing_y_sign);
    auto sel = select_split_variable(np, z, d);
    if (!sel) return node;

    auto try_split = [&](int var, bool pair) -> std::optional<SplitEval> {
      const auto& xv = np.vars[static_cast<std::size_t>(var)];
      if (xv.categorical) {
        return best_categorical_split(xv, var, eval, &z, split_opt);
      }
      if (pair) {
        // interaction pairs split at the mean, mirroring the test's halves
        if (auto m = mean_numeric_split(xv, var, eval, split_opt)) return m;
      }
      return best_numeric_split(xv, var, eval, split_opt);
    };
    bool pair = sel->kind == Selection::Kind::kInteraction;
    std::optional<SplitEval> split;
    if (pair) {
      split = interaction_pair_split(
          np.vars[static_cast<std::size_t>(sel->var_i)], sel->var_i,
          np.vars[static_cast<std::size_t>(sel->var_j)], sel->var_j, eval,
          split_opt);
    }
    if (!split) {
      split = try_split(sel->var_i, pair);
      if (pair) {
        auto other = try_split(sel->var_j, true);
        if (!split || (other && other->report.gain > split->report.gain)) {
          split = std::move(other);
        }
      }
    }
    if (!split) return node;

    const auto& xv = np.vars[static_cast<std::size_t>(split->rule.var())];
    std::vector<std::size_t> left_rows, right_rows;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      Side side = apply_split(split->rule, xv.value[i], xv.missing[i] != 0);
      (side == Side::kLeft ? left_rows : right_rows).push_back(rows[i]);
    }
    if (left_rows.empty() || right_rows.empty()) return node;
    node->rule = split->rule;
    node->left = build(left_rows, depth + 1, node->mean);
    node->right = build(right_rows, depth + 1, node->mean);
    return node;
  }
};

// -------- longitudinal growth --------

struct LongGrower {
  const std::vector<SubjectSeries>& series;
  const GrowConfig& cfg;
  NodePredictors meta;  // predictor names/kinds; values unused
  int min_node;
  int next_id = 1;

  SplitOptions split_opt;

  LongGrower(const std::vector<SubjectSeries>& all, const Dataset& ds,
             const GrowConfig& config)
      : series(all), cfg(config) {
    std::vector<std::size_t> none;
    meta = NodePredictors::from_rows(ds, none);
    min_node = cfg.resolved_min_node_size(Layout::kLongitudinal);
    split_opt = cfg.split_options;
    split_opt.min_child = std::max<std::size_t>(
        split_opt.min_child, static_cast<std::size_t>(min_node) / 3);
  }

  Curve node_curve(std::span<const std::size_t> subjects) const {
    std::vector<double> u, y;
    for (std::size_t s : subjects) {
      for (const Obs& o : series[s].obs) {
        u.push_back(o.u);
        y.push_back(o.y);
      }
    }
    bool single_u = true;
    for (std::size_t i = 1; i < u.size(); ++i) single_u = single_u && u[i] == u[0];
    if (u.size() < 2 || single_u) {
      double mean = 0.0;
      for (double v : y) mean += v;
      mean /= y.empty() ? 1.0 : static_cast<double>(y.size());
      Curve c;
      c.u = {u.empty() ? 0.0 : u[0]};
      c.s = {mean};
      return c;
    }
    return lowess(u, y, cfg.lowess_span, cfg.lowess_iters);
  }

  bool constant_response(std::span<const std::size_t> subjects) const {
    bool seen = false;
    double first = 0.0;
    for (std::size_t s : subjects) {
      for (const Obs& o : series[s].obs) {
        if (!seen) {
          first = o.y;
          seen = true;
        } else if (o.y != first) {
          return false;
        }
      }
    }
    return true;
  }

  std::unique_ptr<TreeNode> build(const std::vector<std::size_t>& subjects,
                                  int depth) {
    auto node = std::make_unique<TreeNode>();
    node->id = next_id++;
    node->n = subjects.size();
    node->curve = node_curve(subjects);
    node->sse = node_impurity_long(series, subjects, node->curve);

    if (static_cast<int>(subjects.size()) < min_node ||
        depth >= cfg.max_depth || constant_response(subjects)) {
      return node;
    }
    NodePredictors np =
        NodePredictors::from_subjects(series, subjects, meta);
    SignMatrix z =
        sign_vectors_long(series, subjects, node->curve, cfg.intervals);
    auto sel = select_split_variable(np, z, cfg.intervals);
    if (!sel) return node;

    LongitudinalSse eval(series, subjects, cfg.lowess_span);
    auto try_split = [&](int var, bool pair) -> std::optional<SplitEval> {
      const auto& xv = np.vars[static_cast<std::size_t>(var)];
      if (xv.categorical) {
        return best_categorical_split(xv, var, eval, &z, split_opt);
      }
      if (pair) {
        if (auto m = mean_numeric_split(xv, var, eval, split_opt)) return m;
      }
      return best_numeric_split(xv, var, eval, split_opt);
    };
    bool pair = sel->kind == Selection::Kind::kInteraction;
    std::optional<SplitEval> split;
    if (pair) {
      split = interaction_pair_split(
          np.vars[static_cast<std::size_t>(sel->var_i)], sel->var_i,
          np.vars[static_cast<std::size_t>(sel->var_j)], sel->var_j, eval,
          split_opt);
    }
    if (!split) {
      split = try_split(sel->var_i, pair);
      if (pair) {
        auto other = try_split(sel->var_j, true);
        if (!split || (other && other->report.gain > split->report.gain)) {
          split = std::move(other);
        }
      }
    }
    if (!split) return node;

    const auto& xv = np.vars[static_cast<std::size_t>(split->rule.var())];
    std::vector<std::size_t> left_s, right_s;
    for (std::size_t i = 0; i < subjects.size(); ++i) {
      Side side = apply_split(split->rule, xv.value[i], xv.missing[i] != 0);
      (side == Side::kLeft ? left_s : right_s).push_back(subjects[i]);
    }
    if (left_s.empty() || right_s.empty()) return node;
    node->rule = split->rule;
    node->left = build(left_s, depth + 1);
    node->right = build(right_s, depth + 1);
    return node;
  }
};

}  // namespace detail

/// Grows the unpruned tree: selection by chi-squared tests, split search on
/// the selected variable, recursion until a stopping condition.
inline Tree grow(const Dataset& ds, const GrowConfig& cfg) {
  if (ds.n_rows == 0) throw std::invalid_argument("grow: empty dataset");
  Tree t;
  t.layout = ds.layout;
  t.method = "guide";
  t.normalize = cfg.normalize;
  t.intervals = cfg.intervals;
  t.predictors = detail::predictor_meta(ds);
  if (ds.layout == Layout::kMultiresponse) {
    for (std::size_t k : ds.response_indices()) {
      t.response_names.push_back(ds.columns[k].name);
    }
    detail::MultiGrower grower(ds, cfg);
    std::vector<std::size_t> rows(ds.n_rows);
    std::iota(rows.begin(), rows.end(), 0);
    t.root = grower.build(rows, 0, {});
  } else {
    t.response_names.push_back(
        ds.columns[ds.response_indices()[0]].name);
    t.time_name = ds.columns[*ds.role_index(ColumnRole::kTime)].name;
    t.subject_name = ds.columns[*ds.role_index(ColumnRole::kSubjectId)].name;
    auto series = group_by_subject(ds);
    detail::LongGrower grower(series, ds, cfg);
    std::vector<std::size_t> subjects;
    for (std::size_t s = 0; s < series.size(); ++s) {
      if (!series[s].obs.empty()) subjects.push_back(s);
    }
    if (subjects.empty()) throw std::invalid_argument("grow: no subjects");
    t.root = grower.build(subjects, 0);
  }
  return t;
}

// -------- cost-complexity pruning --------

struct PruneEntry {
  double alpha = 0.0;
  int n_leaves = 0;
  double train_sse = 0.0;
  double cv_error = std::numeric_limits<double>::quiet_NaN();
  double cv_se = std::numeric_limits<double>::quiet_NaN();
  std::vector<int> collapsed;  // internal node ids made terminal
};

struct PruneSequence {
  std::vector<PruneEntry> entries;
};

namespace detail {

struct SubtreeStat {
  double leaf_sse = 0.0;
  int leaves = 0;
};

// pass 1: the smallest per-leaf gain over live internal nodes
inline SubtreeStat weakest_link_min(const TreeNode* node,
                                    const std::set<int>& collapsed,
                                    double& min_g) {
  if (node->is_leaf() || collapsed.count(node->id)) {
    return {node->sse, 1};
  }
  SubtreeStat l = weakest_link_min(node->left.get(), collapsed, min_g);
  SubtreeStat r = weakest_link_min(node->right.get(), collapsed, min_g);
  SubtreeStat s{l.leaf_sse + r.leaf_sse, l.leaves + r.leaves};
  double g = (node->sse - s.leaf_sse) / (s.leaves - 1);
  min_g = std::min(min_g, g);
  return s;
}

// pass 2: all nodes achieving the minimum (within numerical slack)
inline SubtreeStat weakest_link_collect(const TreeNode* node,
                                        const std::set<int>& collapsed,
                                        double min_g,
                                        std::vector<int>& argmin) {
  if (node->is_leaf() || collapsed.count(node->id)) {
    return {node->sse, 1};
  }
  SubtreeStat l =
      weakest_link_collect(node->left.get(), collapsed, min_g, argmin);
  SubtreeStat r =
      weakest_link_collect(node->right.get(), collapsed, min_g, argmin);
  SubtreeStat s{l.leaf_sse + r.leaf_sse, l.leaves + r.leaves};
  double g = (node->sse - s.leaf_sse) / (s.leaves - 1);
  if (g <= min_g + 1e-12 * (1.0 + std::fabs(min_g))) {
    argmin.push_back(node->id);
  }
  return s;
}

inline SubtreeStat subtree_stat(const TreeNode* node,
                                const std::set<int>& collapsed) {
  if (node->is_leaf() || collapsed.count(node->id)) return {node->sse, 1};
  SubtreeStat l = subtree_stat(node->left.get(), collapsed);
  SubtreeStat r = subtree_stat(node->right.get(), collapsed);
  return {l.leaf_sse + r.leaf_sse, l.leaves + r.leaves};
}

}  // namespace detail

/// Minimal cost-complexity (weakest link) sequence on training error:
/// repeatedly collapse the internal nodes with the smallest per-leaf
/// impurity gain g(t) = (R(t) - R(T_t)) / (|T_t| - 1). Entry 0 is the full
/// tree at alpha 0; alphas increase strictly along the sequence.
inline PruneSequence prune_sequence(const Tree& tree) {
  PruneSequence seq;
  std::set<int> collapsed;
  auto stat0 = detail::subtree_stat(tree.root.get(), collapsed);
  seq.entries.push_back(
      {0.0, stat0.leaves, stat0.leaf_sse, std::nan(""), std::nan(""), {}});
  while (true) {
    auto current = detail::subtree_stat(tree.root.get(), collapsed);
    if (current.leaves <= 1) break;
    double min_g = std::numeric_limits<double>::infinity();
    detail::weakest_link_min(tree.root.get(), collapsed, min_g);
    std::vector<int> argmin;
    detail::weakest_link_collect(tree.root.get(), collapsed, min_g, argmin);
    for (int id : argmin) collapsed.insert(id);
    auto stat = detail::subtree_stat(tree.root.get(), collapsed);
    double alpha = std::max(min_g, 0.0);
    PruneEntry entry{alpha, stat.leaves, stat.leaf_sse, std::nan(""),
                     std::nan(""),
                     std::vector<int>(collapsed.begin(), collapsed.end())};
    if (seq.entries.size() > 1 && alpha <= seq.entries.back().alpha) {
      seq.entries.back() = std::move(entry);  // merge equal-alpha steps
    } else {
      seq.entries.push_back(std::move(entry));
    }
  }
  return seq;
}

/// The tree with the given internal nodes collapsed to terminals.
inline Tree prune_to(const Tree& tree, const std::vector<int>& collapsed_ids) {
  std::set<int> ids(collapsed_ids.begin(), collapsed_ids.end());
  return detail::clone_tree(tree, &ids);
}

// -------- prediction --------

namespace detail {

inline const TreeNode* route_node(const TreeNode* node,
                                  std::span<const double> x,
                                  std::span<const std::uint8_t> missing,
                                  const std::set<int>* collapsed = nullptr) {
  while (!node->is_leaf() && !(collapsed && collapsed->count(node->id))) {
    int var = node->rule->var();
    Side side = apply_split(*node->rule, x[static_cast<std::size_t>(var)],
                            missing[static_cast<std::size_t>(var)] != 0);
    node = side == Side::kLeft ? node->left.get() : node->right.get();
  }
  return node;
}

}  // namespace detail

/// Routes a predictor vector to its terminal node.
inline const TreeNode& route(const Tree& tree, std::span<const double> x,
                             std::span<const std::uint8_t> missing) {
  if (x.size() != tree.predictors.size() || missing.size() != x.size()) {
    throw std::invalid_argument("route: predictor vector size mismatch");
  }
  return *detail::route_node(tree.root.get(), x, missing);
}

/// Multiresponse prediction: the terminal node's mean vector.
inline std::vector<double> predict(const Tree& tree,
                                   std::span<const double> x,
                                   std::span<const std::uint8_t> missing) {
  if (tree.layout != Layout::kMultiresponse) {
    throw std::invalid_argument("predict: longitudinal model needs a time");
  }
  return route(tree, x, missing).mean;
}

/// Longitudinal prediction: the terminal node's curve evaluated at u.
inline double predict(const Tree& tree, std::span<const double> x,
                      std::span<const std::uint8_t> missing, double u) {
  if (tree.layout != Layout::kLongitudinal) {
    throw std::invalid_argument("predict: time given for multiresponse model");
  }
  return curve_eval(route(tree, x, missing).curve, u);
}

// -------- cross-validation --------

namespace detail {

inline Dataset subset_rows(const Dataset& ds,
                           const std::vector<std::size_t>& rows) {
  Dataset out;
  out.layout = ds.layout;
  out.n_rows = rows.size();
  out.columns.reserve(ds.columns.size());
  for (const Column& col : ds.columns) {
    Column c;
    c.name = col.name;
    c.role = col.role;
    c.categories = col.categories;  // keep dictionaries stable
    c.values.reserve(rows.size());
    c.missing.reserve(rows.size());
    for (std::size_t r : rows) {
      c.values.push_back(col.values[r]);
      c.missing.push_back(col.missing[r]);
    }
    out.columns.push_back(std::move(c));
  }
  return out;
}

/// Per-unit squared prediction error of a collapsed fold tree on one
/// held-out unit (row or subject).
struct CvScorer {
  const Dataset& ds;
  std::vector<std::size_t> resp;
  std::vector<double> weights;
  std::vector<std::size_t> pred_cols;
  std::vector<SubjectSeries> series;  // longitudinal only
  std::optional<std::size_t> subj_col;

  CvScorer(const Dataset& dataset, bool normalize) : ds(dataset) {
    resp = ds.response_indices();
    weights = response_weights(ds, normalize);
    pred_cols = ds.predictor_indices();
    if (ds.layout == Layout::kLongitudinal) {
      series = group_by_subject(ds);
      subj_col = ds.role_index(ColumnRole::kSubjectId);
    }
  }

  double row_error(const Tree& tree, const std::set<int>& collapsed,
                   std::size_t row) const {
    std::vector<double> x(pred_cols.size());
    std::vector<std::uint8_t> miss(pred_cols.size());
    for (std::size_t j = 0; j < pred_cols.size(); ++j) {
      x[j] = ds.columns[pred_cols[j]].values[row];
      miss[j] = ds.columns[pred_cols[j]].missing[row];
    }
    const TreeNode* node =
        route_node(tree.root.get(), x, miss, &collapsed);
    double e = 0.0;
    for (std::size_t k = 0; k < resp.size(); ++k) {
      const Column& col = ds.columns[resp[k]];
      if (col.missing[row]) continue;
      double d = col.values[row] - node->mean[k];
      e += weights[k] * d * d;
    }
    return e;
  }

  double subject_error(const Tree& tree, const std::set<int>& collapsed,
                       std::size_t subject) const {
    const SubjectSeries& s = series[subject];
    const TreeNode* node =
        route_node(tree.root.get(), s.x, s.x_missing, &collapsed);
    double e = 0.0;
    for (const Obs& o : s.obs) {
      double d = o.y - curve_eval(node->curve, o.u);
      e += d * d;
    }
    return e;
  }
};

template <class FitFn>
Tree cross_validate_impl(const Dataset& ds, const GrowConfig& cfg, int folds,
                         double se_rule, FitFn fit, PruneSequence* seq_out) {
  Tree full = fit(ds, cfg);
  PruneSequence seq = prune_sequence(full);
  const std::size_t K = seq.entries.size();
  std::vector<double> beta(K);
  for (std::size_t k = 0; k + 1 < K; ++k) {
    beta[k] = std::sqrt(seq.entries[k].alpha * seq.entries[k + 1].alpha);
  }
  beta[K - 1] = std::numeric_limits<double>::infinity();

  CvScorer scorer(ds, cfg.normalize);
  const bool longitudinal = ds.layout == Layout::kLongitudinal;

  // units are rows (multiresponse) or subjects with observations
  std::vector<std::size_t> units;
  if (longitudinal) {
    for (std::size_t s = 0; s < scorer.series.size(); ++s) {
      if (!scorer.series[s].obs.empty()) units.push_back(s);
    }
  } else {
    units.resize(ds.n_rows);
    std::iota(units.begin(), units.end(), 0);
  }
  folds = std::max(2, std::min<int>(folds, static_cast<int>(units.size())));
  Rng rng(cfg.seed, 0x666f6c64ULL);  // fold assignment stream
  rng.shuffle(units);
  std::vector<int> fold_of(longitudinal ? scorer.series.size() : ds.n_rows,
                           -1);
  for (std::size_t i = 0; i < units.size(); ++i) {
    fold_of[units[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
  }

  std::vector<std::vector<double>> unit_errors(K);
  for (int f = 0; f < folds; ++f) {
    std::vector<std::size_t> train_rows, held_units;
    if (longitudinal) {
      const Column& subj = ds.columns[*scorer.subj_col];
      for (std::size_t r = 0; r < ds.n_rows; ++r) {
        auto s = static_cast<std::size_t>(subj.values[r]);
        if (fold_of[s] != f) train_rows.push_back(r);
      }
      for (std::size_t u : units) {
        if (fold_of[u] == f) held_units.push_back(u);
      }
    } else {
      for (std::size_t r = 0; r < ds.n_rows; ++r) {
        (fold_of[r] == f ? held_units : train_rows).push_back(r);
      }
    }
    Dataset train = subset_rows(ds, train_rows);
    Tree fold_tree = fit(train, cfg);
    PruneSequence fold_seq = prune_sequence(fold_tree);
    for (std::size_t k = 0; k < K; ++k) {
      // smallest fold subtree whose critical alpha does not exceed beta_k
      std::size_t pick = 0;
      for (std::size_t e = 0; e < fold_seq.entries.size(); ++e) {
        if (fold_seq.entries[e].alpha <= beta[k]) pick = e;
      }
      std::set<int> collapsed(fold_seq.entries[pick].collapsed.begin(),
                              fold_seq.entries[pick].collapsed.end());
      for (std::size_t u : held_units) {
        double e = longitudinal
                       ? scorer.subject_error(fold_tree, collapsed, u)
                       : scorer.row_error(fold_tree, collapsed, u);
        unit_errors[k].push_back(e);
      }
    }
  }

  for (std::size_t k = 0; k < K; ++k) {
    const auto& errs = unit_errors[k];
    double mean = 0.0;
    for (double e : errs) mean += e;
    mean /= static_cast<double>(errs.size());
    double var = 0.0;
    for (double e : errs) var += (e - mean) * (e - mean);
    var = errs.size() > 1 ? var / static_cast<double>(errs.size() - 1) : 0.0;
    seq.entries[k].cv_error = mean;
    seq.entries[k].cv_se =
        std::sqrt(var / static_cast<double>(errs.size()));
  }

  std::size_t best = 0;
  for (std::size_t k = 1; k < K; ++k) {
    if (seq.entries[k].cv_error <= seq.entries[best].cv_error) best = k;
  }
  if (se_rule > 0.0) {
    double limit = seq.entries[best].cv_error +
                   se_rule * seq.entries[best].cv_se;
    for (std::size_t k = best + 1; k < K; ++k) {
      if (seq.entries[k].cv_error <= limit) best = k;
    }
  }
  Tree pruned = prune_to(full, seq.entries[best].collapsed);
  if (seq_out) *seq_out = std::move(seq);
  return pruned;
}

}  // namespace detail

/// Grows, builds the weakest-link sequence, scores each candidate alpha by
/// V-fold cross-validation (geometric midpoints of the critical alphas) and
/// returns the subtree with the smallest CV error, or the smallest subtree
/// within `se_rule` standard errors of it. Longitudinal folds partition
/// subjects, never observations.
inline Tree cross_validate(const Dataset& ds, const GrowConfig& cfg,
                           int folds = 10, double se_rule = 0.0,
                           PruneSequence* seq_out = nullptr) {
  return detail::cross_validate_impl(
      ds, cfg, folds, se_rule,
      [](const Dataset& d, const GrowConfig& c) { return grow(d, c); },
      seq_out);
}

// -------- serialization --------

namespace detail {

inline nlohmann::json rule_to_json(const Tree& tree, const SplitRule& rule) {
  nlohmann::json j;
  const auto& meta = tree.predictors[static_cast<std::size_t>(rule.var())];
  j["var"] = meta.name;
  if (const auto* num = std::get_if<NumericSplit>(&rule.rule)) {
    j["kind"] = "numeric";
    j["threshold"] = num->threshold;
    j["missing_left"] = num->missing_goes_left;
    if (num->all_missing_split) j["all_missing"] = true;
  } else {
    const auto& cat = std::get<CategoricalSplit>(rule.rule);
    j["kind"] = "categorical";
    nlohmann::json cats = nlohmann::json::array();
    for (int c : cat.left_categories) {
      cats.push_back(meta.categories[static_cast<std::size_t>(c)]);
    }
    j["left"] = std::move(cats);
    j["missing_left"] = cat.missing_in_left;
  }
  return j;
}

inline void nodes_to_json(const TreeNode* n, nlohmann::json& arr,
                          const Tree& tree) {
  nlohmann::json j;
  j["id"] = n->id;
  j["n"] = n->n;
  j["sse"] = n->sse;
  if (tree.layout == Layout::kMultiresponse) {
    j["mean"] = n->mean;
  } else {
    nlohmann::json knots = nlohmann::json::array();
    for (std::size_t i = 0; i < n->curve.u.size(); ++i) {
      knots.push_back({n->curve.u[i], n->curve.s[i]});
    }
    j["curve_knots"] = std::move(knots);
  }
  if (!n->is_leaf()) {
    j["rule"] = rule_to_json(tree, *n->rule);
    j["left"] = n->left->id;
    j["right"] = n->right->id;
  }
  arr.push_back(std::move(j));
  if (!n->is_leaf()) {
    nodes_to_json(n->left.get(), arr, tree);
    nodes_to_json(n->right.get(), arr, tree);
  }
}

}  // namespace detail

inline std::string serialize(const Tree& tree) {
  nlohmann::json j;
  j["version"] = 1;
  j["method"] = tree.method;
  j["layout"] = to_string(tree.layout);
  nlohmann::json roles;
  nlohmann::json preds = nlohmann::json::array();
  for (const auto& p : tree.predictors) {
    nlohmann::json pj;
    pj["name"] = p.name;
    pj["kind"] = p.categorical ? "categorical" : "numeric";
    if (p.categorical) pj["categories"] = p.categories;
    preds.push_back(std::move(pj));
  }
  roles["predictors"] = std::move(preds);
  roles["responses"] = tree.response_names;
  if (tree.layout == Layout::kLongitudinal) {
    roles["time"] = tree.time_name;
    roles["subject"] = tree.subject_name;
  }
  j["roles"] = std::move(roles);
  j["normalize"] = tree.normalize;
  j["intervals"] = tree.intervals;
  nlohmann::json nodes = nlohmann::json::array();
  detail::nodes_to_json(tree.root.get(), nodes, tree);
  j["nodes"] = std::move(nodes);
  return j.dump(1);
}

namespace detail {

inline std::unique_ptr<TreeNode> node_from_json(
    int id, const std::map<int, const nlohmann::json*>& by_id,
    const Tree& tree, int depth) {
  if (depth > 512) throw std::runtime_error("model nodes nest too deeply");
  auto it = by_id.find(id);
  if (it == by_id.end()) {
    throw std::runtime_error("model references unknown node id " +
                             std::to_string(id));
  }
  const nlohmann::json& j = *it->second;
  auto node = std::make_unique<TreeNode>();
  node->id = id;
  node->n = j.at("n").get<std::size_t>();
  node->sse = j.value("sse", 0.0);
  if (tree.layout == Layout::kMultiresponse) {
    node->mean = j.at("mean").get<std::vector<double>>();
    if (node->mean.size() != tree.response_names.size()) {
      throw std::runtime_error("node mean size mismatch");
    }
  } else {
    const auto& knots = j.at("curve_knots");
    for (const auto& kv : knots) {
      node->curve.u.push_back(kv.at(0).get<double>());
      node->curve.s.push_back(kv.at(1).get<double>());
    }
    if (node->curve.u.empty()) throw std::runtime_error("empty node curve");
  }
  if (j.contains("rule")) {
    const auto& rj = j.at("rule");
    std::string var_name = rj.at("var").get<std::string>();
    int var = -1;
    for (std::size_t p = 0; p < tree.predictors.size(); ++p) {
      if (tree.predictors[p].name == var_name) var = static_cast<int>(p);
    }
    if (var < 0) {
      throw std::runtime_error("rule references unknown predictor " +
                               var_name);
    }
    std::string kind = rj.at("kind").get<std::string>();
    SplitRule rule;
    if (kind == "numeric") {
      NumericSplit num;
      num.var = var;
      num.threshold = rj.at("threshold").get<double>();
      num.missing_goes_left = rj.at("missing_left").get<bool>();
      num.all_missing_split = rj.value("all_missing", false);
      rule.rule = num;
    } else if (kind == "categorical") {
      CategoricalSplit cat;
      cat.var = var;
      const auto& meta = tree.predictors[static_cast<std::size_t>(var)];
      for (const auto& name : rj.at("left")) {
        auto cname = name.get<std::string>();
        auto pos = std::find(meta.categories.begin(), meta.categories.end(),
                             cname);
        if (pos == meta.categories.end()) {
          throw std::runtime_error("rule references unknown category " +
                                   cname);
        }
        cat.left_categories.push_back(
            static_cast<int>(pos - meta.categories.begin()));
      }
      std::sort(cat.left_categories.begin(), cat.left_categories.end());
      cat.missing_in_left = rj.at("missing_left").get<bool>();
      rule.rule = cat;
    } else {
      throw std::runtime_error("unknown rule kind: " + kind);
    }
    node->rule = rule;
    node->left =
        node_from_json(j.at("left").get<int>(), by_id, tree, depth + 1);
    node->right =
        node_from_json(j.at("right").get<int>(), by_id, tree, depth + 1);
  }
  return node;
}

}  // namespace detail

inline Tree deserialize(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed model document: ") +
                             e.what());
  }
  try {
    int version = j.at("version").get<int>();
    if (version != 1) {
      throw std::runtime_error("unsupported model version " +
                               std::to_string(version));
    }
    Tree tree;
    tree.method = j.value("method", std::string("guide"));
    std::string layout = j.at("layout").get<std::string>();
    if (layout == "multiresponse") {
      tree.layout = Layout::kMultiresponse;
    } else if (layout == "longitudinal") {
      tree.layout = Layout::kLongitudinal;
    } else {
      throw std::runtime_error("unknown layout: " + layout);
    }
    const auto& roles = j.at("roles");
    for (const auto& pj : roles.at("predictors")) {
      PredictorMeta m;
      m.name = pj.at("name").get<std::string>();
      m.categorical = pj.at("kind").get<std::string>() == "categorical";
      if (m.categorical) {
        m.categories = pj.at("categories").get<std::vector<std::string>>();
      }
      tree.predictors.push_back(std::move(m));
    }
    tree.response_names =
        roles.at("responses").get<std::vector<std::string>>();
    if (tree.layout == Layout::kLongitudinal) {
      tree.time_name = roles.at("time").get<std::string>();
      tree.subject_name = roles.at("subject").get<std::string>();
    }
    tree.normalize = j.value("normalize", false);
    tree.intervals = j.value("intervals", 3);
    const auto& nodes = j.at("nodes");
    if (!nodes.is_array() || nodes.empty()) {
      throw std::runtime_error("model has no nodes");
    }
    std::map<int, const nlohmann::json*> by_id;
    for (const auto& nj : nodes) {
      int id = nj.at("id").get<int>();
      if (!by_id.emplace(id, &nj).second) {
        throw std::runtime_error("duplicate node id " + std::to_string(id));
      }
    }
    int root_id = nodes.front().at("id").get<int>();
    tree.root = detail::node_from_json(root_id, by_id, tree, 0);
    return tree;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed model document: ") +
                             e.what());
  }
}

// -------- text rendering --------

namespace detail {

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

inline std::string rule_text(const Tree& tree, const SplitRule& rule) {
  const auto& meta = tree.predictors[static_cast<std::size_t>(rule.var())];
  if (const auto* num = std::get_if<NumericSplit>(&rule.rule)) {
    if (num->all_missing_split) {
      return meta.name + " missing";
    }
    std::string s = meta.name + " <= " + format_number(num->threshold);
    s += num->missing_goes_left ? " (NA left)" : " (NA right)";
    return s;
  }
  const auto& cat = std::get<CategoricalSplit>(rule.rule);
  std::string s = meta.name + " in {";
  for (std::size_t i = 0; i < cat.left_categories.size(); ++i) {
    if (i) s += ", ";
    s += meta.categories[static_cast<std::size_t>(cat.left_categories[i])];
  }
  s += "}";
  s += cat.missing_in_left ? " (NA left)" : " (NA right)";
  return s;
}

inline void render_node(const Tree& tree, const TreeNode* node,
                        const std::string& prefix, bool last,
                        std::string& out) {
  out += prefix;
  if (!prefix.empty()) out += last ? "`-" : "|-";
  out += "[" + std::to_string(node->id) + "] n=" + std::to_string(node->n);
  if (node->is_leaf()) {
    if (tree.layout == Layout::kMultiresponse) {
      out += "  pred = (";
      for (std::size_t k = 0; k < node->mean.size(); ++k) {
        if (k) out += ", ";
        out += format_number(node->mean[k]);
      }
      out += ")";
    } else {
      out += "  curve: " + std::to_string(node->curve.u.size()) +
             " knots over [" + format_number(node->curve.u.front()) + ", " +
             format_number(node->curve.u.back()) + "]";
    }
  } else {
    out += "  " + rule_text(tree, *node->rule);
  }
  out += "\n";
  if (!node->is_leaf()) {
    std::string child_prefix = prefix;
    if (!prefix.empty()) child_prefix += last ? "  " : "| ";
    render_node(tree, node->left.get(), child_prefix, false, out);
    render_node(tree, node->right.get(), child_prefix, true, out);
  }
}

}  // namespace detail

/// Indented text tree: split condition per internal node (cases satisfying
/// it go left), sample size everywhere, predictions at the terminals.
inline std::string render_text(const Tree& tree) {
  std::string out;
  std::string header = tree.method + " " +
                       std::string(to_string(tree.layout)) + " tree, ";
  if (tree.layout == Layout::kMultiresponse) {
    header += std::to_string(tree.response_names.size()) + " responses, ";
  }
  header += std::to_string(tree.n_leaves()) + " terminal nodes\n";
  out += header;
  detail::render_node(tree, tree.root.get(), " ", true, out);
  return out;
}

}  // namespace mvguide

#endif  // MVGUIDE_TREE_HPP_
