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
#ifndef MVGUIDE_SELECTOR_HPP_
#define MVGUIDE_SELECTOR_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mvguide/dataset.hpp"
#include "mvguide/stats.hpp"

namespace mvguide {

/// Residual sign vectors: one row of d entries in {-1,+1} per unit
/// (a data row in multiresponse mode, a subject in longitudinal mode).
struct SignMatrix {
  int d = 0;
  std::size_t n = 0;
  std::vector<std::int8_t> z;  // n x d, row-major

  std::int8_t at(std::size_t unit, int k) const {
    return z[unit * static_cast<std::size_t>(d) + static_cast<std::size_t>(k)];
  }

  /// Bit k set iff Z_k == +1; the column key of every contingency table.
  std::uint32_t pattern(std::size_t unit) const {
    std::uint32_t p = 0;
    for (int k = 0; k < d; ++k) {
      if (at(unit, k) > 0) p |= 1u << k;
    }
    return p;
  }
};

/// Per-node gathered predictor columns, the working view for selection and
/// split search. Units are data rows (multiresponse) or subjects
/// (longitudinal); values are aligned with the node's unit order.
struct NodePredictors {
  struct Var {
    std::string name;
    bool categorical = false;
    int n_categories = 0;  // size of the dataset-level dictionary
    std::vector<double> value;
    std::vector<std::uint8_t> missing;
  };
  std::vector<Var> vars;
  std::size_t n_units = 0;

  static NodePredictors from_rows(const Dataset& ds,
                                  std::span<const std::size_t> rows) {
    NodePredictors np;
    np.n_units = rows.size();
    for (std::size_t ci : ds.predictor_indices()) {
      const Column& col = ds.columns[ci];
      Var v;
      v.name = col.name;
      v.categorical = col.role == ColumnRole::kCategoricalPredictor;
      v.n_categories = static_cast<int>(col.categories.size());
      v.value.reserve(rows.size());
      v.missing.reserve(rows.size());
      for (std::size_t r : rows) {
        v.value.push_back(col.values[r]);
        v.missing.push_back(col.missing[r]);
      }
      np.vars.push_back(std::move(v));
    }
    return np;
  }

  static NodePredictors from_subjects(const std::vector<SubjectSeries>& all,
                                      std::span<const std::size_t> subjects,
                                      const NodePredictors& meta) {
    NodePredictors np;
    np.n_units = subjects.size();
    np.vars.resize(meta.vars.size());
    for (std::size_t j = 0; j < meta.vars.size(); ++j) {
      Var& v = np.vars[j];
      v.name = meta.vars[j].name;
      v.categorical = meta.vars[j].categorical;
      v.n_categories = meta.vars[j].n_categories;
      v.value.reserve(subjects.size());
      v.missing.reserve(subjects.size());
      for (std::size_t s : subjects) {
        v.value.push_back(all[s].x[j]);
        v.missing.push_back(all[s].x_missing[j]);
      }
    }
    return np;
  }
};

/// Group index per unit, plus an extra group for missing values when any
/// exist in the node.
struct GroupAssignment {
  std::vector<int> group;   // per unit; missing units get missing_group
  int n_groups = 0;         // value groups, before the missing group
  int missing_group = -1;   // == n_groups when present

  int total_groups() const { return n_groups + (missing_group >= 0 ? 1 : 0); }
};

/// Interval grouping of a numeric variable. With fewer than 5*2^(d+2)
/// units the values split into 3 groups at mean +- sd*sqrt(3)/3, otherwise
/// into 4 groups at {mean, mean +- sd*sqrt(3)/2}. Intervals are
/// left-open/right-closed; missing values form their own group.
inline GroupAssignment group_numeric(std::span<const double> x,
                                     std::span<const std::uint8_t> missing,
                                     std::size_t node_n, int d) {
  if (x.size() != missing.size()) {
    throw std::invalid_argument("group_numeric: size mismatch");
  }
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!missing[i]) {
      sum += x[i];
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("group_numeric: all values missing");
  const double mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!missing[i]) {
      double dx = x[i] - mean;
      ss += dx * dx;
    }
  }
  const double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;

  const double threshold = 5.0 * std::pow(2.0, d + 2);
  std::vector<double> cuts;
  if (static_cast<double>(node_n) < threshold) {
    const double delta = sd * std::sqrt(3.0) / 3.0;
    cuts = {mean - delta, mean + delta};
  } else {
    const double delta = sd * std::sqrt(3.0) / 2.0;
    cuts = {mean - delta, mean, mean + delta};
  }

  GroupAssignment ga;
  ga.n_groups = static_cast<int>(cuts.size()) + 1;
  bool any_missing = false;
  ga.group.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (missing[i]) {
      any_missing = true;
      continue;
    }
    int g = 0;
    while (g < static_cast<int>(cuts.size()) &&
           x[i] > cuts[static_cast<std::size_t>(g)]) {
      ++g;
    }
    ga.group[i] = g;
  }
  if (any_missing) {
    ga.missing_group = ga.n_groups;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (missing[i]) ga.group[i] = ga.missing_group;
    }
  }
  return ga;
}

/// Category grouping (one group per dictionary entry) with a missing group.
inline GroupAssignment group_categorical(std::span<const double> x,
                                         std::span<const std::uint8_t> missing,
                                         int n_categories) {
  GroupAssignment ga;
  ga.n_groups = n_categories;
  ga.group.resize(x.size());
  bool any_missing = false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (missing[i]) {
      any_missing = true;
    } else {
      ga.group[i] = static_cast<int>(x[i]);
    }
  }
  if (any_missing) {
    ga.missing_group = ga.n_groups;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (missing[i]) ga.group[i] = ga.missing_group;
    }
  }
  return ga;
}

/// Sign vectors for multiresponse data: Z_k = +1 iff Y_k is above the node
/// mean of the nonmissing values, -1 otherwise (ties go down). A missing
/// Y_k contributes `missing_y_sign`, the same choice at every node.
inline SignMatrix sign_vectors_multi(const Dataset& ds,
                                     std::span<const std::size_t> rows,
                                     int missing_y_sign = -1) {
  if (ds.layout != Layout::kMultiresponse) {
    throw std::invalid_argument("sign_vectors_multi: multiresponse only");
  }
  if (rows.empty()) throw std::invalid_argument("sign_vectors_multi: no rows");
  if (missing_y_sign != -1 && missing_y_sign != 1) {
    throw std::invalid_argument("missing_y_sign must be -1 or +1");
  }
  auto resp = ds.response_indices();
  SignMatrix zm;
  zm.d = static_cast<int>(resp.size());
  zm.n = rows.size();
  zm.z.assign(zm.n * resp.size(), -1);
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
    if (n == 0) {
      throw std::invalid_argument("response " + col.name +
                                  " entirely missing in node");
    }
    const double mean = sum / static_cast<double>(n);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::size_t r = rows[i];
      std::int8_t s;
      if (col.missing[r]) {
        s = static_cast<std::int8_t>(missing_y_sign);
      } else {
        s = col.values[r] > mean ? 1 : -1;
      }
      zm.z[i * resp.size() + k] = s;
    }
  }
  return zm;
}

/// Longitudinal sign vectors. The node time range is cut into d equal
/// intervals; for each subject and interval, Z_k = +1 iff at least as many
/// observations lie strictly above the node curve as lie on or below it.
/// An interval with no observations gives Z_k = -1.
inline SignMatrix sign_vectors_long(const std::vector<SubjectSeries>& series,
                                    std::span<const std::size_t> subjects,
                                    const Curve& curve, int d) {
  if (subjects.empty()) {
    throw std::invalid_argument("sign_vectors_long: empty subject set");
  }
  if (d < 1) throw std::invalid_argument("sign_vectors_long: d must be >= 1");
  double umin = std::numeric_limits<double>::infinity();
  double umax = -std::numeric_limits<double>::infinity();
  for (std::size_t s : subjects) {
    for (const Obs& o : series[s].obs) {
      umin = std::min(umin, o.u);
      umax = std::max(umax, o.u);
    }
  }
  const double len = (umax - umin) / d;
  SignMatrix zm;
  zm.d = d;
  zm.n = subjects.size();
  zm.z.assign(zm.n * static_cast<std::size_t>(d), -1);
  std::vector<int> above(static_cast<std::size_t>(d));
  std::vector<int> below(static_cast<std::size_t>(d));
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    std::fill(above.begin(), above.end(), 0);
    std::fill(below.begin(), below.end(), 0);
    for (const Obs& o : series[subjects[i]].obs) {
      int k = len > 0 ? std::min(d - 1, static_cast<int>((o.u - umin) / len))
                      : 0;
      if (o.y > curve_eval(curve, o.u)) {
        ++above[static_cast<std::size_t>(k)];
      } else {
        ++below[static_cast<std::size_t>(k)];
      }
    }
    for (int k = 0; k < d; ++k) {
      auto ku = static_cast<std::size_t>(k);
      bool occupied = above[ku] + below[ku] > 0;
      zm.z[i * static_cast<std::size_t>(d) + ku] =
          occupied && above[ku] >= below[ku] ? 1 : -1;
    }
  }
  return zm;
}

namespace detail {

/// Builds the groups-by-patterns table and returns the chi-squared p-value;
/// degenerate tables give 1. Pattern columns rarer than kMinColumnTotal are
/// pooled (rarest first) before testing: isolated counts from rare patterns
/// in thin rows otherwise spike the Pearson statistic far beyond its
/// chi-squared reference. Column totals do not depend on the predictor, so
/// the pooling is identical for every variable at a node.
inline constexpr std::int64_t kMinColumnTotal = 5;

inline ContingencyTable pool_rare_columns(const ContingencyTable& t,
                                          std::int64_t min_total) {
  std::vector<std::int64_t> totals(t.n_cols, 0);
  for (std::size_t r = 0; r < t.n_rows; ++r) {
    for (std::size_t c = 0; c < t.n_cols; ++c) totals[c] += t.at(r, c);
  }
  // live[c] = current column holding c's counts
  std::vector<std::size_t> live(t.n_cols);
  for (std::size_t c = 0; c < t.n_cols; ++c) live[c] = c;
  std::vector<std::int64_t> cur = totals;
  std::vector<bool> dead(t.n_cols, false);
  auto smallest = [&](std::size_t skip) {
    std::size_t best = t.n_cols;
    for (std::size_t c = 0; c < t.n_cols; ++c) {
      if (dead[c] || c == skip) continue;
      if (best == t.n_cols || cur[c] < cur[best]) best = c;
    }
    return best;
  };
  std::size_t n_live = t.n_cols;
  while (n_live > 2) {
    std::size_t a = smallest(t.n_cols);
    if (a == t.n_cols || cur[a] >= min_total) break;
    std::size_t b = smallest(a);
    if (b == t.n_cols) break;
    // merge a into b
    cur[b] += cur[a];
    dead[a] = true;
    for (std::size_t c = 0; c < t.n_cols; ++c) {
      if (live[c] == a) live[c] = b;
    }
    --n_live;
  }
  if (n_live == t.n_cols) return t;
  std::vector<std::size_t> col_of(t.n_cols, 0);
  std::size_t nc = 0;
  for (std::size_t c = 0; c < t.n_cols; ++c) {
    if (!dead[c]) col_of[c] = nc++;
  }
  ContingencyTable out(t.n_rows, nc);
  for (std::size_t r = 0; r < t.n_rows; ++r) {
    for (std::size_t c = 0; c < t.n_cols; ++c) {
      out.at(r, col_of[live[c]]) += t.at(r, c);
    }
  }
  return out;
}

inline double table_pvalue(std::span<const int> group, int n_groups,
                           const SignMatrix& z) {
  std::map<std::uint32_t, std::size_t> pattern_col;
  for (std::size_t i = 0; i < z.n; ++i) {
    pattern_col.emplace(z.pattern(i), 0);
  }
  std::size_t c = 0;
  for (auto& [pat, idx] : pattern_col) idx = c++;
  ContingencyTable t(static_cast<std::size_t>(n_groups), pattern_col.size());
  for (std::size_t i = 0; i < z.n; ++i) {
    ++t.at(static_cast<std::size_t>(group[i]), pattern_col[z.pattern(i)]);
  }
  ContingencyTable pooled = pool_rare_columns(t, kMinColumnTotal);
  auto res = chisq_statistic(pooled);
  if (!res) return 1.0;
  return chisq_pvalue(res->stat, res->df);
}

inline int distinct_nonmissing(const NodePredictors::Var& v) {
  std::vector<double> vals;
  vals.reserve(v.value.size());
  for (std::size_t i = 0; i < v.value.size(); ++i) {
    if (!v.missing[i]) vals.push_back(v.value[i]);
  }
  std::sort(vals.begin(), vals.end());
  vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
  return static_cast<int>(vals.size());
}

inline bool has_missing(const NodePredictors::Var& v) {
  for (auto m : v.missing) {
    if (m) return true;
  }
  return false;
}

/// A variable can host a split when it has at least two distinct values in
/// the node, counting missingness as a value of its own.
inline bool splittable(const NodePredictors::Var& v) {
  int distinct = distinct_nonmissing(v);
  return distinct >= 2 || (distinct >= 1 && has_missing(v));
}

}  // namespace detail

/// Main-effect chi-squared p-value for one predictor: rows are the value
/// groups (plus the missing group), columns the observed Z patterns.
inline double main_effect_pvalue(const NodePredictors& np, std::size_t var,
                                 const SignMatrix& z) {
  const auto& v = np.vars[var];
  GroupAssignment ga =
      v.categorical
          ? group_categorical(v.value, v.missing, v.n_categories)
          : group_numeric(v.value, v.missing, np.n_units, z.d);
  return detail::table_pvalue(ga.group, ga.total_groups(), z);
}

/// Interaction chi-squared p-value for a pair of predictors. Numeric
/// variables are halved at the node mean; categorical ones contribute one
/// set per category. Rows are the nonempty cross cells; units missing
/// either variable pool into one extra row. Pairs with more than 64 rows
/// or with a constant member are skipped (p-value 1).
inline double interaction_pvalue(const NodePredictors& np, std::size_t var_i,
                                 std::size_t var_j, const SignMatrix& z) {
  if (var_i == var_j) {
    throw std::invalid_argument("interaction_pvalue: identical variables");
  }
  const auto& a = np.vars[var_i];
  const auto& b = np.vars[var_j];

  auto halves = [&](const NodePredictors::Var& v,
                    std::vector<int>& g) -> int {
    // categorical: one group per category; numeric: split at the node mean
    if (v.categorical) {
      for (std::size_t i = 0; i < v.value.size(); ++i) {
        g[i] = v.missing[i] ? -1 : static_cast<int>(v.value[i]);
      }
      return v.n_categories;
    }
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < v.value.size(); ++i) {
      if (!v.missing[i]) {
        sum += v.value[i];
        ++n;
      }
    }
    if (n == 0) {
      std::fill(g.begin(), g.end(), -1);
      return 1;
    }
    double mean = sum / static_cast<double>(n);
    for (std::size_t i = 0; i < v.value.size(); ++i) {
      g[i] = v.missing[i] ? -1 : (v.value[i] <= mean ? 0 : 1);
    }
    return 2;
  };

  std::vector<int> ga(np.n_units), gb(np.n_units);
  halves(a, ga);
  int kb = halves(b, gb);
  // a constant member adds nothing beyond the other variable's main effect
  if (detail::distinct_nonmissing(a) < 2 || detail::distinct_nonmissing(b) < 2) {
    return 1.0;
  }

  std::map<int, int> cell_row;
  std::vector<int> row(np.n_units);
  bool any_missing = false;
  for (std::size_t i = 0; i < np.n_units; ++i) {
    if (ga[i] < 0 || gb[i] < 0) {
      any_missing = true;
      row[i] = -1;
      continue;
    }
    cell_row.emplace(ga[i] * kb + gb[i], 0);
  }
  if (cell_row.size() > 64) return 1.0;  // categorical blowup guard
  int r = 0;
  for (auto& [cell, idx] : cell_row) idx = r++;
  int n_rows = r + (any_missing ? 1 : 0);
  for (std::size_t i = 0; i < np.n_units; ++i) {
    row[i] = row[i] < 0 ? r : cell_row[ga[i] * kb + gb[i]];
  }
  return detail::table_pvalue(row, n_rows, z);
}

/// Outcome of split-variable selection at a node.
struct Selection {
  enum class Kind { kMainEffect, kInteraction };
  Kind kind = Kind::kMainEffect;
  int var_i = -1;
  int var_j = -1;  // >= 0 only for interaction selections
  std::vector<double> main_p;  // per predictor, aligned with NodePredictors
  double chosen_p = 1.0;
};

/// Bonferroni-staged selection: pick the variable with the smallest
/// main-effect p-value if it beats 0.05/d; otherwise run all pairwise
/// interaction tests against 0.05/(d(d-1)); otherwise fall back to the
/// smallest main-effect p-value. Ties break to the first variable in
/// column order. Returns nullopt when no predictor can host a split.
inline std::optional<Selection> select_split_variable(const NodePredictors& np,
                                                      const SignMatrix& z,
                                                      int d) {
  std::vector<bool> ok(np.vars.size());
  bool any = false;
  for (std::size_t j = 0; j < np.vars.size(); ++j) {
    ok[j] = detail::splittable(np.vars[j]);
    any = any || ok[j];
  }
  if (!any) return std::nullopt;

  Selection sel;
  sel.main_p.resize(np.vars.size(), 1.0);
  int best = -1;
  for (std::size_t j = 0; j < np.vars.size(); ++j) {
    sel.main_p[j] = main_effect_pvalue(np, j, z);
    if (ok[j] && (best < 0 || sel.main_p[j] <
                                  sel.main_p[static_cast<std::size_t>(best)])) {
      best = static_cast<int>(j);
    }
  }
  const double main_threshold = 0.05 / d;
  if (sel.main_p[static_cast<std::size_t>(best)] < main_threshold) {
    sel.kind = Selection::Kind::kMainEffect;
    sel.var_i = best;
    sel.chosen_p = sel.main_p[static_cast<std::size_t>(best)];
    return sel;
  }
  if (d >= 2) {
    const double inter_threshold = 0.05 / (static_cast<double>(d) * (d - 1));
    double best_pair_p = 1.0;
    int bi = -1, bj = -1;
    for (std::size_t i = 0; i < np.vars.size(); ++i) {
      if (!ok[i]) continue;
      for (std::size_t j = i + 1; j < np.vars.size(); ++j) {
        if (!ok[j]) continue;
        double p = interaction_pvalue(np, i, j, z);
        if (bi < 0 || p < best_pair_p) {
          best_pair_p = p;
          bi = static_cast<int>(i);
          bj = static_cast<int>(j);
        }
      }
    }
    if (bi >= 0 && best_pair_p < inter_threshold) {
      sel.kind = Selection::Kind::kInteraction;
      sel.var_i = bi;
      sel.var_j = bj;
      sel.chosen_p = best_pair_p;
      return sel;
    }
  }
  sel.kind = Selection::Kind::kMainEffect;
  sel.var_i = best;
  sel.chosen_p = sel.main_p[static_cast<std::size_t>(best)];
  return sel;
}

/// Convenience wrapper over dataset rows (multiresponse).
inline std::optional<Selection> select_split_variable(
    const Dataset& ds, std::span<const std::size_t> rows, const SignMatrix& z,
    int d) {
  NodePredictors np = NodePredictors::from_rows(ds, rows);
  return select_split_variable(np, z, d);
}

}  // namespace mvguide

#endif  // MVGUIDE_SELECTOR_HPP_
