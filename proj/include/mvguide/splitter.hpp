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
#ifndef MVGUIDE_SPLITTER_HPP_
#define MVGUIDE_SPLITTER_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <variant>
#include <vector>

#include "mvguide/dataset.hpp"
#include "mvguide/selector.hpp"
#include "mvguide/stats.hpp"

namespace mvguide {

struct NumericSplit {
  int var = -1;
  double threshold = 0.0;
  bool missing_goes_left = false;
  // when set, the rule is "missing left, everything observed right" and the
  // threshold is informational only
  bool all_missing_split = false;
};

struct CategoricalSplit {
  int var = -1;
  std::vector<int> left_categories;  // sorted dictionary indices
  bool missing_in_left = false;
};

struct SplitRule {
  std::variant<NumericSplit, CategoricalSplit> rule;

  int var() const {
    return std::holds_alternative<NumericSplit>(rule)
               ? std::get<NumericSplit>(rule).var
               : std::get<CategoricalSplit>(rule).var;
  }
  bool is_numeric() const { return std::holds_alternative<NumericSplit>(rule); }
};

enum class Side { kLeft, kRight };

/// Routes one value through a rule. `value` is the numeric value or the
/// category index; `missing` routes by the rule's missing policy.
inline Side apply_split(const SplitRule& r, double value, bool missing) {
  if (const auto* num = std::get_if<NumericSplit>(&r.rule)) {
    if (num->all_missing_split) return missing ? Side::kLeft : Side::kRight;
    if (missing) return num->missing_goes_left ? Side::kLeft : Side::kRight;
    return value <= num->threshold ? Side::kLeft : Side::kRight;
  }
  const auto& cat = std::get<CategoricalSplit>(r.rule);
  if (missing) return cat.missing_in_left ? Side::kLeft : Side::kRight;
  int c = static_cast<int>(value);
  bool in_left = std::binary_search(cat.left_categories.begin(),
                                    cat.left_categories.end(), c);
  return in_left ? Side::kLeft : Side::kRight;
}

struct ImpurityReport {
  double parent_sse = 0.0;
  double left_sse = 0.0;
  double right_sse = 0.0;
  double gain = 0.0;
};

struct SplitEval {
  SplitRule rule;
  ImpurityReport report;
};

/// Per-slot (count, sum, sum-of-squares) accumulator. Slots are response
/// dimensions in multiresponse mode and distinct time points in
/// longitudinal mode.
struct SlotAcc {
  std::vector<double> n, s, ss;

  explicit SlotAcc(std::size_t k = 0) : n(k, 0.0), s(k, 0.0), ss(k, 0.0) {}

  void add(std::size_t slot, double y) {
    n[slot] += 1.0;
    s[slot] += y;
    ss[slot] += y * y;
  }
  void sub(std::size_t slot, double y) {
    n[slot] -= 1.0;
    s[slot] -= y;
    ss[slot] -= y * y;
  }
  void add_acc(const SlotAcc& o) {
    for (std::size_t k = 0; k < n.size(); ++k) {
      n[k] += o.n[k];
      s[k] += o.s[k];
      ss[k] += o.ss[k];
    }
  }
  void sub_acc(const SlotAcc& o) {
    for (std::size_t k = 0; k < n.size(); ++k) {
      n[k] -= o.n[k];
      s[k] -= o.s[k];
      ss[k] -= o.ss[k];
    }
  }
  double count() const { return std::accumulate(n.begin(), n.end(), 0.0); }
};

/// Multiresponse sum-of-squares objective: per response dimension, squared
/// deviations about the node mean of the nonmissing values, optionally
/// weighted (normalization fixes the weights at the root).
class MultiResponseSse {
 public:
  MultiResponseSse(const Dataset& ds, std::span<const std::size_t> rows,
                   std::span<const double> weights) {
    auto resp = ds.response_indices();
    n_slots_ = resp.size();
    weights_.assign(weights.begin(), weights.end());
    if (weights_.empty()) weights_.assign(n_slots_, 1.0);
    offsets_.reserve(rows.size() + 1);
    offsets_.push_back(0);
    for (std::size_t r : rows) {
      for (std::size_t k = 0; k < resp.size(); ++k) {
        const Column& col = ds.columns[resp[k]];
        if (!col.missing[r]) entries_.push_back({k, col.values[r]});
      }
      offsets_.push_back(entries_.size());
    }
  }

  std::size_t n_units() const { return offsets_.size() - 1; }
  SlotAcc empty_acc() const { return SlotAcc(n_slots_); }

  void add_unit(SlotAcc& acc, std::size_t i) const {
    for (std::size_t e = offsets_[i]; e < offsets_[i + 1]; ++e) {
      acc.add(entries_[e].slot, entries_[e].y);
    }
  }
  void sub_unit(SlotAcc& acc, std::size_t i) const {
    for (std::size_t e = offsets_[i]; e < offsets_[i + 1]; ++e) {
      acc.sub(entries_[e].slot, entries_[e].y);
    }
  }

  SlotAcc total_acc() const {
    SlotAcc acc = empty_acc();
    for (std::size_t i = 0; i < n_units(); ++i) add_unit(acc, i);
    return acc;
  }

  double sse(const SlotAcc& acc) const {
    double total = 0.0;
    for (std::size_t k = 0; k < n_slots_; ++k) {
      if (acc.n[k] > 0) {
        total += weights_[k] * (acc.ss[k] - acc.s[k] * acc.s[k] / acc.n[k]);
      }
    }
    return total;
  }

  /// Weighted per-unit grand mean; used for ordering categories.
  double mean_score(const SlotAcc& acc) const {
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < n_slots_; ++k) {
      num += weights_[k] * acc.s[k];
      den += weights_[k] * acc.n[k];
    }
    return den > 0 ? num / den : 0.0;
  }

 private:
  struct Entry {
    std::size_t slot;
    double y;
  };
  std::size_t n_slots_ = 0;
  std::vector<double> weights_;
  std::vector<Entry> entries_;
  std::vector<std::size_t> offsets_;
};

/// Longitudinal objective: squared deviations about a lowess mean curve
/// refit from the accumulated per-time aggregates (non-robust fit; final
/// node curves apply the configured robustness separately).
class LongitudinalSse {
 public:
  LongitudinalSse(const std::vector<SubjectSeries>& series,
                  std::span<const std::size_t> subjects, double span)
      : span_(span) {
    std::vector<double> us;
    for (std::size_t s : subjects) {
      for (const Obs& o : series[s].obs) us.push_back(o.u);
    }
    std::sort(us.begin(), us.end());
    us.erase(std::unique(us.begin(), us.end()), us.end());
    u_ = std::move(us);
    offsets_.push_back(0);
    for (std::size_t s : subjects) {
      for (const Obs& o : series[s].obs) {
        auto it = std::lower_bound(u_.begin(), u_.end(), o.u);
        entries_.push_back({static_cast<std::size_t>(it - u_.begin()), o.y});
      }
      offsets_.push_back(entries_.size());
    }
  }

  std::size_t n_units() const { return offsets_.size() - 1; }
  SlotAcc empty_acc() const { return SlotAcc(u_.size()); }

  void add_unit(SlotAcc& acc, std::size_t i) const {
    for (std::size_t e = offsets_[i]; e < offsets_[i + 1]; ++e) {
      acc.add(entries_[e].slot, entries_[e].y);
    }
  }
  void sub_unit(SlotAcc& acc, std::size_t i) const {
    for (std::size_t e = offsets_[i]; e < offsets_[i + 1]; ++e) {
      acc.sub(entries_[e].slot, entries_[e].y);
    }
  }

  SlotAcc total_acc() const {
    SlotAcc acc = empty_acc();
    for (std::size_t i = 0; i < n_units(); ++i) add_unit(acc, i);
    return acc;
  }

  double sse(const SlotAcc& acc) const {
    // gather occupied time slots
    std::vector<double> u, n, s;
    double total_n = 0.0;
    for (std::size_t j = 0; j < u_.size(); ++j) {
      if (acc.n[j] > 0.5) {
        u.push_back(u_[j]);
        n.push_back(acc.n[j]);
        s.push_back(acc.s[j]);
        total_n += acc.n[j];
      }
    }
    if (total_n <= 0) return 0.0;
    if (u.size() < 2 || total_n < 2) {
      // single time point: residuals about the plain mean
      double mean = 0.0, ssum = 0.0, nsum = 0.0;
      for (std::size_t j = 0; j < u.size(); ++j) {
        ssum += s[j];
        nsum += n[j];
      }
      mean = ssum / nsum;
      double out = 0.0;
      for (std::size_t j = 0; j < u_.size(); ++j) {
        if (acc.n[j] > 0.5) {
          out += acc.ss[j] - 2.0 * mean * acc.s[j] + acc.n[j] * mean * mean;
        }
      }
      return out;
    }
    Curve fit = lowess_aggregated(u, n, s, span_);
    double out = 0.0;
    std::size_t fj = 0;
    for (std::size_t j = 0; j < u_.size(); ++j) {
      if (acc.n[j] <= 0.5) continue;
      double sv = fit.s[fj++];
      out += acc.ss[j] - 2.0 * sv * acc.s[j] + acc.n[j] * sv * sv;
    }
    return out;
  }

  double mean_score(const SlotAcc& acc) const {
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < u_.size(); ++j) {
      num += acc.s[j];
      den += acc.n[j];
    }
    return den > 0 ? num / den : 0.0;
  }

 private:
  struct Entry {
    std::size_t slot;
    double y;
  };
  double span_;
  std::vector<double> u_;
  std::vector<Entry> entries_;
  std::vector<std::size_t> offsets_;
};

struct SplitOptions {
  // exhaustive categorical subset search up to this many observed
  // categories; larger sets use the ordered-cut heuristic
  int categorical_exhaustive_limit = 11;
  // heuristic ordering: principal coordinate of Z-pattern proportions when a
  // sign matrix is supplied, mean response otherwise
  bool order_by_mean = false;
  // smallest admissible child size; tree growth raises it so spurious
  // selections cannot shave single rows off a node
  std::size_t min_child = 1;
};

namespace detail {

template <class Eval>
ImpurityReport make_report(const Eval& eval, const SlotAcc& left,
                           const SlotAcc& right, double parent_sse) {
  ImpurityReport rep;
  rep.parent_sse = parent_sse;
  rep.left_sse = eval.sse(left);
  rep.right_sse = eval.sse(right);
  rep.gain = rep.parent_sse - rep.left_sse - rep.right_sse;
  return rep;
}

/// First principal component scores of the per-group Z-pattern proportion
/// vectors (power iteration; deterministic).
inline std::vector<double> pattern_pco_scores(
    const std::vector<std::vector<double>>& props) {
  const std::size_t m = props.size();
  const std::size_t c = props.empty() ? 0 : props.front().size();
  std::vector<double> mean(c, 0.0);
  for (const auto& row : props) {
    for (std::size_t j = 0; j < c; ++j) mean[j] += row[j];
  }
  for (double& v : mean) v /= static_cast<double>(m);
  std::vector<std::vector<double>> centered(m, std::vector<double>(c));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < c; ++j) centered[i][j] = props[i][j] - mean[j];
  }
  std::vector<double> v(c, 1.0 / std::sqrt(static_cast<double>(c)));
  std::vector<double> scores(m, 0.0), next(c, 0.0);
  for (int iter = 0; iter < 60; ++iter) {
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += centered[i][j] * v[j];
      scores[i] = dot;
    }
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < c; ++j) next[j] += centered[i][j] * scores[i];
    }
    double norm = 0.0;
    for (double x : next) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-12) break;  // no variation; scores stay 0 or last value
    for (std::size_t j = 0; j < c; ++j) v[j] = next[j] / norm;
  }
  for (std::size_t j = 0; j < c; ++j) {
    if (std::fabs(v[j]) > 1e-12) {
      if (v[j] < 0) {
        for (std::size_t i = 0; i < m; ++i) scores[i] = -scores[i];
      }
      break;
    }
  }
  return scores;
}

}  // namespace detail

/// Best threshold split on a numeric variable: every midpoint of
/// consecutive distinct order statistics is scored with missing values
/// routed by mean imputation, and the missing-versus-observed split is
/// scored as an extra candidate when missing values exist.
template <class Eval>
std::optional<SplitEval> best_numeric_split(const NodePredictors::Var& xv,
                                            int var_index, const Eval& eval,
                                            const SplitOptions& opt = {}) {
  const std::size_t n = xv.value.size();
  const std::size_t min_child = std::max<std::size_t>(1, opt.min_child);
  struct Item {
    double x;
    std::size_t unit;
  };
  std::vector<Item> nm;
  std::vector<std::size_t> miss;
  for (std::size_t i = 0; i < n; ++i) {
    if (xv.missing[i]) {
      miss.push_back(i);
    } else {
      nm.push_back({xv.value[i], i});
    }
  }
  std::sort(nm.begin(), nm.end(), [](const Item& a, const Item& b) {
    return a.x < b.x || (a.x == b.x && a.unit < b.unit);
  });
  std::size_t distinct = 0;
  for (std::size_t i = 0; i < nm.size(); ++i) {
    if (i == 0 || nm[i].x != nm[i - 1].x) ++distinct;
  }
  if (distinct < 2 && miss.empty()) return std::nullopt;
  if (nm.empty()) return std::nullopt;

  const SlotAcc total = eval.total_acc();
  const double parent_sse = eval.sse(total);
  double xbar = 0.0;
  for (const Item& it : nm) xbar += it.x;
  xbar /= static_cast<double>(nm.size());

  std::optional<SplitEval> best;
  double best_gain = -std::numeric_limits<double>::infinity();

  if (distinct >= 2) {
    SlotAcc left = eval.empty_acc();
    SlotAcc right = total;
    std::size_t left_units = 0;
    bool missing_in_left = false;
    std::size_t pos = 0;
    while (pos < nm.size()) {
      std::size_t next = pos;
      while (next < nm.size() && nm[next].x == nm[pos].x) ++next;
      for (std::size_t t = pos; t < next; ++t) {
        eval.add_unit(left, nm[t].unit);
        eval.sub_unit(right, nm[t].unit);
        ++left_units;
      }
      if (next == nm.size()) break;
      const double lo = nm[pos].x;
      const double hi = nm[next].x;
      const double c = 0.5 * (lo + hi);
      if (!(c >= lo) || c >= hi) {
        // midpoint collapsed onto the upper value; routing by x <= c would
        // disagree with the scan, so skip the candidate
        pos = next;
        continue;
      }
      if (!missing_in_left && !miss.empty() && xbar <= c) {
        for (std::size_t u : miss) {
          eval.add_unit(left, u);
          eval.sub_unit(right, u);
        }
        missing_in_left = true;
      }
      const std::size_t n_left = left_units + (missing_in_left ? miss.size() : 0);
      const std::size_t n_right = n - n_left;
      if (n_left >= min_child && n_right >= min_child) {
        double gain = parent_sse - eval.sse(left) - eval.sse(right);
        if (gain > best_gain) {
          best_gain = gain;
          SplitEval se;
          se.rule.rule =
              NumericSplit{var_index, c, missing_in_left, false};
          se.report = detail::make_report(eval, left, right, parent_sse);
          best = std::move(se);
        }
      }
      pos = next;
    }
  }

  if (miss.size() >= min_child && nm.size() >= min_child) {
    SlotAcc left = eval.empty_acc();
    for (std::size_t u : miss) eval.add_unit(left, u);
    SlotAcc right = total;
    right.sub_acc(left);
    double gain = parent_sse - eval.sse(left) - eval.sse(right);
    if (gain > best_gain) {
      best_gain = gain;
      SplitEval se;
      se.rule.rule = NumericSplit{var_index, xbar, true, true};
      se.report = detail::make_report(eval, left, right, parent_sse);
      best = std::move(se);
    }
  }
  return best;
}

/// Threshold split pinned at the node mean of the nonmissing values,
/// snapped to the midpoint of the straddling order statistics. Used when an
/// interaction pair is selected: the interaction test grouped each variable
/// at its mean, so the split mirrors those halves instead of chasing the
/// (zero-signal) marginal gain. Falls back to nullopt when the mean cannot
/// separate two nonempty sides.
template <class Eval>
std::optional<SplitEval> mean_numeric_split(const NodePredictors::Var& xv,
                                            int var_index, const Eval& eval,
                                            const SplitOptions& opt = {}) {
  const std::size_t n = xv.value.size();
  const std::size_t min_child = std::max<std::size_t>(1, opt.min_child);
  double sum = 0.0;
  std::size_t n_obs = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!xv.missing[i]) {
      sum += xv.value[i];
      ++n_obs;
    }
  }
  if (n_obs < 2) return std::nullopt;
  const double mean = sum / static_cast<double>(n_obs);
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    if (xv.missing[i]) continue;
    if (xv.value[i] <= mean) {
      lo = std::max(lo, xv.value[i]);
    } else {
      hi = std::min(hi, xv.value[i]);
    }
  }
  if (!std::isfinite(lo) || !std::isfinite(hi)) return std::nullopt;
  const double c = 0.5 * (lo + hi);
  if (!(c >= lo) || c >= hi) return std::nullopt;
  SlotAcc left = eval.empty_acc();
  SlotAcc right = eval.total_acc();
  const double parent_sse = eval.sse(right);
  const bool missing_left = mean <= c;
  std::size_t n_left = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bool goes_left = xv.missing[i] ? missing_left : xv.value[i] <= c;
    if (goes_left) {
      eval.add_unit(left, i);
      eval.sub_unit(right, i);
      ++n_left;
    }
  }
  if (n_left < min_child || n - n_left < min_child) return std::nullopt;
  SplitEval se;
  se.rule.rule = NumericSplit{var_index, c, missing_left, false};
  se.report = detail::make_report(eval, left, right, parent_sse);
  return se;
}

namespace detail {

/// Candidate thresholds for one member of an interaction pair, scored by
/// the total SSE of the four cells formed with the other member halved at
/// its node mean (the same frame the interaction test used). Returns the
/// best (four-cell score, rule) pair.
template <class Eval>
std::optional<std::pair<double, SplitEval>> refine_pair_member(
    const NodePredictors::Var& x, int var_index,
    const NodePredictors::Var& other, const Eval& eval,
    std::size_t min_child) {
  const std::size_t n = x.value.size();
  double sum_x = 0.0, sum_o = 0.0;
  std::size_t n_x = 0, n_o = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!x.missing[i]) {
      sum_x += x.value[i];
      ++n_x;
    }
    if (!other.missing[i]) {
      sum_o += other.value[i];
      ++n_o;
    }
  }
  if (n_x < 2 || n_o < 1) return std::nullopt;
  const double mean_x = sum_x / static_cast<double>(n_x);
  const double mean_o = sum_o / static_cast<double>(n_o);
  std::vector<std::uint8_t> stratum(n);
  for (std::size_t i = 0; i < n; ++i) {
    double v = other.missing[i] ? mean_o : other.value[i];
    stratum[i] = v <= mean_o ? 0 : 1;
  }

  struct Item {
    double x;
    std::size_t unit;
  };
  std::vector<Item> nm;
  std::vector<std::size_t> miss;
  for (std::size_t i = 0; i < n; ++i) {
    if (x.missing[i]) {
      miss.push_back(i);
    } else {
      nm.push_back({x.value[i], i});
    }
  }
  std::sort(nm.begin(), nm.end(), [](const Item& a, const Item& b) {
    return a.x < b.x || (a.x == b.x && a.unit < b.unit);
  });
  bool has_two = false;
  for (std::size_t i = 1; i < nm.size(); ++i) {
    has_two = has_two || nm[i].x != nm[0].x;
  }
  if (!has_two) return std::nullopt;

  SlotAcc cell[2][2] = {{eval.empty_acc(), eval.empty_acc()},
                        {eval.empty_acc(), eval.empty_acc()}};
  for (std::size_t i = 0; i < n; ++i) {
    eval.add_unit(cell[1][stratum[i]], i);
  }

  double best_score = std::numeric_limits<double>::infinity();
  double best_c = 0.0;
  bool best_missing_left = false;
  bool found = false;
  std::size_t left_units = 0;
  bool missing_in_left = false;
  std::size_t pos = 0;
  auto move_left = [&](std::size_t unit) {
    eval.add_unit(cell[0][stratum[unit]], unit);
    eval.sub_unit(cell[1][stratum[unit]], unit);
  };
  while (pos < nm.size()) {
    std::size_t next = pos;
    while (next < nm.size() && nm[next].x == nm[pos].x) ++next;
    for (std::size_t t = pos; t < next; ++t) {
      move_left(nm[t].unit);
      ++left_units;
    }
    if (next == nm.size()) break;
    const double lo = nm[pos].x;
    const double hi = nm[next].x;
    const double c = 0.5 * (lo + hi);
    if (!(c >= lo) || c >= hi) {
      pos = next;
      continue;
    }
    if (!missing_in_left && !miss.empty() && mean_x <= c) {
      for (std::size_t u : miss) move_left(u);
      missing_in_left = true;
    }
    const std::size_t n_left =
        left_units + (missing_in_left ? miss.size() : 0);
    const std::size_t n_right = n - n_left;
    if (n_left >= min_child && n_right >= min_child) {
      double score = eval.sse(cell[0][0]) + eval.sse(cell[0][1]) +
                     eval.sse(cell[1][0]) + eval.sse(cell[1][1]);
      if (!found || score < best_score) {
        found = true;
        best_score = score;
        best_c = c;
        best_missing_left = missing_in_left;
      }
    }
    pos = next;
  }
  if (!found) return std::nullopt;

  SlotAcc left = eval.empty_acc();
  SlotAcc right = eval.empty_acc();
  const SlotAcc total = eval.total_acc();
  for (std::size_t i = 0; i < n; ++i) {
    bool goes_left = x.missing[i] ? best_missing_left : x.value[i] <= best_c;
    if (goes_left) eval.add_unit(left, i);
  }
  right = total;
  right.sub_acc(left);
  SplitEval se;
  se.rule.rule = NumericSplit{var_index, best_c, best_missing_left, false};
  se.report = make_report(eval, left, right, eval.sse(total));
  return std::make_pair(best_score, se);
}

}  // namespace detail

/// Split search for an interaction-selected pair of numeric variables:
/// each member's thresholds are scored against the other member's
/// mean-halving and the member with the lower four-cell SSE wins. Returns
/// nullopt when either member is categorical (callers fall back to the
/// single-variable searches).
template <class Eval>
std::optional<SplitEval> interaction_pair_split(const NodePredictors::Var& a,
                                                int a_index,
                                                const NodePredictors::Var& b,
                                                int b_index, const Eval& eval,
                                                const SplitOptions& opt = {}) {
  if (a.categorical || b.categorical) return std::nullopt;
  const std::size_t min_child = std::max<std::size_t>(1, opt.min_child);
  auto ra = detail::refine_pair_member(a, a_index, b, eval, min_child);
  auto rb = detail::refine_pair_member(b, b_index, a, eval, min_child);
  if (!ra && !rb) return std::nullopt;
  if (!ra) return rb->second;
  if (!rb) return ra->second;
  return rb->first < ra->first ? rb->second : ra->second;
}

/// Best subset split on a categorical variable. Exhaustive over all
/// subsets when the node observes few categories, otherwise categories are
/// ordered (by the principal coordinate of their Z-pattern proportions, or
/// by mean response) and the cut points of that ordering are searched.
/// Missing values act as an extra category via the missing_in_left flag.
template <class Eval>
std::optional<SplitEval> best_categorical_split(const NodePredictors::Var& xv,
                                                int var_index,
                                                const Eval& eval,
                                                const SignMatrix* z,
                                                const SplitOptions& opt = {}) {
  const std::size_t n = xv.value.size();
  std::vector<int> observed;
  std::vector<std::vector<std::size_t>> units_by_cat;
  std::vector<std::size_t> miss;
  {
    std::vector<int> cat_to_slot(static_cast<std::size_t>(xv.n_categories), -1);
    for (std::size_t i = 0; i < n; ++i) {
      if (xv.missing[i]) {
        miss.push_back(i);
        continue;
      }
      int c = static_cast<int>(xv.value[i]);
      if (cat_to_slot[static_cast<std::size_t>(c)] < 0) {
        cat_to_slot[static_cast<std::size_t>(c)] =
            static_cast<int>(observed.size());
        observed.push_back(c);
        units_by_cat.emplace_back();
      }
      units_by_cat[static_cast<std::size_t>(
                       cat_to_slot[static_cast<std::size_t>(c)])]
          .push_back(i);
    }
  }
  const std::size_t k = observed.size();
  if (k + (miss.empty() ? 0 : 1) < 2) return std::nullopt;
  if (k < 1) return std::nullopt;

  const SlotAcc total = eval.total_acc();
  const double parent_sse = eval.sse(total);
  std::vector<SlotAcc> cat_acc(k, eval.empty_acc());
  std::vector<std::size_t> cat_n(k, 0);
  for (std::size_t ci = 0; ci < k; ++ci) {
    for (std::size_t u : units_by_cat[ci]) eval.add_unit(cat_acc[ci], u);
    cat_n[ci] = units_by_cat[ci].size();
  }
  SlotAcc miss_acc = eval.empty_acc();
  for (std::size_t u : miss) eval.add_unit(miss_acc, u);

  const std::size_t min_child = std::max<std::size_t>(1, opt.min_child);
  std::optional<SplitEval> best;
  double best_gain = -std::numeric_limits<double>::infinity();
  auto consider = [&](const std::vector<std::size_t>& left_slots,
                      bool missing_in_left) {
    if (left_slots.empty() || left_slots.size() == k) return;
    SlotAcc left = eval.empty_acc();
    std::size_t n_left = 0;
    for (std::size_t ci : left_slots) {
      left.add_acc(cat_acc[ci]);
      n_left += cat_n[ci];
    }
    if (missing_in_left) {
      left.add_acc(miss_acc);
      n_left += miss.size();
    }
    if (n_left < min_child || n - n_left < min_child) return;
    SlotAcc right = total;
    right.sub_acc(left);
    double gain = parent_sse - eval.sse(left) - eval.sse(right);
    if (gain > best_gain) {
      best_gain = gain;
      std::vector<int> cats;
      cats.reserve(left_slots.size());
      for (std::size_t ci : left_slots) cats.push_back(observed[ci]);
      std::sort(cats.begin(), cats.end());
      SplitEval se;
      se.rule.rule = CategoricalSplit{var_index, std::move(cats),
                                      !miss.empty() && missing_in_left};
      se.report = detail::make_report(eval, left, right, parent_sse);
      best = std::move(se);
    }
  };

  if (static_cast<int>(k) <= opt.categorical_exhaustive_limit) {
    // canonical enumeration: the first observed category stays left
    const std::uint64_t lim = 1ull << k;
    for (std::uint64_t mask = 1; mask < lim; mask += 2) {
      std::vector<std::size_t> left_slots;
      for (std::size_t ci = 0; ci < k; ++ci) {
        if (mask & (1ull << ci)) left_slots.push_back(ci);
      }
      consider(left_slots, false);
      if (!miss.empty()) consider(left_slots, true);
    }
  } else {
    // order categories (missing as an extra pseudo-group), cut the ordering
    std::vector<double> score(k + (miss.empty() ? 0 : 1), 0.0);
    const bool use_pco = z != nullptr && !opt.order_by_mean;
    if (use_pco) {
      std::map<std::uint32_t, std::size_t> pat_col;
      for (std::size_t i = 0; i < z->n; ++i) pat_col.emplace(z->pattern(i), 0);
      std::size_t c = 0;
      for (auto& [p, idx] : pat_col) idx = c++;
      std::vector<std::vector<double>> props(
          score.size(), std::vector<double>(pat_col.size(), 0.0));
      for (std::size_t ci = 0; ci < k; ++ci) {
        for (std::size_t u : units_by_cat[ci]) {
          props[ci][pat_col[z->pattern(u)]] += 1.0;
        }
        for (double& p : props[ci]) p /= static_cast<double>(cat_n[ci]);
      }
      if (!miss.empty()) {
        for (std::size_t u : miss) props[k][pat_col[z->pattern(u)]] += 1.0;
        for (double& p : props[k]) p /= static_cast<double>(miss.size());
      }
      score = detail::pattern_pco_scores(props);
    } else {
      for (std::size_t ci = 0; ci < k; ++ci) {
        score[ci] = eval.mean_score(cat_acc[ci]);
      }
      if (!miss.empty()) score[k] = eval.mean_score(miss_acc);
    }
    std::vector<std::size_t> order(score.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a,
                                                     std::size_t b) {
      return score[a] < score[b];
    });
    for (std::size_t cut = 1; cut < order.size(); ++cut) {
      std::vector<std::size_t> left_slots;
      bool missing_in_left = false;
      for (std::size_t t = 0; t < cut; ++t) {
        if (order[t] == k && !miss.empty()) {
          missing_in_left = true;
        } else {
          left_slots.push_back(order[t]);
        }
      }
      consider(left_slots, missing_in_left);
    }
  }
  return best;
}

/// Weights used when node impurities are normalized: 1 over the root-node
/// variance of each response (constant responses weigh 0).
inline std::vector<double> response_weights(const Dataset& ds, bool normalize) {
  auto resp = ds.response_indices();
  std::vector<double> w(resp.size(), 1.0);
  if (!normalize) return w;
  for (std::size_t k = 0; k < resp.size(); ++k) {
    const Column& col = ds.columns[resp[k]];
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t r = 0; r < ds.n_rows; ++r) {
      if (!col.missing[r]) {
        sum += col.values[r];
        ++n;
      }
    }
    if (n < 2) {
      w[k] = 0.0;
      continue;
    }
    double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t r = 0; r < ds.n_rows; ++r) {
      if (!col.missing[r]) {
        double dx = col.values[r] - mean;
        ss += dx * dx;
      }
    }
    double var = ss / static_cast<double>(n - 1);
    w[k] = var > 0 ? 1.0 / var : 0.0;
  }
  return w;
}

/// Multiresponse node impurity: sum over response dimensions of squared
/// deviations about the node mean of the nonmissing values.
inline double node_impurity(const Dataset& ds,
                            std::span<const std::size_t> rows,
                            bool normalize = false) {
  if (rows.empty()) throw std::invalid_argument("node_impurity: no rows");
  auto w = response_weights(ds, normalize);
  MultiResponseSse eval(ds, rows, w);
  return eval.sse(eval.total_acc());
}

/// Longitudinal node impurity: squared deviations of every observation
/// about the node's lowess curve.
inline double node_impurity_long(const std::vector<SubjectSeries>& series,
                                 std::span<const std::size_t> subjects,
                                 const Curve& curve) {
  double out = 0.0;
  for (std::size_t s : subjects) {
    for (const Obs& o : series[s].obs) {
      double d = o.y - curve_eval(curve, o.u);
      out += d * d;
    }
  }
  return out;
}

/// Dataset-level convenience wrappers (multiresponse).
inline std::optional<SplitEval> best_numeric_split(
    const Dataset& ds, std::span<const std::size_t> rows, std::size_t var,
    bool normalize = false) {
  NodePredictors np = NodePredictors::from_rows(ds, rows);
  MultiResponseSse eval(ds, rows, response_weights(ds, normalize));
  return best_numeric_split(np.vars[var], static_cast<int>(var), eval);
}

inline std::optional<SplitEval> best_categorical_split(
    const Dataset& ds, std::span<const std::size_t> rows, std::size_t var,
    const SignMatrix& z, bool normalize = false,
    const SplitOptions& opt = {}) {
  NodePredictors np = NodePredictors::from_rows(ds, rows);
  MultiResponseSse eval(ds, rows, response_weights(ds, normalize));
  return best_categorical_split(np.vars[var], static_cast<int>(var), eval, &z,
                                opt);
}

}  // namespace mvguide

#endif  // MVGUIDE_SPLITTER_HPP_
