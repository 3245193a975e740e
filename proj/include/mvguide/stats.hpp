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
#ifndef MVGUIDE_STATS_HPP_
#define MVGUIDE_STATS_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mvguide {

/// r x c count table. Row groups come from predictor values, columns from
/// residual sign patterns; labels are optional and only used for display.
struct ContingencyTable {
  std::size_t n_rows = 0;
  std::size_t n_cols = 0;
  std::vector<std::int64_t> counts;  // row-major
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;

  ContingencyTable() = default;
  ContingencyTable(std::size_t r, std::size_t c)
      : n_rows(r), n_cols(c), counts(r * c, 0) {}

  std::int64_t& at(std::size_t r, std::size_t c) {
    return counts[r * n_cols + c];
  }
  std::int64_t at(std::size_t r, std::size_t c) const {
    return counts[r * n_cols + c];
  }
};

struct ChisqResult {
  double stat = 0.0;
  int df = 0;
};

/// Pearson statistic of the table after dropping all-zero rows and columns.
/// Returns nullopt when fewer than two nonzero rows or columns remain; the
/// caller treats that as "no information" (p-value 1).
inline std::optional<ChisqResult> chisq_statistic(const ContingencyTable& t) {
  std::vector<double> row_sum(t.n_rows, 0.0), col_sum(t.n_cols, 0.0);
  double total = 0.0;
  for (std::size_t r = 0; r < t.n_rows; ++r) {
    for (std::size_t c = 0; c < t.n_cols; ++c) {
      auto v = t.at(r, c);
      if (v < 0) throw std::invalid_argument("negative count in table");
      row_sum[r] += static_cast<double>(v);
      col_sum[c] += static_cast<double>(v);
      total += static_cast<double>(v);
    }
  }
  int live_rows = 0, live_cols = 0;
  for (double v : row_sum) live_rows += v > 0;
  for (double v : col_sum) live_cols += v > 0;
  if (live_rows < 2 || live_cols < 2) return std::nullopt;
  double stat = 0.0;
  for (std::size_t r = 0; r < t.n_rows; ++r) {
    if (row_sum[r] <= 0) continue;
    for (std::size_t c = 0; c < t.n_cols; ++c) {
      if (col_sum[c] <= 0) continue;
      double expected = row_sum[r] * col_sum[c] / total;
      double diff = static_cast<double>(t.at(r, c)) - expected;
      stat += diff * diff / expected;
    }
  }
  return ChisqResult{stat, (live_rows - 1) * (live_cols - 1)};
}

namespace detail {

// Regularized incomplete gamma functions, series + continued fraction.
inline double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int n = 0; n < 10000; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-17) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double gamma_q_cfrac(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 10000; ++i) {
    double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-17) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

/// Upper regularized incomplete gamma Q(a, x).
inline double gamma_q(double a, double x) {
  if (x < 0.0 || a <= 0.0) throw std::invalid_argument("gamma_q domain");
  if (x == 0.0) return 1.0;
  if (x < a + 1.0) return 1.0 - gamma_p_series(a, x);
  return gamma_q_cfrac(a, x);
}

}  // namespace detail

/// Upper-tail probability of the chi-squared distribution. Saturates at
/// 1e-300 in the extreme tail so log-scale reporting stays finite.
inline double chisq_pvalue(double stat, int df) {
  if (df < 1) throw std::invalid_argument("chisq_pvalue: df must be >= 1");
  if (!std::isfinite(stat)) throw std::invalid_argument("chisq_pvalue: stat");
  if (stat <= 0.0) return 1.0;
  double p = detail::gamma_q(0.5 * df, 0.5 * stat);
  p = std::min(p, 1.0);
  return std::max(p, 1e-300);
}

/// Piecewise-linear mean curve: knots strictly increasing in u.
struct Curve {
  std::vector<double> u;
  std::vector<double> s;

  std::size_t size() const { return u.size(); }
};

/// Linear interpolation between bracketing knots; constant beyond the ends.
inline double curve_eval(const Curve& c, double x) {
  if (c.u.empty()) throw std::invalid_argument("curve_eval: empty curve");
  if (x <= c.u.front()) return c.s.front();
  if (x >= c.u.back()) return c.s.back();
  auto it = std::lower_bound(c.u.begin(), c.u.end(), x);
  std::size_t hi = static_cast<std::size_t>(it - c.u.begin());
  if (c.u[hi] == x) return c.s[hi];
  std::size_t lo = hi - 1;
  double w = (x - c.u[lo]) / (c.u[hi] - c.u[lo]);
  return c.s[lo] + w * (c.s[hi] - c.s[lo]);
}

namespace detail {

inline double tricube(double t) {
  t = std::fabs(t);
  if (t >= 1.0) return 0.0;
  double w = 1.0 - t * t * t;
  return w * w * w;
}

inline double bisquare(double t) {
  t = std::fabs(t);
  if (t >= 1.0) return 0.0;
  double w = 1.0 - t * t;
  return w * w;
}

inline double median(std::vector<double> v) {
  std::size_t n = v.size();
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  double hi = *mid;
  if (n % 2 == 1) return hi;
  double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

struct LowessPoint {
  double u;
  double y;
};

// Weighted local-linear fit evaluated at u0 over points within radius h.
// Points are sorted by u; [lo, hi) is the index window with |u - u0| <= h.
// `w_extra` are per-point robustness weights (may be empty).
inline double lowess_fit_at(const std::vector<LowessPoint>& pts,
                            std::size_t lo, std::size_t hi, double u0,
                            double h, std::span<const double> w_extra) {
  double sw = 0, swu = 0, swuu = 0, swy = 0, swuy = 0;
  for (std::size_t i = lo; i < hi; ++i) {
    double du = pts[i].u - u0;
    double w = h > 0 ? tricube(du / h) : (du == 0.0 ? 1.0 : 0.0);
    if (!w_extra.empty()) w *= w_extra[i];
    if (w <= 0) continue;
    sw += w;
    swu += w * du;
    swuu += w * du * du;
    swy += w * pts[i].y;
    swuy += w * du * pts[i].y;
  }
  if (sw <= 0) {
    // all weights vanished (robustness zeroed the window); fall back to the
    // unweighted window mean
    double m = 0;
    for (std::size_t i = lo; i < hi; ++i) m += pts[i].y;
    return m / static_cast<double>(hi - lo);
  }
  double denom = sw * swuu - swu * swu;
  if (denom <= 1e-12 * sw * (swuu + swu * swu + 1e-300)) {
    return swy / sw;
  }
  double slope = (sw * swuy - swu * swy) / denom;
  double intercept = (swy - slope * swu) / sw;
  return intercept;  // evaluated at du = 0
}

}  // namespace detail

/// Locally weighted linear regression with tricube weights over the
/// ceil(span*n) nearest neighbors in u and `robust_iters` bisquare
/// reweighting passes. Duplicate u values are kept as separate points;
/// output knots sit at the distinct sorted u values.
inline Curve lowess(std::span<const double> u, std::span<const double> y,
                    double span = 2.0 / 3.0, int robust_iters = 3) {
  if (u.size() != y.size()) throw std::invalid_argument("lowess: size mismatch");
  const std::size_t n = u.size();
  if (n < 2) throw std::invalid_argument("lowess: need at least 2 points");
  if (!(span > 0.0 && span <= 1.0)) {
    throw std::invalid_argument("lowess: span must be in (0,1]");
  }
  std::vector<detail::LowessPoint> pts(n);
  for (std::size_t i = 0; i < n; ++i) pts[i] = {u[i], y[i]};
  std::stable_sort(pts.begin(), pts.end(),
                   [](const auto& a, const auto& b) { return a.u < b.u; });
  if (pts.front().u == pts.back().u) {
    throw std::invalid_argument("lowess: all u values identical");
  }
  std::vector<double> knots;
  std::vector<std::size_t> knot_first;  // first point index at each knot
  for (std::size_t i = 0; i < n; ++i) {
    if (knots.empty() || pts[i].u != knots.back()) {
      knots.push_back(pts[i].u);
      knot_first.push_back(i);
    }
  }
  const std::size_t r = std::min<std::size_t>(
      n, std::max<std::size_t>(
             2, static_cast<std::size_t>(
                    std::ceil(span * static_cast<double>(n)))));

  std::vector<double> robust;  // per-point robustness weights
  std::vector<double> fit(knots.size(), 0.0);
  for (int iter = 0; iter <= robust_iters; ++iter) {
    for (std::size_t k = 0; k < knots.size(); ++k) {
      double u0 = knots[k];
      // expand a window of the r nearest points around the knot
      std::size_t lo = knot_first[k], hi = knot_first[k];
      while (hi - lo < r) {
        bool can_left = lo > 0;
        bool can_right = hi < n;
        if (can_left && can_right) {
          if (u0 - pts[lo - 1].u <= pts[hi].u - u0) {
            --lo;
          } else {
            ++hi;
          }
        } else if (can_left) {
          --lo;
        } else {
          ++hi;
        }
      }
      double h = std::max(u0 - pts[lo].u, pts[hi - 1].u - u0);
      // include any further points tied with the window radius
      while (lo > 0 && u0 - pts[lo - 1].u <= h) --lo;
      while (hi < n && pts[hi].u - u0 <= h) ++hi;
      fit[k] = detail::lowess_fit_at(pts, lo, hi, u0, h, robust);
    }
    if (iter == robust_iters) break;
    // bisquare reweighting from the residuals at each point
    std::vector<double> resid(n);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n; ++i) {
      while (knots[k] != pts[i].u) ++k;
      resid[i] = pts[i].y - fit[k];
    }
    std::vector<double> absr(n);
    for (std::size_t i = 0; i < n; ++i) absr[i] = std::fabs(resid[i]);
    double s = detail::median(absr);
    if (s <= 0) break;
    robust.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      robust[i] = detail::bisquare(resid[i] / (6.0 * s));
    }
  }
  Curve out;
  out.u = std::move(knots);
  out.s = std::move(fit);
  return out;
}

/// Non-robust lowess from per-distinct-u aggregates: `count[j]` points at
/// `u[j]` summing to `sum[j]`. Equals lowess() with robust_iters = 0 on the
/// expanded point set. `u` must be strictly increasing with positive counts.
inline Curve lowess_aggregated(std::span<const double> u,
                               std::span<const double> count,
                               std::span<const double> sum,
                               double span = 2.0 / 3.0) {
  const std::size_t m = u.size();
  if (count.size() != m || sum.size() != m) {
    throw std::invalid_argument("lowess_aggregated: size mismatch");
  }
  double n = 0;
  for (double c : count) n += c;
  if (m < 1 || n < 2) {
    throw std::invalid_argument("lowess_aggregated: need at least 2 points");
  }
  if (m == 1) throw std::invalid_argument("lowess_aggregated: single knot");
  const double r = std::min(
      n, std::max(2.0, std::ceil(span * n)));
  Curve out;
  out.u.assign(u.begin(), u.end());
  out.s.resize(m);
  for (std::size_t k = 0; k < m; ++k) {
    double u0 = u[k];
    // find the radius h containing at least r points, growing by distance
    std::size_t lo = k, hi = k + 1;
    double covered = count[k];
    while (covered < r && (lo > 0 || hi < m)) {
      bool can_left = lo > 0;
      bool can_right = hi < m;
      if (can_left &&
          (!can_right || u0 - u[lo - 1] <= u[hi] - u0)) {
        --lo;
        covered += count[lo];
      } else {
        covered += count[hi];
        ++hi;
      }
    }
    double h = std::max(u0 - u[lo], u[hi - 1] - u0);
    while (lo > 0 && u0 - u[lo - 1] <= h) {
      --lo;
    }
    while (hi < m && u[hi] - u0 <= h) {
      ++hi;
    }
    double sw = 0, swu = 0, swuu = 0, swy = 0, swuy = 0;
    for (std::size_t j = lo; j < hi; ++j) {
      double du = u[j] - u0;
      double w = h > 0 ? detail::tricube(du / h) : (du == 0.0 ? 1.0 : 0.0);
      if (w <= 0) continue;
      sw += w * count[j];
      swu += w * count[j] * du;
      swuu += w * count[j] * du * du;
      swy += w * sum[j];
      swuy += w * du * sum[j];
    }
    if (sw <= 0) {
      out.s[k] = sum[k] / count[k];
      continue;
    }
    double denom = sw * swuu - swu * swu;
    if (denom <= 1e-12 * sw * (swuu + swu * swu + 1e-300)) {
      out.s[k] = swy / sw;
    } else {
      double slope = (sw * swuy - swu * swy) / denom;
      out.s[k] = (swy - slope * swu) / sw;
    }
  }
  return out;
}

}  // namespace mvguide

#endif  // MVGUIDE_STATS_HPP_
