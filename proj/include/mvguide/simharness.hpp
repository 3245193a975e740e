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
#ifndef MVGUIDE_SIMHARNESS_HPP_
#define MVGUIDE_SIMHARNESS_HPP_

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "mvguide/baseline.hpp"
#include "mvguide/dataset.hpp"
#include "mvguide/rng.hpp"
#include "mvguide/selector.hpp"
#include "mvguide/splitter.hpp"
#include "mvguide/tree.hpp"

namespace mvguide::sim {

enum class ScenarioKind {
  kIndepUniform1,
  kIndepUniform2,
  kIndepUniform3,
  kCorrNormal1,
  kCorrNormal2,
  kCorrNormal3,
  kLongLinear,
  kLongStep,
};

inline const char* to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::kIndepUniform1: return "indep_uniform_1";
    case ScenarioKind::kIndepUniform2: return "indep_uniform_2";
    case ScenarioKind::kIndepUniform3: return "indep_uniform_3";
    case ScenarioKind::kCorrNormal1: return "corr_normal_1";
    case ScenarioKind::kCorrNormal2: return "corr_normal_2";
    case ScenarioKind::kCorrNormal3: return "corr_normal_3";
    case ScenarioKind::kLongLinear: return "long_linear";
    case ScenarioKind::kLongStep: return "long_step";
  }
  return "?";
}

inline ScenarioKind parse_scenario(std::string_view s) {
  for (ScenarioKind k :
       {ScenarioKind::kIndepUniform1, ScenarioKind::kIndepUniform2,
        ScenarioKind::kIndepUniform3, ScenarioKind::kCorrNormal1,
        ScenarioKind::kCorrNormal2, ScenarioKind::kCorrNormal3,
        ScenarioKind::kLongLinear, ScenarioKind::kLongStep}) {
    if (s == to_string(k)) return k;
  }
  throw std::invalid_argument("unknown scenario: " + std::string(s));
}

inline bool is_longitudinal(ScenarioKind k) {
  return k == ScenarioKind::kLongLinear || k == ScenarioKind::kLongStep;
}

struct ScenarioSpec {
  ScenarioKind kind = ScenarioKind::kIndepUniform1;
  std::size_t n = 100;      // training rows (multiresponse) or subjects
  std::uint64_t seed = 17;
  double noise_sd = -1.0;   // < 0: scenario default (0.5 multi, 1.0 long)
};

/// True conditional mean of a scenario, for MSE scoring.
struct Truth {
  ScenarioKind kind;

  std::array<double, 3> mu(std::span<const double> x) const {
    switch (kind) {
      case ScenarioKind::kIndepUniform1:
      case ScenarioKind::kCorrNormal1:
        return {x[0], x[1], x[2]};
      case ScenarioKind::kIndepUniform2:
      case ScenarioKind::kCorrNormal2: {
        double m = x[0] + x[1];
        return {m, m, m};
      }
      case ScenarioKind::kIndepUniform3:
      case ScenarioKind::kCorrNormal3:
        if (x[0] * x[1] > 0) return {1.0, -1.0, 0.0};
        return {0.0, 0.0, 1.0};
      default:
        throw std::logic_error("mu: longitudinal scenario");
    }
  }

  double mu_long(double x1, double u) const {
    // random effects integrate out; the fixed part is the target
    if (kind == ScenarioKind::kLongLinear) return 1.0 + x1 + u;  // placeholder
    return 2.5 * (x1 <= 0 ? 1.0 : 0.0) + 0.5 * u;
  }

  double mu_long(std::span<const double> x, double u) const {
    if (kind == ScenarioKind::kLongLinear) {
      return 1.0 + x[0] + x[1] + 2.0 * x[0] * x[1] + 0.5 * u;
    }
    if (kind == ScenarioKind::kLongStep) {
      return 2.5 * (x[0] <= 0 ? 1.0 : 0.0) + 0.5 * u;
    }
    throw std::logic_error("mu_long: multiresponse scenario");
  }
};

namespace detail_sim {

/// Cholesky factor of the 6x6 predictor covariance used by the correlated
/// scenarios: unit diagonal, r = 0.5 linking {x1,x3,x4} and {x2,x5,x6}.
inline std::array<std::array<double, 6>, 6> corr_cholesky() {
  const double r = 0.5;
  std::array<std::array<double, 6>, 6> v{};
  for (int i = 0; i < 6; ++i) v[i][i] = 1.0;
  v[0][2] = v[2][0] = r;
  v[0][3] = v[3][0] = r;
  v[2][3] = v[3][2] = r;
  v[1][4] = v[4][1] = r;
  v[1][5] = v[5][1] = r;
  v[4][5] = v[5][4] = r;
  std::array<std::array<double, 6>, 6> l{};
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j <= i; ++j) {
      double sum = v[i][j];
      for (int k = 0; k < j; ++k) sum -= l[i][k] * l[j][k];
      if (i == j) {
        l[i][j] = std::sqrt(sum);
      } else {
        l[i][j] = sum / l[j][j];
      }
    }
  }
  return l;
}

inline Column numeric_column(std::string name, ColumnRole role,
                             std::size_t n) {
  Column c;
  c.name = std::move(name);
  c.role = role;
  c.values.assign(n, 0.0);
  c.missing.assign(n, 0);
  return c;
}

}  // namespace detail_sim

/// Draws one training set from a scenario, using the (seed, stream)
/// substream so trials are order-independent.
inline Dataset gen_scenario(const ScenarioSpec& spec,
                            std::uint64_t stream = 0) {
  Rng rng(spec.seed, stream);
  Dataset ds;
  if (!is_longitudinal(spec.kind)) {
    const double noise = spec.noise_sd < 0 ? 0.5 : spec.noise_sd;
    const bool corr = spec.kind == ScenarioKind::kCorrNormal1 ||
                      spec.kind == ScenarioKind::kCorrNormal2 ||
                      spec.kind == ScenarioKind::kCorrNormal3;
    auto chol = detail_sim::corr_cholesky();
    ds.layout = Layout::kMultiresponse;
    ds.n_rows = spec.n;
    for (int j = 1; j <= 7; ++j) {
      ds.columns.push_back(detail_sim::numeric_column(
          "x" + std::to_string(j), ColumnRole::kNumericPredictor, spec.n));
    }
    for (int k = 1; k <= 3; ++k) {
      ds.columns.push_back(detail_sim::numeric_column(
          "y" + std::to_string(k), ColumnRole::kResponse, spec.n));
    }
    Truth truth{spec.kind};
    std::array<double, 7> x{};
    for (std::size_t i = 0; i < spec.n; ++i) {
      if (corr) {
        std::array<double, 6> z{};
        for (double& v : z) v = rng.next_normal();
        for (int a = 0; a < 6; ++a) {
          double s = 0.0;
          for (int b = 0; b <= a; ++b) s += chol[a][b] * z[b];
          x[static_cast<std::size_t>(a)] = s;
        }
        x[6] = rng.uniform(-0.5, 0.5);
      } else {
        for (int a = 0; a < 7; ++a) {
          x[static_cast<std::size_t>(a)] = rng.uniform(-0.5, 0.5);
        }
      }
      for (int a = 0; a < 7; ++a) {
        ds.columns[static_cast<std::size_t>(a)].values[i] =
            x[static_cast<std::size_t>(a)];
      }
      auto mu = truth.mu(x);
      for (int k = 0; k < 3; ++k) {
        ds.columns[static_cast<std::size_t>(7 + k)].values[i] =
            mu[static_cast<std::size_t>(k)] + noise * rng.next_normal();
      }
    }
    return ds;
  }

  // longitudinal scenarios: 5 time-fixed predictors, 10 time points
  const double noise = spec.noise_sd < 0 ? 1.0 : spec.noise_sd;
  const int d = 10;
  ds.layout = Layout::kLongitudinal;
  ds.n_rows = spec.n * static_cast<std::size_t>(d);
  Column id;
  id.name = "id";
  id.role = ColumnRole::kSubjectId;
  ds.columns.push_back(std::move(id));
  ds.columns.push_back(detail_sim::numeric_column("u", ColumnRole::kTime,
                                                  ds.n_rows));
  ds.columns.push_back(detail_sim::numeric_column("y", ColumnRole::kResponse,
                                                  ds.n_rows));
  for (int j = 1; j <= 5; ++j) {
    ds.columns.push_back(detail_sim::numeric_column(
        "x" + std::to_string(j), ColumnRole::kNumericPredictor, ds.n_rows));
  }
  Column& subj = ds.columns[0];
  subj.values.assign(ds.n_rows, 0.0);
  subj.missing.assign(ds.n_rows, 0);
  Truth truth{spec.kind};
  std::size_t row = 0;
  for (std::size_t i = 0; i < spec.n; ++i) {
    subj.categories.push_back("s" + std::to_string(i + 1));
    std::array<double, 5> x{};
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
    const double b0 = 0.5 * rng.next_normal();
    const double b1 = 0.25 * rng.next_normal();
    for (int u = 1; u <= d; ++u, ++row) {
      subj.values[row] = static_cast<double>(i);
      ds.columns[1].values[row] = u;
      ds.columns[2].values[row] = truth.mu_long(x, u) + b0 + b1 * u +
                                  noise * rng.next_normal();
      for (int j = 0; j < 5; ++j) {
        ds.columns[static_cast<std::size_t>(3 + j)].values[row] =
            x[static_cast<std::size_t>(j)];
      }
    }
  }
  return ds;
}

/// Deterministic synthetic analog of the concrete mixture benchmark:
/// 103 rows, seven numeric predictors with unique-value counts
/// (80, 63, 58, 70, 32, 92, 90) and three jointly driven responses whose
/// dominant effect is the water content.
inline Dataset concrete_clone() {
  constexpr std::uint64_t kSeed = 910103;
  const std::size_t n = 103;
  Rng rng(kSeed, 0);

  struct ColSpec {
    const char* name;
    std::size_t unique;
    double lo, hi;
  };
  const ColSpec specs[7] = {
      {"cement", 80, 140.0, 375.0},  {"slag", 63, 0.0, 190.0},
      {"flyash", 58, 0.0, 260.0},    {"water", 70, 160.0, 240.0},
      {"sp", 32, 4.0, 19.0},         {"coarseaggr", 92, 708.0, 1050.0},
      {"fineaggr", 90, 640.0, 902.0},
  };

  Dataset ds;
  ds.layout = Layout::kMultiresponse;
  ds.n_rows = n;
  for (const auto& cs : specs) {
    // distinct values on a 0.1 grid, each appearing at least once
    auto grid = static_cast<std::size_t>(std::llround((cs.hi - cs.lo) / 0.1));
    std::vector<std::size_t> idx(grid + 1);
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < cs.unique; ++i) {
      std::size_t j = i + static_cast<std::size_t>(
                              rng.next_below(idx.size() - i));
      std::swap(idx[i], idx[j]);
    }
    std::vector<double> distinct(cs.unique);
    for (std::size_t i = 0; i < cs.unique; ++i) {
      // tenths grid, kept exactly representable in decimal form
      distinct[i] =
          (cs.lo * 10.0 + static_cast<double>(idx[i])) / 10.0;
    }
    std::vector<double> values;
    values.reserve(n);
    for (double v : distinct) values.push_back(v);
    while (values.size() < n) {
      values.push_back(distinct[rng.next_below(cs.unique)]);
    }
    rng.shuffle(values);
    Column c = detail_sim::numeric_column(cs.name,
                                          ColumnRole::kNumericPredictor, n);
    c.values = std::move(values);
    ds.columns.push_back(std::move(c));
  }

  Column slump = detail_sim::numeric_column("slump", ColumnRole::kResponse, n);
  Column flow = detail_sim::numeric_column("flow", ColumnRole::kResponse, n);
  Column strength =
      detail_sim::numeric_column("strength", ColumnRole::kResponse, n);
  auto round1 = [](double v) { return std::round(v * 10.0) / 10.0; };
  for (std::size_t i = 0; i < n; ++i) {
    const double water = ds.columns[3].values[i];
    const double cement = ds.columns[0].values[i];
    const double slag = ds.columns[1].values[i];
    const double flyash = ds.columns[2].values[i];
    const double coarse = ds.columns[5].values[i];
    const double s = 1.0 / (1.0 + std::exp(-(water - 182.0) / 4.0));
    const double shared = rng.next_normal();
    slump.values[i] = round1(10.0 + 12.0 * s - 0.01 * slag + 3.6 * shared +
                             1.8 * rng.next_normal());
    flow.values[i] = round1(26.0 + 24.0 * s - 0.02 * (coarse - 880.0) +
                            7.5 * shared + 3.0 * rng.next_normal());
    strength.values[i] =
        round1(40.0 - 8.0 * s + 0.05 * (cement - 270.0) +
               0.045 * (flyash - 120.0) + 4.2 * rng.next_normal());
  }
  ds.columns.push_back(std::move(slump));
  ds.columns.push_back(std::move(flow));
  ds.columns.push_back(std::move(strength));
  return ds;
}

// -------- selection-bias experiment --------

enum class BiasMethod { kGuide, kBaseline };

inline const char* to_string(BiasMethod m) {
  return m == BiasMethod::kGuide ? "guide" : "baseline";
}

struct BiasOptions {
  BiasMethod method = BiasMethod::kGuide;
  int trials = 2000;
  std::uint64_t seed = 17;
  bool augment_c2_c20 = false;
  std::string missing_var;        // empty: no injected missingness
  double missing_fraction = 0.0;
  int threads = 1;
};

struct BiasReport {
  std::string method;
  int trials = 0;
  double null_prob = 0.0;
  std::vector<std::string> vars;
  std::vector<int> counts;

  double frequency(std::size_t v) const {
    return static_cast<double>(counts[v]) / trials;
  }
  /// Binomial standard error under the unbiased-selection null.
  double null_se() const {
    return std::sqrt(null_prob * (1.0 - null_prob) / trials);
  }

  std::string to_text() const {
    std::string out = "selection frequencies (" + method + ", " +
                      std::to_string(trials) + " trials, null " +
                      mvguide::detail::format_double(null_prob) + ")\n";
    char buf[160];
    for (std::size_t v = 0; v < vars.size(); ++v) {
      std::snprintf(buf, sizeof(buf), "%-12s %6d  %.4f\n", vars[v].c_str(),
                    counts[v], frequency(v));
      out += buf;
    }
    return out;
  }

  std::string to_csv() const {
    std::string out = "variable,count,frequency,se\n";
    char buf[160];
    double se = null_se();
    for (std::size_t v = 0; v < vars.size(); ++v) {
      std::snprintf(buf, sizeof(buf), "%s,%d,%.6f,%.6f\n", vars[v].c_str(),
                    counts[v], frequency(v), se);
      out += buf;
    }
    return out;
  }
};

namespace detail_sim {

template <class Fn>
void parallel_trials(int trials, int threads, Fn fn) {
  if (threads <= 1) {
    for (int t = 0; t < trials; ++t) fn(t);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (int t = next.fetch_add(1); t < trials; t = next.fetch_add(1)) {
        fn(t);
      }
    });
  }
  for (auto& th : pool) th.join();
}

/// The split variable a grown tree would use at the root, following the
/// interaction tie-break (larger split gain).
inline int guide_root_variable(const Dataset& ds) {
  std::vector<std::size_t> rows(ds.n_rows);
  std::iota(rows.begin(), rows.end(), 0);
  NodePredictors np = NodePredictors::from_rows(ds, rows);
  SignMatrix z = sign_vectors_multi(ds, rows, -1);
  int d = static_cast<int>(ds.response_indices().size());
  auto sel = select_split_variable(np, z, d);
  if (!sel) return -1;
  if (sel->kind == Selection::Kind::kMainEffect) return sel->var_i;
  MultiResponseSse eval(ds, rows, response_weights(ds, false));
  if (auto pick = interaction_pair_split(
          np.vars[static_cast<std::size_t>(sel->var_i)], sel->var_i,
          np.vars[static_cast<std::size_t>(sel->var_j)], sel->var_j, eval)) {
    return pick->rule.var();
  }
  auto try_split = [&](int var) -> std::optional<SplitEval> {
    const auto& xv = np.vars[static_cast<std::size_t>(var)];
    if (xv.categorical) {
      return best_categorical_split(xv, var, eval, &z, SplitOptions{});
    }
    if (auto m = mean_numeric_split(xv, var, eval)) return m;
    return best_numeric_split(xv, var, eval);
  };
  auto a = try_split(sel->var_i);
  auto b = try_split(sel->var_j);
  if (!a && !b) return sel->var_i;
  if (!a) return sel->var_j;
  if (!b) return sel->var_i;
  return b->report.gain > a->report.gain ? sel->var_j : sel->var_i;
}

inline int baseline_root_variable(const Dataset& ds) {
  std::vector<std::size_t> rows(ds.n_rows);
  std::iota(rows.begin(), rows.end(), 0);
  auto split = cart_best_split(ds, rows, false);
  return split ? split->rule.var() : -1;
}

}  // namespace detail_sim

/// Bootstrap-permutation selection-bias experiment: per trial, resample the
/// base rows, permute every predictor column independently (so none carries
/// signal), optionally add equiprobable categorical variables with 2 and 20
/// levels and inject missingness, then tally which variable the method
/// splits the root on.
inline BiasReport bias_experiment(const Dataset& base,
                                  const BiasOptions& opt) {
  if (base.layout != Layout::kMultiresponse) {
    throw std::invalid_argument("bias_experiment: multiresponse only");
  }
  if (opt.trials < 1) throw std::invalid_argument("bias_experiment: trials");
  auto pred_cols = base.predictor_indices();
  auto resp_cols = base.response_indices();
  const std::size_t n = base.n_rows;

  std::vector<std::string> var_names;
  for (std::size_t c : pred_cols) var_names.push_back(base.columns[c].name);
  if (opt.augment_c2_c20) {
    var_names.push_back("c2");
    var_names.push_back("c20");
  }
  int missing_var = -1;
  if (!opt.missing_var.empty()) {
    for (std::size_t v = 0; v < var_names.size(); ++v) {
      if (var_names[v] == opt.missing_var) missing_var = static_cast<int>(v);
    }
    if (missing_var < 0) {
      throw std::invalid_argument("bias_experiment: unknown missing_var " +
                                  opt.missing_var);
    }
    if (opt.missing_fraction < 0.0 || opt.missing_fraction >= 1.0) {
      throw std::invalid_argument("bias_experiment: missing_fraction");
    }
  }

  std::vector<int> tallies(opt.trials, -1);
  detail_sim::parallel_trials(opt.trials, opt.threads, [&](int trial) {
    Rng rng(opt.seed, static_cast<std::uint64_t>(trial));
    std::vector<std::size_t> boot(n);
    for (std::size_t i = 0; i < n; ++i) boot[i] = rng.next_below(n);

    Dataset trial_ds;
    trial_ds.layout = Layout::kMultiresponse;
    trial_ds.n_rows = n;
    for (std::size_t c : pred_cols) {
      const Column& src = base.columns[c];
      Column col;
      col.name = src.name;
      col.role = src.role;
      col.categories = src.categories;
      col.values.reserve(n);
      col.missing.reserve(n);
      for (std::size_t i : boot) {
        col.values.push_back(src.values[i]);
        col.missing.push_back(src.missing[i]);
      }
      // an independent permutation severs any tie to the responses
      std::vector<std::size_t> perm(n);
      std::iota(perm.begin(), perm.end(), 0);
      rng.shuffle(perm);
      Column permuted = col;
      for (std::size_t i = 0; i < n; ++i) {
        permuted.values[i] = col.values[perm[i]];
        permuted.missing[i] = col.missing[perm[i]];
      }
      trial_ds.columns.push_back(std::move(permuted));
    }
    if (opt.augment_c2_c20) {
      for (int k : {2, 20}) {
        Column col;
        col.name = k == 2 ? "c2" : "c20";
        col.role = ColumnRole::kCategoricalPredictor;
        for (int c = 0; c < k; ++c) {
          col.categories.push_back(std::to_string(c + 1));
        }
        col.values.reserve(n);
        col.missing.assign(n, 0);
        for (std::size_t i = 0; i < n; ++i) {
          col.values.push_back(static_cast<double>(
              rng.next_below(static_cast<std::uint64_t>(k))));
        }
        trial_ds.columns.push_back(std::move(col));
      }
    }
    if (missing_var >= 0 && opt.missing_fraction > 0.0) {
      Column& col = trial_ds.columns[static_cast<std::size_t>(missing_var)];
      auto n_missing = static_cast<std::size_t>(
          std::llround(opt.missing_fraction * static_cast<double>(n)));
      std::vector<std::size_t> cells(n);
      std::iota(cells.begin(), cells.end(), 0);
      rng.shuffle(cells);
      for (std::size_t i = 0; i < n_missing; ++i) col.missing[cells[i]] = 1;
    }
    for (std::size_t c : resp_cols) {
      const Column& src = base.columns[c];
      Column col;
      col.name = src.name;
      col.role = src.role;
      col.values.reserve(n);
      col.missing.reserve(n);
      for (std::size_t i : boot) {
        col.values.push_back(src.values[i]);
        col.missing.push_back(src.missing[i]);
      }
      trial_ds.columns.push_back(std::move(col));
    }

    tallies[static_cast<std::size_t>(trial)] =
        opt.method == BiasMethod::kGuide
            ? detail_sim::guide_root_variable(trial_ds)
            : detail_sim::baseline_root_variable(trial_ds);
  });

  BiasReport report;
  report.method = to_string(opt.method);
  report.trials = opt.trials;
  report.vars = var_names;
  report.null_prob = 1.0 / static_cast<double>(var_names.size());
  report.counts.assign(var_names.size() + 1, 0);
  for (int t : tallies) {
    std::size_t slot = t < 0 ? var_names.size() : static_cast<std::size_t>(t);
    ++report.counts[slot];
  }
  if (report.counts.back() > 0) {
    report.vars.push_back("(none)");
  } else {
    report.counts.pop_back();
  }
  return report;
}

// -------- prediction-error experiment --------

enum class FitMethod { kUnivariateGuide, kMultivariateGuide, kBaseline };

inline const char* to_string(FitMethod m) {
  switch (m) {
    case FitMethod::kUnivariateGuide: return "univariate_guide";
    case FitMethod::kMultivariateGuide: return "multivariate_guide";
    case FitMethod::kBaseline: return "baseline";
  }
  return "?";
}

inline FitMethod parse_fit_method(std::string_view s) {
  if (s == "univariate_guide" || s == "uni") return FitMethod::kUnivariateGuide;
  if (s == "multivariate_guide" || s == "multi" || s == "guide") {
    return FitMethod::kMultivariateGuide;
  }
  if (s == "baseline") return FitMethod::kBaseline;
  throw std::invalid_argument("unknown method: " + std::string(s));
}

struct MseOptions {
  std::vector<FitMethod> methods = {FitMethod::kUnivariateGuide,
                                    FitMethod::kMultivariateGuide,
                                    FitMethod::kBaseline};
  int trials = 200;
  int folds = 10;
  GrowConfig config{};
  int threads = 1;
};

struct MseArm {
  std::string method;
  double mean_mse = 0.0;
  double se_mse = 0.0;
  double mean_leaves = 0.0;
};

struct MseReport {
  std::string scenario;
  int trials = 0;
  std::vector<MseArm> arms;

  const MseArm& arm(FitMethod m) const {
    for (const auto& a : arms) {
      if (a.method == to_string(m)) return a;
    }
    throw std::out_of_range("method not in report");
  }

  std::string to_text() const {
    std::string out = "mean squared error (" + scenario + ", " +
                      std::to_string(trials) + " trials)\n";
    char buf[200];
    for (const auto& a : arms) {
      std::snprintf(buf, sizeof(buf), "%-20s mse %.4f (se %.4f), %.1f leaves\n",
                    a.method.c_str(), a.mean_mse, a.se_mse, a.mean_leaves);
      out += buf;
    }
    return out;
  }

  std::string to_csv() const {
    std::string out = "method,mean_mse,se,mean_leaves\n";
    char buf[200];
    for (const auto& a : arms) {
      std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f,%.3f\n", a.method.c_str(),
                    a.mean_mse, a.se_mse, a.mean_leaves);
      out += buf;
    }
    return out;
  }
};

namespace detail_sim {

/// One response column lifted out of a multiresponse dataset.
inline Dataset single_response_view(const Dataset& ds, std::size_t resp_col) {
  Dataset out;
  out.layout = Layout::kMultiresponse;
  out.n_rows = ds.n_rows;
  for (std::size_t c = 0; c < ds.columns.size(); ++c) {
    if (ds.columns[c].role == ColumnRole::kResponse && c != resp_col) continue;
    out.columns.push_back(ds.columns[c]);
  }
  return out;
}

struct TrialResult {
  double mse = 0.0;
  double leaves = 0.0;
};

}  // namespace detail_sim

/// Monte-Carlo prediction-error comparison. Multiresponse scenarios score
/// on 100 fresh test points per trial; longitudinal scenarios score on the
/// fixed 6^5 predictor grid at the 10 design time points.
inline MseReport mse_experiment(const ScenarioSpec& spec,
                                const MseOptions& opt) {
  if (opt.trials < 2) throw std::invalid_argument("mse_experiment: trials");
  const bool longo = is_longitudinal(spec.kind);
  for (FitMethod m : opt.methods) {
    if (longo && m != FitMethod::kMultivariateGuide) {
      throw std::invalid_argument(
          "longitudinal scenarios support multivariate_guide only");
    }
  }
  Truth truth{spec.kind};
  const std::size_t n_methods = opt.methods.size();
  std::vector<std::vector<detail_sim::TrialResult>> results(
      n_methods,
      std::vector<detail_sim::TrialResult>(
          static_cast<std::size_t>(opt.trials)));

  detail_sim::parallel_trials(opt.trials, opt.threads, [&](int trial) {
    auto ti = static_cast<std::size_t>(trial);
    ScenarioSpec s = spec;
    Dataset train = gen_scenario(s, 2ull * ti);
    GrowConfig cfg = opt.config;
    cfg.seed = Rng(spec.seed, 2ull * ti + 1).next_u64();

    if (!longo) {
      // fresh test predictors from the scenario law
      Rng trng(spec.seed ^ 0x74657374ULL, ti);
      const bool corr = spec.kind == ScenarioKind::kCorrNormal1 ||
                        spec.kind == ScenarioKind::kCorrNormal2 ||
                        spec.kind == ScenarioKind::kCorrNormal3;
      auto chol = detail_sim::corr_cholesky();
      const int n_test = 100;
      std::vector<std::array<double, 7>> test_x(n_test);
      for (auto& x : test_x) {
        if (corr) {
          std::array<double, 6> z{};
          for (double& v : z) v = trng.next_normal();
          for (int a = 0; a < 6; ++a) {
            double sum = 0.0;
            for (int b = 0; b <= a; ++b) sum += chol[a][b] * z[b];
            x[static_cast<std::size_t>(a)] = sum;
          }
          x[6] = trng.uniform(-0.5, 0.5);
        } else {
          for (double& v : x) v = trng.uniform(-0.5, 0.5);
        }
      }
      const std::vector<std::uint8_t> no_missing(7, 0);
      for (std::size_t m = 0; m < n_methods; ++m) {
        std::vector<std::array<double, 3>> pred(
            static_cast<std::size_t>(n_test));
        double leaves = 0.0;
        if (opt.methods[m] == FitMethod::kUnivariateGuide) {
          auto resp_cols = train.response_indices();
          for (std::size_t k = 0; k < resp_cols.size(); ++k) {
            Dataset sub = detail_sim::single_response_view(train, resp_cols[k]);
            Tree t = cross_validate(sub, cfg, opt.folds);
            leaves += t.n_leaves();
            for (int j = 0; j < n_test; ++j) {
              pred[static_cast<std::size_t>(j)][k] =
                  predict(t, test_x[static_cast<std::size_t>(j)],
                          no_missing)[0];
            }
          }
        } else {
          Tree t = opt.methods[m] == FitMethod::kMultivariateGuide
                       ? cross_validate(train, cfg, opt.folds)
                       : cross_validate_baseline(train, cfg, opt.folds);
          leaves = t.n_leaves();
          for (int j = 0; j < n_test; ++j) {
            auto p = predict(t, test_x[static_cast<std::size_t>(j)],
                             no_missing);
            for (std::size_t k = 0; k < 3; ++k) {
              pred[static_cast<std::size_t>(j)][k] = p[k];
            }
          }
        }
        double sum = 0.0;
        for (int j = 0; j < n_test; ++j) {
          auto mu = truth.mu(test_x[static_cast<std::size_t>(j)]);
          for (std::size_t k = 0; k < 3; ++k) {
            double dmu = pred[static_cast<std::size_t>(j)][k] - mu[k];
            sum += dmu * dmu;
          }
        }
        results[m][ti] = {sum / n_test, leaves};
      }
      return;
    }

    // longitudinal: fixed grid of 6 values per predictor, u = 1..10
    Tree t = cross_validate(train, cfg, opt.folds);
    const int d = 10;
    std::array<double, 6> grid{};
    for (int g = 0; g < 6; ++g) {
      grid[static_cast<std::size_t>(g)] = -1.0 + (2.0 * g + 1.0) / 6.0;
    }
    const std::vector<std::uint8_t> no_missing(5, 0);
    double sum = 0.0;
    std::array<double, 5> x{};
    std::array<int, 5> digit{};
    const int m_points = 6 * 6 * 6 * 6 * 6;
    for (int p = 0; p < m_points; ++p) {
      int rem = p;
      for (int j = 0; j < 5; ++j) {
        digit[static_cast<std::size_t>(j)] = rem % 6;
        rem /= 6;
        x[static_cast<std::size_t>(j)] =
            grid[static_cast<std::size_t>(digit[static_cast<std::size_t>(j)])];
      }
      const TreeNode& leaf = route(t, x, no_missing);
      for (int u = 1; u <= d; ++u) {
        double f = curve_eval(leaf.curve, u);
        double dmu = f - truth.mu_long(x, u);
        sum += dmu * dmu;
      }
    }
    results[0][ti] = {sum / (static_cast<double>(d) * m_points),
                      static_cast<double>(t.n_leaves())};
  });

  MseReport report;
  report.scenario = to_string(spec.kind);
  report.trials = opt.trials;
  for (std::size_t m = 0; m < n_methods; ++m) {
    MseArm arm;
    arm.method = to_string(opt.methods[m]);
    double mean = 0.0, leaves = 0.0;
    for (const auto& r : results[m]) {
      mean += r.mse;
      leaves += r.leaves;
    }
    mean /= opt.trials;
    leaves /= opt.trials;
    double var = 0.0;
    for (const auto& r : results[m]) var += (r.mse - mean) * (r.mse - mean);
    var /= opt.trials - 1;
    arm.mean_mse = mean;
    arm.se_mse = std::sqrt(var / opt.trials);
    arm.mean_leaves = leaves;
    report.arms.push_back(arm);
  }
  return report;
}

}  // namespace mvguide::sim

#endif  // MVGUIDE_SIMHARNESS_HPP_
