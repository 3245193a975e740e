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
#ifndef MVGUIDE_CLI_HPP_
#define MVGUIDE_CLI_HPP_

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mvguide/baseline.hpp"
#include "mvguide/dataset.hpp"
#include "mvguide/simharness.hpp"
#include "mvguide/tree.hpp"

namespace mvguide::cli {

namespace detail_cli {

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  out << content;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string stem_of(const std::string& path) {
  if (path.size() > 5 && path.substr(path.size() - 5) == ".json") {
    return path.substr(0, path.size() - 5);
  }
  return path;
}

inline void collect_terminals(const TreeNode* n,
                              std::vector<const TreeNode*>& out) {
  if (n->is_leaf()) {
    out.push_back(n);
    return;
  }
  collect_terminals(n->left.get(), out);
  collect_terminals(n->right.get(), out);
}

inline std::string terminals_csv(const Tree& tree) {
  std::vector<const TreeNode*> leaves;
  collect_terminals(tree.root.get(), leaves);
  std::string out = "node,n,sse";
  if (tree.layout == Layout::kMultiresponse) {
    for (const auto& r : tree.response_names) out += ",mean_" + r;
  }
  out += "\n";
  for (const TreeNode* n : leaves) {
    out += std::to_string(n->id) + "," + std::to_string(n->n) + "," +
           mvguide::detail::format_double(n->sse);
    if (tree.layout == Layout::kMultiresponse) {
      for (double m : n->mean) {
        out += "," + mvguide::detail::format_double(m);
      }
    }
    out += "\n";
  }
  return out;
}

inline std::string curves_csv(const Tree& tree) {
  std::vector<const TreeNode*> leaves;
  collect_terminals(tree.root.get(), leaves);
  std::string out = "node,u,s\n";
  for (const TreeNode* n : leaves) {
    for (std::size_t i = 0; i < n->curve.u.size(); ++i) {
      out += std::to_string(n->id) + "," +
             mvguide::detail::format_double(n->curve.u[i]) + "," +
             mvguide::detail::format_double(n->curve.s[i]) + "\n";
    }
  }
  return out;
}

struct PredictInput {
  std::vector<std::vector<double>> x;          // per row
  std::vector<std::vector<std::uint8_t>> miss;
  std::vector<double> time;                    // longitudinal only
};

/// Pulls the model's predictor (and time) columns out of a raw CSV by
/// header name. Categories unseen at training time route like any value
/// outside the rule's left set.
inline PredictInput gather_predict_input(const Tree& tree,
                                         const std::string& csv_text,
                                         const std::string& na) {
  auto rows = mvguide::detail::parse_csv_text(csv_text, ',');
  if (rows.size() < 1) throw std::runtime_error("empty prediction data");
  const auto& header = rows.front();
  auto find_col = [&](const std::string& name) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == name) return c;
    }
    throw std::runtime_error("prediction data lacks column " + name);
  };
  std::vector<std::size_t> pred_col(tree.predictors.size());
  for (std::size_t p = 0; p < tree.predictors.size(); ++p) {
    pred_col[p] = find_col(tree.predictors[p].name);
  }
  std::size_t time_col = 0;
  if (tree.layout == Layout::kLongitudinal) time_col = find_col(tree.time_name);

  PredictInput in;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != header.size()) {
      throw std::runtime_error("ragged prediction data at row " +
                               std::to_string(r));
    }
    std::vector<double> x(tree.predictors.size(), 0.0);
    std::vector<std::uint8_t> miss(tree.predictors.size(), 0);
    for (std::size_t p = 0; p < tree.predictors.size(); ++p) {
      const std::string& tok = rows[r][pred_col[p]];
      if (tok.empty() || tok == na) {
        miss[p] = 1;
        continue;
      }
      const auto& meta = tree.predictors[p];
      if (meta.categorical) {
        auto it = std::find(meta.categories.begin(), meta.categories.end(),
                            tok);
        x[p] = it == meta.categories.end()
                   ? -1.0
                   : static_cast<double>(it - meta.categories.begin());
      } else {
        x[p] = mvguide::detail::parse_numeric_token(tok, meta.name, r);
      }
    }
    in.x.push_back(std::move(x));
    in.miss.push_back(std::move(miss));
    if (tree.layout == Layout::kLongitudinal) {
      const std::string& tok = rows[r][time_col];
      if (tok.empty() || tok == na) {
        throw std::runtime_error("missing time value at prediction row " +
                                 std::to_string(r));
      }
      in.time.push_back(
          mvguide::detail::parse_numeric_token(tok, tree.time_name, r));
    }
  }
  return in;
}

}  // namespace detail_cli

/// Entry point shared by the binary and the tests. Writes to the given
/// streams; returns 0 on success, 1 on runtime errors, 2 on usage errors.
inline int run(const std::vector<std::string>& args, std::ostream& out,
               std::ostream& err) {
  CLI::App app{"multivariate and longitudinal regression trees"};
  app.require_subcommand(1);

  // ---- fit ----
  auto* fit = app.add_subcommand("fit", "fit a tree model to CSV data");
  std::string fit_data, fit_roles, fit_out, fit_method = "guide";
  std::string fit_na = "NA";
  bool fit_longitudinal = false, fit_normalize = false;
  int fit_intervals = 3, fit_folds = 10, fit_min_node = 0, fit_max_depth = 30;
  int fit_lowess_iters = 3, fit_missing_y_sign = -1, fit_threads = 1;
  double fit_span = 2.0 / 3.0, fit_se_rule = 0.0;
  std::uint64_t fit_seed = 17;
  fit->add_option("--data", fit_data, "training CSV")->required();
  fit->add_option("--roles", fit_roles, "role spec file")->required();
  fit->add_option("--out", fit_out, "output model JSON path")->required();
  fit->add_option("--method", fit_method, "guide|baseline")
      ->check(CLI::IsMember({"guide", "baseline"}));
  fit->add_flag("--longitudinal", fit_longitudinal,
                "expect longitudinal layout");
  fit->add_option("--intervals", fit_intervals,
                  "longitudinal sign-vector intervals (d)");
  fit->add_option("--span", fit_span, "lowess span");
  fit->add_option("--lowess-iters", fit_lowess_iters,
                  "lowess robustness iterations");
  fit->add_option("--folds", fit_folds, "cross-validation folds");
  fit->add_option("--se-rule", fit_se_rule, "SE rule for pruning (0 = min)");
  fit->add_flag("--normalize", fit_normalize,
                "normalize response impurities by root variance");
  fit->add_option("--min-node-size", fit_min_node, "minimum node size");
  fit->add_option("--max-depth", fit_max_depth, "maximum depth");
  fit->add_option("--missing-y-sign", fit_missing_y_sign,
                  "sign for missing responses (-1 or 1)");
  fit->add_option("--seed", fit_seed, "fold-assignment seed");
  fit->add_option("--na", fit_na, "missing-value sentinel");
  fit->add_option("--threads", fit_threads, "worker threads");

  // ---- predict ----
  auto* predict_cmd = app.add_subcommand("predict", "predict with a model");
  std::string pr_model, pr_data, pr_out, pr_na = "NA";
  predict_cmd->add_option("--model", pr_model, "model JSON")->required();
  predict_cmd->add_option("--data", pr_data, "input CSV")->required();
  predict_cmd->add_option("--out", pr_out, "output CSV")->required();
  predict_cmd->add_option("--na", pr_na, "missing-value sentinel");

  // ---- show ----
  auto* show = app.add_subcommand("show", "print a model as text");
  std::string show_model;
  show->add_option("--model", show_model, "model JSON")->required();

  // ---- simulate-bias ----
  auto* sbias = app.add_subcommand(
      "simulate-bias", "selection-bias experiment on permuted predictors");
  std::string sb_method = "guide", sb_missing, sb_out, sb_data, sb_roles;
  int sb_trials = 2000, sb_threads = 1;
  std::uint64_t sb_seed = 17;
  bool sb_augment = false;
  sbias->add_option("--method", sb_method, "guide|baseline")
      ->check(CLI::IsMember({"guide", "baseline"}));
  sbias->add_option("--trials", sb_trials, "number of trials");
  sbias->add_option("--seed", sb_seed, "RNG seed");
  sbias->add_flag("--augment-c2-c20", sb_augment,
                  "add equiprobable 2- and 20-level categorical variables");
  sbias->add_option("--missing", sb_missing,
                    "inject missingness, e.g. fineaggr:0.8");
  sbias->add_option("--data", sb_data,
                    "base CSV (default: bundled synthetic concrete data)");
  sbias->add_option("--roles", sb_roles, "role spec for --data");
  sbias->add_option("--out", sb_out, "write frequencies CSV here");
  sbias->add_option("--threads", sb_threads, "worker threads");

  // ---- simulate-mse ----
  auto* smse = app.add_subcommand(
      "simulate-mse", "prediction-error experiment on simulated scenarios");
  std::string sm_scenario, sm_methods = "uni,multi,baseline", sm_out;
  int sm_trials = 200, sm_n = 100, sm_folds = 10, sm_threads = 1;
  int sm_intervals = 3;
  double sm_span = 2.0 / 3.0;
  std::uint64_t sm_seed = 17;
  smse->add_option("--scenario", sm_scenario,
                   "indep_uniform_1..3 | corr_normal_1..3 | long_linear | "
                   "long_step")
      ->required();
  smse->add_option("--trials", sm_trials, "number of trials");
  smse->add_option("--n", sm_n, "training rows or subjects per trial");
  smse->add_option("--seed", sm_seed, "RNG seed");
  smse->add_option("--methods", sm_methods,
                   "comma list of uni,multi,baseline");
  smse->add_option("--folds", sm_folds, "cross-validation folds");
  smse->add_option("--intervals", sm_intervals,
                   "longitudinal sign-vector intervals");
  smse->add_option("--span", sm_span, "lowess span");
  smse->add_option("--out", sm_out, "write arms CSV here");
  smse->add_option("--threads", sm_threads, "worker threads");

  std::vector<const char*> argv;
  argv.push_back("mvguide");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (*fit) {
      RoleSpec roles = RoleSpec::load(fit_roles);
      CsvOptions csv_opt;
      csv_opt.na = fit_na;
      Dataset ds = load_csv(fit_data, roles, csv_opt);
      if (fit_longitudinal && ds.layout != Layout::kLongitudinal) {
        throw std::runtime_error(
            "--longitudinal given but the role spec has no time/subject");
      }
      GrowConfig cfg;
      cfg.min_node_size = fit_min_node;
      cfg.max_depth = fit_max_depth;
      cfg.intervals = fit_intervals;
      cfg.missing_y_sign = fit_missing_y_sign;
      cfg.normalize = fit_normalize;
      cfg.lowess_span = fit_span;
      cfg.lowess_iters = fit_lowess_iters;
      cfg.seed = fit_seed;
      PruneSequence seq;
      Tree tree = fit_method == "baseline"
                      ? cross_validate_baseline(ds, cfg, fit_folds,
                                                fit_se_rule, &seq)
                      : cross_validate(ds, cfg, fit_folds, fit_se_rule, &seq);
      detail_cli::write_file(fit_out, serialize(tree));
      std::string stem = detail_cli::stem_of(fit_out);
      std::string text = render_text(tree);
      detail_cli::write_file(stem + ".txt", text);
      detail_cli::write_file(stem + "_terminals.csv",
                             detail_cli::terminals_csv(tree));
      if (tree.layout == Layout::kLongitudinal) {
        detail_cli::write_file(stem + "_curves.csv",
                               detail_cli::curves_csv(tree));
      }
      out << text;
      const PruneEntry* chosen = nullptr;
      for (const auto& e : seq.entries) {
        if (e.n_leaves == tree.n_leaves()) chosen = &e;
      }
      if (chosen) {
        char buf[160];
        std::snprintf(buf, sizeof(buf),
                      "cv error %.6g (se %.6g) at %d terminal nodes\n",
                      chosen->cv_error, chosen->cv_se, tree.n_leaves());
        out << buf;
      }
      out << "model written to " << fit_out << "\n";
      return 0;
    }

    if (*predict_cmd) {
      Tree tree = deserialize(detail_cli::read_file(pr_model));
      auto in = detail_cli::gather_predict_input(
          tree, detail_cli::read_file(pr_data), pr_na);
      std::string csv;
      if (tree.layout == Layout::kMultiresponse) {
        for (std::size_t k = 0; k < tree.response_names.size(); ++k) {
          csv += (k ? "," : "") + ("pred_" + tree.response_names[k]);
        }
        csv += "\n";
        for (std::size_t r = 0; r < in.x.size(); ++r) {
          auto p = predict(tree, in.x[r], in.miss[r]);
          for (std::size_t k = 0; k < p.size(); ++k) {
            csv += (k ? "," : "") + mvguide::detail::format_double(p[k]);
          }
          csv += "\n";
        }
      } else {
        csv = "pred_" + tree.response_names[0] + "\n";
        for (std::size_t r = 0; r < in.x.size(); ++r) {
          csv += mvguide::detail::format_double(
                     predict(tree, in.x[r], in.miss[r], in.time[r])) +
                 "\n";
        }
      }
      detail_cli::write_file(pr_out, csv);
      out << in.x.size() << " predictions written to " << pr_out << "\n";
      return 0;
    }

    if (*show) {
      Tree tree = deserialize(detail_cli::read_file(show_model));
      out << render_text(tree);
      return 0;
    }

    if (*sbias) {
      Dataset base;
      if (!sb_data.empty()) {
        if (sb_roles.empty()) {
          throw std::runtime_error("--data needs --roles");
        }
        base = load_csv(sb_data, RoleSpec::load(sb_roles));
      } else {
        base = sim::concrete_clone();
      }
      sim::BiasOptions opt;
      opt.method = sb_method == "baseline" ? sim::BiasMethod::kBaseline
                                           : sim::BiasMethod::kGuide;
      opt.trials = sb_trials;
      opt.seed = sb_seed;
      opt.augment_c2_c20 = sb_augment;
      opt.threads = sb_threads;
      if (!sb_missing.empty()) {
        auto colon = sb_missing.rfind(':');
        if (colon == std::string::npos) {
          throw std::runtime_error("--missing wants var:fraction");
        }
        opt.missing_var = sb_missing.substr(0, colon);
        opt.missing_fraction = std::stod(sb_missing.substr(colon + 1));
      }
      sim::BiasReport report = sim::bias_experiment(base, opt);
      out << report.to_text();
      if (!sb_out.empty()) detail_cli::write_file(sb_out, report.to_csv());
      return 0;
    }

    if (*smse) {
      sim::ScenarioSpec spec;
      spec.kind = sim::parse_scenario(sm_scenario);
      spec.n = static_cast<std::size_t>(sm_n);
      spec.seed = sm_seed;
      sim::MseOptions opt;
      opt.trials = sm_trials;
      opt.folds = sm_folds;
      opt.threads = sm_threads;
      opt.config.intervals = sm_intervals;
      opt.config.lowess_span = sm_span;
      opt.methods.clear();
      std::stringstream ms(sm_methods);
      std::string tok;
      while (std::getline(ms, tok, ',')) {
        if (!tok.empty()) opt.methods.push_back(sim::parse_fit_method(tok));
      }
      if (sim::is_longitudinal(spec.kind) &&
          sm_methods == "uni,multi,baseline") {
        opt.methods = {sim::FitMethod::kMultivariateGuide};
      }
      sim::MseReport report = sim::mse_experiment(spec, opt);
      out << report.to_text();
      if (!sm_out.empty()) detail_cli::write_file(sm_out, report.to_csv());
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

inline int run(int argc, const char* const* argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, std::cout, std::cerr);
}

}  // namespace mvguide::cli

#endif  // MVGUIDE_CLI_HPP_
