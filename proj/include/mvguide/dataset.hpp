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
#ifndef MVGUIDE_DATASET_HPP_
#define MVGUIDE_DATASET_HPP_

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace mvguide {

enum class ColumnRole {
  kNumericPredictor,
  kCategoricalPredictor,
  kResponse,
  kTime,
  kSubjectId,
  kExcluded,
};

inline const char* to_string(ColumnRole role) {
  switch (role) {
    case ColumnRole::kNumericPredictor: return "numeric_predictor";
    case ColumnRole::kCategoricalPredictor: return "categorical_predictor";
    case ColumnRole::kResponse: return "response";
    case ColumnRole::kTime: return "time";
    case ColumnRole::kSubjectId: return "subject_id";
    case ColumnRole::kExcluded: return "excluded";
  }
  return "?";
}

inline ColumnRole parse_role(std::string_view s) {
  if (s == "numeric_predictor") return ColumnRole::kNumericPredictor;
  if (s == "categorical_predictor") return ColumnRole::kCategoricalPredictor;
  if (s == "response") return ColumnRole::kResponse;
  if (s == "time") return ColumnRole::kTime;
  if (s == "subject_id") return ColumnRole::kSubjectId;
  if (s == "excluded") return ColumnRole::kExcluded;
  throw std::invalid_argument("unknown column role: " + std::string(s));
}

enum class Layout { kMultiresponse, kLongitudinal };

inline const char* to_string(Layout layout) {
  return layout == Layout::kMultiresponse ? "multiresponse" : "longitudinal";
}

/// One typed column. Numeric columns keep parsed doubles in `values`.
/// Categorical, subject-id and excluded columns keep a dictionary index in
/// `values` and the token text in `categories` (first-appearance order).
struct Column {
  std::string name;
  ColumnRole role = ColumnRole::kExcluded;
  std::vector<double> values;
  std::vector<std::uint8_t> missing;
  std::vector<std::string> categories;

  bool stores_tokens() const {
    return role == ColumnRole::kCategoricalPredictor ||
           role == ColumnRole::kSubjectId || role == ColumnRole::kExcluded;
  }
};

struct Dataset {
  Layout layout = Layout::kMultiresponse;
  std::size_t n_rows = 0;
  std::vector<Column> columns;

  std::vector<std::size_t> predictor_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i].role == ColumnRole::kNumericPredictor ||
          columns[i].role == ColumnRole::kCategoricalPredictor) {
        out.push_back(i);
      }
    }
    return out;
  }

  std::vector<std::size_t> response_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i].role == ColumnRole::kResponse) out.push_back(i);
    }
    return out;
  }

  std::optional<std::size_t> role_index(ColumnRole role) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i].role == role) return i;
    }
    return std::nullopt;
  }

  const Column& column(std::string_view name) const {
    for (const Column& c : columns) {
      if (c.name == name) return c;
    }
    throw std::out_of_range("no column named " + std::string(name));
  }

  std::size_t column_index(std::string_view name) const {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (columns[i].name == name) return i;
    }
    throw std::out_of_range("no column named " + std::string(name));
  }
};

/// Column-name -> role mapping. The spec file is one `name:role` line per
/// column; blank lines and `#` comments are ignored.
struct RoleSpec {
  std::vector<std::pair<std::string, ColumnRole>> roles;

  static RoleSpec parse(std::string_view text) {
    RoleSpec spec;
    std::size_t pos = 0;
    while (pos <= text.size()) {
      std::size_t eol = text.find('\n', pos);
      std::string_view line = text.substr(
          pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
      pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) {
        line.remove_suffix(1);
      }
      while (!line.empty() && line.front() == ' ') line.remove_prefix(1);
      if (line.empty() || line.front() == '#') continue;
      std::size_t colon = line.rfind(':');
      if (colon == std::string_view::npos) {
        throw std::invalid_argument("role spec line missing ':': " +
                                    std::string(line));
      }
      std::string name(line.substr(0, colon));
      std::string_view role = line.substr(colon + 1);
      while (!role.empty() && role.front() == ' ') role.remove_prefix(1);
      while (!name.empty() && name.back() == ' ') name.pop_back();
      spec.roles.emplace_back(std::move(name), parse_role(role));
    }
    return spec;
  }

  static RoleSpec load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open role spec: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  std::optional<ColumnRole> find(std::string_view name) const {
    for (const auto& [n, r] : roles) {
      if (n == name) return r;
    }
    return std::nullopt;
  }
};

struct CsvOptions {
  char delimiter = ',';
  std::string na = "NA";  // missing sentinel; empty fields are always missing
};

namespace detail {

// RFC 4180 field splitter: quoted fields may contain delimiters, quotes
// (doubled) and newlines. Returns rows of raw field strings.
inline std::vector<std::vector<std::string>> parse_csv_text(
    std::string_view text, char delim) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool field_started = false;
  std::size_t i = 0;
  auto end_field = [&] {
    row.push_back(std::move(field));
    field.clear();
    field_started = false;
  };
  auto end_row = [&] {
    end_field();
    rows.push_back(std::move(row));
    row.clear();
  };
  while (i < text.size()) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      ++i;
      continue;
    }
    if (c == '"' && !field_started && field.empty()) {
      in_quotes = true;
      field_started = true;
      ++i;
      continue;
    }
    if (c == delim) {
      end_field();
      ++i;
      continue;
    }
    if (c == '\r') {
      if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
      end_row();
      ++i;
      continue;
    }
    if (c == '\n') {
      end_row();
      ++i;
      continue;
    }
    field.push_back(c);
    field_started = true;
    ++i;
  }
  if (in_quotes) throw std::invalid_argument("unterminated quoted CSV field");
  if (field_started || !field.empty() || !row.empty()) end_row();
  return rows;
}

inline double parse_numeric_token(const std::string& tok,
                                  const std::string& column,
                                  std::size_t row) {
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  while (first != last && *first == ' ') ++first;
  while (last != first && *(last - 1) == ' ') --last;
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || first == last) {
    throw std::invalid_argument("non-numeric token \"" + tok +
                                "\" in numeric column " + column + " (row " +
                                std::to_string(row + 1) + ")");
  }
  return value;
}

inline bool needs_quotes(const std::string& s, char delim) {
  return s.find_first_of({delim, '"', '\n', '\r'}) != std::string::npos;
}

inline void write_field(std::string& out, const std::string& s, char delim) {
  if (!needs_quotes(s, delim)) {
    out += s;
    return;
  }
  out.push_back('"');
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  double back = 0.0;
  std::from_chars(buf, buf + std::char_traits<char>::length(buf), back);
  if (back == v) {
    // prefer the shortest representation that round-trips
    for (int prec = 1; prec <= 16; ++prec) {
      char sbuf[32];
      std::snprintf(sbuf, sizeof(sbuf), "%.*g", prec, v);
      double b2 = 0.0;
      std::from_chars(sbuf, sbuf + std::char_traits<char>::length(sbuf), b2);
      if (b2 == v) return sbuf;
    }
  }
  return buf;
}

inline void validate_dataset(Dataset& ds) {
  std::size_t n_pred = ds.predictor_indices().size();
  auto resp = ds.response_indices();
  auto time_idx = ds.role_index(ColumnRole::kTime);
  auto subj_idx = ds.role_index(ColumnRole::kSubjectId);
  if (time_idx.has_value() != subj_idx.has_value()) {
    throw std::invalid_argument(
        "longitudinal layout needs both a time and a subject_id column");
  }
  if (n_pred == 0) throw std::invalid_argument("no predictor columns");
  if (time_idx) {
    ds.layout = Layout::kLongitudinal;
    if (resp.size() != 1) {
      throw std::invalid_argument(
          "longitudinal layout needs exactly one response column");
    }
    const Column& t = ds.columns[*time_idx];
    const Column& s = ds.columns[*subj_idx];
    const Column& y = ds.columns[resp[0]];
    for (std::size_t r = 0; r < ds.n_rows; ++r) {
      if (t.missing[r]) {
        throw std::invalid_argument("missing time value at row " +
                                    std::to_string(r + 1));
      }
      if (!std::isfinite(t.values[r])) {
        throw std::invalid_argument("non-finite time value at row " +
                                    std::to_string(r + 1));
      }
      if (s.missing[r]) {
        throw std::invalid_argument("missing subject id at row " +
                                    std::to_string(r + 1));
      }
      if (y.missing[r]) {
        throw std::invalid_argument("missing response at row " +
                                    std::to_string(r + 1) +
                                    " (longitudinal observations must have "
                                    "an observed response)");
      }
    }
    // Predictors must be fixed within subject.
    for (std::size_t pi : ds.predictor_indices()) {
      const Column& p = ds.columns[pi];
      std::unordered_map<int, std::pair<double, std::uint8_t>> seen;
      for (std::size_t r = 0; r < ds.n_rows; ++r) {
        int subject = static_cast<int>(s.values[r]);
        auto it = seen.find(subject);
        if (it == seen.end()) {
          seen.emplace(subject, std::make_pair(p.values[r], p.missing[r]));
        } else if (it->second.second != p.missing[r] ||
                   (!p.missing[r] && it->second.first != p.values[r])) {
          throw std::invalid_argument(
              "predictor " + p.name + " is not time-fixed for subject " +
              s.categories[static_cast<std::size_t>(subject)]);
        }
      }
    }
  } else {
    ds.layout = Layout::kMultiresponse;
    if (resp.empty()) throw std::invalid_argument("no response columns");
  }
}

}  // namespace detail

inline Dataset load_csv_text(std::string_view text, const RoleSpec& spec,
                             const CsvOptions& opt = {}) {
  auto rows = detail::parse_csv_text(text, opt.delimiter);
  if (rows.empty()) throw std::invalid_argument("empty CSV");
  const auto& header = rows.front();
  Dataset ds;
  ds.columns.resize(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    for (std::size_t c2 = 0; c2 < c; ++c2) {
      if (header[c2] == header[c]) {
        throw std::invalid_argument("duplicate column name: " + header[c]);
      }
    }
    auto role = spec.find(header[c]);
    if (!role) {
      throw std::invalid_argument("column " + header[c] +
                                  " has no entry in the role spec");
    }
    ds.columns[c].name = header[c];
    ds.columns[c].role = *role;
  }
  for (const auto& [name, role] : spec.roles) {
    bool found = false;
    for (const auto& h : header) found = found || h == name;
    if (!found) {
      throw std::invalid_argument("role spec names unknown column: " + name);
    }
  }
  ds.n_rows = rows.size() - 1;
  for (auto& col : ds.columns) {
    col.values.reserve(ds.n_rows);
    col.missing.reserve(ds.n_rows);
  }
  std::vector<std::unordered_map<std::string, std::size_t>> dicts(
      header.size());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != header.size()) {
      throw std::invalid_argument(
          "row " + std::to_string(r) + " has " +
          std::to_string(rows[r].size()) + " fields, expected " +
          std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < header.size(); ++c) {
      Column& col = ds.columns[c];
      const std::string& tok = rows[r][c];
      bool miss = tok.empty() || tok == opt.na;
      col.missing.push_back(miss ? 1 : 0);
      if (miss) {
        col.values.push_back(0.0);
        continue;
      }
      if (col.stores_tokens()) {
        auto [it, inserted] = dicts[c].emplace(tok, col.categories.size());
        if (inserted) col.categories.push_back(tok);
        col.values.push_back(static_cast<double>(it->second));
      } else {
        col.values.push_back(detail::parse_numeric_token(tok, col.name, r));
      }
    }
  }
  detail::validate_dataset(ds);
  return ds;
}

inline Dataset load_csv(const std::string& path, const RoleSpec& spec,
                        const CsvOptions& opt = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open CSV file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return load_csv_text(ss.str(), spec, opt);
}

/// Writes a dataset back to CSV. Missing cells become empty fields, so a
/// reload with the same role spec reproduces values and masks exactly.
inline std::string to_csv(const Dataset& ds, const CsvOptions& opt = {}) {
  std::string out;
  for (std::size_t c = 0; c < ds.columns.size(); ++c) {
    if (c) out.push_back(opt.delimiter);
    detail::write_field(out, ds.columns[c].name, opt.delimiter);
  }
  out.push_back('\n');
  for (std::size_t r = 0; r < ds.n_rows; ++r) {
    for (std::size_t c = 0; c < ds.columns.size(); ++c) {
      if (c) out.push_back(opt.delimiter);
      const Column& col = ds.columns[c];
      if (col.missing[r]) continue;
      if (col.stores_tokens()) {
        detail::write_field(
            out, col.categories[static_cast<std::size_t>(col.values[r])],
            opt.delimiter);
      } else {
        out += detail::format_double(col.values[r]);
      }
    }
    out.push_back('\n');
  }
  return out;
}

inline void write_csv(const Dataset& ds, const std::string& path,
                      const CsvOptions& opt = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write CSV file: " + path);
  out << to_csv(ds, opt);
}

struct Obs {
  double u = 0.0;
  double y = 0.0;
};

/// One subject's longitudinal record: time-fixed predictors plus the
/// time-ordered (u, y) observations.
struct SubjectSeries {
  std::string id;
  std::vector<double> x;
  std::vector<std::uint8_t> x_missing;
  std::vector<Obs> obs;
};

inline std::vector<SubjectSeries> group_by_subject(const Dataset& ds) {
  if (ds.layout != Layout::kLongitudinal) {
    throw std::invalid_argument("group_by_subject needs longitudinal layout");
  }
  const Column& subj = ds.columns[*ds.role_index(ColumnRole::kSubjectId)];
  const Column& time = ds.columns[*ds.role_index(ColumnRole::kTime)];
  const Column& resp = ds.columns[ds.response_indices()[0]];
  auto preds = ds.predictor_indices();
  std::vector<SubjectSeries> series(subj.categories.size());
  std::vector<bool> started(series.size(), false);
  for (std::size_t r = 0; r < ds.n_rows; ++r) {
    auto si = static_cast<std::size_t>(subj.values[r]);
    SubjectSeries& s = series[si];
    if (!started[si]) {
      started[si] = true;
      s.id = subj.categories[si];
      s.x.reserve(preds.size());
      for (std::size_t pi : preds) {
        s.x.push_back(ds.columns[pi].values[r]);
        s.x_missing.push_back(ds.columns[pi].missing[r]);
      }
    } else {
      for (std::size_t k = 0; k < preds.size(); ++k) {
        const Column& p = ds.columns[preds[k]];
        if (s.x_missing[k] != p.missing[r] ||
            (!p.missing[r] && s.x[k] != p.values[r])) {
          throw std::invalid_argument("predictor " + p.name +
                                      " is not time-fixed for subject " +
                                      s.id);
        }
      }
    }
    s.obs.push_back({time.values[r], resp.values[r]});
  }
  for (SubjectSeries& s : series) {
    std::stable_sort(s.obs.begin(), s.obs.end(),
                     [](const Obs& a, const Obs& b) { return a.u < b.u; });
  }
  return series;
}

/// Appends `b`'s observations, shifted by `offset`, to `a`'s, subject by
/// subject. Both inputs must cover the same subjects and `offset` must not
/// precede the end of the first series.
inline std::vector<SubjectSeries> concat_series(
    const std::vector<SubjectSeries>& a, const std::vector<SubjectSeries>& b,
    double offset) {
  std::map<std::string, const SubjectSeries*> b_by_id;
  for (const auto& s : b) {
    if (!b_by_id.emplace(s.id, &s).second) {
      throw std::invalid_argument("duplicate subject id in second series: " +
                                  s.id);
    }
  }
  double max_u = -std::numeric_limits<double>::infinity();
  for (const auto& s : a) {
    for (const auto& o : s.obs) max_u = std::max(max_u, o.u);
  }
  if (!a.empty() && offset < max_u) {
    throw std::invalid_argument(
        "concat offset precedes the end of the first series");
  }
  std::vector<SubjectSeries> out;
  out.reserve(a.size());
  for (const auto& s : a) {
    auto it = b_by_id.find(s.id);
    if (it == b_by_id.end()) {
      throw std::invalid_argument("subject " + s.id +
                                  " is missing from the second series");
    }
    SubjectSeries merged = s;
    for (const Obs& o : it->second->obs) {
      merged.obs.push_back({o.u + offset, o.y});
    }
    out.push_back(std::move(merged));
    b_by_id.erase(it);
  }
  if (!b_by_id.empty()) {
    throw std::invalid_argument("subject " + b_by_id.begin()->first +
                                " is missing from the first series");
  }
  return out;
}

}  // namespace mvguide

#endif  // MVGUIDE_DATASET_HPP_
