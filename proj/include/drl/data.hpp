// Copyright 2026 The drl Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include "drl/core.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace drl {

/// Which portion of a group's rows a fitted object was built from.
enum class FitScope { full, half_a, half_b };

inline std::string_view to_string(FitScope s) {
  switch (s) {
    case FitScope::full: return "full";
    case FitScope::half_a: return "half_a";
    case FitScope::half_b: return "half_b";
  }
  return "full";
}

inline FitScope fit_scope_from_string(std::string_view s) {
  if (s == "full") return FitScope::full;
  if (s == "half_a") return FitScope::half_a;
  if (s == "half_b") return FitScope::half_b;
  fail(ErrorKind::parse, "unknown fit scope '" + std::string(s) + "'");
}

/// The half a model fitted on `scope` is evaluated on (cross-fitting).
inline FitScope complement(FitScope scope) {
  return scope == FitScope::half_a ? FitScope::half_b : FitScope::half_a;
}

using IndexSet = std::vector<Index>;

/// Rows 0..floor(n/2)-1 go to the A half, the rest to B.
inline std::pair<IndexSet, IndexSet> deterministic_split(Index n) {
  IndexSet a(static_cast<std::size_t>(n / 2));
  IndexSet b(static_cast<std::size_t>(n - n / 2));
  std::iota(a.begin(), a.end(), Index{0});
  std::iota(b.begin(), b.end(), n / 2);
  return {std::move(a), std::move(b)};
}

inline Matrix select_rows(const Matrix& m, const IndexSet& rows) {
  Matrix out(static_cast<Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Index>(i)) = m.row(rows[i]);
  return out;
}

inline Vector select_rows(const Vector& v, const IndexSet& rows) {
  Vector out(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Index>(i)) = v(rows[i]);
  return out;
}

/// Minimum rows per group accepted at ingestion.
inline constexpr Index kMinGroupRows = 3;

/// One labeled source dataset with its A/B half split. Immutable after
/// construction; use the factory functions to build one.
class SourceGroup {
 public:
  SourceGroup() = default;

  /// Builds a group with the deterministic first-half split.
  static SourceGroup make(int group_id, Matrix covariates, Vector outcomes,
                          long long label = 0) {
    require(covariates.rows() == outcomes.size(), ErrorKind::shape,
            "group " + std::to_string(group_id) + ": covariate rows (" +
                std::to_string(covariates.rows()) + ") != outcomes (" +
                std::to_string(outcomes.size()) + ")");
    require(covariates.rows() >= 2, ErrorKind::insufficient_data,
            "group " + std::to_string(group_id) + " has fewer than 2 rows");
    require(covariates.allFinite() && outcomes.allFinite(), ErrorKind::numeric,
            "group " + std::to_string(group_id) + " contains non-finite values");
    SourceGroup g;
    g.group_id_ = group_id;
    g.label_ = label;
    g.x_ = std::move(covariates);
    g.y_ = std::move(outcomes);
    std::tie(g.a_, g.b_) = deterministic_split(g.x_.rows());
    return g;
  }

  /// Same data, caller-supplied split. The split must partition 0..n-1.
  SourceGroup with_split(IndexSet a, IndexSet b) const {
    std::vector<char> seen(static_cast<std::size_t>(n()), 0);
    for (const auto* half : {&a, &b})
      for (Index i : *half) {
        require(i >= 0 && i < n() && !seen[static_cast<std::size_t>(i)],
                ErrorKind::validation, "split is not a partition of the group rows");
        seen[static_cast<std::size_t>(i)] = 1;
      }
    require(static_cast<Index>(a.size() + b.size()) == n(), ErrorKind::validation,
            "split does not cover every row");
    SourceGroup g = *this;
    g.a_ = std::move(a);
    g.b_ = std::move(b);
    return g;
  }

  int group_id() const { return group_id_; }
  long long label() const { return label_; }
  Index n() const { return x_.rows(); }
  Index p() const { return x_.cols(); }
  const Matrix& covariates() const { return x_; }
  const Vector& outcomes() const { return y_; }
  const IndexSet& split_a() const { return a_; }
  const IndexSet& split_b() const { return b_; }
  const IndexSet& split(FitScope s) const { return s == FitScope::half_b ? b_ : a_; }

  Matrix covariates(FitScope s) const {
    return s == FitScope::full ? x_ : select_rows(x_, split(s));
  }
  Vector outcomes(FitScope s) const {
    return s == FitScope::full ? y_ : select_rows(y_, split(s));
  }

 private:
  int group_id_ = 0;
  long long label_ = 0;
  Matrix x_;
  Vector y_;
  IndexSet a_, b_;
};

/// Unlabeled covariates from the target population.
struct TargetSample {
  Matrix covariates;

  Index n() const { return covariates.rows(); }
  Index p() const { return covariates.cols(); }
};

/// A point on the probability simplex.
class MixtureSpec {
 public:
  MixtureSpec() = default;

  explicit MixtureSpec(Vector w) : w_(std::move(w)) {
    require(w_.size() >= 1, ErrorKind::validation, "mixture weights are empty");
    require(w_.allFinite(), ErrorKind::validation, "mixture weights are not finite");
    require((w_.array() >= 0.0).all(), ErrorKind::validation,
            "mixture weights must be nonnegative");
    require(std::abs(w_.sum() - 1.0) <= 1e-12, ErrorKind::validation,
            "mixture weights must sum to 1");
  }

  static MixtureSpec uniform(Index l) {
    return MixtureSpec(Vector::Constant(l, 1.0 / static_cast<double>(l)));
  }

  /// Builds a mixture, renormalizing away rounding noise up to `tol`.
  static MixtureSpec normalized(Vector w, double tol = 1e-9) {
    require(std::abs(w.sum() - 1.0) <= tol, ErrorKind::validation,
            "mixture weights must sum to 1");
    w = w.cwiseMax(0.0);
    w /= w.sum();
    return MixtureSpec(std::move(w));
  }

  const Vector& weights() const { return w_; }
  Index size() const { return w_.size(); }
  double operator[](Index i) const { return w_(i); }

 private:
  Vector w_;
};

/// Copy of `group` whose A half is a uniformly random floor(n/2)-subset.
inline SourceGroup make_random_split(const SourceGroup& group, std::uint64_t seed) {
  require(group.n() >= 4, ErrorKind::insufficient_data,
          "random split needs at least 4 rows");
  IndexSet perm(static_cast<std::size_t>(group.n()));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng = make_rng(seed, "split", static_cast<std::uint64_t>(group.group_id()));
  for (std::size_t i = perm.size() - 1; i > 0; --i)
    std::swap(perm[i], perm[uniform_index(rng, i + 1)]);
  const auto half = static_cast<std::size_t>(group.n() / 2);
  IndexSet a(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(half));
  IndexSet b(perm.begin() + static_cast<std::ptrdiff_t>(half), perm.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return group.with_split(std::move(a), std::move(b));
}

/// Checks that every group and the target share the same column count.
inline Index common_dimension(const std::vector<SourceGroup>& groups) {
  require(!groups.empty(), ErrorKind::validation, "no source groups");
  const Index p = groups.front().p();
  for (const auto& g : groups)
    require(g.p() == p, ErrorKind::shape,
            "group " + std::to_string(g.group_id()) + " has " + std::to_string(g.p()) +
                " columns, expected " + std::to_string(p));
  return p;
}

/// Rows of all groups stacked in group order.
inline std::pair<Matrix, Vector> pool_groups(const std::vector<SourceGroup>& groups) {
  const Index p = common_dimension(groups);
  Index total = 0;
  for (const auto& g : groups) total += g.n();
  Matrix x(total, p);
  Vector y(total);
  Index at = 0;
  for (const auto& g : groups) {
    x.middleRows(at, g.n()) = g.covariates();
    y.segment(at, g.n()) = g.outcomes();
    at += g.n();
  }
  return {std::move(x), std::move(y)};
}

// ---------------------------------------------------------------------------
// CSV ingestion
// ---------------------------------------------------------------------------

namespace csv_detail {

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r' || s[b] == '\n')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r' ||
                   s[e - 1] == '\n'))
    --e;
  return std::string(s.substr(b, e - b));
}

inline std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(
        start, pos == std::string::npos ? std::string::npos : pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_double(const std::string& s) {
  if (s.empty()) return std::nullopt;
  const char* first = s.data();
  if (*first == '+') ++first;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

/// Reads a fully numeric CSV with a header row. Errors name the offending
/// data row (1-based, header excluded) and column.
inline Table read_numeric(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::parse, "cannot open '" + path + "'");
  Table t;
  std::string line;
  bool have_header = false;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    auto cells = split_line(line);
    if (!have_header) {
      t.header = std::move(cells);
      have_header = true;
      continue;
    }
    ++row;
    require(cells.size() == t.header.size(), ErrorKind::parse,
            path + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                " cells, header has " + std::to_string(t.header.size()));
    std::vector<double> values(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      auto v = parse_double(cells[c]);
      require(v.has_value(), ErrorKind::parse,
              path + ": non-numeric cell at row " + std::to_string(row) + ", column " +
                  std::to_string(c + 1) + " ('" + t.header[c] + "'): '" + cells[c] + "'");
      require(std::isfinite(*v), ErrorKind::parse,
              path + ": non-finite cell at row " + std::to_string(row) + ", column " +
                  std::to_string(c + 1) + " ('" + t.header[c] + "')");
      values[c] = *v;
    }
    t.rows.push_back(std::move(values));
  }
  require(have_header, ErrorKind::parse, path + ": empty file (header row required)");
  require(!t.rows.empty(), ErrorKind::parse, path + ": no data rows");
  return t;
}

inline std::size_t column_index(const Table& t, const std::string& name,
                                const std::string& path) {
  auto it = std::find(t.header.begin(), t.header.end(), name);
  require(it != t.header.end(), ErrorKind::schema,
          path + ": missing column '" + name + "'");
  return static_cast<std::size_t>(it - t.header.begin());
}

inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace csv_detail

/// Source groups read from one CSV plus the metadata needed to write them back.
struct SourceData {
  std::vector<SourceGroup> groups;
  std::vector<std::string> feature_names;
  std::string group_column;
  std::string outcome_column;

  /// Original label of group id l (1-based) is labels[l - 1].
  std::vector<long long> labels() const {
    std::vector<long long> out;
    for (const auto& g : groups) out.push_back(g.label());
    return out;
  }
};

/// Reads a labeled multi-group CSV. Labels are remapped to 1..L in sorted
/// label order; row order is preserved within each group.
inline SourceData ingest_source_csv(const std::string& path, const std::string& group_column,
                                    const std::string& outcome_column) {
  const auto table = csv_detail::read_numeric(path);
  const auto gcol = csv_detail::column_index(table, group_column, path);
  const auto ycol = csv_detail::column_index(table, outcome_column, path);
  require(gcol != ycol, ErrorKind::schema, "group and outcome columns must differ");

  SourceData out;
  out.group_column = group_column;
  out.outcome_column = outcome_column;
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < table.header.size(); ++c)
    if (c != gcol && c != ycol) {
      feature_cols.push_back(c);
      out.feature_names.push_back(table.header[c]);
    }
  require(!feature_cols.empty(), ErrorKind::schema, path + ": no covariate columns");

  std::map<long long, std::vector<std::size_t>> by_label;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const double g = table.rows[r][gcol];
    require(g == std::floor(g) && std::abs(g) < 9.0e15, ErrorKind::parse,
            path + ": non-integer group label at row " + std::to_string(r + 1));
    by_label[static_cast<long long>(g)].push_back(r);
  }

  int id = 0;
  for (const auto& [label, rows] : by_label) {
    ++id;
    require(static_cast<Index>(rows.size()) >= kMinGroupRows, ErrorKind::insufficient_data,
            path + ": group label " + std::to_string(label) + " has " +
                std::to_string(rows.size()) + " rows, need at least " +
                std::to_string(kMinGroupRows));
    Matrix x(static_cast<Index>(rows.size()), static_cast<Index>(feature_cols.size()));
    Vector y(static_cast<Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& row = table.rows[rows[i]];
      for (std::size_t c = 0; c < feature_cols.size(); ++c)
        x(static_cast<Index>(i), static_cast<Index>(c)) = row[feature_cols[c]];
      y(static_cast<Index>(i)) = row[ycol];
    }
    out.groups.push_back(SourceGroup::make(id, std::move(x), std::move(y), label));
  }
  return out;
}

/// Reads an unlabeled target CSV. When `reference_p` is given the column
/// count must match it.
inline TargetSample ingest_target_csv(const std::string& path,
                                      std::optional<Index> reference_p = std::nullopt,
                                      std::vector<std::string>* names = nullptr) {
  const auto table = csv_detail::read_numeric(path);
  const auto p = static_cast<Index>(table.header.size());
  if (reference_p)
    require(p == *reference_p, ErrorKind::shape,
            path + ": has " + std::to_string(p) + " columns, expected " +
                std::to_string(*reference_p));
  TargetSample t;
  t.covariates.resize(static_cast<Index>(table.rows.size()), p);
  for (std::size_t r = 0; r < table.rows.size(); ++r)
    for (Index c = 0; c < p; ++c)
      t.covariates(static_cast<Index>(r), c) = table.rows[r][static_cast<std::size_t>(c)];
  if (names) *names = table.header;
  return t;
}

/// Writes groups in the layout ingest_source_csv reads. Values use the
/// shortest round-trip representation, so re-ingestion is bit-exact.
inline void write_source_csv(const std::string& path, const SourceData& data) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::parse, "cannot write '" + path + "'");
  out << data.group_column;
  for (const auto& name : data.feature_names) out << ',' << name;
  out << ',' << data.outcome_column << '\n';
  for (const auto& g : data.groups)
    for (Index i = 0; i < g.n(); ++i) {
      out << g.label();
      for (Index j = 0; j < g.p(); ++j) out << ',' << csv_detail::format_double(g.covariates()(i, j));
      out << ',' << csv_detail::format_double(g.outcomes()(i)) << '\n';
    }
}

inline void write_matrix_csv(const std::string& path, const Matrix& x,
                             const std::vector<std::string>& names) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::parse, "cannot write '" + path + "'");
  for (std::size_t c = 0; c < names.size(); ++c) out << (c ? "," : "") << names[c];
  out << '\n';
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = 0; j < x.cols(); ++j)
      out << (j ? "," : "") << csv_detail::format_double(x(i, j));
    out << '\n';
  }
}

}  // namespace drl
