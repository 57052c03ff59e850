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
#include "drl/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace drl {

enum class LearnerKind { linear, lasso, forest };

inline std::string_view to_string(LearnerKind k) {
  switch (k) {
    case LearnerKind::linear: return "linear";
    case LearnerKind::lasso: return "lasso";
    case LearnerKind::forest: return "forest";
  }
  return "linear";
}

inline LearnerKind learner_kind_from_string(std::string_view s) {
  if (s == "linear") return LearnerKind::linear;
  if (s == "lasso") return LearnerKind::lasso;
  if (s == "forest") return LearnerKind::forest;
  fail(ErrorKind::validation, "unknown learner '" + std::string(s) + "'");
}

/// Intercept-first coefficient vector of length p + 1.
struct LinearModel {
  Vector coefficients;
};

/// Flat node arrays. A node with feature < 0 is a leaf.
struct RegressionTree {
  std::vector<int> feature;
  std::vector<double> threshold;
  std::vector<int> left;
  std::vector<int> right;
  std::vector<double> value;

  template <class Row>
  double predict(const Row& x) const {
    int node = 0;
    while (feature[static_cast<std::size_t>(node)] >= 0) {
      const auto k = static_cast<std::size_t>(node);
      node = x(feature[k]) <= threshold[k] ? left[k] : right[k];
    }
    return value[static_cast<std::size_t>(node)];
  }

  std::size_t size() const { return feature.size(); }
};

struct ForestModel {
  std::vector<RegressionTree> trees;
};

/// An immutable fitted regression function R^p -> R.
class FittedPredictor {
 public:
  using Payload = std::variant<LinearModel, ForestModel>;

  FittedPredictor() = default;
  FittedPredictor(LearnerKind kind, Index p, Payload payload, int group_id = 0,
                  FitScope scope = FitScope::full)
      : kind_(kind), p_(p), group_id_(group_id), scope_(scope), payload_(std::move(payload)) {
    if (const auto* lin = std::get_if<LinearModel>(&payload_))
      require(lin->coefficients.size() == p + 1, ErrorKind::internal,
              "linear payload must have p + 1 coefficients");
  }

  LearnerKind kind() const { return kind_; }
  Index p() const { return p_; }
  int group_id() const { return group_id_; }
  FitScope scope() const { return scope_; }
  const Payload& payload() const { return payload_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  /// Copy with new bookkeeping tags; the fitted function is unchanged.
  FittedPredictor tagged(int group_id, FitScope scope) const {
    FittedPredictor f = *this;
    f.group_id_ = group_id;
    f.scope_ = scope;
    return f;
  }

  FittedPredictor with_warnings(std::vector<std::string> w) const {
    FittedPredictor f = *this;
    f.warnings_ = std::move(w);
    return f;
  }

  const Vector& coefficients() const {
    const auto* lin = std::get_if<LinearModel>(&payload_);
    require(lin != nullptr, ErrorKind::validation, "predictor has no linear coefficients");
    return lin->coefficients;
  }

  Vector predict(const Matrix& x) const {
    require(x.cols() == p_, ErrorKind::shape,
            "predictor expects " + std::to_string(p_) + " columns, got " +
                std::to_string(x.cols()));
    Vector out(x.rows());
    if (const auto* lin = std::get_if<LinearModel>(&payload_)) {
      const auto& b = lin->coefficients;
      for (Index i = 0; i < x.rows(); ++i) {
        double s = b(0);
        for (Index j = 0; j < p_; ++j) s += x(i, j) * b(j + 1);
        out(i) = s;
      }
      return out;
    }
    const auto& forest = std::get<ForestModel>(payload_);
    const double inv = 1.0 / static_cast<double>(forest.trees.size());
    for (Index i = 0; i < x.rows(); ++i) {
      double s = 0.0;
      const auto row = x.row(i);
      for (const auto& t : forest.trees) s += t.predict(row);
      out(i) = s * inv;
    }
    return out;
  }

 private:
  LearnerKind kind_ = LearnerKind::linear;
  Index p_ = 0;
  int group_id_ = 0;
  FitScope scope_ = FitScope::full;
  Payload payload_;
  std::vector<std::string> warnings_;
};

inline Vector predict_batch(const FittedPredictor& model, const Matrix& x) {
  return model.predict(x);
}

namespace learner_detail {

inline void check_xy(const Matrix& x, const Vector& y) {
  require(x.rows() == y.size(), ErrorKind::shape,
          "X has " + std::to_string(x.rows()) + " rows but y has " +
              std::to_string(y.size()));
  require(x.rows() >= 1, ErrorKind::insufficient_data, "no rows to fit");
  require(x.allFinite() && y.allFinite(), ErrorKind::numeric, "non-finite training data");
}

}  // namespace learner_detail

// ---------------------------------------------------------------------------
// Least squares
// ---------------------------------------------------------------------------

/// Minimizes sum (y - b0 - x'b)^2 + ridge * |b|^2 with an unpenalized
/// intercept. With ridge = 0 and a singular Gram matrix the minimum-norm
/// slope vector is returned.
inline FittedPredictor fit_linear(const Matrix& x, const Vector& y, double ridge = 0.0) {
  learner_detail::check_xy(x, y);
  require(ridge >= 0.0 && std::isfinite(ridge), ErrorKind::validation,
          "ridge must be a nonnegative finite number");
  const Index p = x.cols();
  const Eigen::RowVectorXd xbar = x.colwise().mean();
  const double ybar = y.mean();
  const Matrix xc = x.rowwise() - xbar;
  const Vector yc = y.array() - ybar;

  Vector slope = Vector::Zero(p);
  if (p > 0) {
    Matrix gram = xc.transpose() * xc;
    gram.diagonal().array() += ridge;
    const Vector rhs = xc.transpose() * yc;
    Eigen::LDLT<Matrix> ldlt(gram);
    const double scale = std::max(1.0, gram.diagonal().cwiseAbs().maxCoeff());
    const bool singular = ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
                          ldlt.vectorD().cwiseAbs().minCoeff() <= 1e-12 * scale;
    if (!singular) {
      slope = ldlt.solve(rhs);
    } else if (ridge > 0.0) {
      slope = gram.completeOrthogonalDecomposition().solve(rhs);
    } else {
      slope = xc.completeOrthogonalDecomposition().solve(yc);
    }
  }
  Vector coef(p + 1);
  coef(0) = ybar - xbar.dot(slope);
  coef.tail(p) = slope;
  require(coef.allFinite(), ErrorKind::numeric, "least-squares fit produced non-finite coefficients");
  return FittedPredictor(LearnerKind::linear, p, LinearModel{coef});
}

// ---------------------------------------------------------------------------
// Lasso
// ---------------------------------------------------------------------------

/// Result of a penalized fit; `objective_trace` holds the objective after
/// each coordinate sweep.
struct LassoFit {
  Vector coefficients;  // intercept first
  int sweeps = 0;
  bool converged = false;
  std::vector<double> objective_trace;
  std::vector<std::string> warnings;
};

namespace lasso_detail {

inline double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

/// Sufficient statistics for covariance-update coordinate descent on the
/// centered problem.
struct Problem {
  Index n = 0;
  Index p = 0;
  Eigen::RowVectorXd xbar;
  double ybar = 0.0;
  Matrix gram;   // Xc'Xc / n
  Vector xty;    // Xc'yc / n
  double yty = 0.0;  // yc'yc / n
  std::vector<bool> dead;  // zero-variance columns

  Problem(const Matrix& x, const Vector& y) : n(x.rows()), p(x.cols()) {
    xbar = x.colwise().mean();
    ybar = y.mean();
    const Matrix xc = x.rowwise() - xbar;
    const Vector yc = y.array() - ybar;
    const double inv_n = 1.0 / static_cast<double>(n);
    gram = Matrix::Zero(p, p);
    gram.selfadjointView<Eigen::Lower>().rankUpdate(xc.transpose(), inv_n);
    gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();
    xty = xc.transpose() * yc * inv_n;
    yty = yc.squaredNorm() * inv_n;
    dead.assign(static_cast<std::size_t>(p), false);
    for (Index j = 0; j < p; ++j)
      dead[static_cast<std::size_t>(j)] = !(gram(j, j) > 1e-14 * (1.0 + xbar(j) * xbar(j)));
  }

  double objective(const Vector& b, const Vector& lambda) const {
    // (1/2n)|yc - Xc b|^2 = 0.5 (yty - 2 b'xty + b'Gb)
    const double fit = 0.5 * (yty - 2.0 * b.dot(xty) + b.dot(gram * b));
    return fit + lambda.cwiseProduct(b.cwiseAbs()).sum();
  }
};

inline LassoFit solve(const Problem& prob, const Vector& lambda, Vector b, double tol,
                      int max_sweeps, bool trace) {
  LassoFit out;
  // grad(j) = xty(j) - (G b)(j), kept current as coordinates change.
  Vector grad = prob.xty - prob.gram * b;
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Index j = 0; j < prob.p; ++j) {
      if (prob.dead[static_cast<std::size_t>(j)]) {
        b(j) = 0.0;
        continue;
      }
      const double gjj = prob.gram(j, j);
      const double old = b(j);
      const double z = grad(j) + gjj * old;
      const double updated = soft_threshold(z, lambda(j)) / gjj;
      const double delta = updated - old;
      if (delta != 0.0) {
        b(j) = updated;
        grad.noalias() -= prob.gram.col(j) * delta;
        max_change = std::max(max_change, std::abs(delta));
      }
    }
    out.sweeps = sweep;
    if (trace) out.objective_trace.push_back(prob.objective(b, lambda));
    if (max_change < tol) {
      out.converged = true;
      break;
    }
  }
  Vector coef(prob.p + 1);
  coef(0) = prob.ybar - prob.xbar.dot(b);
  coef.tail(prob.p) = b;
  out.coefficients = std::move(coef);
  for (Index j = 0; j < prob.p; ++j)
    if (prob.dead[static_cast<std::size_t>(j)])
      out.warnings.push_back("column " + std::to_string(j + 1) +
                             " has zero variance; coefficient fixed at 0");
  return out;
}

/// Per-column penalty A * sqrt(log(p + 1) / n) * |X_j|_2 / sqrt(n); the +1
/// counts the intercept column.
inline Vector penalty_weights(const Matrix& x) {
  const double n = static_cast<double>(x.rows());
  const double p = static_cast<double>(x.cols());
  const double base = std::sqrt(std::log(p + 1.0) / n);
  return (x.colwise().norm().transpose() / std::sqrt(n)) * base;
}

}  // namespace lasso_detail

inline constexpr double kLassoTolerance = 1e-8;
inline constexpr int kLassoMaxSweeps = 100000;

/// Lasso with explicit per-coordinate penalties lambda_j on
/// (1/2n)|y - b0 - Xb|^2 + sum_j lambda_j |b_j|.
inline LassoFit fit_lasso_penalties(const Matrix& x, const Vector& y, const Vector& lambda,
                                    bool trace = false) {
  learner_detail::check_xy(x, y);
  require(lambda.size() == x.cols(), ErrorKind::shape, "one penalty per column required");
  require((lambda.array() >= 0.0).all(), ErrorKind::validation, "penalties must be nonnegative");
  const lasso_detail::Problem prob(x, y);
  return lasso_detail::solve(prob, lambda, Vector::Zero(x.cols()), kLassoTolerance,
                             kLassoMaxSweeps, trace);
}

struct LassoCvResult {
  double chosen_a = 0.0;
  std::vector<double> grid;
  std::vector<double> cv_error;
};

/// K-fold choice of the penalty constant A on a 10-point log grid spanning
/// two decades below the smallest A that zeroes every slope. Folds are
/// contiguous row blocks.
inline LassoCvResult choose_lasso_constant(const Matrix& x, const Vector& y, int folds) {
  learner_detail::check_xy(x, y);
  require(folds >= 2 && folds <= x.rows(), ErrorKind::validation,
          "cv folds must be in [2, n]");
  const Index n = x.rows();
  const Index p = x.cols();
  const Vector w = lasso_detail::penalty_weights(x);
  const Eigen::RowVectorXd xbar = x.colwise().mean();
  const Vector score = ((x.rowwise() - xbar).transpose() * (y.array() - y.mean()).matrix()) /
                       static_cast<double>(n);
  double a_max = 0.0;
  for (Index j = 0; j < p; ++j)
    if (w(j) > 0.0) a_max = std::max(a_max, std::abs(score(j)) / w(j));
  if (!(a_max > 0.0)) a_max = 1.0;

  LassoCvResult res;
  constexpr int kGrid = 10;
  for (int g = 0; g < kGrid; ++g)
    res.grid.push_back(a_max * std::pow(10.0, -2.0 * g / (kGrid - 1)));
  res.cv_error.assign(kGrid, 0.0);

  for (int f = 0; f < folds; ++f) {
    const Index lo = n * f / folds, hi = n * (f + 1) / folds;
    IndexSet train, test;
    for (Index i = 0; i < n; ++i) (i >= lo && i < hi ? test : train).push_back(i);
    const Matrix xtr = select_rows(x, train), xte = select_rows(x, test);
    const Vector ytr = select_rows(y, train), yte = select_rows(y, test);
    const lasso_detail::Problem prob(xtr, ytr);
    const Vector wtr = lasso_detail::penalty_weights(xtr);
    Vector b = Vector::Zero(p);
    for (int g = 0; g < kGrid; ++g) {
      auto fit = lasso_detail::solve(prob, wtr * res.grid[static_cast<std::size_t>(g)], b,
                                     kLassoTolerance, kLassoMaxSweeps, false);
      b = fit.coefficients.tail(p);
      const Vector pred = (xte * b).array() + fit.coefficients(0);
      res.cv_error[static_cast<std::size_t>(g)] +=
          (yte - pred).squaredNorm() / static_cast<double>(n);
    }
  }
  const auto best = std::min_element(res.cv_error.begin(), res.cv_error.end());
  res.chosen_a = res.grid[static_cast<std::size_t>(best - res.cv_error.begin())];
  return res;
}

/// Lasso with penalty constant A (see penalty_weights). With cv_folds set,
/// A is chosen by K-fold prediction error instead.
inline FittedPredictor fit_lasso(const Matrix& x, const Vector& y, double penalty_constant = 2.0,
                                 std::optional<int> cv_folds = std::nullopt) {
  learner_detail::check_xy(x, y);
  double a = penalty_constant;
  if (cv_folds) {
    a = choose_lasso_constant(x, y, *cv_folds).chosen_a;
  } else {
    require(a >= 0.0 && std::isfinite(a), ErrorKind::validation,
            "lasso penalty constant must be nonnegative");
  }
  auto fit = fit_lasso_penalties(x, y, lasso_detail::penalty_weights(x) * a);
  if (!fit.converged)
    fit.warnings.push_back("coordinate descent hit the sweep limit");
  return FittedPredictor(LearnerKind::lasso, x.cols(), LinearModel{fit.coefficients})
      .with_warnings(std::move(fit.warnings));
}

// ---------------------------------------------------------------------------
// Random forest (bagged CART)
// ---------------------------------------------------------------------------

struct ForestParams {
  int n_trees = 200;
  int mtry = 0;      // 0 -> ceil(p / 3)
  int min_leaf = 5;
  bool bootstrap = true;
  bool tune_oob = false;

  int resolved_mtry(Index p) const {
    return mtry > 0 ? mtry : static_cast<int>((p + 2) / 3);
  }
};

namespace forest_detail {

struct Builder {
  const Matrix& x;
  const Vector& y;
  int mtry;
  int min_leaf;
  Rng& rng;
  RegressionTree tree;
  std::vector<std::pair<double, double>> scratch;
  std::vector<int> features;

  int add_leaf(double value) {
    tree.feature.push_back(-1);
    tree.threshold.push_back(0.0);
    tree.left.push_back(-1);
    tree.right.push_back(-1);
    tree.value.push_back(value);
    return static_cast<int>(tree.size() - 1);
  }

  void sample_features() {
    const int p = static_cast<int>(x.cols());
    features.resize(static_cast<std::size_t>(p));
    std::iota(features.begin(), features.end(), 0);
    for (int i = 0; i < mtry; ++i) {
      const auto j = static_cast<std::size_t>(i) +
                     uniform_index(rng, static_cast<std::uint64_t>(p - i));
      std::swap(features[static_cast<std::size_t>(i)], features[j]);
    }
    features.resize(static_cast<std::size_t>(mtry));
    // Ascending order so ties resolve to the lowest feature index.
    std::sort(features.begin(), features.end());
  }

  // rows[lo, hi) belong to this node; returns the node id.
  int build(std::vector<Index>& rows, std::size_t lo, std::size_t hi) {
    const auto count = hi - lo;
    double sum = 0.0;
    double ymin = std::numeric_limits<double>::infinity();
    double ymax = -ymin;
    for (auto i = lo; i < hi; ++i) {
      const double v = y(rows[i]);
      sum += v;
      ymin = std::min(ymin, v);
      ymax = std::max(ymax, v);
    }
    const double mean = sum / static_cast<double>(count);
    if (count < 2 * static_cast<std::size_t>(min_leaf) || ymin == ymax) return add_leaf(mean);

    sample_features();
    const double parent = sum * sum / static_cast<double>(count);
    double best_gain = 0.0;
    int best_feature = -1;
    double best_threshold = 0.0;
    for (int f : features) {
      scratch.clear();
      for (auto i = lo; i < hi; ++i) scratch.emplace_back(x(rows[i], f), y(rows[i]));
      std::sort(scratch.begin(), scratch.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      double left_sum = 0.0;
      for (std::size_t k = 0; k + 1 < count; ++k) {
        left_sum += scratch[k].second;
        const std::size_t nl = k + 1, nr = count - nl;
        if (nl < static_cast<std::size_t>(min_leaf)) continue;
        if (nr < static_cast<std::size_t>(min_leaf)) break;
        if (scratch[k].first == scratch[k + 1].first) continue;
        const double right_sum = sum - left_sum;
        const double gain = left_sum * left_sum / static_cast<double>(nl) +
                            right_sum * right_sum / static_cast<double>(nr) - parent;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          best_threshold = 0.5 * (scratch[k].first + scratch[k + 1].first);
          // Guard against the midpoint rounding onto the upper value.
          if (best_threshold >= scratch[k + 1].first) best_threshold = scratch[k].first;
        }
      }
    }
    if (best_feature < 0) return add_leaf(mean);

    auto mid = std::partition(rows.begin() + static_cast<std::ptrdiff_t>(lo),
                              rows.begin() + static_cast<std::ptrdiff_t>(hi),
                              [&](Index r) { return x(r, best_feature) <= best_threshold; });
    const auto split = static_cast<std::size_t>(mid - rows.begin());
    const int node = add_leaf(mean);
    const auto k = static_cast<std::size_t>(node);
    tree.feature[k] = best_feature;
    tree.threshold[k] = best_threshold;
    const int l = build(rows, lo, split);
    tree.left[k] = l;
    const int r = build(rows, split, hi);
    tree.right[k] = r;
    return node;
  }
};

struct ForestFit {
  ForestModel model;
  double oob_mse = std::numeric_limits<double>::quiet_NaN();
};

inline ForestFit grow(const Matrix& x, const Vector& y, int n_trees, int mtry, int min_leaf,
                      bool bootstrap, std::uint64_t seed, bool want_oob) {
  const Index n = x.rows();
  ForestFit out;
  out.model.trees.reserve(static_cast<std::size_t>(n_trees));
  Vector oob_sum = Vector::Zero(n);
  Eigen::VectorXi oob_count = Eigen::VectorXi::Zero(n);
  std::vector<Index> rows(static_cast<std::size_t>(n));
  std::vector<char> in_bag(static_cast<std::size_t>(n));
  for (int t = 0; t < n_trees; ++t) {
    Rng rng = make_rng(seed, "tree", static_cast<std::uint64_t>(t));
    std::fill(in_bag.begin(), in_bag.end(), 0);
    for (Index i = 0; i < n; ++i) {
      const Index r = bootstrap ? static_cast<Index>(uniform_index(rng, static_cast<std::uint64_t>(n))) : i;
      rows[static_cast<std::size_t>(i)] = r;
      in_bag[static_cast<std::size_t>(r)] = 1;
    }
    Builder b{x, y, mtry, min_leaf, rng, {}, {}, {}};
    b.build(rows, 0, rows.size());
    if (want_oob)
      for (Index i = 0; i < n; ++i)
        if (!in_bag[static_cast<std::size_t>(i)]) {
          oob_sum(i) += b.tree.predict(x.row(i));
          ++oob_count(i);
        }
    out.model.trees.push_back(std::move(b.tree));
  }
  if (want_oob) {
    double se = 0.0;
    Index m = 0;
    for (Index i = 0; i < n; ++i)
      if (oob_count(i) > 0) {
        const double r = y(i) - oob_sum(i) / oob_count(i);
        se += r * r;
        ++m;
      }
    out.oob_mse = m > 0 ? se / static_cast<double>(m) : std::numeric_limits<double>::infinity();
  }
  return out;
}

}  // namespace forest_detail

/// Bagged regression trees with variance-reduction splits. Deterministic
/// given `seed`. With params.tune_oob the (mtry, min_leaf) pair is chosen
/// by out-of-bag error over {ceil(p/3), ceil(p/2), p} x {1, 5, 10}.
inline FittedPredictor fit_forest(const Matrix& x, const Vector& y, const ForestParams& params,
                                  std::uint64_t seed) {
  learner_detail::check_xy(x, y);
  const Index p = x.cols();
  require(params.n_trees >= 1, ErrorKind::validation, "n_trees must be >= 1");
  require(params.min_leaf >= 1, ErrorKind::validation, "min_leaf must be >= 1");
  require(params.min_leaf <= x.rows(), ErrorKind::estimation,
          "min_leaf (" + std::to_string(params.min_leaf) + ") exceeds the number of rows (" +
              std::to_string(x.rows()) + ")");
  int mtry = params.resolved_mtry(p);
  int min_leaf = params.min_leaf;
  require(mtry >= 1 && mtry <= p, ErrorKind::validation, "mtry must be in [1, p]");

  if (params.tune_oob) {
    require(params.bootstrap, ErrorKind::validation, "OOB tuning requires bootstrap");
    const int grid_mtry[] = {static_cast<int>((p + 2) / 3), static_cast<int>((p + 1) / 2),
                             static_cast<int>(p)};
    double best = std::numeric_limits<double>::infinity();
    for (int m : grid_mtry)
      for (int leaf : {1, 5, 10}) {
        if (leaf > x.rows()) continue;
        const auto fit = forest_detail::grow(x, y, params.n_trees, m, leaf, true, seed, true);
        if (fit.oob_mse < best) {
          best = fit.oob_mse;
          mtry = m;
          min_leaf = leaf;
        }
      }
  }
  auto fit = forest_detail::grow(x, y, params.n_trees, mtry, min_leaf, params.bootstrap, seed,
                                 false);
  return FittedPredictor(LearnerKind::forest, p, std::move(fit.model));
}

/// Out-of-bag mean squared error of a forest grown with these settings.
inline double forest_oob_mse(const Matrix& x, const Vector& y, const ForestParams& params,
                             std::uint64_t seed) {
  learner_detail::check_xy(x, y);
  return forest_detail::grow(x, y, params.n_trees, params.resolved_mtry(x.cols()),
                             params.min_leaf, true, seed, true)
      .oob_mse;
}

// ---------------------------------------------------------------------------
// Uniform learner spec
// ---------------------------------------------------------------------------

struct LearnerSpec {
  LearnerKind kind = LearnerKind::forest;
  double ridge = 0.0;
  double lasso_a = 2.0;
  std::optional<int> lasso_cv_folds;
  ForestParams forest;
};

inline FittedPredictor fit_learner(const LearnerSpec& spec, const Matrix& x, const Vector& y,
                                   std::uint64_t seed) {
  switch (spec.kind) {
    case LearnerKind::linear: return fit_linear(x, y, spec.ridge);
    case LearnerKind::lasso: return fit_lasso(x, y, spec.lasso_a, spec.lasso_cv_folds);
    case LearnerKind::forest: return fit_forest(x, y, spec.forest, seed);
  }
  fail(ErrorKind::internal, "unreachable learner kind");
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

inline constexpr int kPredictorFormatVersion = 1;

inline nlohmann::json to_json(const FittedPredictor& f) {
  nlohmann::json j;
  j["version"] = kPredictorFormatVersion;
  j["kind"] = std::string(to_string(f.kind()));
  j["group_id"] = f.group_id();
  j["fit_scope"] = std::string(to_string(f.scope()));
  j["p"] = f.p();
  if (const auto* lin = std::get_if<LinearModel>(&f.payload())) {
    j["payload"]["coefficients"] =
        std::vector<double>(lin->coefficients.data(),
                            lin->coefficients.data() + lin->coefficients.size());
  } else {
    auto& trees = j["payload"]["trees"];
    trees = nlohmann::json::array();
    for (const auto& t : std::get<ForestModel>(f.payload()).trees)
      trees.push_back({{"feature", t.feature},
                       {"threshold", t.threshold},
                       {"left", t.left},
                       {"right", t.right},
                       {"value", t.value}});
  }
  return j;
}

inline FittedPredictor predictor_from_json(const nlohmann::json& j) {
  try {
    require(j.at("version").get<int>() == kPredictorFormatVersion, ErrorKind::parse,
            "unsupported predictor format version");
    const auto kind = learner_kind_from_string(j.at("kind").get<std::string>());
    const auto p = j.at("p").get<Index>();
    const auto scope = fit_scope_from_string(j.at("fit_scope").get<std::string>());
    const int gid = j.at("group_id").get<int>();
    const auto& payload = j.at("payload");
    if (kind == LearnerKind::forest) {
      ForestModel m;
      for (const auto& t : payload.at("trees")) {
        RegressionTree tree;
        tree.feature = t.at("feature").get<std::vector<int>>();
        tree.threshold = t.at("threshold").get<std::vector<double>>();
        tree.left = t.at("left").get<std::vector<int>>();
        tree.right = t.at("right").get<std::vector<int>>();
        tree.value = t.at("value").get<std::vector<double>>();
        const auto sz = tree.feature.size();
        require(sz > 0 && tree.threshold.size() == sz && tree.left.size() == sz &&
                    tree.right.size() == sz && tree.value.size() == sz,
                ErrorKind::parse, "malformed tree payload");
        for (std::size_t k = 0; k < sz; ++k)
          if (tree.feature[k] >= 0)
            require(tree.feature[k] < p && tree.left[k] > 0 && tree.right[k] > 0 &&
                        static_cast<std::size_t>(tree.left[k]) < sz &&
                        static_cast<std::size_t>(tree.right[k]) < sz,
                    ErrorKind::parse, "malformed tree node");
        m.trees.push_back(std::move(tree));
      }
      require(!m.trees.empty(), ErrorKind::parse, "forest payload has no trees");
      return FittedPredictor(kind, p, std::move(m), gid, scope);
    }
    const auto c = payload.at("coefficients").get<std::vector<double>>();
    require(static_cast<Index>(c.size()) == p + 1, ErrorKind::parse,
            "linear payload must have p + 1 coefficients");
    return FittedPredictor(kind, p, LinearModel{Eigen::Map<const Vector>(c.data(), p + 1)}, gid,
                           scope);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("malformed predictor JSON: ") + e.what());
  }
}

}  // namespace drl
