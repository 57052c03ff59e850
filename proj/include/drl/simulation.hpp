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
#include "drl/evaluation.hpp"
#include "drl/gamma.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace drl {

enum class Design { interaction, indicator, highdim_shared };

inline std::string_view to_string(Design d) {
  switch (d) {
    case Design::interaction: return "interaction";
    case Design::indicator: return "indicator";
    case Design::highdim_shared: return "highdim_shared";
  }
  return "interaction";
}

struct ScenarioSpec {
  Design design = Design::interaction;
  Index L = 2;
  /// Rows per group. When unset, group sizes split n_P by q_sou.
  std::optional<Index> n_per_group;
  Vector q_sou;
  Index n_P = 4000;
  Index n_Q = 10000;
  std::uint64_t seed = 0;
  /// Forces every coefficient to 0 (interaction and indicator designs).
  bool zero_coefficients = false;
  /// Mean of the target covariates (indicator design); empty means no shift.
  Vector target_mean;
  Index p = 200;  // highdim_shared only
};

/// Exact conditional means of a drawn scenario.
class Truth {
 public:
  virtual ~Truth() = default;
  virtual Index L() const = 0;
  virtual Index p() const = 0;
  /// f^(l)(x) for every row, l in [0, L).
  virtual Vector eval(Index l, const Matrix& x) const = 0;
  /// Target conditional mean when it is not a source mixture.
  virtual std::optional<Vector> eval_target(const Matrix&) const { return std::nullopt; }

  Matrix eval_all(const Matrix& x) const {
    Matrix f(x.rows(), L());
    for (Index l = 0; l < L(); ++l) f.col(l) = eval(l, x);
    return f;
  }
};

/// f(x) = sum_j a_j x_j + sum_{j<=k} b_jk (x_j x_k - 1[j=k]).
class InteractionTruth final : public Truth {
 public:
  InteractionTruth(Matrix alpha, std::vector<Matrix> beta)
      : alpha_(std::move(alpha)), beta_(std::move(beta)) {}

  Index L() const override { return alpha_.rows(); }
  Index p() const override { return alpha_.cols(); }
  const Matrix& alpha() const { return alpha_; }
  const Matrix& beta(Index l) const { return beta_[static_cast<std::size_t>(l)]; }

  Vector eval(Index l, const Matrix& x) const override {
    const Matrix& b = beta(l);
    Vector out = x * alpha_.row(l).transpose();
    for (Index i = 0; i < x.rows(); ++i) {
      double s = 0.0;
      for (Index j = 0; j < p(); ++j)
        for (Index k = j; k < p(); ++k)
          if (b(j, k) != 0.0) s += b(j, k) * (x(i, j) * x(i, k) - (j == k ? 1.0 : 0.0));
      out(i) += s;
    }
    return out;
  }

 private:
  Matrix alpha_;
  std::vector<Matrix> beta_;  // upper triangular p x p per group
};

/// f(x) = sum_j a_j 1[x_j > 0] + sum_{j<=k} b_jk 1[x_j > 0] 1[x_k > 0]
///        - sum_{j<=k} c_jk 1[x_j < 2] 1[x_k > -2].
class IndicatorTruth final : public Truth {
 public:
  IndicatorTruth(Matrix alpha, std::vector<Matrix> beta, std::vector<Matrix> gamma)
      : alpha_(std::move(alpha)), beta_(std::move(beta)), gamma_(std::move(gamma)) {}

  Index L() const override { return alpha_.rows(); }
  Index p() const override { return alpha_.cols(); }
  const Matrix& alpha() const { return alpha_; }
  const Matrix& beta(Index l) const { return beta_[static_cast<std::size_t>(l)]; }
  const Matrix& gamma(Index l) const { return gamma_[static_cast<std::size_t>(l)]; }

  Vector eval(Index l, const Matrix& x) const override {
    const Matrix& b = beta(l);
    const Matrix& c = gamma(l);
    Vector out(x.rows());
    for (Index i = 0; i < x.rows(); ++i) {
      double s = 0.0;
      for (Index j = 0; j < p(); ++j) {
        if (x(i, j) > 0.0) s += alpha_(l, j);
        for (Index k = j; k < p(); ++k) {
          if (x(i, j) > 0.0 && x(i, k) > 0.0) s += b(j, k);
          if (x(i, j) < 2.0 && x(i, k) > -2.0) s -= c(j, k);
        }
      }
      out(i) = s;
    }
    return out;
  }

 private:
  Matrix alpha_;
  std::vector<Matrix> beta_, gamma_;
};

/// Linear models sharing a base component; rows of `coef` are slopes.
class LinearTruth final : public Truth {
 public:
  LinearTruth(Matrix coef, Vector target_coef, Vector base)
      : coef_(std::move(coef)), target_(std::move(target_coef)), base_(std::move(base)) {}

  Index L() const override { return coef_.rows(); }
  Index p() const override { return coef_.cols(); }
  const Matrix& coefficients() const { return coef_; }
  const Vector& target_coefficients() const { return target_; }
  const Vector& base_coefficients() const { return base_; }

  Vector eval(Index l, const Matrix& x) const override { return x * coef_.row(l).transpose(); }
  std::optional<Vector> eval_target(const Matrix& x) const override { return Vector(x * target_); }

 private:
  Matrix coef_;
  Vector target_, base_;
};

/// A drawn scenario: training groups, unlabeled target covariates, the
/// truth, and samplers for fresh covariates.
struct Scenario {
  ScenarioSpec spec;
  std::vector<SourceGroup> groups;
  TargetSample target;
  std::shared_ptr<const Truth> truth;

  Index p() const { return truth->p(); }

  /// n draws from the target covariate law.
  Matrix sample_target_x(Index n, Rng& rng) const {
    Matrix x = standard_normal_matrix(n, p(), rng);
    if (spec.target_mean.size() == p()) x.rowwise() += spec.target_mean.transpose();
    return x;
  }

  /// Outcomes for group l at x: f^(l)(x) + N(0, 1).
  Vector sample_outcomes(Index l, const Matrix& x, Rng& rng) const {
    NormalSampler norm;
    Vector y = truth->eval(l, x);
    for (Index i = 0; i < y.size(); ++i) y(i) += norm(rng);
    return y;
  }

  /// A labeled target set whose outcome law is the q-mixture of the source
  /// conditionals: each row picks a group with probability q.
  LabeledSet sample_mixture(const MixtureSpec& q, Index n, Rng& rng) const {
    LabeledSet s;
    s.x = sample_target_x(n, rng);
    s.y.resize(n);
    NormalSampler norm;
    const Matrix f = truth->eval_all(s.x);
    for (Index i = 0; i < n; ++i) {
      const double u = uniform01(rng);
      double cum = 0.0;
      Index l = 0;
      for (; l + 1 < q.size(); ++l) {
        cum += q[l];
        if (u < cum) break;
      }
      s.y(i) = f(i, l) + norm(rng);
    }
    return s;
  }
};

/// Group sizes: n_per_group each, or n_P split by q_sou with the remainder
/// going to the largest fractional parts.
inline std::vector<Index> group_sizes(const ScenarioSpec& s) {
  std::vector<Index> n(static_cast<std::size_t>(s.L));
  if (s.n_per_group) {
    std::fill(n.begin(), n.end(), *s.n_per_group);
    return n;
  }
  require(s.q_sou.size() == s.L, ErrorKind::validation, "q_sou must have L entries");
  const MixtureSpec q(s.q_sou);
  Index used = 0;
  std::vector<std::pair<double, Index>> frac;
  for (Index l = 0; l < s.L; ++l) {
    const double exact = q[l] * static_cast<double>(s.n_P);
    n[static_cast<std::size_t>(l)] = static_cast<Index>(std::floor(exact));
    used += n[static_cast<std::size_t>(l)];
    frac.emplace_back(-(exact - std::floor(exact)), l);
  }
  std::sort(frac.begin(), frac.end());
  for (Index k = 0; k < s.n_P - used; ++k)
    ++n[static_cast<std::size_t>(frac[static_cast<std::size_t>(k)].second)];
  return n;
}

namespace simulation_detail {

inline void draw_data(Scenario& sc) {
  const auto sizes = group_sizes(sc.spec);
  for (Index l = 0; l < sc.spec.L; ++l) {
    Rng rng = make_rng(sc.spec.seed, "source", static_cast<std::uint64_t>(l));
    const Index n = sizes[static_cast<std::size_t>(l)];
    Matrix x = standard_normal_matrix(n, sc.p(), rng);
    Vector y = sc.sample_outcomes(l, x, rng);
    sc.groups.push_back(SourceGroup::make(static_cast<int>(l + 1), std::move(x), std::move(y),
                                          static_cast<long long>(l + 1)));
  }
  Rng rng = make_rng(sc.spec.seed, "target");
  sc.target.covariates = sc.sample_target_x(sc.spec.n_Q, rng);
}

}  // namespace simulation_detail

/// Coefficient draw over {0.4, 0.2, 0} with probabilities (0.3, 0.4, 0.3).
inline double draw_interaction_coefficient(Rng& rng) {
  const double u = uniform01(rng);
  if (u < 0.3) return 0.4;
  if (u < 0.7) return 0.2;
  return 0.0;
}

inline constexpr std::array<double, 4> kIndicatorLevels = {8.0, 1.6, 0.0, -4.0};

inline double draw_indicator_coefficient(Rng& rng) {
  return kIndicatorLevels[uniform_index(rng, kIndicatorLevels.size())];
}

/// p = 5, X ~ N(0, I); linear and centered pairwise-product terms.
inline Scenario gen_interaction(const ScenarioSpec& spec) {
  require(spec.design == Design::interaction, ErrorKind::validation, "not an interaction spec");
  constexpr Index p = 5;
  Rng rng = make_rng(spec.seed, "coefficients");
  Matrix alpha = Matrix::Zero(spec.L, p);
  std::vector<Matrix> beta;
  for (Index l = 0; l < spec.L; ++l) {
    for (Index j = 0; j < p; ++j)
      alpha(l, j) = spec.zero_coefficients ? 0.0 : draw_interaction_coefficient(rng);
    Matrix b = Matrix::Zero(p, p);
    for (Index j = 0; j < p; ++j)
      for (Index k = j; k < p; ++k)
        b(j, k) = spec.zero_coefficients ? 0.0 : draw_interaction_coefficient(rng);
    beta.push_back(std::move(b));
  }
  Scenario sc;
  sc.spec = spec;
  sc.spec.target_mean = Vector();
  sc.truth = std::make_shared<InteractionTruth>(std::move(alpha), std::move(beta));
  simulation_detail::draw_data(sc);
  return sc;
}

/// p = 4; indicator main effects and interactions, coefficients uniform
/// over {8, 1.6, 0, -4}. Sources draw X ~ N(0, I); the target is shifted
/// by spec.target_mean.
inline Scenario gen_indicator(const ScenarioSpec& spec) {
  require(spec.design == Design::indicator, ErrorKind::validation, "not an indicator spec");
  constexpr Index p = 4;
  require(spec.target_mean.size() == 0 || spec.target_mean.size() == p, ErrorKind::validation,
          "target_mean must have 4 entries");
  Rng rng = make_rng(spec.seed, "coefficients");
  Matrix alpha = Matrix::Zero(spec.L, p);
  std::vector<Matrix> beta, gamma;
  auto draw = [&] { return spec.zero_coefficients ? 0.0 : draw_indicator_coefficient(rng); };
  for (Index l = 0; l < spec.L; ++l) {
    for (Index j = 0; j < p; ++j) alpha(l, j) = draw();
    Matrix b = Matrix::Zero(p, p), c = Matrix::Zero(p, p);
    for (Index j = 0; j < p; ++j)
      for (Index k = j; k < p; ++k) b(j, k) = draw();
    for (Index j = 0; j < p; ++j)
      for (Index k = j; k < p; ++k) c(j, k) = draw();
    beta.push_back(std::move(b));
    gamma.push_back(std::move(c));
  }
  Scenario sc;
  sc.spec = spec;
  sc.truth = std::make_shared<IndicatorTruth>(std::move(alpha), std::move(beta), std::move(gamma));
  simulation_detail::draw_data(sc);
  return sc;
}

/// 0.5 on the first ten of p coordinates, plus N(0, 1) coefficients on
/// coordinates 11..13 drawn per group and once more for the target.
inline Scenario gen_highdim_shared(const ScenarioSpec& spec) {
  require(spec.design == Design::highdim_shared, ErrorKind::validation,
          "not a highdim_shared spec");
  require(spec.p >= 13, ErrorKind::validation, "highdim_shared needs p >= 13");
  Rng rng = make_rng(spec.seed, "coefficients");
  NormalSampler norm;
  Vector base = Vector::Zero(spec.p);
  base.head(10).setConstant(0.5);
  Matrix coef = base.transpose().replicate(spec.L, 1);
  for (Index l = 0; l < spec.L; ++l)
    for (Index j = 10; j < 13; ++j) coef(l, j) = norm(rng);
  Vector target = base;
  for (Index j = 10; j < 13; ++j) target(j) = norm(rng);
  Scenario sc;
  sc.spec = spec;
  sc.spec.target_mean = Vector();
  sc.truth = std::make_shared<LinearTruth>(std::move(coef), std::move(target), std::move(base));
  simulation_detail::draw_data(sc);
  return sc;
}

inline Scenario generate(const ScenarioSpec& spec) {
  switch (spec.design) {
    case Design::interaction: return gen_interaction(spec);
    case Design::indicator: return gen_indicator(spec);
    case Design::highdim_shared: return gen_highdim_shared(spec);
  }
  fail(ErrorKind::internal, "unknown design");
}

/// Monte Carlo Gamma of the exact models under the target covariate law.
inline Matrix truth_gamma(const Scenario& sc, Index n, std::uint64_t seed) {
  Rng rng = make_rng(seed, "truth_gamma");
  const Matrix x = sc.sample_target_x(n, rng);
  return symmetric_gram(sc.truth->eval_all(x));
}

}  // namespace drl
