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
#include <string>
#include <vector>

namespace drl {

enum class RatioKind { identity, logistic };

inline std::string_view to_string(RatioKind k) {
  return k == RatioKind::identity ? "identity" : "logistic";
}

inline RatioKind ratio_kind_from_string(std::string_view s) {
  if (s == "identity") return RatioKind::identity;
  if (s == "logistic") return RatioKind::logistic;
  fail(ErrorKind::validation, "unknown density ratio kind '" + std::string(s) + "'");
}

/// Clip applied to x'gamma before exponentiation.
inline constexpr double kRatioLinkClip = 30.0;
/// Trust bound on |gamma| when the classes separate.
inline constexpr double kRatioTrustBound = 1e3;

/// Estimated dQ/dP for one (group, half): size_ratio * exp(x'gamma).
struct DensityRatioModel {
  RatioKind kind = RatioKind::identity;
  Vector gamma;  // intercept first; empty for identity
  double size_ratio = 1.0;
  int group_id = 0;
  FitScope scope = FitScope::half_a;
  int iterations = 0;
  bool converged = true;
  std::vector<std::string> warnings;

  static DensityRatioModel identity(int group_id, FitScope scope) {
    DensityRatioModel m;
    m.group_id = group_id;
    m.scope = scope;
    return m;
  }

  Index p() const { return gamma.size() > 0 ? gamma.size() - 1 : 0; }
};

inline Vector eval_ratio(const DensityRatioModel& m, const Matrix& x) {
  if (m.kind == RatioKind::identity) return Vector::Ones(x.rows());
  require(x.cols() == m.p(), ErrorKind::shape,
          "ratio model expects " + std::to_string(m.p()) + " columns, got " +
              std::to_string(x.cols()));
  Vector z = (x * m.gamma.tail(m.p())).array() + m.gamma(0);
  return m.size_ratio * z.array().max(-kRatioLinkClip).min(kRatioLinkClip).exp();
}

namespace ratio_detail {

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Mean negative log-likelihood of labels t given design d (intercept column
// included) and coefficients g.
inline double nll(const Matrix& d, const Vector& t, const Vector& g) {
  const Vector z = d * g;
  double s = 0.0;
  for (Index i = 0; i < z.size(); ++i) {
    // log(1 + e^z) - t z, computed stably.
    const double zi = z(i);
    const double softplus = zi > 0 ? zi + std::log1p(std::exp(-zi)) : std::log1p(std::exp(zi));
    s += softplus - t(i) * zi;
  }
  return s / static_cast<double>(z.size());
}

inline Vector gradient(const Matrix& d, const Vector& t, const Vector& g) {
  const Vector z = d * g;
  Vector r(z.size());
  for (Index i = 0; i < z.size(); ++i) r(i) = sigmoid(z(i)) - t(i);
  return d.transpose() * r / static_cast<double>(z.size());
}

}  // namespace ratio_detail

/// Logistic regression of target membership (label 1) against source-half
/// membership (label 0); the fitted odds times |half|/n_Q estimate dQ/dP.
/// With l1_penalty = A > 0 the slopes carry the penalty
/// A * sqrt(log(p + 1) / N) * |D_j|_2 / sqrt(N), N = |half| + n_Q, and the
/// fit uses accelerated proximal gradient; otherwise Newton (IRLS).
inline DensityRatioModel fit_bayes_logistic(const Matrix& half, const Matrix& target,
                                            double l1_penalty = 0.0, int max_iter = 100,
                                            int group_id = 0,
                                            FitScope scope = FitScope::half_a) {
  require(half.rows() > 0 && target.rows() > 0, ErrorKind::insufficient_data,
          "density ratio fit needs non-empty source half and target");
  require(half.cols() == target.cols(), ErrorKind::shape,
          "source half and target have different column counts");
  require(l1_penalty >= 0.0 && std::isfinite(l1_penalty), ErrorKind::validation,
          "l1_penalty must be a nonnegative finite number");
  require(max_iter >= 1, ErrorKind::validation, "max_iter must be >= 1");
  require(half.allFinite() && target.allFinite(), ErrorKind::numeric,
          "non-finite covariates in density ratio fit");

  const Index p = half.cols();
  const Index n0 = half.rows(), n1 = target.rows(), n = n0 + n1;
  Matrix d(n, p + 1);
  d.col(0).setOnes();
  d.block(0, 1, n0, p) = half;
  d.block(n0, 1, n1, p) = target;
  Vector t(n);
  t.head(n0).setZero();
  t.tail(n1).setOnes();

  DensityRatioModel m;
  m.kind = RatioKind::logistic;
  m.size_ratio = static_cast<double>(n0) / static_cast<double>(n1);
  m.group_id = group_id;
  m.scope = scope;
  m.converged = false;

  Vector g = Vector::Zero(p + 1);
  g(0) = std::log(static_cast<double>(n1) / static_cast<double>(n0));

  if (l1_penalty == 0.0) {
    for (int it = 1; it <= max_iter; ++it) {
      const Vector z = d * g;
      Vector w(n), r(n);
      for (Index i = 0; i < n; ++i) {
        const double pi = ratio_detail::sigmoid(z(i));
        w(i) = std::max(pi * (1.0 - pi), 1e-12);
        r(i) = t(i) - pi;
      }
      Matrix h = d.transpose() * w.asDiagonal() * d;
      h.diagonal().array() += 1e-10;
      const Vector step = h.ldlt().solve(d.transpose() * r);
      g += step;
      m.iterations = it;
      if (!step.allFinite()) break;
      if (step.cwiseAbs().maxCoeff() < 1e-8) {
        m.converged = true;
        break;
      }
      if (g.norm() > kRatioTrustBound) break;
    }
  } else {
    const double nd = static_cast<double>(n);
    Vector lambda(p + 1);
    lambda(0) = 0.0;
    const double base = l1_penalty * std::sqrt(std::log(static_cast<double>(p) + 1.0) / nd);
    for (Index j = 0; j < p; ++j) lambda(j + 1) = base * d.col(j + 1).norm() / std::sqrt(nd);
    // Lipschitz constant of the mean logistic loss gradient.
    const Matrix gram = d.transpose() * d / nd;
    const double lip =
        0.25 * Eigen::SelfAdjointEigenSolver<Matrix>(gram, Eigen::EigenvaluesOnly)
                   .eigenvalues()
                   .maxCoeff();
    const double step = 1.0 / std::max(lip, 1e-12);
    Vector y = g, prev = g;
    double tk = 1.0;
    for (int it = 1; it <= max_iter; ++it) {
      Vector next = y - step * ratio_detail::gradient(d, t, y);
      for (Index j = 1; j <= p; ++j) {
        const double thr = step * lambda(j);
        next(j) = next(j) > thr ? next(j) - thr : (next(j) < -thr ? next(j) + thr : 0.0);
      }
      const double change = (next - prev).cwiseAbs().maxCoeff();
      const double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * tk * tk));
      // Restart momentum when it points uphill.
      if ((y - next).dot(next - prev) > 0.0) {
        y = next;
        tk = 1.0;
      } else {
        y = next + ((tk - 1.0) / tn) * (next - prev);
        tk = tn;
      }
      prev = next;
      m.iterations = it;
      if (change < 1e-8) {
        m.converged = true;
        break;
      }
    }
    g = prev;
  }

  if (!g.allFinite() || (!m.converged && g.norm() > kRatioTrustBound)) {
    m.warnings.push_back("classes appear separable; coefficients clipped at norm " +
                         std::to_string(kRatioTrustBound));
    if (!g.allFinite()) g = g.unaryExpr([](double v) { return std::isfinite(v) ? v : 0.0; });
    const double nrm = g.norm();
    if (nrm > kRatioTrustBound) g *= kRatioTrustBound / nrm;
  } else if (!m.converged) {
    m.warnings.push_back("logistic fit reached max_iter without converging");
  }
  m.gamma = std::move(g);
  return m;
}

inline nlohmann::json to_json(const DensityRatioModel& m) {
  nlohmann::json j;
  j["version"] = 1;
  j["kind"] = std::string(to_string(m.kind));
  j["gamma"] = std::vector<double>(m.gamma.data(), m.gamma.data() + m.gamma.size());
  j["size_ratio"] = m.size_ratio;
  j["group_id"] = m.group_id;
  j["fit_scope"] = std::string(to_string(m.scope));
  return j;
}

inline DensityRatioModel ratio_from_json(const nlohmann::json& j) {
  try {
    DensityRatioModel m;
    m.kind = ratio_kind_from_string(j.at("kind").get<std::string>());
    const auto g = j.at("gamma").get<std::vector<double>>();
    m.gamma = Eigen::Map<const Vector>(g.data(), static_cast<Index>(g.size()));
    m.size_ratio = j.at("size_ratio").get<double>();
    m.group_id = j.at("group_id").get<int>();
    m.scope = fit_scope_from_string(j.at("fit_scope").get<std::string>());
    require(m.kind == RatioKind::identity || m.gamma.size() >= 1, ErrorKind::parse,
            "logistic ratio model without coefficients");
    require(m.size_ratio > 0.0 && std::isfinite(m.size_ratio), ErrorKind::parse,
            "size_ratio must be positive");
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("malformed ratio JSON: ") + e.what());
  }
}

}  // namespace drl
