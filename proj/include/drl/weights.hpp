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
#include "drl/gamma.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

namespace drl {

enum class HKind { full_simplex, l2_ball, singleton };

/// Prior set H of admissible mixture weights.
class UncertaintySet {
 public:
  static UncertaintySet full_simplex(Index l) {
    require(l >= 1, ErrorKind::validation, "simplex dimension must be >= 1");
    UncertaintySet h;
    h.kind_ = HKind::full_simplex;
    h.dim_ = l;
    return h;
  }

  /// {q in simplex : |q - center|_2 <= r}, r = rho * sqrt(L) when scaled.
  static UncertaintySet l2_ball(MixtureSpec center, double rho, bool scaled = true) {
    require(rho >= 0.0 && std::isfinite(rho), ErrorKind::validation,
            "ball radius must be nonnegative");
    UncertaintySet h;
    h.kind_ = HKind::l2_ball;
    h.dim_ = center.size();
    h.point_ = std::move(center);
    h.rho_ = rho;
    h.scaled_ = scaled;
    return h;
  }

  static UncertaintySet singleton(MixtureSpec q) {
    UncertaintySet h;
    h.kind_ = HKind::singleton;
    h.dim_ = q.size();
    h.point_ = std::move(q);
    return h;
  }

  HKind kind() const { return kind_; }
  Index dim() const { return dim_; }
  const MixtureSpec& center() const { return point_; }
  const MixtureSpec& point() const { return point_; }
  double rho() const { return rho_; }
  bool scaled() const { return scaled_; }

  double radius() const {
    return scaled_ ? rho_ * std::sqrt(static_cast<double>(dim_)) : rho_;
  }

  /// Membership up to `tol`.
  bool contains(const Vector& q, double tol = 1e-9) const {
    if (q.size() != dim_) return false;
    if ((q.array() < -tol).any() || std::abs(q.sum() - 1.0) > tol) return false;
    switch (kind_) {
      case HKind::full_simplex: return true;
      case HKind::l2_ball: return (q - point_.weights()).norm() <= radius() + tol;
      case HKind::singleton: return (q - point_.weights()).cwiseAbs().maxCoeff() <= tol;
    }
    return false;
  }

 private:
  HKind kind_ = HKind::full_simplex;
  Index dim_ = 0;
  MixtureSpec point_;
  double rho_ = 0.0;
  bool scaled_ = true;
};

/// Euclidean projection onto the probability simplex (sort and threshold).
inline Vector project_simplex_vector(const Vector& v) {
  require(v.size() >= 1 && v.allFinite(), ErrorKind::validation,
          "projection input must be a finite non-empty vector");
  std::vector<double> u(v.data(), v.data() + v.size());
  std::sort(u.begin(), u.end(), std::greater<>());
  double cum = 0.0, tau = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    cum += u[k];
    const double t = (cum - 1.0) / static_cast<double>(k + 1);
    if (u[k] - t > 0.0) tau = t;
  }
  return (v.array() - tau).max(0.0);
}

inline MixtureSpec project_simplex(const Vector& v) {
  return MixtureSpec::normalized(project_simplex_vector(v));
}

inline Vector project_ball(const Vector& v, const Vector& center, double r) {
  const Vector d = v - center;
  const double n = d.norm();
  return n <= r ? v : Vector(center + d * (r / n));
}

inline constexpr int kDykstraMaxSweeps = 10000;

/// Euclidean projection onto H. Ball-simplex intersections use Dykstra's
/// alternating projections.
inline Vector project_H_vector(const Vector& v, const UncertaintySet& h) {
  require(v.size() == h.dim(), ErrorKind::shape, "projection input has the wrong length");
  require(v.allFinite(), ErrorKind::validation, "projection input must be finite");
  switch (h.kind()) {
    case HKind::full_simplex: return project_simplex_vector(v);
    case HKind::singleton: return h.point().weights();
    case HKind::l2_ball: break;
  }
  const Vector& c = h.center().weights();
  const double r = h.radius();
  Vector s = project_simplex_vector(v);
  if ((s - c).norm() <= r) return s;
  Vector b = project_ball(v, c, r);
  if ((b.array() >= 0.0).all() && std::abs(b.sum() - 1.0) <= 1e-15 * b.size()) return b;

  Vector x = v, p = Vector::Zero(v.size()), q = Vector::Zero(v.size());
  for (int sweep = 0; sweep < kDykstraMaxSweeps; ++sweep) {
    const Vector y = project_simplex_vector(x + p);
    p = x + p - y;
    const Vector next = project_ball(y + q, c, r);
    q = y + q - next;
    const double change = (next - x).cwiseAbs().maxCoeff();
    x = next;
    if (change < 1e-13 && (x - y).cwiseAbs().maxCoeff() < 1e-11) {
      // Land exactly on the simplex; the ball slack absorbs the rounding.
      return project_simplex_vector(x);
    }
  }
  fail(ErrorKind::convergence, "Dykstra projection did not converge in " +
                                   std::to_string(kDykstraMaxSweeps) + " sweeps");
}

inline MixtureSpec project_H(const Vector& v, const UncertaintySet& h) {
  return MixtureSpec::normalized(project_H_vector(v, h));
}

/// Largest distance between two points of H. For balls that poke out of the
/// simplex this is the upper bound min(2r, sqrt(2)).
inline double diameter(const UncertaintySet& h) {
  const double simplex = h.dim() >= 2 ? std::sqrt(2.0) : 0.0;
  switch (h.kind()) {
    case HKind::full_simplex: return simplex;
    case HKind::singleton: return 0.0;
    case HKind::l2_ball: return std::min(2.0 * h.radius(), simplex);
  }
  return simplex;
}

/// True when the ball lies inside the simplex, so diameter() is exact.
inline bool ball_inside_simplex(const UncertaintySet& h) {
  if (h.kind() != HKind::l2_ball) return false;
  const double l = static_cast<double>(h.dim());
  return h.center().weights().minCoeff() >= h.radius() * std::sqrt((l - 1.0) / l);
}

struct SolveOptions {
  bool closed_form_l2 = true;  // exact formula for L = 2 on the full simplex
  bool polish = true;          // active-set refinement on the full simplex
  int max_iter = 100000;
  double tol = 1e-10;
};

struct WeightSolution {
  MixtureSpec q;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
  bool flat = false;
  std::vector<Index> active_set;
  std::string method;
};

namespace weights_detail {

inline std::vector<Index> support(const Vector& q, double tol = 1e-9) {
  std::vector<Index> s;
  for (Index i = 0; i < q.size(); ++i)
    if (q(i) > tol) s.push_back(i);
  return s;
}

// Smallest eigenvalue of G restricted to {d : sum d = 0, supp d in S}.
inline double face_min_eigenvalue(const Matrix& g, const std::vector<Index>& s) {
  const auto m = static_cast<Index>(s.size());
  if (m <= 1) return std::numeric_limits<double>::infinity();
  // Basis e_{s0} - e_{sj}, orthonormalized.
  Matrix z = Matrix::Zero(g.rows(), m - 1);
  for (Index j = 1; j < m; ++j) {
    z(s[0], j - 1) = 1.0;
    z(s[static_cast<std::size_t>(j)], j - 1) = -1.0;
  }
  const Matrix qz = Eigen::HouseholderQR<Matrix>(z).householderQ() * Matrix::Identity(g.rows(), m - 1);
  const Matrix h = qz.transpose() * g * qz;
  return Eigen::SelfAdjointEigenSolver<Matrix>(h, Eigen::EigenvaluesOnly).eigenvalues()(0);
}

// Minimizer of q'Gq on {sum q = 1, supp q in S} if the face problem is
// nondegenerate.
inline std::optional<Vector> face_minimizer(const Matrix& g, const std::vector<Index>& s) {
  const auto m = static_cast<Index>(s.size());
  Matrix kkt = Matrix::Zero(m + 1, m + 1);
  for (Index a = 0; a < m; ++a) {
    for (Index b = 0; b < m; ++b)
      kkt(a, b) = g(s[static_cast<std::size_t>(a)], s[static_cast<std::size_t>(b)]);
    kkt(a, m) = 1.0;
    kkt(m, a) = 1.0;
  }
  Vector rhs = Vector::Zero(m + 1);
  rhs(m) = 1.0;
  Eigen::FullPivLU<Matrix> lu(kkt);
  if (!lu.isInvertible()) return std::nullopt;
  const Vector sol = lu.solve(rhs);
  if (!sol.allFinite()) return std::nullopt;
  Vector q = Vector::Zero(g.rows());
  for (Index a = 0; a < m; ++a) q(s[static_cast<std::size_t>(a)]) = sol(a);
  return q;
}

}  // namespace weights_detail

/// Violation of the simplex KKT conditions for min q'Gq at q: spread of the
/// gradient 2Gq on the support plus any off-support coordinate whose
/// gradient falls below the support level.
inline double kkt_residual(const Matrix& g, const Vector& q, double support_tol = 1e-9) {
  const Vector grad = 2.0 * g * q;
  const auto s = weights_detail::support(q, support_tol);
  if (s.empty()) return std::numeric_limits<double>::infinity();
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (Index i : s) {
    lo = std::min(lo, grad(i));
    hi = std::max(hi, grad(i));
  }
  double viol = hi - lo;
  for (Index i = 0; i < q.size(); ++i)
    if (q(i) <= support_tol) viol = std::max(viol, lo - grad(i));
  return viol;
}

/// q* = argmin_{q in H} q'Gq. Requires a PSD Gamma (see psd_repair).
inline WeightSolution solve_weights(const GammaMatrix& gamma, const UncertaintySet& h,
                                    const SolveOptions& opt = {}) {
  const Matrix& g = gamma.values;
  const Index l = g.rows();
  require(g.cols() == l && l >= 1, ErrorKind::shape, "Gamma must be a non-empty square matrix");
  require(h.dim() == l, ErrorKind::shape,
          "uncertainty set dimension " + std::to_string(h.dim()) + " != Gamma size " +
              std::to_string(l));
  require_finite(g, "Gamma");
  require((g - g.transpose()).cwiseAbs().maxCoeff() <= psd_tolerance(g), ErrorKind::validation,
          "Gamma is not symmetric");
  require(is_psd(g), ErrorKind::numeric,
          "Gamma is indefinite (min eigenvalue " + std::to_string(min_eigenvalue(g)) +
              "); call psd_repair first");

  WeightSolution sol;
  auto finish = [&](Vector q) {
    sol.q = MixtureSpec::normalized(std::move(q));
    sol.objective = sol.q.weights().dot(g * sol.q.weights());
    sol.active_set = weights_detail::support(sol.q.weights());
    if (h.kind() != HKind::singleton)
      sol.flat = weights_detail::face_min_eigenvalue(g, sol.active_set) < 1e-10;
    return sol;
  };

  if (h.kind() == HKind::singleton || l == 1) {
    sol.converged = true;
    sol.method = "fixed";
    return finish(h.kind() == HKind::singleton ? h.point().weights() : Vector::Ones(1));
  }

  if (l == 2 && h.kind() == HKind::full_simplex && opt.closed_form_l2) {
    const double den = g(0, 0) + g(1, 1) - 2.0 * g(0, 1);
    const double q1 = den <= 1e-14 ? 0.5 : std::clamp((g(1, 1) - g(0, 1)) / den, 0.0, 1.0);
    sol.converged = true;
    sol.method = "closed_form";
    Vector q(2);
    q << q1, 1.0 - q1;
    return finish(std::move(q));
  }

  Vector q = project_H_vector(Vector::Constant(l, 1.0 / static_cast<double>(l)), h);
  const double lmax =
      Eigen::SelfAdjointEigenSolver<Matrix>(g, Eigen::EigenvaluesOnly).eigenvalues()(l - 1);
  sol.method = "projected_gradient";
  if (lmax <= 0.0) {
    sol.converged = true;
    return finish(std::move(q));
  }
  const double step = 1.0 / lmax;
  for (int it = 1; it <= opt.max_iter; ++it) {
    Vector next = project_H_vector(q - step * (g * q), h);
    const double change = (next - q).cwiseAbs().maxCoeff();
    q = std::move(next);
    sol.iterations = it;
    if (change < opt.tol) {
      sol.converged = true;
      break;
    }
  }

  if (opt.polish && h.kind() == HKind::full_simplex) {
    const auto s = weights_detail::support(q, 1e-7);
    if (weights_detail::face_min_eigenvalue(g, s) >= 1e-10) {
      if (auto cand = weights_detail::face_minimizer(g, s)) {
        const bool feasible = (cand->array() >= 0.0).all();
        if (feasible && kkt_residual(g, *cand, 0.0) <= 1e-9 * std::max(1.0, lmax)) {
          q = *cand;
          sol.method = "projected_gradient+polish";
        }
      }
    }
  }
  return finish(std::move(q));
}

/// Brute-force max-min over a q-mesh on small instances. `values` holds the
/// exact models at the target support points (rows) and `masses` their
/// probabilities. The adversary ranges over the simplex vertices for the
/// full simplex and over the mesh points of H otherwise.
struct OracleResult {
  MixtureSpec q;
  double value = 0.0;
  bool flat = false;
  std::vector<std::string> warnings;
};

namespace weights_detail {

inline void enumerate_mesh(Index l, int steps, const std::function<void(const Vector&)>& fn) {
  std::vector<int> c(static_cast<std::size_t>(l), 0);
  Vector q(l);
  std::function<void(Index, int)> rec = [&](Index pos, int left) {
    if (pos == l - 1) {
      c[static_cast<std::size_t>(pos)] = left;
      for (Index i = 0; i < l; ++i)
        q(i) = static_cast<double>(c[static_cast<std::size_t>(i)]) / steps;
      fn(q);
      return;
    }
    for (int k = left; k >= 0; --k) {
      c[static_cast<std::size_t>(pos)] = k;
      rec(pos + 1, left - k);
    }
  };
  rec(0, steps);
}

}  // namespace weights_detail

inline OracleResult minimax_oracle(const Matrix& values, const Vector& masses,
                                   const UncertaintySet& h, double mesh = 0.01,
                                   double tolerance = 0.02) {
  const Index l = values.cols();
  require(l >= 1 && l <= 3, ErrorKind::validation, "minimax oracle supports L <= 3");
  require(h.dim() == l, ErrorKind::shape, "uncertainty set dimension mismatch");
  require(masses.size() == values.rows() && values.rows() >= 1, ErrorKind::shape,
          "one mass per support point required");
  require((masses.array() >= 0.0).all() && std::abs(masses.sum() - 1.0) <= 1e-9,
          ErrorKind::validation, "masses must form a probability vector");
  require(mesh > 0.0 && mesh <= 1.0, ErrorKind::validation, "mesh must be in (0, 1]");
  const int steps = static_cast<int>(std::lround(1.0 / mesh));
  require(std::abs(steps * mesh - 1.0) < 1e-9, ErrorKind::validation,
          "mesh must divide 1 evenly");

  OracleResult res;
  if (mesh > tolerance)
    res.warnings.push_back("mesh " + std::to_string(mesh) + " is coarser than the tolerance " +
                           std::to_string(tolerance));
  if (h.kind() == HKind::singleton) {
    res.q = h.point();
    return res;
  }

  // Reward of f under the r-mixture is E[2 f_r f - f^2] = 2 r'M q - q'M q,
  // with M the mass-weighted Gram matrix of the models.
  const Matrix m = values.transpose() * masses.asDiagonal() * values;
  std::vector<Vector> adversary;
  std::vector<Vector> candidates;
  weights_detail::enumerate_mesh(l, steps, [&](const Vector& q) {
    if (h.contains(q, 1e-12)) candidates.push_back(q);
  });
  require(!candidates.empty(), ErrorKind::validation, "no mesh point lies in H");
  if (h.kind() == HKind::full_simplex) {
    for (Index i = 0; i < l; ++i) adversary.push_back(Vector::Unit(l, i));
  } else {
    adversary = candidates;
  }

  double best = -std::numeric_limits<double>::infinity();
  double worst_of_best = std::numeric_limits<double>::infinity();
  Vector arg;
  for (const auto& q : candidates) {
    const Vector mq = m * q;
    const double quad = q.dot(mq);
    double v = std::numeric_limits<double>::infinity();
    for (const auto& r : adversary) v = std::min(v, 2.0 * r.dot(mq) - quad);
    if (v > best + 1e-15) {
      best = v;
      arg = q;
    }
    worst_of_best = std::min(worst_of_best, v);
  }
  res.q = MixtureSpec::normalized(arg);
  res.value = best;
  res.flat = best - worst_of_best <= 1e-12;
  return res;
}

inline nlohmann::json to_json(const UncertaintySet& h) {
  nlohmann::json j;
  const auto& w = h.point().weights();
  switch (h.kind()) {
    case HKind::full_simplex:
      j = {{"kind", "full_simplex"}, {"dim", h.dim()}};
      break;
    case HKind::l2_ball:
      j = {{"kind", "l2_ball"},
           {"center", std::vector<double>(w.data(), w.data() + w.size())},
           {"rho", h.rho()},
           {"scaled", h.scaled()}};
      break;
    case HKind::singleton:
      j = {{"kind", "singleton"}, {"q", std::vector<double>(w.data(), w.data() + w.size())}};
      break;
  }
  return j;
}

inline nlohmann::json vector_to_json(const Vector& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

inline Vector vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

inline UncertaintySet uncertainty_set_from_json(const nlohmann::json& j) {
  try {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "full_simplex") return UncertaintySet::full_simplex(j.at("dim").get<Index>());
    if (kind == "l2_ball")
      return UncertaintySet::l2_ball(MixtureSpec(vector_from_json(j.at("center"))),
                                     j.at("rho").get<double>(), j.at("scaled").get<bool>());
    if (kind == "singleton")
      return UncertaintySet::singleton(MixtureSpec(vector_from_json(j.at("q"))));
    fail(ErrorKind::parse, "unknown uncertainty set kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("malformed uncertainty set JSON: ") + e.what());
  }
}

inline nlohmann::json to_json(const WeightSolution& s) {
  const auto& q = s.q.weights();
  return {{"q", std::vector<double>(q.data(), q.data() + q.size())},
          {"objective", s.objective},
          {"iterations", s.iterations},
          {"converged", s.converged},
          {"flat", s.flat},
          {"method", s.method},
          {"active_set", s.active_set}};
}

}  // namespace drl
