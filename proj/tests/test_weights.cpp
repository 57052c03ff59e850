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

#include "test_util.hpp"

#include <cmath>

namespace drl {
namespace {

using testing::expect_error;
using testing::random_psd;
using testing::vec;

GammaMatrix gm(const Matrix& m) { return GammaMatrix{m}; }

Matrix mat2(double a, double b, double c, double d) {
  Matrix m(2, 2);
  m << a, b, c, d;
  return m;
}

/// Random point of the simplex.
Vector random_simplex_point(Index l, Rng& rng) {
  Vector e(l);
  for (Index i = 0; i < l; ++i) e(i) = -std::log(1.0 - uniform01(rng));
  return e / e.sum();
}

/// Projection onto simplex-intersect-ball by bisection on the multiplier of
/// the ball constraint: p(mu) = P_simplex((v + mu c) / (1 + mu)).
Vector ball_projection_oracle(const Vector& v, const Vector& c, double r) {
  auto p = [&](double mu) { return project_simplex_vector((v + mu * c) / (1.0 + mu)); };
  if ((p(0.0) - c).norm() <= r) return p(0.0);
  double lo = 0.0, hi = 1.0;
  while ((p(hi) - c).norm() > r) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    ((p(mid) - c).norm() > r ? lo : hi) = mid;
  }
  return p(hi);
}

/// argmin q'Gq over a 0.001 grid of the two-simplex.
double grid_q1(const Matrix& g) {
  double best = std::numeric_limits<double>::infinity(), arg = 0.0;
  for (int i = 0; i <= 1000; ++i) {
    const double q1 = i / 1000.0;
    const Vector q = vec({q1, 1.0 - q1});
    const double v = q.dot(g * q);
    if (v < best) {
      best = v;
      arg = q1;
    }
  }
  return arg;
}

// ---------------------------------------------------------------------------
// Projections
// ---------------------------------------------------------------------------

TEST(ProjectSimplex, AlreadyFeasible) {
  EXPECT_LT((project_simplex(vec({0.3, 0.7})).weights() - vec({0.3, 0.7})).norm(), 1e-15);
}

TEST(ProjectSimplex, Symmetric) {
  EXPECT_EQ(project_simplex(vec({2, 2})).weights(), vec({0.5, 0.5}));
}

TEST(ProjectSimplex, ThresholdClipsNegative) {
  // tau = 0.2: (1.2 - 0.2, max(-0.2 - 0.2, 0)) = (1, 0).
  EXPECT_LT((project_simplex(vec({1.2, -0.2})).weights() - vec({1, 0})).norm(), 1e-15);
}

TEST(ProjectSimplex, VariationalInequality) {
  Rng rng = make_rng(1, "proj");
  for (int t = 0; t < 200; ++t) {
    const Index l = 2 + static_cast<Index>(uniform_index(rng, 6));
    const Vector v = 2.0 * standard_normal_matrix(l, 1, rng).col(0);
    const Vector p = project_simplex_vector(v);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    EXPECT_GE(p.minCoeff(), 0.0);
    for (int k = 0; k < 5; ++k) {
      const Vector q = random_simplex_point(l, rng);
      EXPECT_LE((v - p).dot(q - p), 1e-12);
    }
    EXPECT_LT((project_simplex_vector(p) - p).norm(), 1e-14);
  }
}

TEST(ProjectH, FullSimplexMatchesSimplex) {
  const Vector v = vec({0.9, -0.4, 0.8});
  EXPECT_EQ(project_H(v, UncertaintySet::full_simplex(3)).weights(),
            project_simplex(v).weights());
}

TEST(ProjectH, SingletonIsConstant) {
  const auto h = UncertaintySet::singleton(MixtureSpec(vec({0.5, 0.5})));
  EXPECT_EQ(project_H(vec({10, -3}), h).weights(), vec({0.5, 0.5}));
}

TEST(ProjectH, BallBoundaryAlongSimplexDirection) {
  const auto h = UncertaintySet::l2_ball(MixtureSpec(vec({0.5, 0.5})), 0.1, false);
  const Vector p = project_H(vec({1, 0}), h).weights();
  const double s = 0.1 / std::sqrt(2.0);
  EXPECT_NEAR(p(0), 0.5 + s, 1e-12);
  EXPECT_NEAR(p(1), 0.5 - s, 1e-12);
}

TEST(ProjectH, ScaledRadius) {
  const auto h = UncertaintySet::l2_ball(MixtureSpec::uniform(4), 0.1);
  EXPECT_DOUBLE_EQ(h.radius(), 0.2);
  EXPECT_DOUBLE_EQ(UncertaintySet::l2_ball(MixtureSpec::uniform(4), 0.1, false).radius(), 0.1);
}

TEST(ProjectH, DykstraMatchesBisectionOracle) {
  Rng rng = make_rng(2, "proj");
  for (int t = 0; t < 200; ++t) {
    const Index l = 3 + static_cast<Index>(uniform_index(rng, 4));
    const Vector c = random_simplex_point(l, rng);
    const double r = 0.02 + 0.4 * uniform01(rng);
    const auto h = UncertaintySet::l2_ball(MixtureSpec::normalized(c), r, false);
    const Vector v = c + standard_normal_matrix(l, 1, rng).col(0);
    const Vector got = project_H_vector(v, h);
    const Vector want = ball_projection_oracle(v, h.center().weights(), r);
    EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-8) << "trial " << t;
    EXPECT_TRUE(h.contains(got, 1e-9));
  }
}

// ---------------------------------------------------------------------------
// Solver
// ---------------------------------------------------------------------------

TEST(SolveWeights, IdentityTwo) {
  const auto s = solve_weights(gm(Matrix::Identity(2, 2)), UncertaintySet::full_simplex(2));
  EXPECT_LT((s.q.weights() - vec({0.5, 0.5})).norm(), 1e-12);
  EXPECT_NEAR(s.objective, 0.5, 1e-12);
}

TEST(SolveWeights, DiagonalOneFour) {
  // 2q - 8(1 - q) = 0 at q = 0.8; objective 0.64 + 4 * 0.04 = 0.8.
  const Matrix g = mat2(1, 0, 0, 4);
  for (bool closed : {true, false}) {
    SolveOptions opt;
    opt.closed_form_l2 = closed;
    const auto s = solve_weights(gm(g), UncertaintySet::full_simplex(2), opt);
    EXPECT_NEAR(s.q[0], 0.8, 1e-9);
    EXPECT_NEAR(s.objective, 0.8, 1e-9);
  }
  EXPECT_NEAR(grid_q1(g), 0.8, 1e-3);
}

TEST(SolveWeights, BoundarySolution) {
  // Unconstrained line minimizer at q1 = 1.5 is clipped to 1.
  const Matrix g = mat2(1, 2, 2, 5);
  for (bool closed : {true, false}) {
    SolveOptions opt;
    opt.closed_form_l2 = closed;
    const auto s = solve_weights(gm(g), UncertaintySet::full_simplex(2), opt);
    EXPECT_NEAR(s.q[0], 1.0, 1e-9);
  }
  EXPECT_DOUBLE_EQ(grid_q1(g), 1.0);
}

TEST(SolveWeights, IndefiniteGammaIsNumericError) {
  expect_error(ErrorKind::numeric,
               [] { solve_weights(gm(mat2(1, 2, 2, 1)), UncertaintySet::full_simplex(2)); });
}

TEST(SolveWeights, AsymmetricGammaRejected) {
  expect_error(ErrorKind::validation,
               [] { solve_weights(gm(mat2(1, 0.1, 0, 1)), UncertaintySet::full_simplex(2)); });
}

TEST(SolveWeights, SingletonIsExact) {
  const auto q0 = MixtureSpec(vec({0.3, 0.7}));
  const auto s = solve_weights(gm(mat2(5, 1, 1, 2)), UncertaintySet::singleton(q0));
  EXPECT_EQ(s.q.weights(), q0.weights());
}

TEST(SolveWeights, KktAndFeasibilityProperty) {
  Rng rng = make_rng(3, "solve");
  for (int t = 0; t < 100; ++t) {
    const Index l = 2 + static_cast<Index>(uniform_index(rng, 7));
    const Matrix g = random_psd(l, rng, 0.0, 3.0);
    const auto s = solve_weights(gm(g), UncertaintySet::full_simplex(l));
    EXPECT_NEAR(s.q.weights().sum(), 1.0, 1e-12);
    EXPECT_GE(s.q.weights().minCoeff(), 0.0);
    EXPECT_LT(kkt_residual(g, s.q.weights()), 1e-6) << "trial " << t;
  }
}

TEST(SolveWeights, MatchesMeshSearchOnThreeSimplex) {
  Rng rng = make_rng(4, "solve");
  for (int t = 0; t < 30; ++t) {
    const Matrix g = random_psd(3, rng, 0.05, 2.0);
    const auto s = solve_weights(gm(g), UncertaintySet::full_simplex(3));
    double best = std::numeric_limits<double>::infinity();
    weights_detail::enumerate_mesh(3, 200, [&](const Vector& q) {
      best = std::min(best, q.dot(g * q));
    });
    EXPECT_LE(s.objective, best + 1e-12);
    EXPECT_GT(s.objective, best - 1e-3);
  }
}

TEST(SolveWeights, BallSolutionStaysInBall) {
  Rng rng = make_rng(5, "solve");
  for (int t = 0; t < 30; ++t) {
    const Matrix g = random_psd(4, rng, 0.0, 2.0);
    const auto h = UncertaintySet::l2_ball(MixtureSpec(vec({0.55, 0.15, 0.15, 0.15})),
                                           0.05 + 0.3 * uniform01(rng));
    const auto s = solve_weights(gm(g), h);
    EXPECT_TRUE(h.contains(s.q.weights(), 1e-8));
    // No feasible mesh point does better.
    weights_detail::enumerate_mesh(4, 40, [&](const Vector& q) {
      if (h.contains(q, 0.0)) EXPECT_GE(q.dot(g * q), s.objective - 1e-8);
    });
  }
}

TEST(SolveWeights, ShrinkingBallApproachesCenter) {
  Rng rng = make_rng(6, "solve");
  const Matrix g = random_psd(4, rng, 0.1, 2.0);
  const auto c = MixtureSpec(vec({0.55, 0.15, 0.15, 0.15}));
  const auto s = solve_weights(gm(g), UncertaintySet::l2_ball(c, 1e-6));
  EXPECT_LT((s.q.weights() - c.weights()).norm(), 3e-6);
}

TEST(SolveWeights, FlatObjectiveFlagged) {
  const auto s = solve_weights(gm(Matrix::Ones(3, 3)), UncertaintySet::full_simplex(3));
  EXPECT_TRUE(s.flat);
  EXPECT_NEAR(s.objective, 1.0, 1e-12);
}

TEST(SolveWeights, StabilityBoundProperty) {
  // |q_hat - q*|_2 <= min(L |G_hat - G|_inf / lambda_min(G), diam(H)).
  Rng rng = make_rng(7, "solve");
  for (int t = 0; t < 100; ++t) {
    const Index l = 2 + static_cast<Index>(uniform_index(rng, 4));
    const Matrix g = random_psd(l, rng, 0.1, 2.0);
    Matrix e = 0.05 * standard_normal_matrix(l, l, rng);
    e = (e + e.transpose()).eval();
    const GammaMatrix gh = psd_repair(gm(g + e));
    const auto h = UncertaintySet::full_simplex(l);
    const Vector q = solve_weights(gm(g), h).q.weights();
    const Vector qh = solve_weights(gh, h).q.weights();
    const double bound = std::min(static_cast<double>(l) * (gh.values - g).cwiseAbs().maxCoeff() /
                                      min_eigenvalue(g),
                                  diameter(h));
    EXPECT_LE((qh - q).norm(), bound + 1e-9);
  }
}

TEST(WeightsJson, UncertaintySetRoundTrip) {
  for (const auto& h : {UncertaintySet::full_simplex(3),
                        UncertaintySet::l2_ball(MixtureSpec::uniform(3), 0.2, false),
                        UncertaintySet::singleton(MixtureSpec(vec({0.2, 0.3, 0.5})))}) {
    const auto back = uncertainty_set_from_json(nlohmann::json::parse(to_json(h).dump()));
    EXPECT_EQ(back.kind(), h.kind());
    EXPECT_EQ(back.dim(), h.dim());
    EXPECT_EQ(back.radius(), h.radius());
  }
}

// ---------------------------------------------------------------------------
// Minimax oracle
// ---------------------------------------------------------------------------

TEST(MinimaxOracle, IdenticalModelsAreFlat) {
  Matrix v(3, 2);
  v << 1, 1, 2, 2, -1, -1;
  const auto r = minimax_oracle(v, Vector::Constant(3, 1.0 / 3.0), UncertaintySet::full_simplex(2));
  EXPECT_TRUE(r.flat);
}

TEST(MinimaxOracle, OrthogonalEqualNorm) {
  Matrix v(2, 2);
  v << 1, 0, 0, 1;
  const auto r = minimax_oracle(v, vec({0.5, 0.5}), UncertaintySet::full_simplex(2));
  EXPECT_LT((r.q.weights() - vec({0.5, 0.5})).cwiseAbs().maxCoeff(), 0.01 + 1e-12);
}

TEST(MinimaxOracle, DiagonalOneFourOnDiscreteSupport) {
  // Two support points with mass 1/2: sum m_i v_i v_i' = diag(1, 4).
  Matrix v(2, 2);
  v << std::sqrt(2.0), 0, 0, std::sqrt(8.0);
  const auto r = minimax_oracle(v, vec({0.5, 0.5}), UncertaintySet::full_simplex(2));
  const auto s = solve_weights(gm(mat2(1, 0, 0, 4)), UncertaintySet::full_simplex(2));
  EXPECT_LE((r.q.weights() - s.q.weights()).cwiseAbs().maxCoeff(), 0.01 + 1e-12);
}

TEST(MinimaxOracle, RejectsBadMasses) {
  expect_error(ErrorKind::validation, [] {
    minimax_oracle(Matrix::Ones(2, 2), vec({0.5, 0.6}), UncertaintySet::full_simplex(2));
  });
}

TEST(MinimaxOracle, AgreesWithSolverOnBall) {
  Rng rng = make_rng(8, "oracle");
  int checked = 0;
  for (int t = 0; t < 10; ++t) {
    const Matrix v = standard_normal_matrix(6, 3, rng);
    const Vector m = random_simplex_point(6, rng);
    const auto h = UncertaintySet::l2_ball(MixtureSpec(vec({0.5, 0.25, 0.25})), 0.15, false);
    const auto r = minimax_oracle(v, m, h);
    if (r.flat) continue;
    const Matrix g = v.transpose() * m.asDiagonal() * v;
    const auto s = solve_weights(psd_repair(gm((g + g.transpose()) / 2.0)), h);
    EXPECT_LE((r.q.weights() - s.q.weights()).cwiseAbs().maxCoeff(), 0.02 + 1e-9);
    ++checked;
  }
  EXPECT_GT(checked, 0);
}

}  // namespace
}  // namespace drl
