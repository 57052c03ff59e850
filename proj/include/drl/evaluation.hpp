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
#include "drl/weights.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace drl {

/// Explained-variance reward mean(y^2 - (y - f)^2) of a prediction vector.
struct RewardReport {
  double reward = 0.0;
  Index n_eval = 0;
  std::optional<Vector> per_group_rewards;
  std::optional<MixtureSpec> worst_mixture;
};

inline RewardReport empirical_reward(const Vector& predictions, const Vector& outcomes) {
  require(predictions.size() == outcomes.size(), ErrorKind::shape,
          "predictions (" + std::to_string(predictions.size()) + ") and outcomes (" +
              std::to_string(outcomes.size()) + ") differ in length");
  require(outcomes.size() >= 1, ErrorKind::insufficient_data, "empty evaluation set");
  const Vector r = outcomes.array().square() - (outcomes - predictions).array().square();
  return RewardReport{r.mean(), outcomes.size(), std::nullopt, std::nullopt};
}

/// A labeled evaluation set.
struct LabeledSet {
  Matrix x;
  Vector y;
};

/// Minimum reward over the groups; every group reward is kept.
template <class Model>
RewardReport worst_group_reward(const Model& model, const std::vector<LabeledSet>& sets) {
  require(!sets.empty(), ErrorKind::validation, "no evaluation sets");
  Vector per(static_cast<Index>(sets.size()));
  Index n = 0;
  for (std::size_t l = 0; l < sets.size(); ++l) {
    per(static_cast<Index>(l)) = empirical_reward(model.predict(sets[l].x), sets[l].y).reward;
    n += sets[l].y.size();
  }
  Index arg = 0;
  const double worst = per.minCoeff(&arg);
  RewardReport r{worst, n, per, MixtureSpec(Vector::Unit(per.size(), arg))};
  return r;
}

/// Minimum over q in H of sum_l q_l R_l, where R_l are rewards against the
/// group-l conditional outcome law on a shared covariate sample. Linear in
/// q, so the full simplex needs only its vertices; other sets are meshed.
inline RewardReport worst_mixture_reward(const Vector& per_group, const UncertaintySet& h,
                                         double mesh = 0.01) {
  const Index l = per_group.size();
  require(h.dim() == l, ErrorKind::shape, "uncertainty set dimension mismatch");
  RewardReport r;
  r.per_group_rewards = per_group;
  if (h.kind() == HKind::singleton) {
    r.reward = h.point().weights().dot(per_group);
    r.worst_mixture = h.point();
    return r;
  }
  if (h.kind() == HKind::full_simplex) {
    Index arg = 0;
    r.reward = per_group.minCoeff(&arg);
    r.worst_mixture = MixtureSpec(Vector::Unit(l, arg));
    return r;
  }
  const int steps = static_cast<int>(std::lround(1.0 / mesh));
  double best = std::numeric_limits<double>::infinity();
  Vector arg;
  weights_detail::enumerate_mesh(l, steps, [&](const Vector& q) {
    if (!h.contains(q, 1e-12)) return;
    const double v = q.dot(per_group);
    if (v < best) {
      best = v;
      arg = q;
    }
  });
  // The mesh can miss a thin ball entirely; its center is always inside.
  const double at_center = h.center().weights().dot(per_group);
  if (arg.size() == 0 || at_center < best) {
    best = at_center;
    arg = h.center().weights();
  }
  r.reward = best;
  r.worst_mixture = MixtureSpec::normalized(arg);
  return r;
}

/// One row of a reward curve.
struct CurvePoint {
  double q1 = 0.0;
  std::string method;
  double reward = 0.0;
};

using PredictFn = std::function<Vector(const Matrix&)>;
/// Draws a labeled test set whose conditional outcome law is the q-mixture.
using MixtureSampler = std::function<LabeledSet(const MixtureSpec&, Rng&)>;

/// Rewards of each named model on a fresh test set per grid point. Test sets
/// use derive_seed(seed, "curve", grid index), so every model sees the same
/// data at a grid point.
inline std::vector<CurvePoint> reward_curve(
    const std::vector<std::pair<std::string, PredictFn>>& models, const MixtureSampler& sample,
    const std::vector<MixtureSpec>& grid, std::uint64_t seed) {
  std::vector<CurvePoint> out;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    Rng rng = make_rng(seed, "curve", g);
    const LabeledSet test = sample(grid[g], rng);
    for (const auto& [name, fn] : models)
      out.push_back({grid[g][0], name, empirical_reward(fn(test.x), test.y).reward});
  }
  return out;
}

/// |R(f_hat) - R(f_star)| <= 2 |f_Q - f_star| |f_hat - f_star| + |f_hat - f_star|^2
/// checked with sample averages; the reward difference carries a Monte Carlo
/// allowance of three standard errors.
struct BoundCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double mc_error = 0.0;
  double slack = 0.0;  // rhs + mc_error - lhs
  bool holds = false;
};

inline BoundCheck reward_diff_bound_check(const Vector& f_hat, const Vector& f_star,
                                          const Vector& f_q, const Vector& y) {
  const Index n = y.size();
  require(n >= 2 && f_hat.size() == n && f_star.size() == n && f_q.size() == n, ErrorKind::shape,
          "bound check needs equal-length vectors with at least 2 entries");
  const Vector d = 2.0 * y.cwiseProduct(f_hat - f_star) -
                   (f_hat.array().square() - f_star.array().square()).matrix();
  const double mean = d.mean();
  const double sd = std::sqrt((d.array() - mean).square().sum() / static_cast<double>(n - 1));
  const double nd = static_cast<double>(n);
  const double e_hat = std::sqrt((f_hat - f_star).squaredNorm() / nd);
  const double e_q = std::sqrt((f_q - f_star).squaredNorm() / nd);
  BoundCheck b;
  b.lhs = std::abs(mean);
  b.rhs = 2.0 * e_q * e_hat + e_hat * e_hat;
  b.mc_error = 3.0 * sd / std::sqrt(nd);
  b.slack = b.rhs + b.mc_error - b.lhs;
  b.holds = b.slack >= 0.0;
  return b;
}

}  // namespace drl
