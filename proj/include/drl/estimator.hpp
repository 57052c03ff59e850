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
#include "drl/density_ratio.hpp"
#include "drl/gamma.hpp"
#include "drl/learners.hpp"
#include "drl/parallel.hpp"
#include "drl/weights.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace drl {

enum class ShiftMode { none, logistic };
enum class SplitMode { deterministic, seeded, no_split };

inline std::string_view to_string(ShiftMode m) {
  return m == ShiftMode::none ? "none" : "logistic";
}

inline std::string_view to_string(SplitMode m) {
  switch (m) {
    case SplitMode::deterministic: return "deterministic";
    case SplitMode::seeded: return "seeded";
    case SplitMode::no_split: return "no_split";
  }
  return "deterministic";
}

struct FitConfig {
  LearnerSpec learner;
  std::optional<UncertaintySet> h_set;  // full simplex when unset
  ShiftMode shift = ShiftMode::none;
  double ratio_l1 = 0.0;
  int ratio_max_iter = 100;
  SplitMode split = SplitMode::deterministic;
  std::uint64_t split_seed = 0;  // seeded split only
  std::uint64_t seed = 0;
  double psd_ridge = 1e-10;
  SolveOptions solver;
  unsigned threads = 1;

  UncertaintySet resolved_h(Index l) const {
    return h_set ? *h_set : UncertaintySet::full_simplex(l);
  }
};

inline nlohmann::json to_json(const FitConfig& c) {
  nlohmann::json j;
  j["learner"] = {{"kind", std::string(to_string(c.learner.kind))},
                  {"ridge", c.learner.ridge},
                  {"lasso_a", c.learner.lasso_a},
                  {"lasso_cv_folds", c.learner.lasso_cv_folds ? nlohmann::json(*c.learner.lasso_cv_folds)
                                                              : nlohmann::json(nullptr)},
                  {"n_trees", c.learner.forest.n_trees},
                  {"mtry", c.learner.forest.mtry},
                  {"min_leaf", c.learner.forest.min_leaf},
                  {"bootstrap", c.learner.forest.bootstrap},
                  {"tune_oob", c.learner.forest.tune_oob}};
  j["h_set"] = c.h_set ? to_json(*c.h_set) : nlohmann::json("full_simplex");
  j["shift"] = std::string(to_string(c.shift));
  j["ratio_l1"] = c.ratio_l1;
  j["ratio_max_iter"] = c.ratio_max_iter;
  j["split"] = std::string(to_string(c.split));
  if (c.split == SplitMode::seeded) j["split_seed"] = c.split_seed;
  j["seed"] = c.seed;
  j["psd_ridge"] = c.psd_ridge;
  j["solver"] = {{"closed_form_l2", c.solver.closed_form_l2},
                 {"polish", c.solver.polish},
                 {"max_iter", c.solver.max_iter},
                 {"tol", c.solver.tol}};
  return j;
}

inline std::string config_fingerprint(const FitConfig& c) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(to_json(c).dump())));
  return buf;
}

struct SqDroDiagnostics {
  double sigma2_1 = 0.0;
  double sigma2_2 = 0.0;
  double diff_norm2 = 0.0;  // target mean of (f1 - f2)^2
};

/// Aggregated robust predictor sum_l q_l f_l.
struct DRLModel {
  std::string method;
  MixtureSpec weights;
  std::vector<FittedPredictor> predictors;
  GammaMatrix gamma;      // matrix the weights were solved on
  GammaMatrix gamma_raw;  // before PSD repair
  std::optional<GammaBreakdown> breakdown;
  UncertaintySet h_set;
  WeightSolution solution;
  std::string config_fingerprint;
  std::vector<std::pair<std::string, double>> timings;
  std::optional<SqDroDiagnostics> sq_dro;

  Index size() const { return static_cast<Index>(predictors.size()); }
  Index p() const { return predictors.empty() ? 0 : predictors.front().p(); }

  Vector predict(const Matrix& x) const {
    require(!predictors.empty(), ErrorKind::validation, "model has no predictors");
    Vector out = weights[0] * predictors[0].predict(x);
    for (std::size_t l = 1; l < predictors.size(); ++l)
      out += weights[static_cast<Index>(l)] * predictors[l].predict(x);
    return out;
  }

  /// sum_l q_l b_l for linear or lasso members (intercept first).
  Vector aggregate_coefficients() const {
    Vector b = Vector::Zero(p() + 1);
    for (std::size_t l = 0; l < predictors.size(); ++l)
      b += weights[static_cast<Index>(l)] * predictors[l].coefficients();
    return b;
  }
};

inline Vector predict(const DRLModel& m, const Matrix& x) { return m.predict(x); }

// ---------------------------------------------------------------------------
// Pipeline pieces. The federated runner calls the same functions from its
// site actors, which is what makes its output bit-identical to fit_drl.
// ---------------------------------------------------------------------------

namespace estimator_detail {

template <class F>
auto stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw Error(e.kind(), std::string("stage ") + name + ": " + e.what());
  }
}

class Stopwatch {
 public:
  double lap() {
    const auto now = std::chrono::steady_clock::now();
    const double s = std::chrono::duration<double>(now - last_).count();
    last_ = now;
    return s;
  }

 private:
  std::chrono::steady_clock::time_point last_ = std::chrono::steady_clock::now();
};

inline int scope_index(FitScope s) {
  return s == FitScope::full ? 0 : (s == FitScope::half_a ? 1 : 2);
}

}  // namespace estimator_detail

inline std::uint64_t learner_seed(std::uint64_t root, int group_id, FitScope scope) {
  return derive_seed(root, "learner", static_cast<std::uint64_t>(group_id),
                     static_cast<std::uint64_t>(estimator_detail::scope_index(scope)));
}

/// Applies the configured split policy.
inline SourceGroup prepare_group(const SourceGroup& g, const FitConfig& c) {
  if (c.split == SplitMode::seeded)
    return make_random_split(
        g, derive_seed(c.split_seed, "split", static_cast<std::uint64_t>(g.group_id())));
  return g;
}

inline void check_groups(const std::vector<SourceGroup>& groups, const TargetSample* target) {
  require(!groups.empty(), ErrorKind::validation, "at least one source group is required");
  const Index p = common_dimension(groups);
  if (target)
    require(target->p() == p, ErrorKind::shape,
            "target has " + std::to_string(target->p()) + " columns, sources have " +
                std::to_string(p));
}

inline FittedPredictor fit_scope(const SourceGroup& g, FitScope scope, const FitConfig& c) {
  return fit_learner(c.learner, g.covariates(scope), g.outcomes(scope),
                     learner_seed(c.seed, g.group_id(), scope))
      .tagged(g.group_id(), scope);
}

/// Everything one source site fits locally.
struct SiteFits {
  FittedPredictor full, half_a, half_b;
  DensityRatioModel ratio_a, ratio_b;
};

inline FittedPredictor fit_full(const SourceGroup& g, const FitConfig& c) {
  return fit_scope(g, FitScope::full, c);
}

/// Half fits (or full-fit copies in no-split mode).
inline std::pair<FittedPredictor, FittedPredictor> fit_halves(const SourceGroup& g,
                                                              const FittedPredictor& full,
                                                              const FitConfig& c) {
  if (c.split == SplitMode::no_split)
    return {full.tagged(g.group_id(), FitScope::half_a),
            full.tagged(g.group_id(), FitScope::half_b)};
  require(!g.split_a().empty() && !g.split_b().empty(), ErrorKind::estimation,
          "group " + std::to_string(g.group_id()) + " has an empty half split");
  return {fit_scope(g, FitScope::half_a, c), fit_scope(g, FitScope::half_b, c)};
}

inline DensityRatioModel fit_ratio(const SourceGroup& g, FitScope scope, const Matrix* target_x,
                                   const FitConfig& c) {
  if (c.shift == ShiftMode::none) return DensityRatioModel::identity(g.group_id(), scope);
  require(target_x != nullptr, ErrorKind::validation,
          "covariate-shift mode needs the target covariates");
  return fit_bayes_logistic(g.covariates(scope), *target_x, c.ratio_l1, c.ratio_max_iter,
                            g.group_id(), scope);
}

inline SiteFits fit_site(const SourceGroup& g, const Matrix* target_x, const FitConfig& c) {
  SiteFits s;
  s.full = fit_full(g, c);
  std::tie(s.half_a, s.half_b) = fit_halves(g, s.full, c);
  s.ratio_a = fit_ratio(g, FitScope::half_a, target_x, c);
  s.ratio_b = fit_ratio(g, FitScope::half_b, target_x, c);
  return s;
}

/// Column l of D_A and D_B, computed where group l's rows live.
struct SiteBias {
  Vector col_a, col_b;
};

inline SiteBias site_bias_columns(const std::vector<FittedPredictor>& preds_a,
                                  const std::vector<FittedPredictor>& preds_b,
                                  const SourceGroup& g, const DensityRatioModel& ratio_a,
                                  const DensityRatioModel& ratio_b, Index l, ShiftMode shift) {
  if (shift == ShiftMode::none)
    return {bias_column_noshift(preds_a, g, l), bias_column_noshift(preds_b, g, l)};
  return {bias_column(preds_a, g, ratio_a, l), bias_column(preds_b, g, ratio_b, l)};
}

/// Target-side assembly: Gamma from the half-fit Gram matrices and the
/// shipped bias columns, PSD repair, weight solve.
inline DRLModel assemble_drl(std::vector<FittedPredictor> full,
                             const std::vector<FittedPredictor>& preds_a,
                             const std::vector<FittedPredictor>& preds_b,
                             const std::vector<SiteBias>& bias, const TargetSample& target,
                             const FitConfig& c) {
  using estimator_detail::stage;
  const auto l = static_cast<Index>(full.size());
  estimator_detail::Stopwatch sw;
  DRLModel m;
  m.method = "bias_corrected";
  GammaBreakdown bd;
  stage("gamma", [&] {
    bd.gram_a = target_gram(preds_a, target);
    bd.gram_b = target_gram(preds_b, target);
    bd.d_a = BiasTermMatrix{Matrix(l, l), FitScope::half_a};
    bd.d_b = BiasTermMatrix{Matrix(l, l), FitScope::half_b};
    for (Index j = 0; j < l; ++j) {
      bd.d_a.values.col(j) = bias[static_cast<std::size_t>(j)].col_a;
      bd.d_b.values.col(j) = bias[static_cast<std::size_t>(j)].col_b;
    }
    bd.gamma = assemble_gamma(bd.gram_a, bd.gram_b, bd.d_a, bd.d_b,
                              c.shift == ShiftMode::none
                                  ? GammaProvenance::bias_corrected_noshift
                                  : GammaProvenance::bias_corrected_shift);
    return 0;
  });
  m.gamma_raw = bd.gamma;
  m.breakdown = std::move(bd);
  m.gamma = stage("psd_repair", [&] { return psd_repair(m.gamma_raw, c.psd_ridge); });
  m.timings.emplace_back("gamma", sw.lap());
  m.h_set = c.resolved_h(l);
  m.solution = stage("solve_weights", [&] { return solve_weights(m.gamma, m.h_set, c.solver); });
  m.timings.emplace_back("solve_weights", sw.lap());
  m.weights = m.solution.q;
  require(std::abs(m.weights.weights().sum() - 1.0) <= 1e-9, ErrorKind::internal,
          "weights do not sum to 1");
  m.predictors = std::move(full);
  m.config_fingerprint = config_fingerprint(c);
  return m;
}

/// Bias-corrected DRL: per-group full and half fits, density ratios, cross
/// fitted bias terms, Gamma assembly, weight solve, aggregation of the
/// full-data predictors.
inline DRLModel fit_drl(const std::vector<SourceGroup>& input, const TargetSample& target,
                        const FitConfig& c) {
  using estimator_detail::stage;
  check_groups(input, &target);
  estimator_detail::Stopwatch sw;
  std::vector<SourceGroup> groups;
  groups.reserve(input.size());
  for (const auto& g : input) groups.push_back(prepare_group(g, c));

  const std::size_t l = groups.size();
  std::vector<SiteFits> sites(l);
  stage("local_fits", [&] {
    parallel_for(l, c.threads, [&](std::size_t j) {
      sites[j] = fit_site(groups[j], &target.covariates, c);
    });
    return 0;
  });
  const double t_fit = sw.lap();

  std::vector<FittedPredictor> full, preds_a, preds_b;
  for (const auto& s : sites) {
    full.push_back(s.full);
    preds_a.push_back(s.half_a);
    preds_b.push_back(s.half_b);
  }
  std::vector<SiteBias> bias(l);
  stage("bias_terms", [&] {
    parallel_for(l, c.threads, [&](std::size_t j) {
      bias[j] = site_bias_columns(preds_a, preds_b, groups[j], sites[j].ratio_a,
                                  sites[j].ratio_b, static_cast<Index>(j), c.shift);
    });
    return 0;
  });
  const double t_bias = sw.lap();

  DRLModel m = assemble_drl(std::move(full), preds_a, preds_b, bias, target, c);
  m.timings.insert(m.timings.begin(), {{"local_fits", t_fit}, {"bias_terms", t_bias}});
  return m;
}

/// DRL with the plug-in Gamma of the full-data fits.
inline DRLModel fit_plugin_drl(const std::vector<SourceGroup>& groups,
                               const TargetSample& target, const FitConfig& c) {
  using estimator_detail::stage;
  check_groups(groups, &target);
  estimator_detail::Stopwatch sw;
  std::vector<FittedPredictor> full(groups.size());
  stage("local_fits", [&] {
    parallel_for(groups.size(), c.threads,
                 [&](std::size_t j) { full[j] = fit_full(groups[j], c); });
    return 0;
  });
  DRLModel m;
  m.timings.emplace_back("local_fits", sw.lap());
  m.method = "plugin";
  m.gamma_raw = stage("gamma", [&] { return plugin_gamma(full, target); });
  m.gamma = stage("psd_repair", [&] { return psd_repair(m.gamma_raw, c.psd_ridge); });
  m.timings.emplace_back("gamma", sw.lap());
  m.h_set = c.resolved_h(static_cast<Index>(groups.size()));
  m.solution = stage("solve_weights", [&] { return solve_weights(m.gamma, m.h_set, c.solver); });
  m.timings.emplace_back("solve_weights", sw.lap());
  m.weights = m.solution.q;
  m.predictors = std::move(full);
  m.config_fingerprint = config_fingerprint(c);
  return m;
}

/// One learner on the pooled rows of every group.
inline FittedPredictor fit_erm(const std::vector<SourceGroup>& groups, const LearnerSpec& spec,
                               std::uint64_t seed) {
  check_groups(groups, nullptr);
  const auto [x, y] = pool_groups(groups);
  return fit_learner(spec, x, y, derive_seed(seed, "erm")).tagged(0, FitScope::full);
}

/// Squared-loss group DRO for two groups:
/// q1 = clip(1/2 + (s1 - s2) / (2 d), 0, 1) with s_l the in-sample residual
/// variance of group l and d the target mean of (f1 - f2)^2.
inline double sq_dro_weight(double sigma2_1, double sigma2_2, double diff_norm2) {
  require(diff_norm2 >= 1e-12, ErrorKind::estimation,
          "the two group models are indistinguishable on the target (|f1 - f2|^2 < 1e-12)");
  return std::clamp(0.5 + (sigma2_1 - sigma2_2) / (2.0 * diff_norm2), 0.0, 1.0);
}

/// Squared-loss DRO weights for two already fitted full-data predictors.
inline DRLModel sq_dro_model(const std::vector<SourceGroup>& groups,
                             std::vector<FittedPredictor> predictors, const TargetSample& target,
                             const FitConfig& c) {
  require(groups.size() == 2 && predictors.size() == 2, ErrorKind::validation,
          "squared-loss DRO needs exactly 2 groups");
  DRLModel m;
  m.method = "sq_dro";
  SqDroDiagnostics d;
  double* sig[2] = {&d.sigma2_1, &d.sigma2_2};
  for (std::size_t j = 0; j < 2; ++j) {
    const Vector r = groups[j].outcomes() - predictors[j].predict(groups[j].covariates());
    *sig[j] = r.squaredNorm() / static_cast<double>(r.size());
  }
  const Vector diff =
      predictors[0].predict(target.covariates) - predictors[1].predict(target.covariates);
  d.diff_norm2 = diff.squaredNorm() / static_cast<double>(diff.size());
  const double q1 = sq_dro_weight(d.sigma2_1, d.sigma2_2, d.diff_norm2);
  Vector q(2);
  q << q1, 1.0 - q1;
  m.predictors = std::move(predictors);
  m.weights = MixtureSpec::normalized(q);
  m.solution.q = m.weights;
  m.solution.converged = true;
  m.solution.method = "closed_form";
  m.h_set = UncertaintySet::full_simplex(2);
  m.gamma = m.gamma_raw = plugin_gamma(m.predictors, target);
  m.sq_dro = d;
  m.config_fingerprint = config_fingerprint(c);
  return m;
}

inline DRLModel fit_sq_dro_L2(const std::vector<SourceGroup>& groups, const TargetSample& target,
                              const FitConfig& c) {
  require(groups.size() == 2, ErrorKind::validation, "squared-loss DRO needs exactly 2 groups");
  check_groups(groups, &target);
  std::vector<FittedPredictor> full;
  for (const auto& g : groups) full.push_back(fit_full(g, c));
  return sq_dro_model(groups, std::move(full), target, c);
}

/// Same predictors and Gamma, weights re-solved over another prior set.
inline DRLModel with_h_set(const DRLModel& base, const UncertaintySet& h,
                           const SolveOptions& opt = {}) {
  DRLModel m = base;
  m.h_set = h;
  m.solution = solve_weights(m.gamma, h, opt);
  m.weights = m.solution.q;
  return m;
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json to_json(const DRLModel& m) {
  nlohmann::json j;
  j["version"] = kModelFormatVersion;
  j["method"] = m.method;
  const auto& w = m.weights.weights();
  j["weights"] = std::vector<double>(w.data(), w.data() + w.size());
  j["h_set"] = to_json(m.h_set);
  j["gamma"] = to_json(m.gamma);
  j["gamma_raw"] = to_json(m.gamma_raw);
  j["config_fingerprint"] = m.config_fingerprint;
  j["predictors"] = nlohmann::json::array();
  for (const auto& f : m.predictors) j["predictors"].push_back(to_json(f));
  auto& diag = j["diagnostics"];
  diag["solution"] = to_json(m.solution);
  diag["kkt_residual"] =
      m.h_set.kind() == HKind::full_simplex ? kkt_residual(m.gamma.values, w) : 0.0;
  if (m.breakdown) diag["breakdown"] = to_json(*m.breakdown);
  if (m.sq_dro)
    diag["sq_dro"] = {{"sigma2_1", m.sq_dro->sigma2_1},
                      {"sigma2_2", m.sq_dro->sigma2_2},
                      {"diff_norm2", m.sq_dro->diff_norm2}};
  diag["timings"] = nlohmann::json::object();
  for (const auto& [k, v] : m.timings) diag["timings"][k] = v;
  std::vector<std::string> warnings;
  for (const auto& f : m.predictors)
    for (const auto& s : f.warnings()) warnings.push_back("group " + std::to_string(f.group_id()) + ": " + s);
  diag["warnings"] = warnings;
  return j;
}

inline DRLModel model_from_json(const nlohmann::json& j) {
  try {
    require(j.at("version").get<int>() == kModelFormatVersion, ErrorKind::parse,
            "unsupported model format version");
    DRLModel m;
    m.method = j.at("method").get<std::string>();
    m.weights = MixtureSpec::normalized(vector_from_json(j.at("weights")));
    m.h_set = uncertainty_set_from_json(j.at("h_set"));
    m.gamma = gamma_from_json(j.at("gamma"));
    m.gamma_raw = gamma_from_json(j.at("gamma_raw"));
    m.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    for (const auto& f : j.at("predictors")) m.predictors.push_back(predictor_from_json(f));
    require(!m.predictors.empty() && m.weights.size() == m.size(), ErrorKind::parse,
            "model needs one weight per predictor");
    for (const auto& f : m.predictors)
      require(f.p() == m.p(), ErrorKind::parse, "predictors disagree on the input dimension");
    m.solution.q = m.weights;
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("malformed model JSON: ") + e.what());
  }
}

}  // namespace drl
