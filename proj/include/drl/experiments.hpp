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
#include "drl/estimator.hpp"
#include "drl/evaluation.hpp"
#include "drl/parallel.hpp"
#include "drl/simulation.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace drl {

enum class Scale { full, ci };

inline Scale scale_from_string(std::string_view s) {
  if (s == "full" || s == "paper") return Scale::full;
  if (s == "ci") return Scale::ci;
  fail(ErrorKind::validation, "unknown scale '" + std::string(s) + "' (expected full or ci)");
}

struct ExperimentOptions {
  int reps = 0;  // 0 selects the scale default
  std::uint64_t seed = 1;
  Scale scale = Scale::ci;
  unsigned threads = 1;
  nlohmann::json overrides = nlohmann::json::object();
};

/// Plot-ready rows; every cell is already formatted.
struct ResultTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  template <class... Cells>
  void add(const Cells&... cells) {
    rows.push_back({cell(cells)...});
  }

  void write_csv(const std::string& path) const {
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::validation, "cannot write '" + path + "'");
    auto line = [&](const std::vector<std::string>& r) {
      for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
      out << '\n';
    };
    line(columns);
    for (const auto& r : rows) line(r);
  }

 private:
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const char* s) { return s; }
  static std::string cell(double v) { return csv_detail::format_double(v); }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(long v) { return std::to_string(v); }
  static std::string cell(long long v) { return std::to_string(v); }
  static std::string cell(unsigned long v) { return std::to_string(v); }
};

struct ExperimentResult {
  std::string name;
  std::vector<std::pair<std::string, ResultTable>> tables;  // file stem -> table
  nlohmann::json summary;
};

struct ExperimentInfo {
  std::string name;
  Design design;
  std::string description;
};

inline const std::vector<ExperimentInfo>& experiment_registry() {
  static const std::vector<ExperimentInfo> registry = {
      {"fig1-varyL", Design::interaction,
       "worst-group reward of DRL0 with and without sample splitting versus ERM as L grows"},
      {"fig2-L2", Design::interaction,
       "L = 2 reward curves over the target mixture for DRL0, ERM and squared-loss DRO"},
      {"fig4-rho", Design::interaction,
       "L = 4 worst-case reward over target balls of radius e for several prior balls H"},
      {"fig5-fixq", Design::interaction,
       "L = 4 reward at fixed target mixtures as the prior ball radius shrinks"},
      {"fig7", Design::indicator,
       "weight and function error of plug-in versus bias-corrected DRL0 under covariate shift"},
      {"fig8-highdim", Design::highdim_shared,
       "lasso DRL0 versus ERM: target reward and distance to the shared base coefficients"},
      {"fig9-weights", Design::highdim_shared,
       "lasso DRL0 aggregation weights and the heterogeneous coefficients of each group"},
  };
  return registry;
}

inline nlohmann::json registry_manifest() {
  auto j = nlohmann::json::array();
  for (const auto& e : experiment_registry())
    j.push_back({{"name", e.name},
                 {"design", std::string(to_string(e.design))},
                 {"description", e.description}});
  return j;
}

// ---------------------------------------------------------------------------
// Small statistics helpers
// ---------------------------------------------------------------------------

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
  double sd = 0.0;
  std::size_t n = 0;
};

inline MeanSe mean_se(const std::vector<double>& v) {
  MeanSe r;
  r.n = v.size();
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
    r.se = r.sd / std::sqrt(static_cast<double>(v.size()));
  }
  return r;
}

inline nlohmann::json to_json(const MeanSe& m) {
  return {{"mean", m.mean}, {"se", m.se}, {"sd", m.sd}, {"n", m.n}};
}

inline std::string format_fixed(double v, int digits = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::vector<double> linspace_steps(double from, double to, double step) {
  std::vector<double> out;
  const int n = static_cast<int>(std::lround((to - from) / step));
  for (int i = 0; i <= n; ++i) out.push_back(from + step * i);
  return out;
}

/// Per-group rewards of prediction vector `pred` against outcome vectors
/// drawn from each group's conditional law on one covariate sample.
inline Vector per_group_rewards(const Vector& pred, const std::vector<Vector>& outcomes) {
  Vector r(static_cast<Index>(outcomes.size()));
  for (std::size_t l = 0; l < outcomes.size(); ++l)
    r(static_cast<Index>(l)) = empirical_reward(pred, outcomes[l]).reward;
  return r;
}

/// Shared evaluation sample: covariates from the target law plus one
/// outcome vector per group.
struct EvalSample {
  Matrix x;
  std::vector<Vector> y;
};

inline EvalSample draw_eval_sample(const Scenario& sc, Index n, std::uint64_t seed) {
  Rng rng = make_rng(seed, "eval");
  EvalSample e;
  e.x = sc.sample_target_x(n, rng);
  for (Index l = 0; l < sc.truth->L(); ++l) e.y.push_back(sc.sample_outcomes(l, e.x, rng));
  return e;
}

// ---------------------------------------------------------------------------
// Option plumbing
// ---------------------------------------------------------------------------

namespace experiment_detail {

template <class T>
T get_or(const nlohmann::json& o, const char* key, T fallback) {
  if (!o.is_object() || !o.contains(key)) return fallback;
  try {
    return o.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::validation, std::string("override '") + key + "': " + e.what());
  }
}

inline Vector vector_or(const nlohmann::json& o, const char* key, Vector fallback) {
  if (!o.is_object() || !o.contains(key)) return fallback;
  return vector_from_json(o.at(key));
}

inline int reps_or(const ExperimentOptions& opt, int full, int ci) {
  if (opt.reps > 0) return opt.reps;
  return opt.scale == Scale::full ? full : ci;
}

inline SplitMode split_from_string(const std::string& s) {
  if (s == "deterministic" || s == "det") return SplitMode::deterministic;
  if (s == "seeded") return SplitMode::seeded;
  if (s == "none" || s == "no_split") return SplitMode::no_split;
  fail(ErrorKind::validation, "unknown split mode '" + s + "'");
}

inline LearnerSpec learner_from(const ExperimentOptions& opt, LearnerKind fallback) {
  LearnerSpec l;
  l.kind = learner_kind_from_string(
      get_or<std::string>(opt.overrides, "learner", std::string(to_string(fallback))));
  l.forest.n_trees = get_or(opt.overrides, "n_trees", opt.scale == Scale::full ? 200 : 50);
  l.forest.min_leaf = get_or(opt.overrides, "min_leaf", 5);
  l.forest.mtry = get_or(opt.overrides, "mtry", 0);
  l.forest.tune_oob = get_or(opt.overrides, "tune_oob", false);
  return l;
}

inline Index index_or(const ExperimentOptions& opt, const char* key, Index full, Index ci) {
  return get_or<Index>(opt.overrides, key, opt.scale == Scale::full ? full : ci);
}

inline std::vector<Index> sizes_or(const ExperimentOptions& opt, const char* key,
                                   std::vector<Index> full, std::vector<Index> ci) {
  return get_or<std::vector<Index>>(opt.overrides, key, opt.scale == Scale::full ? full : ci);
}

}  // namespace experiment_detail

// ---------------------------------------------------------------------------
// Interaction design, varying L
// ---------------------------------------------------------------------------

struct VaryLParams {
  std::vector<Index> Ls = {2, 3, 4, 5, 6, 7, 8, 9, 10};
  Index n_P_per_L = 2000;
  Index n_Q = 10000;
  Index n_eval = 10000;
  LearnerSpec learner;
  int reps = 100;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct VaryLRecord {
  int rep = 0;
  Index L = 0;
  std::string mixture;  // even | uneven
  std::string method;
  double worst_reward = 0.0;
};

inline Vector uneven_mixture(Index l) {
  Vector q = Vector::Constant(l, 0.45 / static_cast<double>(l - 1));
  q(0) = 0.55;
  return q;
}

inline std::vector<VaryLRecord> run_vary_l(const VaryLParams& p) {
  struct Cell {
    Index L;
    std::string mixture;
  };
  std::vector<Cell> cells;
  for (Index l : p.Ls)
    for (const char* mix : {"even", "uneven"}) cells.push_back({l, mix});
  const std::size_t total = cells.size() * static_cast<std::size_t>(p.reps);
  std::vector<std::vector<VaryLRecord>> out(total);
  parallel_for(total, p.threads, [&](std::size_t idx) {
    const auto& cell = cells[idx % cells.size()];
    const int rep = static_cast<int>(idx / cells.size());
    const std::uint64_t rs = derive_seed(p.seed, "fig1-varyL", static_cast<std::uint64_t>(rep),
                                         static_cast<std::uint64_t>(cell.L));
    ScenarioSpec spec;
    spec.design = Design::interaction;
    spec.L = cell.L;
    spec.q_sou = cell.mixture == "even"
                     ? Vector(Vector::Constant(cell.L, 1.0 / static_cast<double>(cell.L)))
                     : uneven_mixture(cell.L);
    spec.n_P = p.n_P_per_L * cell.L;
    spec.n_Q = p.n_Q;
    spec.seed = rs;
    const Scenario sc = gen_interaction(spec);
    FitConfig cfg;
    cfg.learner = p.learner;
    cfg.seed = derive_seed(rs, "fit");
    cfg.split = SplitMode::no_split;
    const DRLModel nosplit = fit_drl(sc.groups, sc.target, cfg);
    cfg.split = SplitMode::deterministic;
    const DRLModel split = fit_drl(sc.groups, sc.target, cfg);
    const FittedPredictor erm = fit_erm(sc.groups, p.learner, cfg.seed);
    const EvalSample ev = draw_eval_sample(sc, p.n_eval, rs);
    const Matrix f = predict_all(nosplit.predictors, ev.x);
    auto& recs = out[idx];
    recs.push_back({rep, cell.L, cell.mixture, "DRL0-nosplit",
                    per_group_rewards(f * nosplit.weights.weights(), ev.y).minCoeff()});
    recs.push_back({rep, cell.L, cell.mixture, "DRL0-split",
                    per_group_rewards(f * split.weights.weights(), ev.y).minCoeff()});
    recs.push_back({rep, cell.L, cell.mixture, "ERM",
                    per_group_rewards(erm.predict(ev.x), ev.y).minCoeff()});
  });
  std::vector<VaryLRecord> flat;
  for (auto& v : out) flat.insert(flat.end(), v.begin(), v.end());
  return flat;
}

// ---------------------------------------------------------------------------
// Interaction design, L = 2 reward curves
// ---------------------------------------------------------------------------

struct L2Params {
  Vector q_sou = (Vector(2) << 0.2, 0.8).finished();
  Index n_P = 4000;
  Index n_Q = 10000;
  Index n_eval = 10000;
  LearnerSpec learner;
  SplitMode split = SplitMode::no_split;
  std::vector<double> grid = linspace_steps(0.0, 1.0, 0.05);
  int reps = 100;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct L2Replicate {
  int rep = 0;
  Vector drl0, erm, sq;  // per-group rewards
  Vector q_drl0;
  double q1_sq = 0.0;

  static double at(const Vector& per_group, double q1) {
    return q1 * per_group(0) + (1.0 - q1) * per_group(1);
  }
};

inline std::vector<L2Replicate> run_l2(const L2Params& p) {
  std::vector<L2Replicate> out(static_cast<std::size_t>(p.reps));
  parallel_for(out.size(), p.threads, [&](std::size_t r) {
    const std::uint64_t rs = derive_seed(p.seed, "fig2-L2", r);
    ScenarioSpec spec;
    spec.design = Design::interaction;
    spec.L = 2;
    spec.q_sou = p.q_sou;
    spec.n_P = p.n_P;
    spec.n_Q = p.n_Q;
    spec.seed = rs;
    const Scenario sc = gen_interaction(spec);
    FitConfig cfg;
    cfg.learner = p.learner;
    cfg.split = p.split;
    cfg.seed = derive_seed(rs, "fit");
    const DRLModel drl = fit_drl(sc.groups, sc.target, cfg);
    const DRLModel sq = sq_dro_model(sc.groups, drl.predictors, sc.target, cfg);
    const FittedPredictor erm = fit_erm(sc.groups, p.learner, cfg.seed);
    const EvalSample ev = draw_eval_sample(sc, p.n_eval, rs);
    const Matrix f = predict_all(drl.predictors, ev.x);
    L2Replicate& rec = out[r];
    rec.rep = static_cast<int>(r);
    rec.drl0 = per_group_rewards(f * drl.weights.weights(), ev.y);
    rec.sq = per_group_rewards(f * sq.weights.weights(), ev.y);
    rec.erm = per_group_rewards(erm.predict(ev.x), ev.y);
    rec.q_drl0 = drl.weights.weights();
    rec.q1_sq = sq.weights[0];
  });
  return out;
}

// ---------------------------------------------------------------------------
// Interaction design, L = 4 with prior balls
// ---------------------------------------------------------------------------

struct L4Params {
  Vector q_sou = (Vector(4) << 0.55, 0.15, 0.15, 0.15).finished();
  Index n_P = 8000;
  Index n_Q = 10000;
  Index n_eval = 10000;
  LearnerSpec learner;
  SplitMode split = SplitMode::no_split;
  std::vector<double> rhos = {1.0, 0.25, 0.15, 0.02};
  int reps = 100;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  std::string stream = "L4";
};

inline std::string rho_label(double rho) { return "DRL-rho=" + format_fixed(rho); }

struct L4Replicate {
  int rep = 0;
  std::vector<std::pair<std::string, Vector>> rewards;  // method -> per-group rewards
  std::vector<std::pair<std::string, Vector>> weights;

  const Vector& reward(const std::string& method) const {
    for (const auto& [m, v] : rewards)
      if (m == method) return v;
    fail(ErrorKind::validation, "no method '" + method + "' in replicate");
  }
};

inline std::vector<L4Replicate> run_l4(const L4Params& p) {
  std::vector<L4Replicate> out(static_cast<std::size_t>(p.reps));
  parallel_for(out.size(), p.threads, [&](std::size_t r) {
    const std::uint64_t rs = derive_seed(p.seed, p.stream, r);
    ScenarioSpec spec;
    spec.design = Design::interaction;
    spec.L = p.q_sou.size();
    spec.q_sou = p.q_sou;
    spec.n_P = p.n_P;
    spec.n_Q = p.n_Q;
    spec.seed = rs;
    const Scenario sc = gen_interaction(spec);
    FitConfig cfg;
    cfg.learner = p.learner;
    cfg.split = p.split;
    cfg.seed = derive_seed(rs, "fit");
    const DRLModel drl0 = fit_drl(sc.groups, sc.target, cfg);
    const FittedPredictor erm = fit_erm(sc.groups, p.learner, cfg.seed);
    const EvalSample ev = draw_eval_sample(sc, p.n_eval, rs);
    const Matrix f = predict_all(drl0.predictors, ev.x);
    L4Replicate& rec = out[r];
    rec.rep = static_cast<int>(r);
    rec.rewards.emplace_back("ERM", per_group_rewards(erm.predict(ev.x), ev.y));
    rec.rewards.emplace_back("DRL0", per_group_rewards(f * drl0.weights.weights(), ev.y));
    rec.weights.emplace_back("DRL0", drl0.weights.weights());
    const MixtureSpec center(p.q_sou);
    for (double rho : p.rhos) {
      const DRLModel m = with_h_set(drl0, UncertaintySet::l2_ball(center, rho, true));
      rec.rewards.emplace_back(rho_label(rho), per_group_rewards(f * m.weights.weights(), ev.y));
      rec.weights.emplace_back(rho_label(rho), m.weights.weights());
    }
  });
  return out;
}

/// Worst q-mixture reward over {q in simplex : |q - center| <= e sqrt(L)}
/// for each e, on a simplex mesh of resolution `mesh`.
class BallWorstCase {
 public:
  BallWorstCase(const Vector& center, double mesh = 0.01) : center_(center) {
    const Index l = center.size();
    const int steps = static_cast<int>(std::lround(1.0 / mesh));
    std::vector<std::pair<double, Vector>> pts;
    weights_detail::enumerate_mesh(l, steps, [&](const Vector& q) {
      pts.emplace_back((q - center).norm() / std::sqrt(static_cast<double>(l)), q);
    });
    std::stable_sort(pts.begin(), pts.end(),
                     [](const auto& a, const auto& b) { return a.first < b.first; });
    dist_.reserve(pts.size());
    points_ = Matrix(static_cast<Index>(pts.size()), l);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      dist_.push_back(pts[i].first);
      points_.row(static_cast<Index>(i)) = pts[i].second.transpose();
    }
  }

  /// Worst reward for each radius in `es` (the center is always admitted).
  std::vector<double> worst(const Vector& per_group, const std::vector<double>& es) const {
    const Vector v = points_ * per_group;
    std::vector<double> out;
    const double at_center = center_.dot(per_group);
    for (double e : es) {
      double w = at_center;
      for (std::size_t i = 0; i < dist_.size() && dist_[i] <= e + 1e-12; ++i)
        w = std::min(w, v(static_cast<Index>(i)));
      out.push_back(w);
    }
    return out;
  }

 private:
  Vector center_;
  std::vector<double> dist_;
  Matrix points_;
};

// ---------------------------------------------------------------------------
// Indicator design under covariate shift
// ---------------------------------------------------------------------------

struct IndicatorParams {
  std::vector<Index> n_per_group = {200, 400, 600};
  Index L = 5;
  Index n_Q = 1000;
  Index n_truth = 100000;
  Index n_eval = 10000;
  Vector target_mean = (Vector(4) << 0.5, -0.5, 0.5, -0.5).finished();
  LearnerSpec learner;
  SplitMode split = SplitMode::deterministic;
  double ratio_l1 = 0.0;
  int reps = 100;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct WeightErrorRecord {
  int rep = 0;
  Index n = 0;
  std::string method;
  double q_err = 0.0;  // |q_hat - q_star|^2
  double f_err = 0.0;  // mean (f_hat - f_star)^2 under the target law
  Vector q;
  Vector q_star;
};

inline std::vector<WeightErrorRecord> run_indicator(const IndicatorParams& p) {
  const std::size_t cells = p.n_per_group.size();
  const std::size_t total = cells * static_cast<std::size_t>(p.reps);
  std::vector<std::vector<WeightErrorRecord>> out(total);
  parallel_for(total, p.threads, [&](std::size_t idx) {
    const int rep = static_cast<int>(idx / cells);
    const Index n = p.n_per_group[idx % cells];
    const std::uint64_t rs = derive_seed(p.seed, "fig7", static_cast<std::uint64_t>(rep));
    ScenarioSpec spec;
    spec.design = Design::indicator;
    spec.L = p.L;
    spec.n_per_group = n;
    spec.n_Q = p.n_Q;
    spec.target_mean = p.target_mean;
    spec.seed = rs;
    const Scenario sc = gen_indicator(spec);

    FitConfig cfg;
    cfg.learner = p.learner;
    cfg.split = p.split;
    cfg.shift = ShiftMode::logistic;
    cfg.ratio_l1 = p.ratio_l1;
    cfg.seed = derive_seed(rs, "fit", static_cast<std::uint64_t>(n));
    std::vector<SourceGroup> groups;
    for (const auto& g : sc.groups) groups.push_back(prepare_group(g, cfg));
    std::vector<SiteFits> sites;
    for (const auto& g : groups) sites.push_back(fit_site(g, &sc.target.covariates, cfg));
    std::vector<FittedPredictor> full, pa, pb;
    for (const auto& s : sites) {
      full.push_back(s.full);
      pa.push_back(s.half_a);
      pb.push_back(s.half_b);
    }
    std::vector<SiteBias> log_cols, id_cols;
    for (std::size_t l = 0; l < groups.size(); ++l) {
      log_cols.push_back(site_bias_columns(pa, pb, groups[l], sites[l].ratio_a, sites[l].ratio_b,
                                           static_cast<Index>(l), ShiftMode::logistic));
      id_cols.push_back(site_bias_columns(pa, pb, groups[l], sites[l].ratio_a, sites[l].ratio_b,
                                          static_cast<Index>(l), ShiftMode::none));
    }
    const DRLModel log = assemble_drl(full, pa, pb, log_cols, sc.target, cfg);
    FitConfig cfg_id = cfg;
    cfg_id.shift = ShiftMode::none;
    const DRLModel id = assemble_drl(full, pa, pb, id_cols, sc.target, cfg_id);
    const GammaMatrix plug_gamma = psd_repair(plugin_gamma(full, sc.target), cfg.psd_ridge);
    const Vector q_plug =
        solve_weights(plug_gamma, UncertaintySet::full_simplex(p.L)).q.weights();

    const GammaMatrix true_gamma{truth_gamma(sc, p.n_truth, rs), GammaProvenance::plugin, false};
    const Vector q_star =
        solve_weights(psd_repair(true_gamma), UncertaintySet::full_simplex(p.L)).q.weights();

    Rng rng = make_rng(rs, "eval", static_cast<std::uint64_t>(n));
    const Matrix xe = sc.sample_target_x(p.n_eval, rng);
    const Vector f_star = sc.truth->eval_all(xe) * q_star;
    const Matrix fh = predict_all(full, xe);
    auto record = [&](const std::string& method, const Vector& q) {
      out[idx].push_back({rep, n, method, (q - q_star).squaredNorm(),
                          (fh * q - f_star).squaredNorm() / static_cast<double>(xe.rows()), q,
                          q_star});
    };
    record("DRL0-plug", q_plug);
    record("DRL0-log", log.weights.weights());
    record("DRL0-id", id.weights.weights());
  });
  std::vector<WeightErrorRecord> flat;
  for (auto& v : out) flat.insert(flat.end(), v.begin(), v.end());
  return flat;
}

// ---------------------------------------------------------------------------
// High-dimensional shared component
// ---------------------------------------------------------------------------

struct HighdimParams {
  std::vector<Index> n_per_group = {100, 400, 1200};
  Index L = 5;
  Index p = 200;
  Index n_Q = 10000;
  Index n_eval = 10000;
  int cv_folds = 10;
  SplitMode split = SplitMode::no_split;
  int reps = 100;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct HighdimRecord {
  int rep = 0;
  Index n = 0;
  double dist_drl = 0.0;  // |slopes - base|^2
  double dist_erm = 0.0;
  double reward_drl = 0.0;
  double reward_erm = 0.0;
  Vector weights;
  Matrix heterogeneous;  // L x 3 coefficients 11..13
};

inline std::vector<HighdimRecord> run_highdim(const HighdimParams& p) {
  const std::size_t cells = p.n_per_group.size();
  const std::size_t total = cells * static_cast<std::size_t>(p.reps);
  std::vector<HighdimRecord> out(total);
  parallel_for(total, p.threads, [&](std::size_t idx) {
    const int rep = static_cast<int>(idx / cells);
    const Index n = p.n_per_group[idx % cells];
    const std::uint64_t rs = derive_seed(p.seed, "fig8-highdim", static_cast<std::uint64_t>(rep));
    ScenarioSpec spec;
    spec.design = Design::highdim_shared;
    spec.L = p.L;
    spec.p = p.p;
    spec.n_per_group = n;
    spec.n_Q = p.n_Q;
    spec.seed = rs;
    const Scenario sc = gen_highdim_shared(spec);
    const auto& truth = static_cast<const LinearTruth&>(*sc.truth);

    FitConfig cfg;
    cfg.learner.kind = LearnerKind::lasso;
    cfg.learner.lasso_cv_folds = p.cv_folds;
    cfg.split = p.split;
    cfg.seed = derive_seed(rs, "fit", static_cast<std::uint64_t>(n));
    const DRLModel drl = fit_drl(sc.groups, sc.target, cfg);
    const FittedPredictor erm = fit_erm(sc.groups, cfg.learner, cfg.seed);

    Rng rng = make_rng(rs, "eval", static_cast<std::uint64_t>(n));
    const Matrix xe = sc.sample_target_x(p.n_eval, rng);
    Vector ye = *truth.eval_target(xe);
    NormalSampler norm;
    for (Index i = 0; i < ye.size(); ++i) ye(i) += norm(rng);

    HighdimRecord& rec = out[idx];
    rec.rep = rep;
    rec.n = n;
    const Vector& base = truth.base_coefficients();
    rec.dist_drl = (drl.aggregate_coefficients().tail(p.p) - base).squaredNorm();
    rec.dist_erm = (erm.coefficients().tail(p.p) - base).squaredNorm();
    rec.reward_drl = empirical_reward(drl.predict(xe), ye).reward;
    rec.reward_erm = empirical_reward(erm.predict(xe), ye).reward;
    rec.weights = drl.weights.weights();
    rec.heterogeneous = truth.coefficients().middleCols(10, 3);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Registry dispatch
// ---------------------------------------------------------------------------

namespace experiment_detail {

inline ExperimentResult fig1(const ExperimentOptions& opt) {
  VaryLParams p;
  p.Ls = sizes_or(opt, "Ls", {2, 3, 4, 5, 6, 7, 8, 9, 10}, {2, 3});
  p.n_P_per_L = index_or(opt, "n_P_per_L", 2000, 500);
  p.n_Q = index_or(opt, "n_Q", 10000, 2000);
  p.n_eval = index_or(opt, "n_eval", 10000, 2000);
  p.learner = learner_from(opt, LearnerKind::forest);
  p.reps = reps_or(opt, 100, 3);
  p.seed = opt.seed;
  p.threads = opt.threads;
  ExperimentResult res{"fig1-varyL", {}, {}};
  ResultTable t{{"rep", "L", "mixture", "method", "worst_reward"}, {}};
  std::map<std::string, std::vector<double>> agg;
  for (const auto& r : run_vary_l(p)) {
    t.add(r.rep, static_cast<long long>(r.L), r.mixture, r.method, r.worst_reward);
    agg[std::to_string(r.L) + "/" + r.mixture + "/" + r.method].push_back(r.worst_reward);
  }
  for (const auto& [k, v] : agg) res.summary["worst_reward"][k] = to_json(mean_se(v));
  res.tables.emplace_back("fig1-varyL", std::move(t));
  return res;
}

inline L2Params l2_params(const ExperimentOptions& opt) {
  L2Params p;
  p.q_sou = vector_or(opt.overrides, "q_sou", p.q_sou);
  p.n_P = index_or(opt, "n_P", 4000, 1000);
  p.n_Q = index_or(opt, "n_Q", 10000, 2000);
  p.n_eval = index_or(opt, "n_eval", 10000, 2000);
  p.learner = learner_from(opt, LearnerKind::forest);
  p.split = split_from_string(get_or<std::string>(opt.overrides, "split", "none"));
  p.reps = reps_or(opt, 100, 3);
  p.seed = opt.seed;
  p.threads = opt.threads;
  return p;
}

inline ExperimentResult fig2(const ExperimentOptions& opt) {
  const L2Params p = l2_params(opt);
  const auto reps = run_l2(p);
  ExperimentResult res{"fig2-L2", {}, {}};
  ResultTable t{{"rep", "method", "q1_tar", "reward"}, {}};
  ResultTable w{{"rep", "method", "worst_reward", "reward_at_q_sou", "q1"}, {}};
  std::map<std::string, std::map<std::string, std::vector<double>>> agg;
  for (const auto& r : reps) {
    for (const auto& [name, per] :
         {std::pair{"DRL0", &r.drl0}, std::pair{"ERM", &r.erm}, std::pair{"DRO-sq", &r.sq}}) {
      for (double q1 : p.grid) {
        const double v = L2Replicate::at(*per, q1);
        t.add(r.rep, name, q1, v);
        agg[name][format_fixed(q1)].push_back(v);
      }
      const double q1 = std::string(name) == "DRL0" ? r.q_drl0(0)
                        : std::string(name) == "DRO-sq" ? r.q1_sq
                                                        : std::nan("");
      w.add(r.rep, name, per->minCoeff(), L2Replicate::at(*per, p.q_sou(0)), q1);
      agg[name]["worst"].push_back(per->minCoeff());
    }
  }
  for (const auto& [m, cells] : agg)
    for (const auto& [k, v] : cells) res.summary["reward"][m][k] = to_json(mean_se(v));
  res.summary["q_sou"] = std::vector<double>(p.q_sou.data(), p.q_sou.data() + 2);
  res.tables.emplace_back("fig2-L2", std::move(t));
  res.tables.emplace_back("fig2-L2-worst", std::move(w));
  return res;
}

inline L4Params l4_params(const ExperimentOptions& opt, std::vector<double> rhos,
                          const char* stream) {
  L4Params p;
  p.q_sou = vector_or(opt.overrides, "q_sou", p.q_sou);
  p.n_P = index_or(opt, "n_P", 8000, 2000);
  p.n_Q = index_or(opt, "n_Q", 10000, 2000);
  p.n_eval = index_or(opt, "n_eval", 10000, 2000);
  p.learner = learner_from(opt, LearnerKind::forest);
  p.split = split_from_string(get_or<std::string>(opt.overrides, "split", "none"));
  p.rhos = get_or(opt.overrides, "rhos", std::move(rhos));
  p.reps = reps_or(opt, 100, 3);
  p.seed = opt.seed;
  p.threads = opt.threads;
  p.stream = stream;
  return p;
}

inline ExperimentResult fig4(const ExperimentOptions& opt) {
  const L4Params p = l4_params(opt, {1.0, 0.25, 0.15, 0.02}, "fig4-rho");
  const auto reps = run_l4(p);
  const std::vector<double> es = linspace_steps(0.0, 0.4, 0.01);
  const BallWorstCase wc(p.q_sou);
  ExperimentResult res{"fig4-rho", {}, {}};
  ResultTable t{{"rep", "method", "e", "worst_reward"}, {}};
  std::map<std::string, std::map<std::string, std::vector<double>>> agg;
  for (const auto& r : reps)
    for (const auto& [m, per] : r.rewards) {
      const auto w = wc.worst(per, es);
      for (std::size_t i = 0; i < es.size(); ++i) {
        t.add(r.rep, m, es[i], w[i]);
        agg[m][format_fixed(es[i])].push_back(w[i]);
      }
    }
  for (const auto& [m, cells] : agg)
    for (const auto& [k, v] : cells) res.summary["worst_reward"][m][k] = to_json(mean_se(v));
  res.summary["mesh"] = 0.01;
  res.tables.emplace_back("fig4-rho", std::move(t));
  return res;
}

inline ExperimentResult fig5(const ExperimentOptions& opt) {
  std::vector<double> rhos = linspace_steps(0.0, 0.30, 0.01);
  const L4Params p = l4_params(opt, rhos, "fig5-fixq");
  const auto reps = run_l4(p);
  const std::vector<std::pair<std::string, Vector>> settings = {
      {"setting1", (Vector(4) << 0.0, 0.1, 0.9, 0.0).finished()},
      {"setting2", (Vector(4) << 0.25, 0.25, 0.25, 0.25).finished()},
      {"setting3", (Vector(4) << 0.5, 0.15, 0.2, 0.15).finished()},
      {"source", p.q_sou}};
  ExperimentResult res{"fig5-fixq", {}, {}};
  ResultTable t{{"rep", "method", "setting", "reward"}, {}};
  std::map<std::string, std::map<std::string, std::vector<double>>> agg;
  for (const auto& r : reps)
    for (const auto& [m, per] : r.rewards)
      for (const auto& [s, q] : settings) {
        const double v = q.dot(per);
        t.add(r.rep, m, s, v);
        agg[m][s].push_back(v);
      }
  for (const auto& [m, cells] : agg)
    for (const auto& [k, v] : cells) res.summary["reward"][m][k] = to_json(mean_se(v));
  res.tables.emplace_back("fig5-fixq", std::move(t));
  return res;
}

inline IndicatorParams indicator_params(const ExperimentOptions& opt) {
  IndicatorParams p;
  p.n_per_group = sizes_or(opt, "n", {200, 400, 600}, {200});
  p.n_Q = index_or(opt, "n_Q", 1000, 1000);
  p.n_truth = index_or(opt, "n_truth", 100000, 20000);
  p.n_eval = index_or(opt, "n_eval", 10000, 2000);
  p.target_mean = vector_or(opt.overrides, "target_mean", p.target_mean);
  p.learner = learner_from(opt, LearnerKind::forest);
  p.split = split_from_string(get_or<std::string>(opt.overrides, "split", "deterministic"));
  p.ratio_l1 = get_or(opt.overrides, "ratio_l1", 0.0);
  p.reps = reps_or(opt, 100, 3);
  p.seed = opt.seed;
  p.threads = opt.threads;
  return p;
}

inline ExperimentResult fig7(const ExperimentOptions& opt) {
  const IndicatorParams p = indicator_params(opt);
  ExperimentResult res{"fig7", {}, {}};
  ResultTable t{{"rep", "n", "method", "q_err", "f_err"}, {}};
  std::map<std::string, std::map<std::string, std::vector<double>>> qa, fa;
  for (const auto& r : run_indicator(p)) {
    t.add(r.rep, static_cast<long long>(r.n), r.method, r.q_err, r.f_err);
    qa[r.method][std::to_string(r.n)].push_back(r.q_err);
    fa[r.method][std::to_string(r.n)].push_back(r.f_err);
  }
  for (const auto& [m, cells] : qa)
    for (const auto& [k, v] : cells) res.summary["q_err"][m][k] = to_json(mean_se(v));
  for (const auto& [m, cells] : fa)
    for (const auto& [k, v] : cells) res.summary["f_err"][m][k] = to_json(mean_se(v));
  res.summary["q_star"] = {{"source", "monte_carlo_oracle"}, {"n", p.n_truth}};
  res.tables.emplace_back("fig7", std::move(t));
  return res;
}

inline HighdimParams highdim_params(const ExperimentOptions& opt,
                                    std::vector<Index> full_sizes) {
  HighdimParams p;
  p.n_per_group = sizes_or(opt, "n", std::move(full_sizes), {100, 400});
  p.p = index_or(opt, "p", 200, 200);
  p.n_Q = index_or(opt, "n_Q", 10000, 2000);
  p.n_eval = index_or(opt, "n_eval", 10000, 2000);
  p.cv_folds = get_or(opt.overrides, "cv_folds", 10);
  p.split = split_from_string(get_or<std::string>(opt.overrides, "split", "none"));
  p.reps = reps_or(opt, 100, 3);
  p.seed = opt.seed;
  p.threads = opt.threads;
  return p;
}

inline ExperimentResult fig8(const ExperimentOptions& opt) {
  const HighdimParams p = highdim_params(opt, {100, 200, 300, 400, 800, 1200});
  ExperimentResult res{"fig8-highdim", {}, {}};
  ResultTable t{{"rep", "n", "method", "coef_dist2", "reward"}, {}};
  std::map<std::string, std::map<std::string, std::vector<double>>> da, ra;
  for (const auto& r : run_highdim(p)) {
    const auto n = std::to_string(r.n);
    t.add(r.rep, static_cast<long long>(r.n), "DRL0", r.dist_drl, r.reward_drl);
    t.add(r.rep, static_cast<long long>(r.n), "ERM", r.dist_erm, r.reward_erm);
    da["DRL0"][n].push_back(r.dist_drl);
    da["ERM"][n].push_back(r.dist_erm);
    ra["DRL0"][n].push_back(r.reward_drl);
    ra["ERM"][n].push_back(r.reward_erm);
  }
  for (const auto& [m, cells] : da)
    for (const auto& [k, v] : cells) res.summary["coef_dist2"][m][k] = to_json(mean_se(v));
  for (const auto& [m, cells] : ra)
    for (const auto& [k, v] : cells) res.summary["reward"][m][k] = to_json(mean_se(v));
  res.tables.emplace_back("fig8-highdim", std::move(t));
  return res;
}

inline ExperimentResult fig9(const ExperimentOptions& opt) {
  const HighdimParams p = highdim_params(opt, {100, 200, 300, 400, 800, 1200});
  ExperimentResult res{"fig9-weights", {}, {}};
  ResultTable t{{"rep", "n", "group", "weight", "coef11", "coef12", "coef13"}, {}};
  std::map<std::string, std::vector<double>> sums;
  for (const auto& r : run_highdim(p)) {
    for (Index l = 0; l < r.weights.size(); ++l)
      t.add(r.rep, static_cast<long long>(r.n), static_cast<long long>(l + 1), r.weights(l),
            r.heterogeneous(l, 0), r.heterogeneous(l, 1), r.heterogeneous(l, 2));
    sums[std::to_string(r.n)].push_back(r.weights.sum());
  }
  for (const auto& [k, v] : sums) res.summary["weight_sum"][k] = to_json(mean_se(v));
  res.tables.emplace_back("fig9-weights", std::move(t));
  return res;
}

}  // namespace experiment_detail

inline ExperimentResult run_experiment(const std::string& name, const ExperimentOptions& opt) {
  using namespace experiment_detail;
  ExperimentResult res;
  if (name == "fig1-varyL") res = fig1(opt);
  else if (name == "fig2-L2") res = fig2(opt);
  else if (name == "fig4-rho") res = fig4(opt);
  else if (name == "fig5-fixq") res = fig5(opt);
  else if (name == "fig7") res = fig7(opt);
  else if (name == "fig8-highdim") res = fig8(opt);
  else if (name == "fig9-weights") res = fig9(opt);
  else fail(ErrorKind::validation, "unknown experiment '" + name + "'");
  res.summary["name"] = name;
  res.summary["seed"] = opt.seed;
  res.summary["scale"] = opt.scale == Scale::full ? "full" : "ci";
  res.summary["overrides"] = opt.overrides;
  return res;
}

/// Writes <stem>.csv per table and <name>.json into `dir`.
inline std::vector<std::string> write_result(const ExperimentResult& res, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> written;
  for (const auto& [stem, table] : res.tables) {
    const auto path = (std::filesystem::path(dir) / (stem + ".csv")).string();
    table.write_csv(path);
    written.push_back(path);
  }
  const auto path = (std::filesystem::path(dir) / (res.name + ".json")).string();
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::validation, "cannot write '" + path + "'");
  out << res.summary.dump(2) << '\n';
  written.push_back(path);
  return written;
}

}  // namespace drl
