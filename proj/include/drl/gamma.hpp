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
#include "drl/learners.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace drl {

enum class GammaProvenance { plugin, bias_corrected_noshift, bias_corrected_shift };

inline std::string_view to_string(GammaProvenance p) {
  switch (p) {
    case GammaProvenance::plugin: return "plugin";
    case GammaProvenance::bias_corrected_noshift: return "bias_corrected_noshift";
    case GammaProvenance::bias_corrected_shift: return "bias_corrected_shift";
  }
  return "plugin";
}

inline GammaProvenance gamma_provenance_from_string(std::string_view s) {
  if (s == "plugin") return GammaProvenance::plugin;
  if (s == "bias_corrected_noshift") return GammaProvenance::bias_corrected_noshift;
  if (s == "bias_corrected_shift") return GammaProvenance::bias_corrected_shift;
  fail(ErrorKind::parse, "unknown gamma provenance '" + std::string(s) + "'");
}

/// Symmetric L x L estimate of E_Q[f_k(X) f_l(X)].
struct GammaMatrix {
  Matrix values;
  GammaProvenance provenance = GammaProvenance::plugin;
  bool psd_repaired = false;

  Index size() const { return values.rows(); }
};

/// Entry (k, l) is the correction D_{k,l} for predictors fit on `scope`.
struct BiasTermMatrix {
  Matrix values;
  FitScope scope = FitScope::half_a;
};

/// (1/n) sum_j F(j,k) F(j,l) for k <= l, mirrored so the result is exactly
/// symmetric.
inline Matrix symmetric_gram(const Matrix& f) {
  const Index l = f.cols();
  const double inv = 1.0 / static_cast<double>(f.rows());
  Matrix g(l, l);
  for (Index a = 0; a < l; ++a)
    for (Index b = a; b < l; ++b) {
      g(a, b) = f.col(a).dot(f.col(b)) * inv;
      g(b, a) = g(a, b);
    }
  return g;
}

/// n_Q x L matrix of predictions on the target covariates.
inline Matrix predict_all(const std::vector<FittedPredictor>& predictors, const Matrix& x) {
  Matrix out(x.rows(), static_cast<Index>(predictors.size()));
  for (std::size_t k = 0; k < predictors.size(); ++k)
    out.col(static_cast<Index>(k)) = predictors[k].predict(x);
  return out;
}

inline Matrix target_gram(const std::vector<FittedPredictor>& predictors,
                          const TargetSample& target) {
  require(!predictors.empty(), ErrorKind::validation, "no predictors");
  require(target.n() >= 1, ErrorKind::insufficient_data, "target sample is empty");
  for (const auto& f : predictors)
    require(f.p() == target.p(), ErrorKind::shape,
            "predictor dimension " + std::to_string(f.p()) + " != target dimension " +
                std::to_string(target.p()));
  Matrix g = symmetric_gram(predict_all(predictors, target.covariates));
  require_finite(g, "target Gram matrix");
  return g;
}

inline GammaMatrix plugin_gamma(const std::vector<FittedPredictor>& predictors,
                                const TargetSample& target) {
  return GammaMatrix{target_gram(predictors, target), GammaProvenance::plugin, false};
}

namespace gamma_detail {

struct ColumnInputs {
  Matrix f;        // m x L predictions of the scope-s models on the held-out half
  Vector residual; // f_l - y on the held-out half
};

inline ColumnInputs column_inputs(const std::vector<FittedPredictor>& predictors_half,
                                  const SourceGroup& group, Index l) {
  const FitScope scope = predictors_half.at(static_cast<std::size_t>(l)).scope();
  require(scope != FitScope::full, ErrorKind::validation,
          "bias terms need half-fit predictors");
  for (const auto& f : predictors_half)
    require(f.scope() == scope, ErrorKind::validation,
            "all predictors in a bias-term call must share one fit scope");
  const FitScope eval = complement(scope);
  require(!group.split(eval).empty(), ErrorKind::estimation,
          "group " + std::to_string(group.group_id()) + " has an empty " +
              std::string(to_string(eval)) + " split");
  const Matrix x = group.covariates(eval);
  ColumnInputs in;
  in.f = predict_all(predictors_half, x);
  in.residual = in.f.col(l) - group.outcomes(eval);
  return in;
}

}  // namespace gamma_detail

/// Column l of D for predictors fit on scope s: for every k,
/// (1/m) sum_i w(X_i) f_k(X_i) (f_l(X_i) - Y_i) over the m rows of group l's
/// complementary half.
inline Vector bias_column(const std::vector<FittedPredictor>& predictors_half,
                          const SourceGroup& group, const DensityRatioModel& ratio, Index l) {
  auto in = gamma_detail::column_inputs(predictors_half, group, l);
  require(ratio.scope == predictors_half[static_cast<std::size_t>(l)].scope(),
          ErrorKind::validation, "ratio model scope does not match predictor scope");
  const Vector w = eval_ratio(ratio, group.covariates(complement(ratio.scope)));
  const Vector wr = w.cwiseProduct(in.residual);
  const Index m = in.f.rows();
  Vector col(in.f.cols());
  for (Index k = 0; k < in.f.cols(); ++k) {
    double s = 0.0;
    for (Index i = 0; i < m; ++i) s += in.f(i, k) * wr(i);
    col(k) = s / static_cast<double>(m);
  }
  require_finite(col, "bias term column");
  return col;
}

/// The same column without density-ratio weights.
inline Vector bias_column_noshift(const std::vector<FittedPredictor>& predictors_half,
                                  const SourceGroup& group, Index l) {
  auto in = gamma_detail::column_inputs(predictors_half, group, l);
  const Index m = in.f.rows();
  Vector col(in.f.cols());
  for (Index k = 0; k < in.f.cols(); ++k) {
    double s = 0.0;
    for (Index i = 0; i < m; ++i) s += in.f(i, k) * in.residual(i);
    col(k) = s / static_cast<double>(m);
  }
  require_finite(col, "bias term column");
  return col;
}

inline BiasTermMatrix bias_terms(const std::vector<FittedPredictor>& predictors_half,
                                 const std::vector<SourceGroup>& groups,
                                 const std::vector<DensityRatioModel>& ratios_half) {
  const auto l = predictors_half.size();
  require(l > 0 && groups.size() == l && ratios_half.size() == l, ErrorKind::validation,
          "bias terms need one predictor, group and ratio model per group");
  BiasTermMatrix d{Matrix(static_cast<Index>(l), static_cast<Index>(l)),
                   predictors_half[0].scope()};
  for (std::size_t j = 0; j < l; ++j)
    d.values.col(static_cast<Index>(j)) =
        bias_column(predictors_half, groups[j], ratios_half[j], static_cast<Index>(j));
  return d;
}

inline BiasTermMatrix bias_terms_noshift(const std::vector<FittedPredictor>& predictors_half,
                                         const std::vector<SourceGroup>& groups) {
  const auto l = predictors_half.size();
  require(l > 0 && groups.size() == l, ErrorKind::validation,
          "bias terms need one predictor and group per group");
  BiasTermMatrix d{Matrix(static_cast<Index>(l), static_cast<Index>(l)),
                   predictors_half[0].scope()};
  for (std::size_t j = 0; j < l; ++j)
    d.values.col(static_cast<Index>(j)) =
        bias_column_noshift(predictors_half, groups[j], static_cast<Index>(j));
  return d;
}

/// Everything that went into a bias-corrected estimate.
struct GammaBreakdown {
  Matrix gram_a, gram_b;  // target Gram matrices of the half fits
  BiasTermMatrix d_a, d_b;
  GammaMatrix gamma;
};

/// ((G_A - D_A - D_A') + (G_B - D_B - D_B')) / 2 on k <= l, mirrored.
inline GammaMatrix assemble_gamma(const Matrix& gram_a, const Matrix& gram_b,
                                  const BiasTermMatrix& d_a, const BiasTermMatrix& d_b,
                                  GammaProvenance provenance) {
  const Index l = gram_a.rows();
  require(gram_b.rows() == l && d_a.values.rows() == l && d_b.values.rows() == l,
          ErrorKind::shape, "inconsistent Gamma component sizes");
  Matrix g(l, l);
  for (Index k = 0; k < l; ++k)
    for (Index j = k; j < l; ++j) {
      const double a = gram_a(k, j) - d_a.values(k, j) - d_a.values(j, k);
      const double b = gram_b(k, j) - d_b.values(k, j) - d_b.values(j, k);
      g(k, j) = 0.5 * (a + b);
      g(j, k) = g(k, j);
    }
  require_finite(g, "bias-corrected Gamma");
  return GammaMatrix{std::move(g), provenance, false};
}

inline GammaBreakdown bias_corrected_gamma_breakdown(
    const std::vector<FittedPredictor>& predictors_a,
    const std::vector<FittedPredictor>& predictors_b, const std::vector<SourceGroup>& groups,
    const std::vector<DensityRatioModel>& ratios_a,
    const std::vector<DensityRatioModel>& ratios_b, const TargetSample& target) {
  GammaBreakdown out;
  out.gram_a = target_gram(predictors_a, target);
  out.gram_b = target_gram(predictors_b, target);
  out.d_a = bias_terms(predictors_a, groups, ratios_a);
  out.d_b = bias_terms(predictors_b, groups, ratios_b);
  bool shift = false;
  for (const auto* rs : {&ratios_a, &ratios_b})
    for (const auto& r : *rs) shift = shift || r.kind != RatioKind::identity;
  out.gamma = assemble_gamma(out.gram_a, out.gram_b, out.d_a, out.d_b,
                             shift ? GammaProvenance::bias_corrected_shift
                                   : GammaProvenance::bias_corrected_noshift);
  return out;
}

inline GammaMatrix bias_corrected_gamma(const std::vector<FittedPredictor>& predictors_a,
                                        const std::vector<FittedPredictor>& predictors_b,
                                        const std::vector<SourceGroup>& groups,
                                        const std::vector<DensityRatioModel>& ratios_a,
                                        const std::vector<DensityRatioModel>& ratios_b,
                                        const TargetSample& target) {
  return bias_corrected_gamma_breakdown(predictors_a, predictors_b, groups, ratios_a,
                                        ratios_b, target)
      .gamma;
}

/// Dedicated path for the no-covariate-shift estimator.
inline GammaBreakdown bias_corrected_gamma_noshift_breakdown(
    const std::vector<FittedPredictor>& predictors_a,
    const std::vector<FittedPredictor>& predictors_b, const std::vector<SourceGroup>& groups,
    const TargetSample& target) {
  GammaBreakdown out;
  out.gram_a = target_gram(predictors_a, target);
  out.gram_b = target_gram(predictors_b, target);
  out.d_a = bias_terms_noshift(predictors_a, groups);
  out.d_b = bias_terms_noshift(predictors_b, groups);
  out.gamma = assemble_gamma(out.gram_a, out.gram_b, out.d_a, out.d_b,
                             GammaProvenance::bias_corrected_noshift);
  return out;
}

inline GammaMatrix bias_corrected_gamma_noshift(const std::vector<FittedPredictor>& predictors_a,
                                                const std::vector<FittedPredictor>& predictors_b,
                                                const std::vector<SourceGroup>& groups,
                                                const TargetSample& target) {
  return bias_corrected_gamma_noshift_breakdown(predictors_a, predictors_b, groups, target)
      .gamma;
}

/// Eigenvalues below -psd_tolerance(G) make G indefinite for our purposes.
inline double psd_tolerance(const Matrix& g) {
  const double scale = g.size() > 0 ? g.cwiseAbs().maxCoeff() : 0.0;
  return 1e-12 * std::max(1.0, scale);
}

inline double min_eigenvalue(const Matrix& g) {
  if (g.size() == 0) return 0.0;
  return Eigen::SelfAdjointEigenSolver<Matrix>(g, Eigen::EigenvaluesOnly).eigenvalues()(0);
}

inline bool is_psd(const Matrix& g) { return min_eigenvalue(g) >= -psd_tolerance(g); }

/// Clips negative eigenvalues to zero, then adds `ridge` to the diagonal.
/// The flag records whether clipping happened.
inline GammaMatrix psd_repair(const GammaMatrix& gamma, double ridge = 0.0) {
  require(ridge >= 0.0 && std::isfinite(ridge), ErrorKind::validation,
          "ridge must be nonnegative");
  require(gamma.values.rows() == gamma.values.cols(), ErrorKind::shape, "Gamma must be square");
  require_finite(gamma.values, "Gamma");
  GammaMatrix out = gamma;
  Eigen::SelfAdjointEigenSolver<Matrix> es(gamma.values);
  if (es.eigenvalues()(0) < -psd_tolerance(gamma.values)) {
    const Vector clipped = es.eigenvalues().cwiseMax(0.0);
    Matrix r = es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
    out.values = 0.5 * (r + r.transpose());
    out.psd_repaired = true;
  }
  out.values.diagonal().array() += ridge;
  return out;
}

inline nlohmann::json matrix_to_json(const Matrix& m) {
  auto rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) {
    std::vector<double> r(static_cast<std::size_t>(m.cols()));
    for (Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(r);
  }
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j) {
  try {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    const auto n = static_cast<Index>(rows.size());
    const Index c = n > 0 ? static_cast<Index>(rows[0].size()) : 0;
    Matrix m(n, c);
    for (Index i = 0; i < n; ++i) {
      require(static_cast<Index>(rows[static_cast<std::size_t>(i)].size()) == c,
              ErrorKind::parse, "ragged matrix in JSON");
      for (Index k = 0; k < c; ++k) m(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("malformed matrix JSON: ") + e.what());
  }
}

inline nlohmann::json to_json(const GammaMatrix& g) {
  return {{"values", matrix_to_json(g.values)},
          {"provenance", std::string(to_string(g.provenance))},
          {"psd_repaired", g.psd_repaired}};
}

inline GammaMatrix gamma_from_json(const nlohmann::json& j) {
  try {
    GammaMatrix g;
    g.values = matrix_from_json(j.at("values"));
    g.provenance = gamma_provenance_from_string(j.at("provenance").get<std::string>());
    g.psd_repaired = j.at("psd_repaired").get<bool>();
    require(g.values.rows() == g.values.cols(), ErrorKind::parse, "Gamma must be square");
    return g;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, std::string("malformed Gamma JSON: ") + e.what());
  }
}

inline nlohmann::json to_json(const GammaBreakdown& b) {
  return {{"gram_a", matrix_to_json(b.gram_a)},
          {"gram_b", matrix_to_json(b.gram_b)},
          {"bias_a", matrix_to_json(b.d_a.values)},
          {"bias_b", matrix_to_json(b.d_b.values)},
          {"gamma", to_json(b.gamma)}};
}

}  // namespace drl
