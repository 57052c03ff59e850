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

#include "drl/drl.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <string>

namespace drl::testing {

/// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    std::string name = info ? std::string(info->test_suite_name()) + "_" + info->name() : "drl";
    path_ = std::filesystem::temp_directory_path() / ("drl_test_" + name);
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }

  std::string file(const std::string& name) const { return (path_ / name).string(); }

  std::string write(const std::string& name, const std::string& content) const {
    const auto p = file(name);
    std::ofstream(p) << content;
    return p;
  }

 private:
  std::filesystem::path path_;
};

inline Matrix column(std::initializer_list<double> v) {
  Matrix m(static_cast<Index>(v.size()), 1);
  Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

inline Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

inline FittedPredictor linear_predictor(const Vector& coef, int gid = 0,
                                        FitScope scope = FitScope::full) {
  return FittedPredictor(LearnerKind::linear, coef.size() - 1, LinearModel{coef}, gid, scope);
}

inline FittedPredictor constant_predictor(double c, Index p, int gid = 0,
                                          FitScope scope = FitScope::full) {
  Vector coef = Vector::Zero(p + 1);
  coef(0) = c;
  return linear_predictor(coef, gid, scope);
}

/// Expects `fn` to throw drl::Error of the given kind.
template <class Fn>
void expect_error(ErrorKind kind, Fn&& fn) {
  try {
    fn();
    ADD_FAILURE() << "expected error of kind " << to_string(kind);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), kind) << e.what();
  }
}

/// Random symmetric PSD matrix with eigenvalues in [lo, hi].
inline Matrix random_psd(Index l, Rng& rng, double lo = 0.0, double hi = 2.0) {
  const Matrix a = standard_normal_matrix(l, l, rng);
  Eigen::HouseholderQR<Matrix> qr(a);
  const Matrix q = qr.householderQ();
  Vector ev(l);
  for (Index i = 0; i < l; ++i) ev(i) = lo + (hi - lo) * uniform01(rng);
  Matrix g = q * ev.asDiagonal() * q.transpose();
  return (g + g.transpose()) / 2.0;
}

}  // namespace drl::testing
