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

#include <fstream>

namespace drl {
namespace {

using testing::expect_error;

Scenario fixture(std::uint64_t seed, Index l = 3) {
  ScenarioSpec s;
  s.design = Design::indicator;
  s.L = l;
  s.n_per_group = 80;
  s.n_Q = 100;
  s.target_mean = (Vector(4) << 0.5, -0.5, 0.5, -0.5).finished();
  s.seed = seed;
  return generate(s);
}

FitConfig forest_config(ShiftMode shift) {
  FitConfig c;
  c.learner.forest.n_trees = 10;
  c.shift = shift;
  c.seed = 12;
  return c;
}

TEST(Protocol, MatchesMonolithicFitExactly) {
  for (auto shift : {ShiftMode::none, ShiftMode::logistic}) {
    const Scenario sc = fixture(1);
    const FitConfig c = forest_config(shift);
    const ProtocolResult run = run_protocol(sc.groups, sc.target, c);
    const DRLModel mono = fit_drl(sc.groups, sc.target, c);
    EXPECT_EQ(run.model.weights.weights(), mono.weights.weights());
    EXPECT_EQ(run.model.gamma_raw.values, mono.gamma_raw.values);
    EXPECT_EQ(run.model.predict(sc.target.covariates), mono.predict(sc.target.covariates));
  }
}

TEST(Protocol, NoShiftSendsNoCovariates) {
  const Scenario sc = fixture(2);
  const auto run = run_protocol(sc.groups, sc.target, forest_config(ShiftMode::none));
  EXPECT_EQ(run.transcript.count(MessageKind::target_covariates), 0u);
  EXPECT_EQ(run.transcript.count(MessageKind::ratio_bundle), 0u);
  const auto shifted = run_protocol(sc.groups, sc.target, forest_config(ShiftMode::logistic));
  EXPECT_EQ(shifted.transcript.count(MessageKind::target_covariates), 1u);
}

TEST(Protocol, PhasesFollowAlgorithmOrder) {
  const Scenario sc = fixture(3);
  const auto run = run_protocol(sc.groups, sc.target, forest_config(ShiftMode::logistic));
  const std::vector<Phase> all = {Phase::local_fits, Phase::broadcast, Phase::bias_terms,
                                  Phase::transmit,   Phase::assembly,  Phase::weight_solve};
  EXPECT_EQ(run.transcript.barriers, all);
  // Message phases are a subsequence of the barrier order.
  const auto seq = run.transcript.phase_sequence();
  std::size_t k = 0;
  for (Phase p : seq) {
    while (k < all.size() && all[k] != p) ++k;
    ASSERT_LT(k, all.size()) << "phase " << to_string(p) << " out of order";
  }
  EXPECT_EQ(seq.front(), Phase::local_fits);
  EXPECT_EQ(seq.back(), Phase::weight_solve);
}

TEST(Protocol, MessageCounts) {
  for (Index l : {2, 3, 4}) {
    const Scenario sc = fixture(4, l);
    const auto run = run_protocol(sc.groups, sc.target, forest_config(ShiftMode::logistic));
    const auto n = static_cast<std::size_t>(l);
    EXPECT_EQ(run.transcript.count(MessageKind::predictor_bundle), 3 * n);
    EXPECT_EQ(run.transcript.count(MessageKind::ratio_bundle), 2 * n);
    EXPECT_EQ(run.transcript.count(MessageKind::bias_terms), n);
    EXPECT_EQ(run.transcript.count(MessageKind::weight_result), 1u);
  }
}

TEST(Protocol, EveryPayloadValidates) {
  const Scenario sc = fixture(5);
  const auto run = run_protocol(sc.groups, sc.target, forest_config(ShiftMode::logistic));
  for (const auto& m : run.transcript.messages) {
    EXPECT_NO_THROW(validate_message(m));
    EXPECT_NE(m.sender, m.receiver);
  }
  SiteMessage bad{MessageKind::predictor_bundle, "x", "y", "", Phase::broadcast, "{\"a\":1}"};
  expect_error(ErrorKind::parse, [&] { validate_message(bad); });
  bad.payload = "not json";
  expect_error(ErrorKind::validation, [&] { validate_message(bad); });
}

TEST(Protocol, SiteFailureNamesThePhase) {
  const Scenario sc = fixture(6);
  ProtocolOptions opt;
  opt.tamper = [](const SourceGroup&, std::vector<SiteMessage>& out) {
    out.push_back({MessageKind::weight_result, "x", kTargetSite, "", Phase::transmit, "[]"});
  };
  try {
    run_protocol(sc.groups, sc.target, forest_config(ShiftMode::none), opt);
    ADD_FAILURE() << "expected failure";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("transmit"), std::string::npos) << e.what();
  }
}

TEST(Protocol, TranscriptJsonLines) {
  testing::TempDir dir;
  const Scenario sc = fixture(7, 2);
  const auto run = run_protocol(sc.groups, sc.target, forest_config(ShiftMode::none));
  const auto path = dir.file("t.jsonl");
  run.transcript.write_jsonl(path);
  std::ifstream in(path);
  std::string line;
  std::size_t n = 0, bytes = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("seq").get<std::size_t>(), n);
    bytes += j.at("byte_size").get<std::size_t>();
    ++n;
  }
  EXPECT_EQ(n, run.transcript.messages.size());
  EXPECT_EQ(bytes, run.transcript.total_bytes());
}

// ---------------------------------------------------------------------------
// Privacy audit

TEST(Audit, HonestRunPasses) {
  for (std::uint64_t seed : {8u, 9u}) {
    const Scenario sc = fixture(seed);
    const auto run = run_protocol(sc.groups, sc.target, forest_config(ShiftMode::logistic));
    const AuditReport a = audit_privacy(run.transcript, sc.groups);
    EXPECT_TRUE(a.passed) << to_json(a).dump();
  }
}

TEST(Audit, InjectedRawRowFailsAndIsNamed) {
  const Scenario sc = fixture(10);
  ProtocolOptions opt;
  opt.tamper = [](const SourceGroup& g, std::vector<SiteMessage>& out) {
    if (g.group_id() != 2) return;
    std::vector<double> row;
    for (Index c = 0; c < g.covariates().cols(); ++c) row.push_back(g.covariates()(7, c));
    nlohmann::json body{{"group", g.group_id()}, {"col_a", row}, {"col_b", {0.5}}};
    out.push_back({MessageKind::bias_terms, source_site(1), kTargetSite, "", Phase::transmit,
                   body.dump()});
  };
  const auto run = run_protocol(sc.groups, sc.target, forest_config(ShiftMode::none), opt);
  const AuditReport a = audit_privacy(run.transcript, sc.groups);
  ASSERT_FALSE(a.passed);
  ASSERT_EQ(a.violations.size(), 1u);
  const auto& v = a.violations.front();
  EXPECT_EQ(v.kind, "bias_terms");
  EXPECT_EQ(v.sender, source_site(1));
  EXPECT_NE(v.detail.find("covariate row 7 of group 2"), std::string::npos) << v.detail;
  EXPECT_EQ(run.transcript.messages[v.message].sender, source_site(1));
}

TEST(Audit, OutcomeRunIsDetected) {
  const Scenario sc = fixture(11, 2);
  TranscriptLog log;
  const Vector& y = sc.groups[0].outcomes();
  log.messages.push_back({MessageKind::weight_result, "a", "b", "", Phase::weight_solve,
                          nlohmann::json{{"weights", {1.0, y(4), y(5), y(6)}}}.dump()});
  const AuditReport a = audit_privacy(log, sc.groups);
  ASSERT_FALSE(a.passed);
  EXPECT_NE(a.violations[0].detail.find("outcomes 4..6"), std::string::npos);
  // Two of three is not a leak.
  log.messages[0].payload = nlohmann::json{{"weights", {y(4), y(5)}}}.dump();
  EXPECT_TRUE(audit_privacy(log, sc.groups).passed);
}

TEST(Audit, TargetCovariatesAreExempt) {
  const Scenario sc = fixture(12, 2);
  TranscriptLog log;
  log.messages.push_back({MessageKind::target_covariates, kTargetSite, kAllSites, "",
                          Phase::local_fits, matrix_to_json(sc.groups[0].covariates()).dump()});
  EXPECT_TRUE(audit_privacy(log, sc.groups).passed);
}

TEST(Audit, EdgeBytesSumToTotal) {
  const Scenario sc = fixture(13);
  const auto run = run_protocol(sc.groups, sc.target, forest_config(ShiftMode::logistic));
  const AuditReport a = audit_privacy(run.transcript, sc.groups);
  std::size_t sum = 0;
  for (const auto& [edge, b] : a.edge_bytes) sum += b;
  EXPECT_EQ(sum, a.total_bytes);
  EXPECT_EQ(a.total_bytes, run.transcript.total_bytes());
  EXPECT_GT(a.edge_bytes.count(source_site(0) + "->" + std::string(kTargetSite)), 0u);
}

}  // namespace
}  // namespace drl
