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

// Runs the multi-site protocol under covariate shift, prints the message
// transcript and the privacy audit.

#include "drl/drl.hpp"

#include <iostream>

int main() {
  drl::ScenarioSpec spec;
  spec.design = drl::Design::indicator;
  spec.L = 3;
  spec.n_per_group = 300;
  spec.n_Q = 500;
  spec.target_mean = (drl::Vector(4) << 0.5, -0.5, 0.5, -0.5).finished();
  spec.seed = 5;
  const drl::Scenario sc = drl::generate(spec);

  drl::FitConfig cfg;
  cfg.learner.kind = drl::LearnerKind::forest;
  cfg.learner.forest.n_trees = 30;
  cfg.shift = drl::ShiftMode::logistic;
  cfg.seed = 9;
  const auto run = drl::run_protocol(sc.groups, sc.target, cfg);
  for (std::size_t i = 0; i < run.transcript.messages.size(); ++i)
    std::cout << drl::TranscriptLog::metadata(run.transcript.messages[i], i).dump() << '\n';

  const auto audit = drl::audit_privacy(run.transcript, sc.groups);
  std::cout << "weights: " << run.model.weights.weights().transpose() << '\n';
  std::cout << "audit: " << drl::to_json(audit).dump() << '\n';

  const drl::DRLModel mono = drl::fit_drl(sc.groups, sc.target, cfg);
  std::cout << "matches monolithic fit: "
            << (mono.weights.weights() == run.model.weights.weights() ? "yes" : "no") << '\n';
  return 0;
}
