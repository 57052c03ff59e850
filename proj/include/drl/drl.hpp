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
#include "drl/estimator.hpp"
#include "drl/evaluation.hpp"
#include "drl/experiments.hpp"
#include "drl/federated.hpp"
#include "drl/gamma.hpp"
#include "drl/learners.hpp"
#include "drl/simulation.hpp"
#include "drl/weights.hpp"

namespace drl {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace drl
