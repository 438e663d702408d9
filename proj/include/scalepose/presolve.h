// Copyright 2026 The ScalePose Authors
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

#ifndef SCALEPOSE_PRESOLVE_H_
#define SCALEPOSE_PRESOLVE_H_

#include <vector>

#include <Eigen/Core>

#include "scalepose/framesolver.h"
#include "scalepose/kinmodel.h"

namespace scalepose {

struct PresolveConfig {
  int window_size = 2;
  int sweeps = 2;
  int inner_cap = 3;
  // per-iteration bounds of the local solves; wide enough that three inner
  // iterations can undo a half turn
  StepBoundDefaults step_bounds{1.2, 0.1, 0.05};

  void Validate() const;
};

// Local window rooted at `body`: the body plus up to window_size - 1
// ancestors.
struct LocalSubproblem {
  int body = 0;
  std::vector<int> window;         // bodies, root-most first
  std::vector<int> active_coords;  // y indices: window joint DoFs + scales
  std::vector<int> marker_rows;    // markers on window bodies and their children
};

// One subproblem per body in root-to-leaf (index) order.
std::vector<LocalSubproblem> BuildSubproblems(const KinematicModel& model,
                                              int window_size);

struct PresolveStats {
  int solved = 0;
  int skipped = 0;
  int rolled_back = 0;
};

// Gauss-Seidel sweeps over the local subproblems. Each local solve reuses
// SolveFrame through a Selection map; a local update that raises the full
// energy is discarded, so the result never has higher energy than y_init.
Eigen::VectorXd PresolveSweep(const KinematicModel& model,
                              const Observation& obs,
                              const Eigen::VectorXd& y_init,
                              const SolverConfig& config,
                              const PresolveConfig& presolve,
                              PresolveStats* stats = nullptr);

}  // namespace scalepose

#endif  // SCALEPOSE_PRESOLVE_H_
