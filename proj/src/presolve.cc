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

#include "scalepose/presolve.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "scalepose/proxy.h"

namespace scalepose {

void PresolveConfig::Validate() const {
  if (window_size < 1) throw std::invalid_argument("presolve: window_size < 1");
  if (sweeps < 0) throw std::invalid_argument("presolve: sweeps < 0");
  if (inner_cap < 1) throw std::invalid_argument("presolve: inner_cap < 1");
}

std::vector<LocalSubproblem> BuildSubproblems(const KinematicModel& model,
                                              int window_size) {
  if (window_size < 1) throw std::invalid_argument("presolve: window_size < 1");
  std::vector<LocalSubproblem> out;
  out.reserve(model.body_count());
  for (int b = 0; b < model.body_count(); ++b) {
    LocalSubproblem sub;
    sub.body = b;
    for (int a = b, n = 0; a != kNoParent && n < window_size;
         a = model.bodies()[a].parent, ++n) {
      sub.window.push_back(a);
    }
    std::reverse(sub.window.begin(), sub.window.end());

    std::vector<int> marker_bodies;
    for (int w : sub.window) {
      const int q0 = model.q_offset(w);
      for (int d = 0; d < JointDof(model.bodies()[w].joint.kind); ++d) {
        sub.active_coords.push_back(q0 + d);
      }
      marker_bodies.push_back(w);
      for (int c : model.children(w)) marker_bodies.push_back(c);
    }
    for (int w : sub.window) {
      const int s = model.scale_index(w);
      if (s >= 0) sub.active_coords.push_back(s);
    }
    std::sort(marker_bodies.begin(), marker_bodies.end());
    marker_bodies.erase(std::unique(marker_bodies.begin(), marker_bodies.end()),
                        marker_bodies.end());
    for (int mb : marker_bodies) {
      for (int k : model.body_markers(mb)) sub.marker_rows.push_back(k);
    }
    std::sort(sub.marker_rows.begin(), sub.marker_rows.end());
    out.push_back(std::move(sub));
  }
  return out;
}

Eigen::VectorXd PresolveSweep(const KinematicModel& model,
                              const Observation& obs,
                              const Eigen::VectorXd& y_init,
                              const SolverConfig& config,
                              const PresolveConfig& presolve,
                              PresolveStats* stats) {
  presolve.Validate();
  if (y_init.size() != model.ny()) {
    throw std::invalid_argument("presolve: state size mismatch");
  }
  PresolveStats local_stats;
  PresolveStats& st = stats ? *stats : local_stats;

  SolverConfig inner = config;
  inner.max_iters = presolve.inner_cap;
  inner.step_bounds = presolve.step_bounds;
  inner.lower.resize(0);
  inner.upper.resize(0);
  inner.damping_diag.resize(0);

  const std::vector<LocalSubproblem> subproblems =
      BuildSubproblems(model, presolve.window_size);
  Eigen::VectorXd y = y_init;
  double energy = Energy(model, y, obs, config);
  if (!std::isfinite(energy)) {
    throw std::runtime_error("presolve: non-finite energy at initial state");
  }

  for (int sweep = 0; sweep < presolve.sweeps; ++sweep) {
    for (const LocalSubproblem& sub : subproblems) {
      Observation local = obs;
      std::fill(local.visible.begin(), local.visible.end(), false);
      int visible = 0;
      for (int k : sub.marker_rows) {
        if (obs.visible[k]) {
          local.visible[k] = true;
          ++visible;
        }
      }
      if (visible == 0 || sub.active_coords.empty()) {
        ++st.skipped;
        continue;
      }

      const ProxyMap selection = ProxyMap::Selection(sub.active_coords, y);
      const FrameResult r = SolveFrame(model, selection, local,
                                       Project(selection, y), inner);
      ++st.solved;
      if (r.status == FrameStatus::kFailedNonfinite) {
        ++st.rolled_back;
        continue;
      }
      const double candidate = Energy(model, r.y_est, obs, config);
      if (std::isfinite(candidate) && candidate <= energy) {
        y = r.y_est;
        energy = candidate;
      } else {
        ++st.rolled_back;
      }
    }
  }
  return y;
}

}  // namespace scalepose
