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

#ifndef SCALEPOSE_FRAMESOLVER_H_
#define SCALEPOSE_FRAMESOLVER_H_

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "scalepose/boxqp.h"
#include "scalepose/kinmodel.h"
#include "scalepose/proxy.h"

namespace scalepose {

// Per-iteration proxy step bounds by coordinate kind (symmetric).
struct StepBoundDefaults {
  double angular = 0.2;         // rad
  double translational = 0.05;  // m
  double scale = 0.05;
};

struct SolverConfig {
  // damping W_damp = lambda * D
  // D defaults to ones, so lambda is in m^2 per squared coordinate unit
  double lambda_init = 1e-6;
  double lambda_min = 1e-9;
  double lambda_max = 1e6;
  double nu_up = 4.0;
  double nu_down = 0.5;
  double rho_low = 0.25;
  double rho_high = 0.75;
  double eps_rho = 1e-12;

  double tol_residual = 1e-8;  // on sqrt(2 E)
  double tol_rel_decrease = 1e-6;
  int max_iters = 20;

  StepBoundDefaults step_bounds;
  // explicit per-proxy-coordinate bounds; used instead of step_bounds when
  // both are non-empty
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Eigen::VectorXd damping_diag;      // D over p; empty means ones
  double marker_weight = 1.0;        // multiplies every model marker weight
  Eigen::VectorXd tracking_weights;  // W_t over y; empty means zero
  std::optional<Eigen::VectorXd> y_ref;

  // global scale bounds, enforced by clipping the step box
  double scale_min = 0.25;
  double scale_max = 4.0;
  // hold every proxy coordinate that drives scale only
  bool freeze_scale = false;

  // Throws std::invalid_argument if an invariant fails.
  void Validate() const;
};

// Observed marker positions in meters, 3 rows per model marker.
struct Observation {
  Eigen::VectorXd x_obs;
  std::vector<bool> visible;  // one per marker

  static Observation AllVisible(Eigen::VectorXd x);
  int visible_count() const;
};

enum class FrameStatus {
  kConvergedResidual,
  kConvergedDecrease,
  kMaxIters,
  kFailedNonfinite,
};
const char* FrameStatusName(FrameStatus status);

struct FrameResult {
  Eigen::VectorXd y_est;
  Eigen::VectorXd p_est;
  int iterations = 0;
  int accepted_steps = 0;
  double final_weighted_energy = 0.0;
  double marker_rmse_mm = 0.0;  // NaN when no marker is visible
  FrameStatus status = FrameStatus::kMaxIters;
  double wall_time_us = 0.0;
};

struct IterationRecord {
  int iteration = 0;
  Eigen::VectorXd p_before;
  Eigen::VectorXd y_before;
  Eigen::VectorXd step;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
  Eigen::VectorXd p_after;
  Eigen::VectorXd y_after;
  double energy_before = 0.0;
  double energy_trial = 0.0;
  double energy_after = 0.0;
  double predicted = 0.0;
  double actual = 0.0;
  double rho = 0.0;
  double lambda_before = 0.0;
  double lambda_after = 0.0;
  bool accepted = false;
};
using IterationObserver = std::function<void(const IterationRecord&)>;

// Square-root marker weights (nx) with the rows of invisible markers zeroed.
Eigen::VectorXd MarkerWeights(const KinematicModel& model,
                              const Observation& obs, double marker_weight);
Eigen::VectorXd TrackingWeights(const KinematicModel& model,
                                const SolverConfig& config);

// Masked marker residual x_hat(y) - x_obs.
Eigen::VectorXd MarkerResidual(const KinematicModel& model,
                               const Eigen::VectorXd& x_hat,
                               const Observation& obs);

// E(y) = 0.5 |Wm r_m|^2 + 0.5 |Wt (y - y_ref)|^2. Returns a non-finite value
// when kinematics produce one.
double Energy(const KinematicModel& model, const Eigen::VectorXd& y,
              const Observation& obs, const Eigen::VectorXd& marker_weights,
              const Eigen::VectorXd& tracking_weights,
              const Eigen::VectorXd* y_ref);
double Energy(const KinematicModel& model, const Eigen::VectorXd& y,
              const Observation& obs, const SolverConfig& config);

struct AcceptanceQuantities {
  double actual = 0.0;
  double rho = 0.0;
};

// actual = E_before - (E_after + 0.5 dp' Wdamp dp); rho = actual / (pred + eps)
AcceptanceQuantities ComputeAcceptance(double energy_before,
                                       double energy_after,
                                       const Eigen::VectorXd& step,
                                       const Eigen::VectorXd& damping,
                                       double predicted, double eps_rho);

double UpdateDamping(double lambda, double rho, bool accepted,
                     const SolverConfig& config);

// Step box for the current iterate: kind-based defaults (or explicit
// bounds), clipped so that unit-selected scale coordinates stay inside
// [scale_min, scale_max]. Always brackets zero.
void StepBounds(const KinematicModel& model, const Eigen::MatrixXd& proxy_jacobian,
                const Eigen::VectorXd& y, const SolverConfig& config,
                Eigen::VectorXd& lower, Eigen::VectorXd& upper);

// Marker RMSE in millimeters over visible markers; NaN if none is visible.
double MarkerRmseMm(const Eigen::VectorXd& x_hat, const Observation& obs);

// One trust-region solve from p_init.
FrameResult SolveFrame(const KinematicModel& model, const ProxyMap& proxy,
                       const Observation& obs, const Eigen::VectorXd& p_init,
                       const SolverConfig& config,
                       const IterationObserver& observer = nullptr);

struct TrialOptions {
  // frames after which scale coordinates are held (negative: never)
  int freeze_scale_after = -1;
  // iteration cap for frame 0, which has no previous estimate
  int first_frame_max_iters = 100;
  // optional warm start for frame 0: (observation, y_init) -> y
  std::function<Eigen::VectorXd(const Observation&, const Eigen::VectorXd&)>
      warm_start;
};

struct TrialSummary {
  int frames = 0;
  double total_time_us = 0.0;
  double fps = 0.0;
  double time_p50_ms = 0.0;
  double time_p90_ms = 0.0;
  double iters_p50 = 0.0;
  double iters_p90 = 0.0;
  double rmse_p50_mm = 0.0;
  double rmse_p90_mm = 0.0;
  double rmse_mean_mm = 0.0;
  int converged = 0;
  int max_iters = 0;
  int failed = 0;
};

struct TrialResult {
  std::vector<FrameResult> frames;
  TrialSummary summary;
};

TrialSummary SummarizeFrames(const std::vector<FrameResult>& frames);

// Sequential warm-started solve; frame t starts from frame t-1's estimate.
TrialResult SolveTrial(const KinematicModel& model, const ProxyMap& proxy,
                       const std::vector<Observation>& frames,
                       const Eigen::VectorXd& p_init,
                       const SolverConfig& config,
                       const TrialOptions& options = {});

}  // namespace scalepose

#endif  // SCALEPOSE_FRAMESOLVER_H_
