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

#ifndef SCALEPOSE_AUDIT_H_
#define SCALEPOSE_AUDIT_H_

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "scalepose/framesolver.h"
#include "scalepose/kinmodel.h"
#include "scalepose/proxy.h"

namespace scalepose {

// ---------------------------------------------------------------------------
// Stage-wise baseline

struct BaselineConfig {
  std::vector<int> static_frames;  // frames used by the scaling stage
  int ik_iters = 100;              // pose-only IK of the first static frame
  int scale_iters = 20;
  int pose_iters = 20;

  void Validate(int frame_count) const;
};

// First min(count, frame_count) frames.
BaselineConfig DefaultBaselineConfig(int frame_count, int count = 10);

struct BaselineResult {
  Eigen::VectorXd scales;            // s_fixed
  std::vector<FrameResult> frames;   // stage 2, one per frame
  bool stage1_failed = false;        // stage 2 then ran with s = 1
};

// Stage 1 solves pose-only IK of the static frames with the scales of y_init,
// then a scale-only solve per static frame with the pose frozen; s_fixed is
// the mean of those. Stage 2 runs a pose-only trial with s = s_fixed.
BaselineResult BaselineStagewise(const KinematicModel& model,
                                 const std::vector<Observation>& frames,
                                 const Eigen::VectorXd& y_init,
                                 const SolverConfig& solver,
                                 const BaselineConfig& config);

// Selection maps exposing only the joint coordinates or only the scales.
ProxyMap PoseOnlyMap(const KinematicModel& model, const Eigen::VectorXd& y);
ProxyMap ScaleOnlyMap(const KinematicModel& model, const Eigen::VectorXd& y);

// ---------------------------------------------------------------------------
// Metrics

// Marker RMSE in mm over the unmasked markers; nullopt when all are masked.
std::optional<double> MarkerRmse(const Eigen::VectorXd& x_hat,
                                 const Eigen::VectorXd& x_obs,
                                 const std::vector<bool>& mask);

// Mean squared second difference down each column (T x n -> n). Needs T >= 3.
Eigen::VectorXd TemporalRoughness(const Eigen::MatrixXd& history);

// Mean squared second difference along each row (T x n -> T). Needs n >= 3.
Eigen::VectorXd SpatialRoughness(const Eigen::MatrixXd& chain_angles);

struct OutlierResult {
  std::vector<bool> mask;
  double rate_percent = 0.0;
  double median = 0.0;
  double mad = 0.0;
  double threshold = 0.0;
  bool degenerate = false;  // MAD was zero
};

// v is an outlier iff v > median(ref) + k * MAD(ref).
OutlierResult MadOutliers(const std::vector<double>& values,
                          const std::vector<double>& reference, double k = 6.0);

struct ThroughputStats {
  double time_p50_ms = 0.0;
  double time_p90_ms = 0.0;
  double iters_p50 = 0.0;
  double iters_p90 = 0.0;
  double fps = 0.0;
};

ThroughputStats Throughput(const std::vector<FrameResult>& frames);

// Angular error between two states in radians, per joint: |dtheta| for
// hinges and the geodesic angle for ball and free joints. Slides and root
// translation do not contribute. Returns the RMS over those joints.
double PoseErrorRad(const KinematicModel& model, const Eigen::VectorXd& y_est,
                    const Eigen::VectorXd& y_true);

// Mean absolute scale error over the scale slots.
double ScaleMae(const KinematicModel& model, const Eigen::VectorXd& y_est,
                const Eigen::VectorXd& y_true);

// Per-slot median of the scale estimates over frames.
Eigen::VectorXd MedianScales(const KinematicModel& model,
                             const std::vector<FrameResult>& frames);

// ---------------------------------------------------------------------------
// Leakage report

struct MetricReport {
  std::vector<double> marker_rmse_mm;  // per frame (NaN where missing)
  Eigen::VectorXd temporal_roughness;  // per DoF
  Eigen::VectorXd spatial_roughness;   // per frame, when chains are given
  std::optional<double> scale_mae;
  std::optional<double> pose_rmse_deg;
  ThroughputStats throughput;
  std::optional<double> outlier_rate_percent;

  double mean_marker_rmse_mm() const;
};

// Builds a report from a solved trial. truth and scales_est are optional
// (synthetic data only); chain lists the y indices used for spatial
// roughness.
MetricReport BuildReport(const KinematicModel& model,
                         const std::vector<FrameResult>& frames,
                         const Eigen::VectorXd& scales_est,
                         const std::vector<Eigen::VectorXd>* truth,
                         const std::vector<int>* chain = nullptr);

struct MetricWins {
  std::string metric;
  int joint_wins = 0;
  int baseline_wins = 0;
  int ties = 0;
  double joint_mean = 0.0;
  double baseline_mean = 0.0;
};

struct LeakageTable {
  int trials = 0;
  MetricWins marker_rmse{"marker_rmse_mm"};
  // synthetic ground-truth joint angles stand in for an external pose
  // reference
  MetricWins pose_rmse{"pose_rmse_deg"};
  MetricWins scale_mae{"scale_mae"};
};

// Lower is better; a win needs strict inequality.
LeakageTable LeakageReport(const std::vector<MetricReport>& joint,
                           const std::vector<MetricReport>& baseline);

struct AuditTrialResult {
  MetricReport joint;
  MetricReport baseline;
  bool baseline_stage1_failed = false;
};

// Joint solve (identity proxy, scale taken as the per-slot median) versus
// the stage-wise baseline, both from y_init.
AuditTrialResult AuditTrial(const KinematicModel& model,
                            const std::vector<Observation>& frames,
                            const std::vector<Eigen::VectorXd>* truth,
                            const Eigen::VectorXd& y_init,
                            const SolverConfig& solver,
                            const BaselineConfig& baseline);

// ---------------------------------------------------------------------------
// Spine proxy ablation

struct AblationArm {
  SpineMode mode = SpineMode::kPoly;
  TrialSummary summary;
  double spatial_roughness = 0.0;   // median over frames, mean over chains
  double temporal_roughness = 0.0;  // median over chain DoFs
  double marker_rmse_mm = 0.0;      // mean over frames
  std::vector<FrameResult> frames;
};

// Runs the same trial once per spine mode (poly, nopoly, classical), with
// every coordinate outside the chains left free.
std::vector<AblationArm> RunSpineAblation(
    const KinematicModel& model, const std::vector<Observation>& frames,
    const std::vector<std::vector<int>>& chains, const Eigen::VectorXd& y_init,
    const SolverConfig& solver, int degree, int segments);

}  // namespace scalepose

#endif  // SCALEPOSE_AUDIT_H_
