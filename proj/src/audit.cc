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

#include "scalepose/audit.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "scalepose/stats.h"

namespace scalepose {
namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<int> Range(int begin, int end) {
  std::vector<int> out(std::max(0, end - begin));
  std::iota(out.begin(), out.end(), begin);
  return out;
}

Eigen::VectorXd WithScales(const KinematicModel& model, Eigen::VectorXd y,
                           const Eigen::VectorXd& scales) {
  y.tail(model.ns()) = scales;
  return y;
}

void Tally(MetricWins& wins, double joint, double baseline) {
  if (joint < baseline) {
    ++wins.joint_wins;
  } else if (baseline < joint) {
    ++wins.baseline_wins;
  } else {
    ++wins.ties;
  }
  wins.joint_mean += joint;
  wins.baseline_mean += baseline;
}

}  // namespace

void BaselineConfig::Validate(int frame_count) const {
  if (static_frames.empty()) {
    throw std::invalid_argument("baseline: static_frames is empty");
  }
  for (int f : static_frames) {
    if (f < 0 || f >= frame_count) {
      throw std::invalid_argument("baseline: static frame " +
                                  std::to_string(f) + " out of range");
    }
  }
  if (ik_iters < 1 || scale_iters < 1 || pose_iters < 1) {
    throw std::invalid_argument("baseline: iteration caps must be >= 1");
  }
}

BaselineConfig DefaultBaselineConfig(int frame_count, int count) {
  BaselineConfig config;
  config.static_frames = Range(0, std::min(count, frame_count));
  return config;
}

ProxyMap PoseOnlyMap(const KinematicModel& model, const Eigen::VectorXd& y) {
  return ProxyMap::Selection(Range(0, model.nq()), y);
}

ProxyMap ScaleOnlyMap(const KinematicModel& model, const Eigen::VectorXd& y) {
  return ProxyMap::Selection(Range(model.nq(), model.ny()), y);
}

BaselineResult BaselineStagewise(const KinematicModel& model,
                                 const std::vector<Observation>& frames,
                                 const Eigen::VectorXd& y_init,
                                 const SolverConfig& solver,
                                 const BaselineConfig& config) {
  config.Validate(static_cast<int>(frames.size()));
  if (y_init.size() != model.ny()) {
    throw std::invalid_argument("baseline: state size mismatch");
  }

  BaselineResult out;
  out.scales = y_init.tail(model.ns());

  // Stage 1a: pose-only IK over the static frames at the initial scales.
  std::vector<Observation> statics;
  for (int f : config.static_frames) statics.push_back(frames[f]);
  SolverConfig pose_cfg = solver;
  pose_cfg.max_iters = config.pose_iters;
  TrialOptions ik_options;
  ik_options.first_frame_max_iters = config.ik_iters;
  const ProxyMap ik_map = PoseOnlyMap(model, y_init);
  const TrialResult ik =
      SolveTrial(model, ik_map, statics, Project(ik_map, y_init), pose_cfg,
                 ik_options);

  // Stage 1b: scale-only solve per static frame with that pose frozen.
  if (model.ns() > 0) {
    SolverConfig scale_cfg = solver;
    scale_cfg.max_iters = config.scale_iters;
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(model.ns());
    for (std::size_t i = 0; i < statics.size(); ++i) {
      const FrameResult& posed = ik.frames[i];
      if (posed.status == FrameStatus::kFailedNonfinite) {
        out.stage1_failed = true;
        break;
      }
      const ProxyMap scale_map = ScaleOnlyMap(model, posed.y_est);
      const FrameResult scaled =
          SolveFrame(model, scale_map, statics[i],
                     Project(scale_map, posed.y_est), scale_cfg);
      if (scaled.status == FrameStatus::kFailedNonfinite ||
          !scaled.y_est.allFinite()) {
        out.stage1_failed = true;
        break;
      }
      sum += scaled.y_est.tail(model.ns());
    }
    out.scales = out.stage1_failed
                     ? Eigen::VectorXd::Ones(model.ns())
                     : Eigen::VectorXd(sum / static_cast<double>(statics.size()));
  }

  // Stage 2: pose-only trial with the scales held.
  const Eigen::VectorXd y0 = WithScales(model, y_init, out.scales);
  const ProxyMap pose_map = PoseOnlyMap(model, y0);
  TrialOptions pose_options;
  pose_options.first_frame_max_iters = config.ik_iters;
  out.frames =
      SolveTrial(model, pose_map, frames, Project(pose_map, y0), pose_cfg,
                 pose_options)
          .frames;
  return out;
}

std::optional<double> MarkerRmse(const Eigen::VectorXd& x_hat,
                                 const Eigen::VectorXd& x_obs,
                                 const std::vector<bool>& mask) {
  if (x_hat.size() != x_obs.size() ||
      x_hat.size() != 3 * static_cast<Eigen::Index>(mask.size())) {
    throw std::invalid_argument("marker_rmse: length mismatch");
  }
  Observation obs{x_obs, mask};
  const double rmse = MarkerRmseMm(x_hat, obs);
  if (std::isnan(rmse)) return std::nullopt;
  return rmse;
}

Eigen::VectorXd TemporalRoughness(const Eigen::MatrixXd& history) {
  if (history.rows() < 3) {
    throw std::invalid_argument("temporal roughness needs at least 3 frames");
  }
  const Eigen::Index t = history.rows();
  const Eigen::MatrixXd d2 = history.topRows(t - 2) -
                             2.0 * history.middleRows(1, t - 2) +
                             history.bottomRows(t - 2);
  return d2.array().square().colwise().mean();
}

Eigen::VectorXd SpatialRoughness(const Eigen::MatrixXd& chain_angles) {
  if (chain_angles.cols() < 3) {
    throw std::invalid_argument("spatial roughness needs at least 3 chain DoFs");
  }
  return TemporalRoughness(chain_angles.transpose());
}

OutlierResult MadOutliers(const std::vector<double>& values,
                          const std::vector<double>& reference, double k) {
  if (reference.empty()) {
    throw std::invalid_argument("mad_outliers: empty reference set");
  }
  if (!(k > 0.0)) throw std::invalid_argument("mad_outliers: k must be > 0");

  OutlierResult out;
  out.median = Median(reference);
  std::vector<double> deviation;
  deviation.reserve(reference.size());
  for (double v : reference) deviation.push_back(std::abs(v - out.median));
  out.mad = Median(deviation);
  out.degenerate = !(out.mad > 0.0);
  out.threshold =
      out.degenerate
          ? out.median + 4.0 * std::numeric_limits<double>::epsilon() *
                             std::max(1.0, std::abs(out.median))
          : out.median + k * out.mad;

  int count = 0;
  out.mask.reserve(values.size());
  for (double v : values) {
    const bool flagged = v > out.threshold;
    out.mask.push_back(flagged);
    count += flagged;
  }
  out.rate_percent =
      values.empty() ? 0.0 : 100.0 * count / static_cast<double>(values.size());
  return out;
}

ThroughputStats Throughput(const std::vector<FrameResult>& frames) {
  if (frames.empty()) throw std::invalid_argument("throughput: no frames");
  const TrialSummary s = SummarizeFrames(frames);
  return {s.time_p50_ms, s.time_p90_ms, s.iters_p50, s.iters_p90, s.fps};
}

double PoseErrorRad(const KinematicModel& model, const Eigen::VectorXd& y_est,
                    const Eigen::VectorXd& y_true) {
  if (y_est.size() != model.ny() || y_true.size() != model.ny()) {
    throw std::invalid_argument("pose error: state size mismatch");
  }
  double sum = 0.0;
  int count = 0;
  for (const BodyNode& b : model.bodies()) {
    const int q = model.q_offset(b.id);
    double err = 0.0;
    switch (b.joint.kind) {
      case JointKind::kHinge1:
        err = std::abs(y_est[q] - y_true[q]);
        break;
      case JointKind::kBall3:
      case JointKind::kFree6: {
        const int r = b.joint.kind == JointKind::kFree6 ? q + 3 : q;
        const Eigen::Matrix3d rel = ExpMap(y_est.segment<3>(r)).transpose() *
                                    ExpMap(y_true.segment<3>(r));
        err = LogMap(rel).norm();
        break;
      }
      case JointKind::kSlide1:
        continue;
    }
    sum += err * err;
    ++count;
  }
  return count == 0 ? 0.0 : std::sqrt(sum / count);
}

double ScaleMae(const KinematicModel& model, const Eigen::VectorXd& y_est,
                const Eigen::VectorXd& y_true) {
  if (model.ns() == 0) return 0.0;
  return (y_est.tail(model.ns()) - y_true.tail(model.ns()))
      .cwiseAbs()
      .mean();
}

Eigen::VectorXd MedianScales(const KinematicModel& model,
                             const std::vector<FrameResult>& frames) {
  Eigen::VectorXd out = Eigen::VectorXd::Ones(model.ns());
  if (frames.empty()) return out;
  for (int j = 0; j < model.ns(); ++j) {
    std::vector<double> v;
    for (const FrameResult& f : frames) v.push_back(f.y_est[model.nq() + j]);
    out[j] = Median(v);
  }
  return out;
}

double MetricReport::mean_marker_rmse_mm() const {
  double sum = 0.0;
  int n = 0;
  for (double v : marker_rmse_mm) {
    if (std::isnan(v)) continue;
    sum += v;
    ++n;
  }
  return n == 0 ? kNaN : sum / n;
}

MetricReport BuildReport(const KinematicModel& model,
                         const std::vector<FrameResult>& frames,
                         const Eigen::VectorXd& scales_est,
                         const std::vector<Eigen::VectorXd>* truth,
                         const std::vector<int>* chain) {
  MetricReport report;
  const int t = static_cast<int>(frames.size());
  for (const FrameResult& f : frames) report.marker_rmse_mm.push_back(f.marker_rmse_mm);
  if (t == 0) return report;

  report.throughput = Throughput(frames);
  Eigen::MatrixXd q(t, model.nq());
  for (int i = 0; i < t; ++i) q.row(i) = frames[i].y_est.head(model.nq()).transpose();
  if (t >= 3) report.temporal_roughness = TemporalRoughness(q);
  if (chain && chain->size() >= 3) {
    Eigen::MatrixXd c(t, chain->size());
    for (int i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < chain->size(); ++j) {
        c(i, j) = frames[i].y_est[(*chain)[j]];
      }
    }
    report.spatial_roughness = SpatialRoughness(c);
  }

  if (truth) {
    if (static_cast<int>(truth->size()) != t) {
      throw std::invalid_argument("report: truth and frame counts differ");
    }
    double sq = 0.0;
    for (int i = 0; i < t; ++i) {
      const double e = PoseErrorRad(model, frames[i].y_est, (*truth)[i]);
      sq += e * e;
    }
    report.pose_rmse_deg = kRadToDeg * std::sqrt(sq / t);
    const Eigen::VectorXd y_scaled = WithScales(model, (*truth)[0], scales_est);
    report.scale_mae = ScaleMae(model, y_scaled, (*truth)[0]);
  }
  return report;
}

LeakageTable LeakageReport(const std::vector<MetricReport>& joint,
                           const std::vector<MetricReport>& baseline) {
  if (joint.size() != baseline.size()) {
    throw std::invalid_argument("leakage report: trial count mismatch");
  }
  LeakageTable table;
  table.trials = static_cast<int>(joint.size());
  for (std::size_t i = 0; i < joint.size(); ++i) {
    const MetricReport& a = joint[i];
    const MetricReport& b = baseline[i];
    if (a.pose_rmse_deg.has_value() != b.pose_rmse_deg.has_value() ||
        a.scale_mae.has_value() != b.scale_mae.has_value()) {
      throw std::invalid_argument("leakage report: trial " + std::to_string(i) +
                                  " has mismatched ground truth");
    }
    Tally(table.marker_rmse, a.mean_marker_rmse_mm(), b.mean_marker_rmse_mm());
    if (a.pose_rmse_deg) Tally(table.pose_rmse, *a.pose_rmse_deg, *b.pose_rmse_deg);
    if (a.scale_mae) Tally(table.scale_mae, *a.scale_mae, *b.scale_mae);
  }
  for (MetricWins* w : {&table.marker_rmse, &table.pose_rmse, &table.scale_mae}) {
    const int n = w->joint_wins + w->baseline_wins + w->ties;
    if (n > 0) {
      w->joint_mean /= n;
      w->baseline_mean /= n;
    }
  }
  return table;
}

AuditTrialResult AuditTrial(const KinematicModel& model,
                            const std::vector<Observation>& frames,
                            const std::vector<Eigen::VectorXd>* truth,
                            const Eigen::VectorXd& y_init,
                            const SolverConfig& solver,
                            const BaselineConfig& baseline) {
  AuditTrialResult out;
  const ProxyMap identity = ProxyMap::Identity(model.ny());
  TrialOptions options;
  options.first_frame_max_iters = baseline.ik_iters;
  const TrialResult joint =
      SolveTrial(model, identity, frames, y_init, solver, options);
  out.joint = BuildReport(model, joint.frames, MedianScales(model, joint.frames),
                          truth);

  const BaselineResult staged =
      BaselineStagewise(model, frames, y_init, solver, baseline);
  out.baseline_stage1_failed = staged.stage1_failed;
  out.baseline = BuildReport(model, staged.frames, staged.scales, truth);
  return out;
}

std::vector<AblationArm> RunSpineAblation(
    const KinematicModel& model, const std::vector<Observation>& frames,
    const std::vector<std::vector<int>>& chains, const Eigen::VectorXd& y_init,
    const SolverConfig& solver, int degree, int segments) {
  if (frames.size() < 3) {
    throw std::invalid_argument("ablation: need at least 3 frames");
  }
  std::vector<AblationArm> arms;
  for (SpineMode mode :
       {SpineMode::kPoly, SpineMode::kNoPoly, SpineMode::kClassical}) {
    AblationArm arm;
    arm.mode = mode;
    const ProxyMap proxy = Rebase(
        MakeSpineComposite(model.ny(), chains, mode, degree, segments), y_init);
    const TrialResult trial =
        SolveTrial(model, proxy, frames, Project(proxy, y_init), solver);
    arm.summary = trial.summary;
    arm.frames = trial.frames;

    const int t = static_cast<int>(trial.frames.size());
    Eigen::VectorXd spatial = Eigen::VectorXd::Zero(t);
    std::vector<double> temporal;
    for (const std::vector<int>& chain : chains) {
      Eigen::MatrixXd angles(t, chain.size());
      for (int i = 0; i < t; ++i) {
        for (std::size_t j = 0; j < chain.size(); ++j) {
          angles(i, j) = trial.frames[i].y_est[chain[j]];
        }
      }
      if (chain.size() >= 3) spatial += SpatialRoughness(angles);
      const Eigen::VectorXd per_dof = TemporalRoughness(angles);
      temporal.insert(temporal.end(), per_dof.data(),
                      per_dof.data() + per_dof.size());
    }
    spatial /= static_cast<double>(std::max<std::size_t>(1, chains.size()));
    arm.spatial_roughness =
        Median(std::vector<double>(spatial.data(), spatial.data() + t));
    arm.temporal_roughness = temporal.empty() ? 0.0 : Median(temporal);
    arm.marker_rmse_mm = arm.summary.rmse_mean_mm;
    arms.push_back(std::move(arm));
  }
  return arms;
}

}  // namespace scalepose
