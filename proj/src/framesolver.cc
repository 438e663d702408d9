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

#include "scalepose/framesolver.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "scalepose/stats.h"

namespace scalepose {
namespace {

void Require(bool condition, const char* what) {
  if (!condition) throw std::invalid_argument(what);
}

double BoundForKind(CoordKind kind, const StepBoundDefaults& bounds) {
  switch (kind) {
    case CoordKind::kAngular:
      return bounds.angular;
    case CoordKind::kTranslational:
      return bounds.translational;
    case CoordKind::kScale:
      return bounds.scale;
  }
  return bounds.angular;
}

// y index that column j of J_Phi selects with unit weight, or -1.
int UnitSelectedCoordinate(const Eigen::MatrixXd& proxy_jacobian, int j) {
  int found = -1;
  for (Eigen::Index i = 0; i < proxy_jacobian.rows(); ++i) {
    const double v = proxy_jacobian(i, j);
    if (v == 0.0) continue;
    if (v != 1.0 || found >= 0) return -1;
    found = static_cast<int>(i);
  }
  return found;
}

}  // namespace

void SolverConfig::Validate() const {
  Require(0.0 < nu_down && nu_down < 1.0 && nu_up > 1.0,
          "solver config: need 0 < nu_down < 1 < nu_up");
  Require(0.0 <= rho_low && rho_low < rho_high && rho_high <= 1.0,
          "solver config: need 0 <= rho_low < rho_high <= 1");
  Require(eps_rho > 0.0, "solver config: eps_rho must be positive");
  Require(max_iters >= 1, "solver config: max_iters must be >= 1");
  Require(0.0 < lambda_min && lambda_min <= lambda_init &&
              lambda_init <= lambda_max,
          "solver config: need 0 < lambda_min <= lambda_init <= lambda_max");
  Require(step_bounds.angular > 0.0 && step_bounds.translational > 0.0 &&
              step_bounds.scale > 0.0,
          "solver config: step bounds must be positive");
  Require(lower.size() == upper.size(),
          "solver config: lower and upper bounds differ in length");
  Require((lower.array() < 0.0).all() && (upper.array() > 0.0).all(),
          "solver config: need lb < 0 < ub");
  Require((damping_diag.array() > 0.0).all(),
          "solver config: damping diagonal must be positive");
  Require((tracking_weights.array() >= 0.0).all(),
          "solver config: tracking weights must be nonnegative");
  Require(0.0 < scale_min && scale_min < scale_max,
          "solver config: need 0 < scale_min < scale_max");
}

Observation Observation::AllVisible(Eigen::VectorXd x) {
  Observation obs;
  obs.visible.assign(x.size() / 3, true);
  obs.x_obs = std::move(x);
  return obs;
}

int Observation::visible_count() const {
  return static_cast<int>(std::count(visible.begin(), visible.end(), true));
}

const char* FrameStatusName(FrameStatus status) {
  switch (status) {
    case FrameStatus::kConvergedResidual:
      return "converged_residual";
    case FrameStatus::kConvergedDecrease:
      return "converged_decrease";
    case FrameStatus::kMaxIters:
      return "max_iters";
    case FrameStatus::kFailedNonfinite:
      return "failed_nonfinite";
  }
  return "unknown";
}

Eigen::VectorXd MarkerWeights(const KinematicModel& model,
                              const Observation& obs, double marker_weight) {
  if (static_cast<int>(obs.visible.size()) != model.marker_count() ||
      obs.x_obs.size() != model.nx()) {
    throw std::invalid_argument("observation does not match model markers");
  }
  Eigen::VectorXd w(model.nx());
  for (int k = 0; k < model.marker_count(); ++k) {
    const double wk =
        obs.visible[k] ? marker_weight * model.markers()[k].weight : 0.0;
    w.segment<3>(3 * k).setConstant(wk);
  }
  return w;
}

Eigen::VectorXd TrackingWeights(const KinematicModel& model,
                                const SolverConfig& config) {
  if (config.tracking_weights.size() == 0 || !config.y_ref) {
    return Eigen::VectorXd::Zero(model.ny());
  }
  if (config.tracking_weights.size() != model.ny() ||
      config.y_ref->size() != model.ny()) {
    throw std::invalid_argument("tracking weights / y_ref length mismatch");
  }
  return config.tracking_weights;
}

Eigen::VectorXd MarkerResidual(const KinematicModel& model,
                               const Eigen::VectorXd& x_hat,
                               const Observation& obs) {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(model.nx());
  for (int k = 0; k < model.marker_count(); ++k) {
    if (obs.visible[k]) {
      r.segment<3>(3 * k) = x_hat.segment<3>(3 * k) - obs.x_obs.segment<3>(3 * k);
    }
  }
  return r;
}

double Energy(const KinematicModel& model, const Eigen::VectorXd& y,
              const Observation& obs, const Eigen::VectorXd& marker_weights,
              const Eigen::VectorXd& tracking_weights,
              const Eigen::VectorXd* y_ref) {
  const Eigen::VectorXd x_hat = PredictMarkers(model, y);
  const Eigen::VectorXd r = MarkerResidual(model, x_hat, obs);
  double e = 0.5 * marker_weights.cwiseProduct(r).squaredNorm();
  if (y_ref != nullptr && tracking_weights.any()) {
    e += 0.5 * tracking_weights.cwiseProduct(y - *y_ref).squaredNorm();
  }
  return e;
}

double Energy(const KinematicModel& model, const Eigen::VectorXd& y,
              const Observation& obs, const SolverConfig& config) {
  const Eigen::VectorXd wm = MarkerWeights(model, obs, config.marker_weight);
  const Eigen::VectorXd wt = TrackingWeights(model, config);
  return Energy(model, y, obs, wm, wt, config.y_ref ? &*config.y_ref : nullptr);
}

AcceptanceQuantities ComputeAcceptance(double energy_before,
                                       double energy_after,
                                       const Eigen::VectorXd& step,
                                       const Eigen::VectorXd& damping,
                                       double predicted, double eps_rho) {
  AcceptanceQuantities q;
  const double penalty = 0.5 * step.dot(damping.cwiseProduct(step));
  q.actual = energy_before - (energy_after + penalty);
  q.rho = q.actual / (predicted + eps_rho);
  return q;
}

double UpdateDamping(double lambda, double rho, bool accepted,
                     const SolverConfig& config) {
  if (!accepted || rho < config.rho_low) {
    return std::min(lambda * config.nu_up, config.lambda_max);
  }
  if (rho > config.rho_high) {
    return std::max(lambda * config.nu_down, config.lambda_min);
  }
  return lambda;
}

void StepBounds(const KinematicModel& model,
                const Eigen::MatrixXd& proxy_jacobian,
                const Eigen::VectorXd& y, const SolverConfig& config,
                Eigen::VectorXd& lower, Eigen::VectorXd& upper) {
  const Eigen::Index np = proxy_jacobian.cols();
  const bool explicit_bounds = config.lower.size() > 0;
  if (explicit_bounds && config.lower.size() != np) {
    throw std::invalid_argument("explicit step bounds do not match proxy size");
  }
  lower.resize(np);
  upper.resize(np);
  for (Eigen::Index j = 0; j < np; ++j) {
    // the kind of the coordinate this column drives hardest
    Eigen::Index row = 0;
    const double peak = proxy_jacobian.col(j).cwiseAbs().maxCoeff(&row);
    bool scale_only = peak > 0.0;
    for (Eigen::Index i = 0; i < proxy_jacobian.rows(); ++i) {
      if (proxy_jacobian(i, j) != 0.0 &&
          model.coord_kind(static_cast<int>(i)) != CoordKind::kScale) {
        scale_only = false;
      }
    }

    if (explicit_bounds) {
      lower[j] = config.lower[j];
      upper[j] = config.upper[j];
    } else if (peak > 0.0) {
      const double b =
          BoundForKind(model.coord_kind(static_cast<int>(row)),
                       config.step_bounds) / peak;
      lower[j] = -b;
      upper[j] = b;
    } else {
      lower[j] = -config.step_bounds.angular;
      upper[j] = config.step_bounds.angular;
    }

    if (config.freeze_scale && scale_only) {
      lower[j] = upper[j] = 0.0;
      continue;
    }
    const int i = UnitSelectedCoordinate(proxy_jacobian, static_cast<int>(j));
    if (i >= 0 && model.coord_kind(i) == CoordKind::kScale) {
      lower[j] = std::min(0.0, std::max(lower[j], config.scale_min - y[i]));
      upper[j] = std::max(0.0, std::min(upper[j], config.scale_max - y[i]));
    }
  }
}

double MarkerRmseMm(const Eigen::VectorXd& x_hat, const Observation& obs) {
  double sum = 0.0;
  int count = 0;
  for (std::size_t k = 0; k < obs.visible.size(); ++k) {
    if (!obs.visible[k]) continue;
    sum += (x_hat.segment<3>(3 * k) - obs.x_obs.segment<3>(3 * k)).squaredNorm();
    ++count;
  }
  if (count == 0) return std::numeric_limits<double>::quiet_NaN();
  return 1000.0 * std::sqrt(sum / count);
}

FrameResult SolveFrame(const KinematicModel& model, const ProxyMap& proxy,
                       const Observation& obs, const Eigen::VectorXd& p_init,
                       const SolverConfig& config,
                       const IterationObserver& observer) {
  const auto start = std::chrono::steady_clock::now();
  config.Validate();
  if (proxy.ny() != model.ny()) {
    throw std::invalid_argument("proxy map does not match model state size");
  }

  const Eigen::VectorXd wm = MarkerWeights(model, obs, config.marker_weight);
  const Eigen::VectorXd wt = TrackingWeights(model, config);
  const Eigen::VectorXd* y_ref = config.y_ref ? &*config.y_ref : nullptr;
  const Eigen::MatrixXd j_phi = Jacobian(proxy, p_init);
  const Eigen::VectorXd d = config.damping_diag.size() > 0
                                ? config.damping_diag
                                : Eigen::VectorXd::Ones(proxy.np());
  if (d.size() != proxy.np()) {
    throw std::invalid_argument("damping diagonal does not match proxy size");
  }

  FrameResult result;
  Eigen::VectorXd p = p_init;
  Eigen::VectorXd y = Apply(proxy, p);
  double energy = Energy(model, y, obs, wm, wt, y_ref);
  double lambda = config.lambda_init;

  auto finish = [&](FrameStatus status) {
    result.status = status;
    result.y_est = y;
    result.p_est = p;
    result.final_weighted_energy = energy;
    result.marker_rmse_mm = MarkerRmseMm(PredictMarkers(model, y), obs);
    result.wall_time_us = std::chrono::duration<double, std::micro>(
                              std::chrono::steady_clock::now() - start)
                              .count();
    return result;
  };

  if (!std::isfinite(energy)) return finish(FrameStatus::kFailedNonfinite);
  if (std::sqrt(2.0 * energy) <= config.tol_residual) {
    return finish(FrameStatus::kConvergedResidual);
  }

  Eigen::MatrixXd j_y;
  Eigen::VectorXd lower, upper;
  WeightSet weights{wm, wt, Eigen::VectorXd()};
  const Eigen::VectorXd tracking_residual =
      y_ref ? Eigen::VectorXd(y - *y_ref) : Eigen::VectorXd::Zero(model.ny());

  for (int iter = 0; iter < config.max_iters; ++iter) {
    result.iterations = iter + 1;

    // residuals and Jacobians at the current iterate
    const BodyFrames frames = ForwardKinematics(model, y);
    const Eigen::VectorXd x_hat = PredictMarkers(model, frames, y);
    const Eigen::VectorXd r = MarkerResidual(model, x_hat, obs);
    const Eigen::VectorXd e_t =
        y_ref ? Eigen::VectorXd(y - *y_ref) : tracking_residual;
    MarkerJacobian(model, frames, y, j_y);
    const Eigen::MatrixXd j_m = j_y * j_phi;

    // bounded proxy-space QP
    weights.damping = lambda * d;
    QuadraticModel qp = Assemble(j_m, j_phi, r, e_t, weights);
    StepBounds(model, j_phi, y, config, lower, upper);
    qp.lower = lower;
    qp.upper = upper;
    const BoxQpResult step = SolveBoxQp(qp);
    if (step.status == BoxQpStatus::kNotPositiveDefinite) {
      return finish(FrameStatus::kFailedNonfinite);
    }
    const double predicted = PredictedDecrease(qp, step.step);
    if (!(predicted > config.tol_rel_decrease * energy)) {
      // the model itself predicts no meaningful decrease
      return finish(FrameStatus::kConvergedDecrease);
    }

    // actual decrease with the damping penalty charged
    const Eigen::VectorXd p_trial = p + step.step;
    const Eigen::VectorXd y_trial = Apply(proxy, p_trial);
    const double energy_trial = Energy(model, y_trial, obs, wm, wt, y_ref);
    const AcceptanceQuantities acc =
        ComputeAcceptance(energy, energy_trial, step.step, weights.damping,
                          predicted, config.eps_rho);
    const bool accepted = std::isfinite(energy_trial) && acc.actual > 0.0;

    IterationRecord record;
    if (observer) {
      record.iteration = iter;
      record.p_before = p;
      record.y_before = y;
      record.step = step.step;
      record.lower = lower;
      record.upper = upper;
      record.energy_before = energy;
      record.energy_trial = energy_trial;
      record.predicted = predicted;
      record.actual = acc.actual;
      record.rho = acc.rho;
      record.lambda_before = lambda;
      record.accepted = accepted;
    }

    double relative = std::numeric_limits<double>::infinity();
    if (accepted) {
      relative = (energy - energy_trial) / energy;
      p = p_trial;
      y = y_trial;
      energy = energy_trial;
      ++result.accepted_steps;
    }
    lambda = UpdateDamping(lambda, std::isfinite(acc.rho) ? acc.rho : 0.0,
                           accepted, config);

    if (observer) {
      record.p_after = p;
      record.y_after = y;
      record.energy_after = energy;
      record.lambda_after = lambda;
      observer(record);
    }

    if (accepted) {
      if (std::sqrt(2.0 * energy) <= config.tol_residual) {
        return finish(FrameStatus::kConvergedResidual);
      }
      if (relative <= config.tol_rel_decrease) {
        return finish(FrameStatus::kConvergedDecrease);
      }
    }
  }
  return finish(FrameStatus::kMaxIters);
}

TrialSummary SummarizeFrames(const std::vector<FrameResult>& frames) {
  TrialSummary s;
  s.frames = static_cast<int>(frames.size());
  if (frames.empty()) return s;
  std::vector<double> times, iters, rmse;
  for (const FrameResult& f : frames) {
    times.push_back(f.wall_time_us);
    iters.push_back(f.iterations);
    if (std::isfinite(f.marker_rmse_mm)) rmse.push_back(f.marker_rmse_mm);
    s.total_time_us += f.wall_time_us;
    switch (f.status) {
      case FrameStatus::kConvergedResidual:
      case FrameStatus::kConvergedDecrease:
        ++s.converged;
        break;
      case FrameStatus::kMaxIters:
        ++s.max_iters;
        break;
      case FrameStatus::kFailedNonfinite:
        ++s.failed;
        break;
    }
  }
  s.fps = s.total_time_us > 0.0 ? 1e6 * s.frames / s.total_time_us : 0.0;
  s.time_p50_ms = NearestRank(times, 50) / 1000.0;
  s.time_p90_ms = NearestRank(times, 90) / 1000.0;
  s.iters_p50 = NearestRank(iters, 50);
  s.iters_p90 = NearestRank(iters, 90);
  if (!rmse.empty()) {
    s.rmse_p50_mm = NearestRank(rmse, 50);
    s.rmse_p90_mm = NearestRank(rmse, 90);
    s.rmse_mean_mm = Mean(rmse);
  }
  return s;
}

TrialResult SolveTrial(const KinematicModel& model, const ProxyMap& proxy,
                       const std::vector<Observation>& frames,
                       const Eigen::VectorXd& p_init,
                       const SolverConfig& config,
                       const TrialOptions& options) {
  if (frames.empty()) throw std::invalid_argument("trial has no frames");
  TrialResult trial;
  trial.frames.reserve(frames.size());

  Eigen::VectorXd p = p_init;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    SolverConfig frame_config = config;
    if (options.freeze_scale_after >= 0 &&
        static_cast<int>(t) >= options.freeze_scale_after) {
      frame_config.freeze_scale = true;
    }
    double warm_time_us = 0.0;
    if (t == 0) {
      frame_config.max_iters =
          std::max(config.max_iters, options.first_frame_max_iters);
      if (options.warm_start) {
        const auto start = std::chrono::steady_clock::now();
        const Eigen::VectorXd y0 = options.warm_start(frames[0], Apply(proxy, p));
        p = Project(proxy, y0);
        warm_time_us = std::chrono::duration<double, std::micro>(
                           std::chrono::steady_clock::now() - start)
                           .count();
      }
    }
    FrameResult result = SolveFrame(model, proxy, frames[t], p, frame_config);
    result.wall_time_us += warm_time_us;
    if (result.status != FrameStatus::kFailedNonfinite) p = result.p_est;
    trial.frames.push_back(std::move(result));
  }
  trial.summary = SummarizeFrames(trial.frames);
  return trial;
}

}  // namespace scalepose
