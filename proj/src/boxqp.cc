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

#include "scalepose/boxqp.h"

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Cholesky>

namespace scalepose {
namespace {

constexpr double kArmijo = 1e-4;
constexpr double kBacktrack = 0.5;
constexpr double kMinStep = 1e-20;
constexpr double kKktTolerance = 1e-12;

Eigen::VectorXd Clamp(const Eigen::VectorXd& x, const QuadraticModel& model) {
  return x.cwiseMax(model.lower).cwiseMin(model.upper);
}

}  // namespace

QuadraticModel Assemble(const Eigen::MatrixXd& marker_jacobian,
                        const Eigen::MatrixXd& proxy_jacobian,
                        const Eigen::VectorXd& marker_residual,
                        const Eigen::VectorXd& tracking_residual,
                        const WeightSet& weights) {
  const Eigen::Index nx = marker_jacobian.rows();
  const Eigen::Index np = marker_jacobian.cols();
  const Eigen::Index ny = proxy_jacobian.rows();
  if (proxy_jacobian.cols() != np || marker_residual.size() != nx ||
      tracking_residual.size() != ny || weights.marker.size() != nx ||
      weights.tracking.size() != ny || weights.damping.size() != np) {
    throw std::invalid_argument("assemble: inconsistent dimensions");
  }
  if (!marker_jacobian.allFinite() || !proxy_jacobian.allFinite() ||
      !marker_residual.allFinite() || !tracking_residual.allFinite() ||
      !weights.marker.allFinite() || !weights.tracking.allFinite() ||
      !weights.damping.allFinite()) {
    throw std::invalid_argument("assemble: non-finite input");
  }

  QuadraticModel model;
  const Eigen::MatrixXd wj = weights.marker.asDiagonal() * marker_jacobian;
  const Eigen::VectorXd wr = weights.marker.cwiseProduct(marker_residual);
  model.hessian.noalias() = wj.transpose() * wj;
  model.gradient.noalias() = wj.transpose() * wr;

  if (weights.tracking.any()) {
    const Eigen::MatrixXd tj = weights.tracking.asDiagonal() * proxy_jacobian;
    const Eigen::VectorXd te = weights.tracking.cwiseProduct(tracking_residual);
    model.hessian.noalias() += tj.transpose() * tj;
    model.gradient.noalias() += tj.transpose() * te;
  }
  model.hessian.diagonal() += weights.damping;
  return model;
}

double QuadraticValue(const QuadraticModel& model, const Eigen::VectorXd& x) {
  return 0.5 * x.dot(model.hessian * x) + model.gradient.dot(x);
}

double PredictedDecrease(const QuadraticModel& model,
                         const Eigen::VectorXd& step) {
  return -model.gradient.dot(step) - 0.5 * step.dot(model.hessian * step);
}

double ProjectedGradientNorm(const QuadraticModel& model,
                             const Eigen::VectorXd& x) {
  const Eigen::VectorXd grad = model.hessian * x + model.gradient;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    double gi = grad[i];
    if (x[i] <= model.lower[i]) gi = std::min(gi, 0.0);
    if (x[i] >= model.upper[i]) gi = std::max(gi, 0.0);
    sum += gi * gi;
  }
  return std::sqrt(sum);
}

BoxQpResult SolveBoxQp(const QuadraticModel& model, int max_iterations) {
  const Eigen::Index n = model.gradient.size();
  if (model.hessian.rows() != n || model.hessian.cols() != n ||
      model.lower.size() != n || model.upper.size() != n) {
    throw std::invalid_argument("box qp: inconsistent dimensions");
  }
  if ((model.lower.array() > 0.0).any() || (model.upper.array() < 0.0).any()) {
    throw std::invalid_argument("box qp: bounds must bracket zero");
  }

  BoxQpResult result;
  const double tolerance = kKktTolerance * (1.0 + model.gradient.norm());

  // start from the clamped unconstrained minimizer
  Eigen::LLT<Eigen::MatrixXd> full(model.hessian);
  if (full.info() != Eigen::Success) {
    result.step = Eigen::VectorXd::Zero(n);
    result.status = BoxQpStatus::kNotPositiveDefinite;
    return result;
  }
  Eigen::VectorXd x = Clamp(-full.solve(model.gradient), model);
  double value = QuadraticValue(model, x);
  if (value > 0.0) {
    x.setZero();
    value = 0.0;
  }

  std::vector<int> free_set;
  free_set.reserve(n);
  result.status = BoxQpStatus::kIterationLimit;
  for (int iter = 0; iter < max_iterations; ++iter) {
    result.iterations = iter + 1;
    const Eigen::VectorXd grad = model.hessian * x + model.gradient;

    free_set.clear();
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool at_lower = x[i] <= model.lower[i];
      const bool at_upper = x[i] >= model.upper[i];
      const bool clamped = (at_lower && at_upper) ||
                           (at_lower && grad[i] > 0.0) ||
                           (at_upper && grad[i] < 0.0);
      if (!clamped) free_set.push_back(static_cast<int>(i));
    }

    result.kkt_residual = ProjectedGradientNorm(model, x);
    if (result.kkt_residual <= tolerance || free_set.empty()) {
      result.status = BoxQpStatus::kOptimal;
      break;
    }

    // Newton step on the free face with the clamped coordinates held
    const Eigen::Index nf = static_cast<Eigen::Index>(free_set.size());
    Eigen::MatrixXd h_free(nf, nf);
    Eigen::VectorXd g_free(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      g_free[a] = grad[free_set[a]];
      for (Eigen::Index b = 0; b < nf; ++b) {
        h_free(a, b) = model.hessian(free_set[a], free_set[b]);
      }
    }
    Eigen::LLT<Eigen::MatrixXd> factor(h_free);
    if (factor.info() != Eigen::Success) {
      result.status = BoxQpStatus::kNotPositiveDefinite;
      break;
    }
    const Eigen::VectorXd delta_free = -factor.solve(g_free);
    Eigen::VectorXd direction = Eigen::VectorXd::Zero(n);
    for (Eigen::Index a = 0; a < nf; ++a) direction[free_set[a]] = delta_free[a];

    // projected backtracking
    double alpha = 1.0;
    bool moved = false;
    while (alpha >= kMinStep) {
      const Eigen::VectorXd candidate = Clamp(x + alpha * direction, model);
      const double candidate_value = QuadraticValue(model, candidate);
      if (candidate_value <=
          value + kArmijo * grad.dot(candidate - x)) {
        moved = !(candidate.array() == x.array()).all();
        x = candidate;
        value = candidate_value;
        break;
      }
      alpha *= kBacktrack;
    }
    if (!moved) {
      result.kkt_residual = ProjectedGradientNorm(model, x);
      result.status = BoxQpStatus::kOptimal;
      break;
    }
  }
  result.step = x;
  return result;
}

}  // namespace scalepose
