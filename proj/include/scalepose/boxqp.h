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

#ifndef SCALEPOSE_BOXQP_H_
#define SCALEPOSE_BOXQP_H_

#include <Eigen/Core>

namespace scalepose {

// Diagonal square-root weights. damping holds the full W_damp diagonal
// (already multiplied by the adaptive scalar).
struct WeightSet {
  Eigen::VectorXd marker;    // nx
  Eigen::VectorXd tracking;  // ny
  Eigen::VectorXd damping;   // np, strictly positive
};

// 0.5 dp' H dp + g' dp subject to lower <= dp <= upper.
struct QuadraticModel {
  Eigen::MatrixXd hessian;
  Eigen::VectorXd gradient;
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

// H = Jm' Wm' Wm Jm + Jphi' Wt' Wt Jphi + Wdamp
// g = Jm' Wm' Wm r + Jphi' Wt' Wt e
// Bounds are left empty. Throws std::invalid_argument on inconsistent
// dimensions or non-finite input.
QuadraticModel Assemble(const Eigen::MatrixXd& marker_jacobian,
                        const Eigen::MatrixXd& proxy_jacobian,
                        const Eigen::VectorXd& marker_residual,
                        const Eigen::VectorXd& tracking_residual,
                        const WeightSet& weights);

enum class BoxQpStatus { kOptimal, kNotPositiveDefinite, kIterationLimit };

struct BoxQpResult {
  Eigen::VectorXd step;
  BoxQpStatus status = BoxQpStatus::kOptimal;
  int iterations = 0;
  double kkt_residual = 0.0;
};

// Projected Newton with free-set Cholesky factorization and a projected
// Armijo search. Requires lower <= 0 <= upper.
BoxQpResult SolveBoxQp(const QuadraticModel& model, int max_iterations = 100);

// Objective value 0.5 x' H x + g' x.
double QuadraticValue(const QuadraticModel& model, const Eigen::VectorXd& x);

// -g' dp - 0.5 dp' H dp
double PredictedDecrease(const QuadraticModel& model, const Eigen::VectorXd& step);

// Norm of the gradient projected onto the feasible directions at x.
double ProjectedGradientNorm(const QuadraticModel& model,
                             const Eigen::VectorXd& x);

}  // namespace scalepose

#endif  // SCALEPOSE_BOXQP_H_
