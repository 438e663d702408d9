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

// Reference implementations used only by the tests. Nothing here calls into
// the library code it checks: transforms are rebuilt from 4x4 matrices and
// Rodrigues' formula, the box QP is enumerated over all activity patterns.

#ifndef SCALEPOSE_TESTS_ORACLES_H_
#define SCALEPOSE_TESTS_ORACLES_H_

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Geometry>

#include "scalepose/kinmodel.h"

namespace oracle {

using Eigen::Matrix3d;
using Eigen::Matrix4d;
using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

inline Matrix3d Rodrigues(const Vector3d& v) {
  const double theta = v.norm();
  Matrix3d k;
  if (theta == 0.0) return Matrix3d::Identity();
  const Vector3d a = v / theta;
  k << 0, -a.z(), a.y(), a.z(), 0, -a.x(), -a.y(), a.x(), 0;
  return Matrix3d::Identity() + std::sin(theta) * k +
         (1.0 - std::cos(theta)) * k * k;
}

inline Matrix4d Homogeneous(const Matrix3d& r, const Vector3d& t) {
  Matrix4d m = Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = r;
  m.topRightCorner<3, 1>() = t;
  return m;
}

inline Matrix4d Translation(const Vector3d& t) {
  return Homogeneous(Matrix3d::Identity(), t);
}

// Body-to-world transform, built by walking the ancestor path from the root.
inline Matrix4d BodyTransform(const scalepose::KinematicModel& model,
                              const VectorXd& y, int body) {
  std::vector<int> path;
  for (int b = body; b != scalepose::kNoParent; b = model.bodies()[b].parent) {
    path.push_back(b);
  }
  // q offsets recomputed from the joint kinds, independent of the model's
  // bookkeeping
  std::vector<int> offset(model.body_count(), 0);
  int running = 0;
  for (int b = 0; b < model.body_count(); ++b) {
    offset[b] = running;
    running += scalepose::JointDof(model.bodies()[b].joint.kind);
  }
  auto scale_of = [&](int b) {
    const auto& slot = model.bodies()[b].scale_slot;
    return slot ? y[running + *slot] : 1.0;
  };

  Matrix4d t = Matrix4d::Identity();
  for (auto it = path.rbegin(); it != path.rend(); ++it) {
    const scalepose::BodyNode& node = model.bodies()[*it];
    const double parent_scale =
        node.parent == scalepose::kNoParent ? 1.0 : scale_of(node.parent);
    const auto& off = node.joint.frame_offset;
    t = t * Translation(parent_scale * node.anchor + off.translation) *
        Homogeneous(off.rotation.toRotationMatrix(), Vector3d::Zero());
    const int q = offset[*it];
    switch (node.joint.kind) {
      case scalepose::JointKind::kFree6:
        t = t * Translation(y.segment<3>(q)) *
            Homogeneous(Rodrigues(y.segment<3>(q + 3)), Vector3d::Zero());
        break;
      case scalepose::JointKind::kBall3:
        t = t * Homogeneous(Rodrigues(y.segment<3>(q)), Vector3d::Zero());
        break;
      case scalepose::JointKind::kHinge1:
        t = t * Homogeneous(Rodrigues(y[q] * node.joint.axis), Vector3d::Zero());
        break;
      case scalepose::JointKind::kSlide1:
        t = t * Translation(y[q] * node.joint.axis);
        break;
    }
  }
  return t;
}

inline VectorXd NaiveMarkers(const scalepose::KinematicModel& model,
                             const VectorXd& y) {
  VectorXd x(model.nx());
  int running = 0;
  for (const auto& b : model.bodies()) running += scalepose::JointDof(b.joint.kind);
  for (int k = 0; k < model.marker_count(); ++k) {
    const auto& m = model.markers()[k];
    const auto& slot = model.bodies()[m.body].scale_slot;
    const double s = slot ? y[running + *slot] : 1.0;
    const Matrix4d t = BodyTransform(model, y, m.body);
    x.segment<3>(3 * k) =
        (t * (Eigen::Vector4d() << s * m.local_offset, 1.0).finished()).head<3>();
  }
  return x;
}

inline MatrixXd CentralDifference(
    const std::function<VectorXd(const VectorXd&)>& f, const VectorXd& y,
    double h) {
  const VectorXd f0 = f(y);
  MatrixXd j(f0.size(), y.size());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    VectorXd plus = y, minus = y;
    plus[i] += h;
    minus[i] -= h;
    j.col(i) = (f(plus) - f(minus)) / (2.0 * h);
  }
  return j;
}

inline Vector3d RandomUnit(std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  Vector3d v(n(rng), n(rng), n(rng));
  return v.normalized();
}

// Random tree mixing every joint kind; roughly two thirds of the bodies
// carry a scale slot.
inline scalepose::KinematicModel RandomModel(std::mt19937_64& rng, int bodies,
                                             int markers_per_body = 2) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::uniform_int_distribution<int> kind_pick(0, 3);
  std::vector<scalepose::BodyNode> nodes;
  int slot = 0;
  for (int b = 0; b < bodies; ++b) {
    scalepose::BodyNode node;
    node.id = b;
    node.name = "b" + std::to_string(b);
    if (b == 0) {
      node.parent = scalepose::kNoParent;
      node.joint.kind = scalepose::JointKind::kFree6;
    } else {
      node.parent = std::uniform_int_distribution<int>(0, b - 1)(rng);
      node.joint.kind = static_cast<scalepose::JointKind>(kind_pick(rng));
      if (node.joint.kind == scalepose::JointKind::kFree6) {
        node.joint.kind = scalepose::JointKind::kBall3;
      }
    }
    node.joint.axis = RandomUnit(rng);
    node.joint.frame_offset.translation = Vector3d(u(rng), u(rng), u(rng)) * 0.1;
    node.joint.frame_offset.rotation =
        Eigen::Quaterniond(Eigen::AngleAxisd(u(rng) * 2.0, RandomUnit(rng)));
    node.anchor = Vector3d(u(rng), u(rng), u(rng));
    if (b == 0 || std::uniform_int_distribution<int>(0, 2)(rng) > 0) {
      node.scale_slot = slot++;
    }
    nodes.push_back(node);
  }
  std::vector<scalepose::MarkerAttachment> markers;
  for (int b = 0; b < bodies; ++b) {
    for (int j = 0; j < markers_per_body; ++j) {
      scalepose::MarkerAttachment m;
      m.marker_id = static_cast<int>(markers.size());
      m.name = "m" + std::to_string(m.marker_id);
      m.body = b;
      m.local_offset = Vector3d(u(rng), u(rng), u(rng));
      markers.push_back(m);
    }
  }
  return scalepose::KinematicModel(nodes, markers);
}

inline VectorXd RandomState(std::mt19937_64& rng,
                            const scalepose::KinematicModel& model) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> s(0.7, 1.4);
  VectorXd y(model.ny());
  for (int i = 0; i < model.nq(); ++i) y[i] = u(rng);
  for (int i = model.nq(); i < model.ny(); ++i) y[i] = s(rng);
  return y;
}

struct EnumeratedQp {
  VectorXd x;
  double objective = std::numeric_limits<double>::infinity();
};

// Exhaustive active-set oracle: every coordinate is free, at its lower bound
// or at its upper bound (3^n patterns). For each pattern, solve the
// equality-constrained problem on the free set; the global minimizer is the
// feasible candidate with the lowest objective.
inline EnumeratedQp EnumerateBoxQp(const MatrixXd& h, const VectorXd& g,
                                   const VectorXd& lb, const VectorXd& ub) {
  const int n = static_cast<int>(g.size());
  int patterns = 1;
  for (int i = 0; i < n; ++i) patterns *= 3;
  EnumeratedQp best;
  for (int code = 0; code < patterns; ++code) {
    std::vector<int> state(n);
    int c = code;
    for (int i = 0; i < n; ++i) {
      state[i] = c % 3;
      c /= 3;
    }
    VectorXd x = VectorXd::Zero(n);
    std::vector<int> free;
    for (int i = 0; i < n; ++i) {
      if (state[i] == 1) x[i] = lb[i];
      else if (state[i] == 2) x[i] = ub[i];
      else free.push_back(i);
    }
    if (!free.empty()) {
      const int f = static_cast<int>(free.size());
      MatrixXd hff(f, f);
      VectorXd rhs(f);
      for (int a = 0; a < f; ++a) {
        rhs[a] = -g[free[a]];
        for (int i = 0; i < n; ++i) {
          if (state[i] != 0) rhs[a] -= h(free[a], i) * x[i];
        }
        for (int b = 0; b < f; ++b) hff(a, b) = h(free[a], free[b]);
      }
      const VectorXd xf = hff.ldlt().solve(rhs);
      for (int a = 0; a < f; ++a) x[free[a]] = xf[a];
    }
    bool feasible = true;
    for (int i = 0; i < n; ++i) {
      if (x[i] < lb[i] - 1e-12 || x[i] > ub[i] + 1e-12) feasible = false;
    }
    if (!feasible) continue;
    const double obj = 0.5 * x.dot(h * x) + g.dot(x);
    if (obj < best.objective) {
      best.objective = obj;
      best.x = x;
    }
  }
  return best;
}

inline MatrixXd RandomSpd(std::mt19937_64& rng, int n, double min_eig = 0.05) {
  std::normal_distribution<double> nd;
  MatrixXd a(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) a(i, j) = nd(rng);
  }
  return a * a.transpose() + min_eig * MatrixXd::Identity(n, n);
}

}  // namespace oracle

#endif  // SCALEPOSE_TESTS_ORACLES_H_
