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

#include "scalepose/kinmodel.h"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace scalepose {
namespace {

constexpr double kUnitTolerance = 1e-12;

Eigen::Matrix3d Skew(const Eigen::Vector3d& v) {
  Eigen::Matrix3d m;
  m << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return m;
}

void CheckState(const KinematicModel& model, const Eigen::VectorXd& y) {
  if (y.size() != model.ny()) {
    std::ostringstream msg;
    msg << "state has " << y.size() << " entries, model expects "
        << model.ny();
    throw std::invalid_argument(msg.str());
  }
}

}  // namespace

int JointDof(JointKind kind) {
  switch (kind) {
    case JointKind::kFree6:
      return 6;
    case JointKind::kBall3:
      return 3;
    case JointKind::kHinge1:
    case JointKind::kSlide1:
      return 1;
  }
  return 0;
}

const char* JointKindName(JointKind kind) {
  switch (kind) {
    case JointKind::kFree6:
      return "free6";
    case JointKind::kBall3:
      return "ball3";
    case JointKind::kHinge1:
      return "hinge1";
    case JointKind::kSlide1:
      return "slide1";
  }
  return "unknown";
}

std::optional<JointKind> ParseJointKind(const std::string& name) {
  if (name == "free6" || name == "free") return JointKind::kFree6;
  if (name == "ball3" || name == "ball") return JointKind::kBall3;
  if (name == "hinge1" || name == "hinge") return JointKind::kHinge1;
  if (name == "slide1" || name == "slide") return JointKind::kSlide1;
  return std::nullopt;
}

std::string ValidationReport::Summary() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < violations.size(); ++i) {
    if (i) out << "; ";
    out << violations[i];
  }
  return out.str();
}

ValidationReport ValidateModel(const std::vector<BodyNode>& bodies,
                               const std::vector<MarkerAttachment>& markers) {
  ValidationReport report;
  auto fail = [&report](const std::string& what) {
    report.violations.push_back(what);
  };
  const int n = static_cast<int>(bodies.size());
  if (n == 0) fail("model has no bodies");

  int roots = 0;
  std::vector<int> slots;
  for (int i = 0; i < n; ++i) {
    const BodyNode& b = bodies[i];
    const std::string tag = "body " + std::to_string(i);
    if (b.id != i) fail(tag + ": id " + std::to_string(b.id) + " out of order");
    if (b.parent == kNoParent) {
      ++roots;
    } else if (b.parent == i) {
      fail("cycle/order: " + tag + " is its own parent");
    } else if (b.parent < 0 || b.parent >= n) {
      fail(tag + ": parent " + std::to_string(b.parent) + " does not exist");
    } else if (b.parent > i) {
      fail("cycle/order: " + tag + " precedes its parent " +
           std::to_string(b.parent));
    }
    const JointKind kind = b.joint.kind;
    if (kind == JointKind::kHinge1 || kind == JointKind::kSlide1) {
      if (std::abs(b.joint.axis.norm() - 1.0) > kUnitTolerance) {
        fail("non-unit axis: " + tag);
      }
    }
    if (std::abs(b.joint.frame_offset.rotation.norm() - 1.0) >
        kUnitTolerance) {
      fail("non-unit quaternion: " + tag);
    }
    if (!b.anchor.allFinite() || !b.joint.frame_offset.translation.allFinite()) {
      fail(tag + ": non-finite offset");
    }
    if (b.scale_slot) slots.push_back(*b.scale_slot);
  }
  if (n > 0 && roots != 1) {
    fail("expected exactly one root, found " + std::to_string(roots));
  }
  if (n > 0 && bodies[0].parent != kNoParent) {
    fail("cycle/order: body 0 must be the root");
  }

  std::sort(slots.begin(), slots.end());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (i > 0 && slots[i] == slots[i - 1]) {
      fail("duplicate scale slot " + std::to_string(slots[i]));
    } else if (slots[i] < 0 || slots[i] >= static_cast<int>(slots.size())) {
      fail("scale slot " + std::to_string(slots[i]) +
           " outside contiguous range");
    }
  }

  if (markers.empty()) fail("model has no markers");
  std::set<int> ids;
  std::set<std::string> names;
  for (const MarkerAttachment& m : markers) {
    const std::string tag = "marker " + std::to_string(m.marker_id);
    if (m.body < 0 || m.body >= n) fail("orphan marker: " + tag);
    if (!(m.weight >= 0.0) || !std::isfinite(m.weight)) {
      fail(tag + ": weight must be finite and nonnegative");
    }
    if (!m.local_offset.allFinite()) fail(tag + ": non-finite offset");
    if (!ids.insert(m.marker_id).second) fail("duplicate marker id: " + tag);
    if (!m.name.empty() && !names.insert(m.name).second) {
      fail("duplicate marker name: " + m.name);
    }
  }
  return report;
}

ModelError::ModelError(const ValidationReport& report)
    : std::runtime_error("invalid model: " + report.Summary()),
      report_(report) {}

KinematicModel::KinematicModel(std::vector<BodyNode> bodies,
                               std::vector<MarkerAttachment> markers)
    : bodies_(std::move(bodies)), markers_(std::move(markers)) {
  ValidationReport report = ValidateModel(bodies_, markers_);
  if (!report.ok()) throw ModelError(report);

  const int n = body_count();
  q_offset_.resize(n);
  children_.assign(n, {});
  body_markers_.assign(n, {});
  for (int i = 0; i < n; ++i) {
    q_offset_[i] = nq_;
    nq_ += JointDof(bodies_[i].joint.kind);
    if (bodies_[i].scale_slot) ++ns_;
    if (bodies_[i].parent != kNoParent) {
      children_[bodies_[i].parent].push_back(i);
    }
  }
  for (int k = 0; k < marker_count(); ++k) {
    body_markers_[markers_[k].body].push_back(k);
  }

  coord_body_.assign(ny(), 0);
  coord_kind_.assign(ny(), CoordKind::kAngular);
  for (int i = 0; i < n; ++i) {
    const int q0 = q_offset_[i];
    switch (bodies_[i].joint.kind) {
      case JointKind::kFree6:
        for (int d = 0; d < 3; ++d) {
          coord_kind_[q0 + d] = CoordKind::kTranslational;
          coord_kind_[q0 + 3 + d] = CoordKind::kAngular;
        }
        break;
      case JointKind::kBall3:
      case JointKind::kHinge1:
        for (int d = 0; d < JointDof(bodies_[i].joint.kind); ++d) {
          coord_kind_[q0 + d] = CoordKind::kAngular;
        }
        break;
      case JointKind::kSlide1:
        coord_kind_[q0] = CoordKind::kTranslational;
        break;
    }
    for (int d = 0; d < JointDof(bodies_[i].joint.kind); ++d) {
      coord_body_[q0 + d] = i;
    }
    if (bodies_[i].scale_slot) {
      coord_body_[nq_ + *bodies_[i].scale_slot] = i;
      coord_kind_[nq_ + *bodies_[i].scale_slot] = CoordKind::kScale;
    }
  }
}

int KinematicModel::scale_index(int body) const {
  const auto& slot = bodies_[body].scale_slot;
  return slot ? nq_ + *slot : -1;
}

bool KinematicModel::IsAncestorOrSelf(int ancestor, int body) const {
  for (int b = body; b != kNoParent; b = bodies_[b].parent) {
    if (b == ancestor) return true;
  }
  return false;
}

int KinematicModel::FindMarker(const std::string& name) const {
  for (int k = 0; k < marker_count(); ++k) {
    if (markers_[k].name == name) return k;
  }
  return -1;
}

Eigen::VectorXd KinematicModel::NeutralState() const {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(ny());
  y.tail(ns_).setOnes();
  return y;
}

Eigen::Matrix3d ExpMap(const Eigen::Vector3d& v) {
  const double theta2 = v.squaredNorm();
  const Eigen::Matrix3d k = Skew(v);
  double a, b;
  if (theta2 < 1e-12) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  return Eigen::Matrix3d::Identity() + a * k + b * k * k;
}

Eigen::Vector3d LogMap(const Eigen::Matrix3d& rotation) {
  const Eigen::AngleAxisd aa(rotation);
  return aa.angle() * aa.axis();
}

Eigen::Matrix3d LeftJacobian(const Eigen::Vector3d& v) {
  const double theta2 = v.squaredNorm();
  const Eigen::Matrix3d k = Skew(v);
  double a, b;
  if (theta2 < 1e-12) {
    a = 0.5 - theta2 / 24.0;
    b = 1.0 / 6.0 - theta2 / 120.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = (1.0 - std::cos(theta)) / theta2;
    b = (theta - std::sin(theta)) / (theta2 * theta);
  }
  return Eigen::Matrix3d::Identity() + a * k + b * k * k;
}

BodyFrames ForwardKinematics(const KinematicModel& model,
                             const Eigen::VectorXd& y) {
  CheckState(model, y);
  const int n = model.body_count();
  BodyFrames frames;
  frames.position.resize(n);
  frames.rotation.resize(n);
  frames.joint_frame.resize(n);

  for (int i = 0; i < n; ++i) {
    const BodyNode& body = model.bodies()[i];
    const JointSpec& joint = body.joint;

    // joint frame placement
    Eigen::Vector3d origin;
    Eigen::Matrix3d frame;
    if (body.parent == kNoParent) {
      origin = body.anchor + joint.frame_offset.translation;
      frame = joint.frame_offset.rotation.toRotationMatrix();
    } else {
      const int parent = body.parent;
      const int s_index = model.scale_index(parent);
      const double s_parent = s_index >= 0 ? y[s_index] : 1.0;
      const Eigen::Matrix3d& r_parent = frames.rotation[parent];
      origin = frames.position[parent] +
               r_parent * (s_parent * body.anchor +
                           joint.frame_offset.translation);
      frame = r_parent * joint.frame_offset.rotation.toRotationMatrix();
    }
    frames.joint_frame[i] = frame;

    // joint motion
    const auto q = y.segment(model.q_offset(i), JointDof(joint.kind));
    switch (joint.kind) {
      case JointKind::kFree6:
        frames.position[i] = origin + frame * q.head<3>();
        frames.rotation[i] = frame * ExpMap(q.tail<3>());
        break;
      case JointKind::kBall3:
        frames.position[i] = origin;
        frames.rotation[i] = frame * ExpMap(q.head<3>());
        break;
      case JointKind::kHinge1:
        frames.position[i] = origin;
        frames.rotation[i] =
            frame * Eigen::AngleAxisd(q[0], joint.axis).toRotationMatrix();
        break;
      case JointKind::kSlide1:
        frames.position[i] = origin + frame * (joint.axis * q[0]);
        frames.rotation[i] = frame;
        break;
    }
  }
  return frames;
}

Eigen::VectorXd PredictMarkers(const KinematicModel& model,
                               const BodyFrames& frames,
                               const Eigen::VectorXd& y) {
  CheckState(model, y);
  Eigen::VectorXd x(model.nx());
  for (int k = 0; k < model.marker_count(); ++k) {
    const MarkerAttachment& m = model.markers()[k];
    const int s_index = model.scale_index(m.body);
    const double s = s_index >= 0 ? y[s_index] : 1.0;
    x.segment<3>(3 * k) = frames.position[m.body] +
                          frames.rotation[m.body] * (s * m.local_offset);
  }
  return x;
}

Eigen::VectorXd PredictMarkers(const KinematicModel& model,
                               const Eigen::VectorXd& y) {
  return PredictMarkers(model, ForwardKinematics(model, y), y);
}

void MarkerJacobian(const KinematicModel& model, const BodyFrames& frames,
                    const Eigen::VectorXd& y, Eigen::MatrixXd& jacobian) {
  CheckState(model, y);
  jacobian.setZero(model.nx(), model.ny());

  for (int k = 0; k < model.marker_count(); ++k) {
    const MarkerAttachment& m = model.markers()[k];
    const int row = 3 * k;
    const int s_own = model.scale_index(m.body);
    const double s = s_own >= 0 ? y[s_own] : 1.0;
    const Eigen::Vector3d x =
        frames.position[m.body] + frames.rotation[m.body] * (s * m.local_offset);

    // direct local-offset term
    if (s_own >= 0) {
      jacobian.block<3, 1>(row, s_own) +=
          frames.rotation[m.body] * m.local_offset;
    }

    // walk the ancestor path: joint columns and propagated anchor terms
    for (int b = m.body; b != kNoParent; b = model.bodies()[b].parent) {
      const BodyNode& body = model.bodies()[b];
      const JointSpec& joint = body.joint;
      const int q0 = model.q_offset(b);
      const Eigen::Matrix3d& frame = frames.joint_frame[b];
      const Eigen::Vector3d lever = x - frames.position[b];

      switch (joint.kind) {
        case JointKind::kFree6: {
          jacobian.block<3, 3>(row, q0) += frame;
          const Eigen::Matrix3d omega =
              frame * LeftJacobian(y.segment<3>(q0 + 3));
          for (int d = 0; d < 3; ++d) {
            jacobian.block<3, 1>(row, q0 + 3 + d) +=
                omega.col(d).cross(lever);
          }
          break;
        }
        case JointKind::kBall3: {
          const Eigen::Matrix3d omega = frame * LeftJacobian(y.segment<3>(q0));
          for (int d = 0; d < 3; ++d) {
            jacobian.block<3, 1>(row, q0 + d) += omega.col(d).cross(lever);
          }
          break;
        }
        case JointKind::kHinge1:
          jacobian.block<3, 1>(row, q0) += (frame * joint.axis).cross(lever);
          break;
        case JointKind::kSlide1:
          jacobian.block<3, 1>(row, q0) += frame * joint.axis;
          break;
      }

      if (body.parent != kNoParent) {
        const int s_parent = model.scale_index(body.parent);
        if (s_parent >= 0) {
          jacobian.block<3, 1>(row, s_parent) +=
              frames.rotation[body.parent] * body.anchor;
        }
      }
    }
  }
}

Eigen::MatrixXd MarkerJacobian(const KinematicModel& model,
                               const Eigen::VectorXd& y) {
  Eigen::MatrixXd jacobian;
  MarkerJacobian(model, ForwardKinematics(model, y), y, jacobian);
  return jacobian;
}

}  // namespace scalepose
