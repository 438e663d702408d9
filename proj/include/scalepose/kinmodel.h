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

#ifndef SCALEPOSE_KINMODEL_H_
#define SCALEPOSE_KINMODEL_H_

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace scalepose {

inline constexpr int kNoParent = -1;

enum class JointKind { kFree6, kBall3, kHinge1, kSlide1 };

int JointDof(JointKind kind);
const char* JointKindName(JointKind kind);
std::optional<JointKind> ParseJointKind(const std::string& name);

// Rigid transform of a joint frame relative to its parent body frame.
struct RigidOffset {
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
};

struct JointSpec {
  JointKind kind = JointKind::kHinge1;
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();  // hinge/slide only
  RigidOffset frame_offset;
};

struct BodyNode {
  int id = 0;
  int parent = kNoParent;
  std::string name;
  JointSpec joint;
  // child-body origin offset expressed in the parent frame (meters)
  Eigen::Vector3d anchor = Eigen::Vector3d::Zero();
  std::optional<int> scale_slot;
};

struct MarkerAttachment {
  int marker_id = 0;
  std::string name;
  int body = 0;
  Eigen::Vector3d local_offset = Eigen::Vector3d::Zero();
  double weight = 1.0;  // square-root weight
};

// Kind of a coordinate of the full state y = [q; s].
enum class CoordKind { kAngular, kTranslational, kScale };

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
  std::string Summary() const;
};

ValidationReport ValidateModel(const std::vector<BodyNode>& bodies,
                               const std::vector<MarkerAttachment>& markers);

class ModelError : public std::runtime_error {
 public:
  explicit ModelError(const ValidationReport& report);
  const ValidationReport& report() const { return report_; }

 private:
  ValidationReport report_;
};

// World placement of every body after a kinematics evaluation.
struct BodyFrames {
  std::vector<Eigen::Vector3d> position;
  std::vector<Eigen::Matrix3d> rotation;
  // joint frame orientation before the joint's own motion is applied
  std::vector<Eigen::Matrix3d> joint_frame;

  Eigen::Quaterniond orientation(int body) const {
    return Eigen::Quaterniond(rotation[body]).normalized();
  }
};

// Immutable articulated model. The full state is y = [q; s] where q stacks
// the joint coordinates of the bodies in order and s the per-body scale slots.
//
// Scale semantics: the isotropic scale of body b multiplies the local
// offsets of the markers attached to b and the anchors of b's children.
// Ball and free joints carry rotation vectors (exponential coordinates)
// composed after the joint frame offset.
class KinematicModel {
 public:
  // Throws ModelError if ValidateModel reports a violation.
  KinematicModel(std::vector<BodyNode> bodies,
                 std::vector<MarkerAttachment> markers);

  const std::vector<BodyNode>& bodies() const { return bodies_; }
  const std::vector<MarkerAttachment>& markers() const { return markers_; }
  int body_count() const { return static_cast<int>(bodies_.size()); }
  int marker_count() const { return static_cast<int>(markers_.size()); }

  int nq() const { return nq_; }
  int ns() const { return ns_; }
  int ny() const { return nq_ + ns_; }
  int nx() const { return 3 * marker_count(); }

  // first q index of body b's joint
  int q_offset(int body) const { return q_offset_[body]; }
  // y index of body b's scale, or -1 if the body carries no slot
  int scale_index(int body) const;
  // body owning y index i (joint coordinate or scale slot)
  int coord_body(int i) const { return coord_body_[i]; }
  CoordKind coord_kind(int i) const { return coord_kind_[i]; }

  const std::vector<int>& children(int body) const { return children_[body]; }
  const std::vector<int>& body_markers(int body) const {
    return body_markers_[body];
  }
  bool IsAncestorOrSelf(int ancestor, int body) const;

  int FindMarker(const std::string& name) const;

  // Neutral state: q = 0, s = 1.
  Eigen::VectorXd NeutralState() const;

 private:
  std::vector<BodyNode> bodies_;
  std::vector<MarkerAttachment> markers_;
  int nq_ = 0;
  int ns_ = 0;
  std::vector<int> q_offset_;
  std::vector<int> coord_body_;
  std::vector<CoordKind> coord_kind_;
  std::vector<std::vector<int>> children_;
  std::vector<std::vector<int>> body_markers_;
};

// Rotation helpers for exponential coordinates.
Eigen::Matrix3d ExpMap(const Eigen::Vector3d& v);
Eigen::Vector3d LogMap(const Eigen::Matrix3d& rotation);
// Left Jacobian of SO(3): d/dv exp(v) = [Jl(v) dv]^ exp(v).
Eigen::Matrix3d LeftJacobian(const Eigen::Vector3d& v);

// Throws std::invalid_argument on dimension mismatch.
BodyFrames ForwardKinematics(const KinematicModel& model,
                             const Eigen::VectorXd& y);

// Stacked world marker positions, 3 rows per marker in marker order.
Eigen::VectorXd PredictMarkers(const KinematicModel& model,
                               const Eigen::VectorXd& y);
Eigen::VectorXd PredictMarkers(const KinematicModel& model,
                               const BodyFrames& frames,
                               const Eigen::VectorXd& y);

// Analytic J_y = d x_hat / d y (nx by ny).
Eigen::MatrixXd MarkerJacobian(const KinematicModel& model,
                               const Eigen::VectorXd& y);
void MarkerJacobian(const KinematicModel& model, const BodyFrames& frames,
                    const Eigen::VectorXd& y, Eigen::MatrixXd& jacobian);

}  // namespace scalepose

#endif  // SCALEPOSE_KINMODEL_H_
