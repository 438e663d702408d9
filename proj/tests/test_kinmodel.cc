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

#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "oracles.h"
#include "scalepose/kinmodel.h"

using namespace scalepose;
using Eigen::Vector3d;
using Eigen::VectorXd;

namespace {

BodyNode Body(int id, int parent, JointKind kind,
              Vector3d anchor = Vector3d::Zero(),
              std::optional<int> slot = std::nullopt) {
  BodyNode b;
  b.id = id;
  b.parent = parent;
  b.name = "b" + std::to_string(id);
  b.joint.kind = kind;
  b.anchor = anchor;
  b.scale_slot = slot;
  return b;
}

MarkerAttachment Marker(int id, int body, Vector3d offset) {
  MarkerAttachment m;
  m.marker_id = id;
  m.name = "m" + std::to_string(id);
  m.body = body;
  m.local_offset = offset;
  return m;
}

bool Mentions(const ValidationReport& r, const std::string& what) {
  for (const auto& v : r.violations) {
    if (v.find(what) != std::string::npos) return true;
  }
  return false;
}

// Single hinge-z root with one marker at (1,0,0).
KinematicModel HingeRoot() {
  return KinematicModel({Body(0, kNoParent, JointKind::kHinge1, Vector3d::Zero(), 0)},
                        {Marker(0, 0, Vector3d(1, 0, 0))});
}

}  // namespace

TEST_SUITE("kinmodel") {

TEST_CASE("validation accepts a chain and reports structural faults") {
  std::vector<BodyNode> chain = {
      Body(0, kNoParent, JointKind::kFree6, Vector3d::Zero(), 0),
      Body(1, 0, JointKind::kHinge1, Vector3d(1, 0, 0), 1),
      Body(2, 1, JointKind::kBall3, Vector3d(1, 0, 0))};
  std::vector<MarkerAttachment> markers = {Marker(0, 2, Vector3d(0.1, 0, 0))};
  CHECK(ValidateModel(chain, markers).ok());

  auto self_parent = chain;
  self_parent[1].parent = 1;
  CHECK(Mentions(ValidateModel(self_parent, markers), "cycle/order"));

  auto forward_parent = chain;
  forward_parent[1].parent = 2;
  CHECK(Mentions(ValidateModel(forward_parent, markers), "cycle/order"));

  auto shared_slot = chain;
  shared_slot[2].scale_slot = 0;
  CHECK(Mentions(ValidateModel(shared_slot, markers), "duplicate scale slot"));

  auto bad_axis = chain;
  bad_axis[1].joint.axis = Vector3d(1, 1, 0);
  CHECK(Mentions(ValidateModel(bad_axis, markers), "non-unit axis"));

  auto orphan = markers;
  orphan[0].body = 7;
  CHECK(Mentions(ValidateModel(chain, orphan), "orphan marker"));

  auto gap = chain;
  gap[1].scale_slot = 3;
  CHECK_FALSE(ValidateModel(gap, markers).ok());

  auto negative = markers;
  negative[0].weight = -1.0;
  CHECK_FALSE(ValidateModel(chain, negative).ok());

  CHECK_THROWS_AS(KinematicModel(self_parent, markers), ModelError);
}

TEST_CASE("dimensions follow joint kinds and slots") {
  std::vector<BodyNode> bodies = {
      Body(0, kNoParent, JointKind::kFree6, Vector3d::Zero(), 0),
      Body(1, 0, JointKind::kBall3, Vector3d(1, 0, 0), 1),
      Body(2, 1, JointKind::kHinge1, Vector3d(1, 0, 0)),
      Body(3, 2, JointKind::kSlide1, Vector3d(1, 0, 0), 2)};
  KinematicModel model(bodies, {Marker(0, 3, Vector3d(0, 0, 0)),
                                Marker(1, 0, Vector3d(0, 0, 1))});
  CHECK(model.nq() == 11);
  CHECK(model.ns() == 3);
  CHECK(model.ny() == 14);
  CHECK(model.nx() == 6);
  CHECK(model.q_offset(2) == 9);
  CHECK(model.scale_index(2) == -1);
  CHECK(model.scale_index(3) == 13);
  CHECK(model.coord_kind(0) == CoordKind::kTranslational);
  CHECK(model.coord_kind(3) == CoordKind::kAngular);
  CHECK(model.coord_kind(10) == CoordKind::kTranslational);
  CHECK(model.coord_kind(12) == CoordKind::kScale);
  CHECK(model.coord_body(12) == 1);
  CHECK(PredictMarkers(model, model.NeutralState()).size() == 6);
  CHECK_THROWS_AS(PredictMarkers(model, VectorXd::Zero(3)), std::invalid_argument);
}

TEST_CASE("hinge root examples") {
  const KinematicModel model = HingeRoot();
  VectorXd y(2);
  y << 0.0, 1.0;
  CHECK((PredictMarkers(model, y) - Vector3d(1, 0, 0)).norm() < 1e-15);

  y << std::numbers::pi / 2, 1.0;
  CHECK((PredictMarkers(model, y) - Vector3d(0, 1, 0)).norm() < 1e-12);

  y << 0.0, 2.0;
  CHECK((PredictMarkers(model, y) - Vector3d(2, 0, 0)).norm() < 1e-15);

  y << 0.0, 1.0;
  const Eigen::MatrixXd j = MarkerJacobian(model, y);
  CHECK((j.col(0) - Vector3d(0, 1, 0)).norm() < 1e-15);
  CHECK((j.col(1) - Vector3d(1, 0, 0)).norm() < 1e-15);
}

TEST_CASE("zero-offset root marker sits at the origin") {
  KinematicModel model({Body(0, kNoParent, JointKind::kFree6)},
                       {Marker(0, 0, Vector3d::Zero())});
  CHECK(PredictMarkers(model, model.NeutralState()).norm() == 0.0);
}

TEST_CASE("markers agree with a naive transform chain") {
  std::mt19937_64 rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const KinematicModel model = oracle::RandomModel(rng, 2 + trial % 7);
    const VectorXd y = oracle::RandomState(rng, model);
    const VectorXd a = PredictMarkers(model, y);
    const VectorXd b = oracle::NaiveMarkers(model, y);
    worst = std::max(worst, (a - b).cwiseAbs().maxCoeff());
    CHECK(PredictMarkers(model, y) == a);  // bit-identical repeat
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("body orientations stay unit") {
  std::mt19937_64 rng(5);
  const KinematicModel model = oracle::RandomModel(rng, 8);
  const BodyFrames frames = ForwardKinematics(model, oracle::RandomState(rng, model));
  for (int b = 0; b < model.body_count(); ++b) {
    CHECK(std::abs(frames.orientation(b).norm() - 1.0) < 1e-10);
    const Eigen::Matrix3d r = frames.rotation[b];
    CHECK((r.transpose() * r - Eigen::Matrix3d::Identity()).norm() < 1e-10);
  }
}

TEST_CASE("analytic Jacobian matches central differences") {
  std::mt19937_64 rng(21);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const KinematicModel model = oracle::RandomModel(rng, 2 + trial % 6);
    const VectorXd y = oracle::RandomState(rng, model);
    const Eigen::MatrixXd j = MarkerJacobian(model, y);
    const Eigen::MatrixXd fd = oracle::CentralDifference(
        [&](const VectorXd& v) { return PredictMarkers(model, v); }, y, 1e-6);
    const double rel = (j - fd).cwiseAbs().maxCoeff() /
                       std::max(1.0, fd.cwiseAbs().maxCoeff());
    worst = std::max(worst, rel);
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("Jacobian linearization error is second order") {
  std::mt19937_64 rng(3);
  const KinematicModel model = oracle::RandomModel(rng, 6);
  const VectorXd y = oracle::RandomState(rng, model);
  VectorXd v = VectorXd::NullaryExpr(model.ny(), [&]() {
    return std::normal_distribution<double>()(rng);
  });
  v.normalize();
  const VectorXd x0 = PredictMarkers(model, y);
  const Eigen::MatrixXd j = MarkerJacobian(model, y);
  std::vector<double> logs_eps, logs_err;
  for (double eps : {1e-2, 1e-3, 1e-4, 1e-5}) {
    const double err = (PredictMarkers(model, y + eps * v) - x0 - eps * j * v).norm();
    logs_eps.push_back(std::log10(eps));
    logs_err.push_back(std::log10(err));
  }
  const double slope = (logs_err.front() - logs_err.back()) /
                       (logs_eps.front() - logs_eps.back());
  CHECK(slope == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("scale perturbation is local to the body subtree") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const KinematicModel model = oracle::RandomModel(rng, 7);
    const VectorXd y = oracle::RandomState(rng, model);
    const VectorXd x0 = PredictMarkers(model, y);
    for (int b = 0; b < model.body_count(); ++b) {
      const int s = model.scale_index(b);
      if (s < 0) continue;
      VectorXd y1 = y;
      y1[s] *= 1.1;
      const VectorXd x1 = PredictMarkers(model, y1);
      for (int k = 0; k < model.marker_count(); ++k) {
        if (!model.IsAncestorOrSelf(b, model.markers()[k].body)) {
          CHECK(x1.segment<3>(3 * k) == x0.segment<3>(3 * k));
        }
      }
    }
  }
}

TEST_CASE("global rigid motion of a free root moves every marker rigidly") {
  std::mt19937_64 rng(13);
  const KinematicModel model = oracle::RandomModel(rng, 6);
  VectorXd y = oracle::RandomState(rng, model);
  y.segment<6>(0).setZero();
  const VectorXd x0 = PredictMarkers(model, y);

  // root frame offset is part of the model, so compose the motion inside it
  const BodyNode& root = model.bodies()[0];
  const Eigen::Matrix3d r_off = root.joint.frame_offset.rotation.toRotationMatrix();
  const Vector3d p_off = root.anchor + root.joint.frame_offset.translation;
  const Vector3d t(0.3, -0.2, 0.5);
  const Vector3d w(0.4, 0.1, -0.7);
  y.segment<3>(0) = t;
  y.segment<3>(3) = w;
  const VectorXd x1 = PredictMarkers(model, y);
  const Eigen::Matrix3d rot = r_off * oracle::Rodrigues(w) * r_off.transpose();
  const Vector3d shift = p_off + r_off * t - rot * p_off;
  for (int k = 0; k < model.marker_count(); ++k) {
    const Vector3d expect = rot * x0.segment<3>(3 * k) + shift;
    CHECK((x1.segment<3>(3 * k) - expect).norm() < 1e-10);
  }
}

TEST_CASE("exponential map helpers") {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    const Vector3d v = oracle::RandomUnit(rng) * (0.1 + 2.5 * i / 50.0);
    CHECK((ExpMap(v) - oracle::Rodrigues(v)).norm() < 1e-12);
    CHECK((LogMap(ExpMap(v)) - v).norm() < 1e-9);
    // d/dv exp(v) = [Jl dv]^ exp(v)
    const Eigen::Matrix3d jl = LeftJacobian(v);
    for (int c = 0; c < 3; ++c) {
      const double h = 1e-6;
      Vector3d e = Vector3d::Zero();
      e[c] = h;
      const Eigen::Matrix3d d = (ExpMap(v + e) - ExpMap(v - e)) / (2 * h);
      const Eigen::Matrix3d omega_hat = d * ExpMap(v).transpose();
      const Vector3d omega(omega_hat(2, 1), omega_hat(0, 2), omega_hat(1, 0));
      CHECK((omega - jl.col(c)).norm() < 1e-7);
    }
  }
  CHECK(LeftJacobian(Vector3d::Zero()).isIdentity(1e-15));
}

}  // TEST_SUITE
