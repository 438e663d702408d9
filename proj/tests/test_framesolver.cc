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
#include "scalepose/audit.h"
#include "scalepose/framesolver.h"
#include "scalepose/synthgen.h"

using namespace scalepose;
using Eigen::Vector3d;
using Eigen::VectorXd;

namespace {

// Chain of slide joints without scale slots: markers are affine in q.
KinematicModel SlideChain(int n) {
  std::vector<BodyNode> bodies;
  std::vector<MarkerAttachment> markers;
  const Vector3d axes[3] = {Vector3d::UnitX(), Vector3d::UnitY(),
                            Vector3d(0, 0.6, 0.8)};
  for (int b = 0; b < n; ++b) {
    BodyNode node;
    node.id = b;
    node.parent = b == 0 ? kNoParent : b - 1;
    node.name = "slide" + std::to_string(b);
    node.joint.kind = JointKind::kSlide1;
    node.joint.axis = axes[b % 3];
    node.anchor = Vector3d(0.1 * b, 0.0, 0.05);
    bodies.push_back(node);
    MarkerAttachment m;
    m.marker_id = b;
    m.name = "m" + std::to_string(b);
    m.body = b;
    m.local_offset = Vector3d(0.0, 0.02 * b, 0.0);
    markers.push_back(m);
  }
  return KinematicModel(bodies, markers);
}

SynthData SmallChain(std::uint64_t seed, double noise_mm, int frames) {
  SynthSpec spec;
  spec.body_count = 4;
  spec.noise_sigma_mm = noise_mm;
  spec.frame_count = frames;
  spec.seed = seed;
  return Generate(spec);
}

}  // namespace

TEST_SUITE("framesolver") {

TEST_CASE("energy examples") {
  const KinematicModel model = SlideChain(1);
  SolverConfig config;
  const VectorXd y = VectorXd::Constant(1, 0.3);
  const VectorXd x = PredictMarkers(model, y);
  CHECK(Energy(model, y, Observation::AllVisible(x), config) == 0.0);
  CHECK(Energy(model, y, Observation::AllVisible(x + Vector3d(1, 0, 0)), config) ==
        doctest::Approx(0.5));

  // masked markers contribute nothing
  Observation hidden = Observation::AllVisible(x + Vector3d(1, 0, 0));
  hidden.visible[0] = false;
  CHECK(Energy(model, y, hidden, config) == 0.0);

  std::mt19937_64 rng(3);
  const KinematicModel random = oracle::RandomModel(rng, 5);
  const VectorXd yr = oracle::RandomState(rng, random);
  const VectorXd obs = oracle::NaiveMarkers(random, oracle::RandomState(rng, random));
  SolverConfig tracked;
  tracked.tracking_weights = VectorXd::Constant(random.ny(), 0.5);
  tracked.y_ref = VectorXd::Zero(random.ny());
  double expect = 0.0;
  const VectorXd xr = oracle::NaiveMarkers(random, yr);
  for (int k = 0; k < random.marker_count(); ++k) {
    const double w = random.markers()[k].weight;
    expect += 0.5 * w * w * (xr - obs).segment<3>(3 * k).squaredNorm();
  }
  expect += 0.5 * 0.25 * yr.squaredNorm();
  CHECK(Energy(random, yr, Observation::AllVisible(obs), tracked) ==
        doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("acceptance quantities") {
  const AcceptanceQuantities zero =
      ComputeAcceptance(1.0, 1.0, VectorXd::Zero(2), VectorXd::Ones(2), 0.0, 1e-12);
  CHECK(zero.actual == 0.0);
  CHECK(zero.rho == 0.0);

  // penalty 0.5 * 0.2 * 1^2 = 0.1
  const AcceptanceQuantities q = ComputeAcceptance(
      1.0, 0.4, VectorXd::Ones(1), VectorXd::Constant(1, 0.2), 0.5, 1e-12);
  CHECK(q.actual == doctest::Approx(0.5));
  CHECK(q.rho == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("damping update rule") {
  SolverConfig c;
  CHECK(UpdateDamping(1e-2, 0.9, true, c) == doctest::Approx(5e-3));
  CHECK(UpdateDamping(1e-2, 0.9, false, c) == doctest::Approx(4e-2));
  CHECK(UpdateDamping(1e-2, 0.5, true, c) == 1e-2);
  CHECK(UpdateDamping(1e-2, 0.1, true, c) == doctest::Approx(4e-2));
  CHECK(UpdateDamping(c.lambda_max, 0.0, false, c) == c.lambda_max);
  CHECK(UpdateDamping(c.lambda_min, 1.0, true, c) == c.lambda_min);
}

TEST_CASE("config validation") {
  SolverConfig c;
  CHECK_NOTHROW(c.Validate());
  c.nu_down = 1.5;
  CHECK_THROWS_AS(c.Validate(), std::invalid_argument);
  c = SolverConfig();
  c.lower = VectorXd::Constant(2, 0.1);
  c.upper = VectorXd::Constant(2, 0.2);
  CHECK_THROWS_AS(c.Validate(), std::invalid_argument);
  c = SolverConfig();
  c.max_iters = 0;
  CHECK_THROWS_AS(c.Validate(), std::invalid_argument);
}

TEST_CASE("optimal init converges immediately") {
  const SynthData data = SmallChain(4, 0.0, 1);
  const ProxyMap id = ProxyMap::Identity(data.model.ny());
  const FrameResult r = SolveFrame(data.model, id, data.observations[0],
                                   data.truth[0], SolverConfig());
  CHECK(r.status == FrameStatus::kConvergedResidual);
  CHECK(r.accepted_steps <= 1);
  CHECK((r.p_est - data.truth[0]).norm() <= 1e-10);
}

TEST_CASE("linear problem is solved by one accepted step") {
  const KinematicModel model = SlideChain(1);
  const VectorXd target = VectorXd::Constant(1, 0.037);
  const Observation obs = Observation::AllVisible(PredictMarkers(model, target));
  SolverConfig c;
  c.lambda_min = c.lambda_init = 1e-14;
  const FrameResult r =
      SolveFrame(model, ProxyMap::Identity(1), obs, VectorXd::Zero(1), c);
  CHECK(r.accepted_steps == 1);
  CHECK(std::abs(r.y_est[0] - target[0]) < 1e-10);
}

TEST_CASE("rho is one on linear residuals") {
  const KinematicModel model = SlideChain(5);
  std::mt19937_64 rng(2);
  const VectorXd target = VectorXd::Random(5) * 0.03;
  const Observation obs = Observation::AllVisible(PredictMarkers(model, target));
  SolverConfig c;
  c.lambda_init = 0.3;
  std::vector<double> rhos;
  SolveFrame(model, ProxyMap::Identity(5), obs, VectorXd::Zero(5), c,
             [&](const IterationRecord& rec) { rhos.push_back(rec.rho); });
  REQUIRE(!rhos.empty());
  CHECK(std::abs(rhos.front() - 1.0) <= 1e-6);
}

TEST_CASE("accepted energies decrease, bounds hold, rejections change nothing") {
  int rejected = 0, accepted = 0;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    SynthSpec spec;
    spec.topology = seed % 2 ? Topology::kBipedLike : Topology::kChain;
    spec.body_count = 6;
    spec.noise_sigma_mm = 2.0;
    spec.frame_count = 1;
    spec.seed = seed;
    const SynthData data = Generate(spec);
    VectorXd init = data.truth[0];
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int i = 0; i < data.model.nq(); ++i) init[i] += u(rng);
    for (int i = data.model.nq(); i < data.model.ny(); ++i) init[i] *= 1.0 + 0.2 * u(rng);
    const ProxyMap id = ProxyMap::Identity(data.model.ny());
    double last = std::numeric_limits<double>::infinity();
    SolverConfig config;
    config.max_iters = 60;
    SolveFrame(data.model, id, data.observations[0], init, config,
               [&](const IterationRecord& rec) {
                 CHECK(rec.energy_before <= last);
                 if (rec.accepted) {
                   ++accepted;
                   CHECK(rec.energy_after < rec.energy_before);
                   CHECK((rec.step.array() >= rec.lower.array()).all());
                   CHECK((rec.step.array() <= rec.upper.array()).all());
                   CHECK(rec.p_after == rec.p_before + rec.step);
                 } else {
                   ++rejected;
                   CHECK(rec.p_after == rec.p_before);
                   CHECK(rec.y_after == rec.y_before);
                   CHECK(rec.lambda_after == doctest::Approx(
                                                 std::min(4.0 * rec.lambda_before,
                                                          1e6)));
                 }
                 last = rec.energy_after;
               });
  }
  CHECK(accepted > 0);
  CHECK(rejected > 0);
}

TEST_CASE("step bounds by coordinate kind and scale limits") {
  std::mt19937_64 rng(1);
  const KinematicModel model = oracle::RandomModel(rng, 3);
  VectorXd y = model.NeutralState();
  SolverConfig c;
  c.scale_max = 1.02;
  VectorXd lo, hi;
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(model.ny(), model.ny());
  StepBounds(model, id, y, c, lo, hi);
  for (int i = 0; i < model.ny(); ++i) {
    switch (model.coord_kind(i)) {
      case CoordKind::kAngular:
        CHECK(hi[i] == 0.2);
        break;
      case CoordKind::kTranslational:
        CHECK(hi[i] == 0.05);
        break;
      case CoordKind::kScale:
        CHECK(hi[i] == doctest::Approx(0.02));
        CHECK(lo[i] == -0.05);
        break;
    }
  }
  c.freeze_scale = true;
  StepBounds(model, id, y, c, lo, hi);
  for (int i = model.nq(); i < model.ny(); ++i) {
    CHECK(lo[i] == 0.0);
    CHECK(hi[i] == 0.0);
  }
}

TEST_CASE("single-frame trial equals a frame solve") {
  const SynthData data = SmallChain(6, 1.0, 1);
  const ProxyMap id = ProxyMap::Identity(data.model.ny());
  SolverConfig c;
  TrialOptions opts;
  opts.first_frame_max_iters = c.max_iters;
  const VectorXd init = data.model.NeutralState();
  const TrialResult t = SolveTrial(data.model, id, data.observations, init, c, opts);
  const FrameResult f = SolveFrame(data.model, id, data.observations[0], init, c);
  CHECK(t.frames.size() == 1);
  CHECK(t.frames[0].y_est == f.y_est);
  CHECK(t.frames[0].iterations == f.iterations);
}

TEST_CASE("constant observations reach a fixed point") {
  const SynthData data = SmallChain(7, 0.0, 1);
  std::vector<Observation> frames(10, data.observations[0]);
  const ProxyMap id = ProxyMap::Identity(data.model.ny());
  VectorXd init = data.truth[0];
  init.head(data.model.nq()).array() += 0.05;
  const TrialResult t = SolveTrial(data.model, id, frames, init, SolverConfig());
  for (std::size_t i = 1; i < t.frames.size(); ++i) {
    CHECK(t.frames[i].accepted_steps <= 1);
  }
}

TEST_CASE("noise-free sinusoid trial tracks ground truth") {
  const SynthData data = SmallChain(8, 0.0, 100);
  const ProxyMap id = ProxyMap::Identity(data.model.ny());
  const TrialResult t = SolveTrial(data.model, id, data.observations,
                                   data.truth[0], SolverConfig());
  double worst = 0.0;
  for (std::size_t i = 0; i < t.frames.size(); ++i) {
    worst = std::max(worst, PoseErrorRad(data.model, t.frames[i].y_est, data.truth[i]));
  }
  CHECK(worst * 180.0 / std::numbers::pi < 0.5);
  CHECK(t.summary.failed == 0);
}

TEST_CASE("scale freezing holds scales after the chosen frame") {
  const SynthData data = SmallChain(9, 0.5, 6);
  const ProxyMap id = ProxyMap::Identity(data.model.ny());
  TrialOptions opts;
  opts.freeze_scale_after = 2;
  const TrialResult t = SolveTrial(data.model, id, data.observations,
                                   data.model.NeutralState(), SolverConfig(), opts);
  const int nq = data.model.nq();
  const int ns = data.model.ns();
  for (std::size_t i = 2; i < t.frames.size(); ++i) {
    CHECK(t.frames[i].y_est.tail(ns) == t.frames[1].y_est.tail(ns));
  }
  CHECK(t.frames[1].y_est.head(nq) != t.frames[5].y_est.head(nq));
}

TEST_CASE("non-finite initial energy is reported") {
  const SynthData data = SmallChain(1, 0.0, 1);
  VectorXd init = data.truth[0];
  init[0] = std::nan("");
  const FrameResult r = SolveFrame(data.model, ProxyMap::Identity(data.model.ny()),
                                   data.observations[0], init, SolverConfig());
  CHECK(r.status == FrameStatus::kFailedNonfinite);
}

TEST_CASE("trial summary uses nearest-rank percentiles") {
  std::vector<FrameResult> frames(10);
  for (int i = 0; i < 10; ++i) {
    frames[i].wall_time_us = 1000.0 * (i + 1);
    frames[i].iterations = i + 1;
    frames[i].marker_rmse_mm = 1.0;
    frames[i].status = FrameStatus::kConvergedDecrease;
  }
  const TrialSummary s = SummarizeFrames(frames);
  CHECK(s.time_p50_ms == 5.0);
  CHECK(s.time_p90_ms == 9.0);
  CHECK(s.iters_p50 == 5.0);
  CHECK(s.converged == 10);
}

}  // TEST_SUITE
