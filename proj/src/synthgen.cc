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

#include "scalepose/synthgen.h"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include <Eigen/SVD>

namespace scalepose {
namespace {

constexpr double kPi = std::numbers::pi;

enum Stream : std::uint64_t {
  kGeometry = 1,
  kMarkers = 2,
  kTrajectory = 3,
  kScale = 4,
  kNoise = 5,
  kDropout = 6,
};

std::uint64_t SplitMix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Eigen::Vector3d AnyPerpendicular(const Eigen::Vector3d& v) {
  const Eigen::Vector3d n = v.normalized();
  Eigen::Vector3d e = std::abs(n.x()) < 0.9 ? Eigen::Vector3d::UnitX()
                                            : Eigen::Vector3d::UnitY();
  return (e - e.dot(n) * n).normalized();
}

// Builder that keeps body/marker bookkeeping in one place.
class ModelBuilder {
 public:
  explicit ModelBuilder(const CounterRng& rng) : rng_(rng) {}

  int AddBody(const std::string& name, int parent, JointKind kind,
              const Eigen::Vector3d& axis, const Eigen::Vector3d& anchor,
              bool scaled) {
    BodyNode b;
    b.id = static_cast<int>(bodies_.size());
    b.parent = parent;
    b.name = name;
    b.joint.kind = kind;
    b.joint.axis = axis;
    b.anchor = anchor;
    if (scaled) b.scale_slot = slots_++;
    bodies_.push_back(b);
    per_body_.push_back(0);
    return b.id;
  }

  void SetFrameRotation(int body, const Eigen::Quaterniond& q) {
    bodies_[body].joint.frame_offset.rotation = q;
  }

  void AddMarker(int body, const Eigen::Vector3d& offset) {
    MarkerAttachment m;
    m.marker_id = static_cast<int>(markers_.size());
    m.body = body;
    m.name = bodies_[body].name + "_m" + std::to_string(per_body_[body]++);
    m.local_offset = offset;
    markers_.push_back(m);
  }

  // count markers distributed around segment vector `seg` of body. Clustered
  // markers sit close to the long axis at fraction `cluster_at` of the
  // segment.
  void PlaceMarkers(int body, const Eigen::Vector3d& seg, int count,
                    MarkerLayout layout, double cluster_at = 0.85) {
    const Eigen::Vector3d e1 = AnyPerpendicular(seg);
    const Eigen::Vector3d e2 = seg.normalized().cross(e1);
    for (int j = 0; j < count; ++j) {
      const std::uint64_t key = static_cast<std::uint64_t>(body) * 64 + j;
      double u, r;
      if (layout == MarkerLayout::kSpread) {
        const double spread = count > 1 ? static_cast<double>(j) / (count - 1) : 0.5;
        u = 0.3 + 0.5 * spread + rng_.Uniform(-0.05, 0.05, kMarkers, key, 0);
        r = rng_.Uniform(0.07, 0.11, kMarkers, key, 1);
      } else {
        u = cluster_at + rng_.Uniform(-0.04, 0.04, kMarkers, key, 0);
        r = rng_.Uniform(0.003, 0.007, kMarkers, key, 1);
      }
      const double phi =
          2.0 * kPi * j / count + rng_.Uniform(-0.3, 0.3, kMarkers, key, 2);
      AddMarker(body, u * seg + r * (std::cos(phi) * e1 + std::sin(phi) * e2));
    }
  }

  KinematicModel Build() {
    return KinematicModel(bodies_, markers_);
  }

  const std::vector<BodyNode>& bodies() const { return bodies_; }

 private:
  const CounterRng& rng_;
  std::vector<BodyNode> bodies_;
  std::vector<MarkerAttachment> markers_;
  std::vector<int> per_body_;
  int slots_ = 0;
};

KinematicModel ChainModel(const SynthSpec& spec, const CounterRng& rng) {
  ModelBuilder builder(rng);
  std::vector<double> length(spec.body_count);
  for (int i = 0; i < spec.body_count; ++i) {
    length[i] = rng.Uniform(0.25, 0.40, kGeometry, i, 0);
  }
  // clustered layouts keep the joint centres on the long axis as well, so the
  // whole limb is close to a line
  const double lateral = spec.layout == MarkerLayout::kClustered ? 0.002 : 0.02;
  for (int i = 0; i < spec.body_count; ++i) {
    JointKind kind = JointKind::kFree6;
    Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
    Eigen::Vector3d anchor = Eigen::Vector3d::Zero();
    if (i > 0) {
      switch (i % 3) {
        case 1:
          kind = JointKind::kHinge1;
          axis = Eigen::Vector3d::UnitZ();
          break;
        case 2:
          kind = JointKind::kBall3;
          break;
        default:
          kind = JointKind::kHinge1;
          axis = Eigen::Vector3d::UnitY();
          break;
      }
      anchor = Eigen::Vector3d(length[i - 1],
                               lateral * rng.Uniform(-1.0, 1.0, kGeometry, i, 1),
                               lateral * rng.Uniform(-1.0, 1.0, kGeometry, i, 2));
    }
    const int id = builder.AddBody("seg" + std::to_string(i),
                                   i == 0 ? kNoParent : i - 1, kind, axis,
                                   anchor, true);
    if (i > 0) {
      builder.SetFrameRotation(
          id, Eigen::Quaterniond(Eigen::AngleAxisd(
                  rng.Uniform(-0.4, 0.4, kGeometry, i, 3),
                  Eigen::Vector3d::UnitX())));
    }
  }
  // Clustered chains keep a spread root. Inner segments carry their cluster
  // next to the proximal joint, where it says little about the segment's
  // length; that length is then seen mostly through the child's markers,
  // together with the child's joint angle. The leaf cluster sits distally.
  for (int i = 0; i < spec.body_count; ++i) {
    const bool leaf = i == spec.body_count - 1;
    builder.PlaceMarkers(i, Eigen::Vector3d(length[i], 0.0, 0.0),
                         spec.markers_per_body,
                         i == 0 ? MarkerLayout::kSpread : spec.layout,
                         leaf ? 0.85 : 0.12);
  }
  return builder.Build();
}

KinematicModel BipedModel(const SynthSpec& spec, const CounterRng& rng) {
  ModelBuilder b(rng);
  const Eigen::Vector3d z = Eigen::Vector3d::UnitZ();
  const Eigen::Vector3d y = Eigen::Vector3d::UnitY();
  struct Segment {
    int body;
    Eigen::Vector3d seg;
  };
  std::vector<Segment> segments;

  const int pelvis = b.AddBody("pelvis", kNoParent, JointKind::kFree6, z,
                               Eigen::Vector3d::Zero(), true);
  segments.push_back({pelvis, Eigen::Vector3d(0.0, 0.0, 0.12)});
  const int torso = b.AddBody("torso", pelvis, JointKind::kBall3, z,
                              Eigen::Vector3d(0.0, 0.0, 0.1), true);
  segments.push_back({torso, Eigen::Vector3d(0.0, 0.0, 0.45)});
  const int head = b.AddBody("head", torso, JointKind::kBall3, z,
                             Eigen::Vector3d(0.0, 0.0, 0.5), true);
  segments.push_back({head, Eigen::Vector3d(0.0, 0.0, 0.22)});

  for (int side = 0; side < 2; ++side) {
    const double sign = side == 0 ? 1.0 : -1.0;
    const std::string tag = side == 0 ? "l_" : "r_";
    const int thigh = b.AddBody(tag + "thigh", pelvis, JointKind::kBall3, z,
                                Eigen::Vector3d(0.0, sign * 0.1, -0.05), true);
    const int shank = b.AddBody(tag + "shank", thigh, JointKind::kHinge1, y,
                                Eigen::Vector3d(0.0, 0.0, -0.42), true);
    const int foot = b.AddBody(tag + "foot", shank, JointKind::kBall3, z,
                               Eigen::Vector3d(0.0, 0.0, -0.40), true);
    segments.push_back({thigh, Eigen::Vector3d(0.0, 0.0, -0.42)});
    segments.push_back({shank, Eigen::Vector3d(0.0, 0.0, -0.40)});
    segments.push_back({foot, Eigen::Vector3d(0.16, 0.0, -0.05)});
  }
  for (int side = 0; side < 2; ++side) {
    const double sign = side == 0 ? 1.0 : -1.0;
    const std::string tag = side == 0 ? "l_" : "r_";
    const int upper = b.AddBody(tag + "upperarm", torso, JointKind::kBall3, z,
                                Eigen::Vector3d(0.0, sign * 0.19, 0.42), true);
    const int fore = b.AddBody(tag + "forearm", upper, JointKind::kHinge1, y,
                               Eigen::Vector3d(0.0, 0.0, -0.30), true);
    const int hand = b.AddBody(tag + "hand", fore, JointKind::kBall3, z,
                               Eigen::Vector3d(0.0, 0.0, -0.26), true);
    segments.push_back({upper, Eigen::Vector3d(0.0, 0.0, -0.30)});
    segments.push_back({fore, Eigen::Vector3d(0.0, 0.0, -0.26)});
    segments.push_back({hand, Eigen::Vector3d(0.0, 0.0, -0.12)});
  }
  for (const Segment& s : segments) {
    b.PlaceMarkers(s.body, s.seg, spec.markers_per_body, spec.layout);
  }
  return b.Build();
}

KinematicModel SpineModel(const SynthSpec& spec, const CounterRng& rng,
                          std::vector<std::vector<int>>* chains) {
  ModelBuilder b(rng);
  const int levels = spec.body_count;
  const double height = 0.45 / levels;
  const int pelvis = b.AddBody("pelvis", kNoParent, JointKind::kFree6,
                               Eigen::Vector3d::UnitZ(),
                               Eigen::Vector3d::Zero(), true);
  std::vector<int> flex, lateral;
  int parent = pelvis;
  int mid = -1, top = -1;
  for (int k = 0; k < levels; ++k) {
    const Eigen::Vector3d anchor =
        k == 0 ? Eigen::Vector3d(0.0, 0.0, 0.1) : Eigen::Vector3d(0.0, 0.0, height);
    const int a = b.AddBody("L" + std::to_string(k) + "_flex", parent,
                            JointKind::kHinge1, Eigen::Vector3d::UnitY(),
                            anchor, false);
    const int c = b.AddBody("L" + std::to_string(k) + "_lat", a,
                            JointKind::kHinge1, Eigen::Vector3d::UnitX(),
                            Eigen::Vector3d::Zero(), k == levels - 1);
    flex.push_back(a);
    lateral.push_back(c);
    if (k == levels / 2) mid = c;
    top = c;
    parent = c;
  }

  auto jitter = [&](int body, int j) {
    const std::uint64_t key = static_cast<std::uint64_t>(body) * 64 + j;
    return Eigen::Vector3d(rng.Uniform(-0.01, 0.01, kMarkers, key, 0),
                           rng.Uniform(-0.01, 0.01, kMarkers, key, 1),
                           rng.Uniform(-0.01, 0.01, kMarkers, key, 2));
  };
  const std::vector<Eigen::Vector3d> pelvis_markers = {
      {0.10, 0.12, 0.0}, {0.10, -0.12, 0.0}, {-0.10, 0.06, 0.05},
      {-0.10, -0.06, 0.05}};
  for (int j = 0; j < static_cast<int>(pelvis_markers.size()); ++j) {
    b.AddMarker(pelvis, pelvis_markers[j] + jitter(pelvis, j));
  }
  const std::vector<Eigen::Vector3d> mid_markers = {{-0.08, 0.03, 0.0},
                                                    {-0.08, -0.03, 0.02}};
  for (int j = 0; j < static_cast<int>(mid_markers.size()); ++j) {
    b.AddMarker(mid, mid_markers[j] + jitter(mid, j));
  }
  const std::vector<Eigen::Vector3d> top_markers = {
      {-0.08, 0.0, 0.12}, {0.10, 0.0, 0.05}, {0.0, 0.15, 0.15},
      {0.0, -0.15, 0.15}};
  for (int j = 0; j < static_cast<int>(top_markers.size()); ++j) {
    b.AddMarker(top, top_markers[j] + jitter(top, j));
  }

  KinematicModel model = b.Build();
  if (chains) {
    chains->clear();
    std::vector<int> f, l;
    for (int body : flex) f.push_back(model.q_offset(body));
    for (int body : lateral) l.push_back(model.q_offset(body));
    chains->push_back(f);
    chains->push_back(l);
  }
  return model;
}

std::vector<Sinusoid> GenerateTrajectory(const KinematicModel& model,
                                         const SynthSpec& spec,
                                         const CounterRng& rng) {
  std::vector<Sinusoid> traj(model.nq());
  auto draw = [&](int i, double offset_range, double amp_lo, double amp_hi) {
    Sinusoid s;
    s.offset = rng.Uniform(-offset_range, offset_range, kTrajectory, i, 0);
    s.amplitude = rng.Uniform(amp_lo, amp_hi, kTrajectory, i, 1);
    s.frequency_hz = rng.Uniform(0.3, 1.0, kTrajectory, i, 2);
    s.phase = rng.Uniform(0.0, 2.0 * kPi, kTrajectory, i, 3);
    return s;
  };

  for (int b = 0; b < model.body_count(); ++b) {
    const int q0 = model.q_offset(b);
    switch (model.bodies()[b].joint.kind) {
      case JointKind::kFree6:
        for (int d = 0; d < 3; ++d) {
          traj[q0 + d] = draw(q0 + d, 0.05, 0.01, 0.05);
          traj[q0 + 3 + d] = draw(q0 + 3 + d, 0.2, 0.05, 0.15);
        }
        traj[q0 + 2].offset += 1.0;
        break;
      case JointKind::kBall3:
        for (int d = 0; d < 3; ++d) {
          traj[q0 + d] = draw(q0 + d, 0.2, 0.5 * spec.amplitude, spec.amplitude);
        }
        break;
      case JointKind::kHinge1:
        traj[q0] = draw(q0, 0.3, 0.5 * spec.amplitude, spec.amplitude);
        break;
      case JointKind::kSlide1:
        traj[q0] = draw(q0, 0.02, 0.005, 0.02);
        break;
    }
  }
  return traj;
}

// Smooth distributed bending: every level shares one time profile per axis,
// weighted by a smooth (non-polynomial) profile along the chain.
void SpineTrajectory(const SynthSpec& spec, const CounterRng& rng,
                     const std::vector<std::vector<int>>& chains,
                     std::vector<Sinusoid>& traj) {
  for (std::size_t axis = 0; axis < chains.size(); ++axis) {
    const std::vector<int>& chain = chains[axis];
    const int n = static_cast<int>(chain.size());
    const double total = (axis == 0 ? 2.0 : 1.0) * spec.amplitude;
    const double offset = rng.Uniform(-0.3, 0.3, kTrajectory, 1000 + axis, 0);
    const double freq = rng.Uniform(0.2, 0.6, kTrajectory, 1000 + axis, 1);
    const double phase = rng.Uniform(0.0, 2.0 * kPi, kTrajectory, 1000 + axis, 2);
    double norm = 0.0;
    std::vector<double> w(n);
    for (int j = 0; j < n; ++j) {
      const double xi = n > 1 ? static_cast<double>(j) / (n - 1) : 0.0;
      w[j] = 0.4 + std::sin(0.5 * kPi * xi + 0.3);
      norm += w[j];
    }
    for (int j = 0; j < n; ++j) {
      Sinusoid s;
      s.offset = total * offset * w[j] / norm;
      s.amplitude = total * w[j] / norm;
      s.frequency_hz = freq;
      s.phase = phase;
      traj[chain[j]] = s;
    }
  }
}

}  // namespace

std::uint64_t CounterRng::Bits(std::uint64_t stream, std::uint64_t a,
                               std::uint64_t b, std::uint64_t c) const {
  std::uint64_t h = SplitMix64(seed_);
  h = SplitMix64(h ^ stream);
  h = SplitMix64(h ^ a);
  h = SplitMix64(h ^ b);
  return SplitMix64(h ^ c);
}

double CounterRng::Uniform(std::uint64_t stream, std::uint64_t a,
                           std::uint64_t b, std::uint64_t c) const {
  return static_cast<double>(Bits(stream, a, b, c) >> 11) * 0x1.0p-53;
}

double CounterRng::Uniform(double lo, double hi, std::uint64_t stream,
                           std::uint64_t a, std::uint64_t b,
                           std::uint64_t c) const {
  return lo + (hi - lo) * Uniform(stream, a, b, c);
}

double CounterRng::Normal(std::uint64_t stream, std::uint64_t a,
                          std::uint64_t b, std::uint64_t c) const {
  const double u1 = 1.0 - Uniform(stream, a, b, 2 * c);  // (0, 1]
  const double u2 = Uniform(stream, a, b, 2 * c + 1);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
}

const char* TopologyName(Topology topology) {
  switch (topology) {
    case Topology::kChain:
      return "chain";
    case Topology::kBipedLike:
      return "biped-like";
    case Topology::kSpineChain:
      return "spine-chain";
  }
  return "unknown";
}

Topology ParseTopology(const std::string& name) {
  if (name == "chain") return Topology::kChain;
  if (name == "biped-like" || name == "biped") return Topology::kBipedLike;
  if (name == "spine-chain" || name == "spine") return Topology::kSpineChain;
  throw std::invalid_argument("unknown topology: " + name);
}

double Sinusoid::operator()(double t) const {
  return offset + amplitude * std::sin(2.0 * kPi * frequency_hz * t + phase);
}

void SynthSpec::Validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("synth spec: ") + what);
  };
  require(body_count >= 1 && body_count <= 60, "body_count must be in [1, 60]");
  require(topology != Topology::kSpineChain || body_count >= 3,
          "spine-chain needs at least 3 levels");
  require(markers_per_body >= 3 && markers_per_body <= 32,
          "markers_per_body must be in [3, 32]");
  require(noise_sigma_mm >= 0.0 && std::isfinite(noise_sigma_mm),
          "noise_sigma_mm must be finite and >= 0");
  require(dropout_rate >= 0.0 && dropout_rate < 1.0,
          "dropout_rate must be in [0, 1)");
  require(frame_count >= 1, "frame_count must be >= 1");
  require(frame_rate_hz > 0.0, "frame_rate_hz must be positive");
  require(0.0 < scale_lo && scale_lo <= scale_hi, "need 0 < scale_lo <= scale_hi");
  require(amplitude >= 0.0 && amplitude <= 1.5,
          "amplitude must be in [0, 1.5] rad");
}

KinematicModel GenerateModel(const SynthSpec& spec,
                             std::vector<std::vector<int>>* spine_chains) {
  spec.Validate();
  const CounterRng rng(spec.seed);
  switch (spec.topology) {
    case Topology::kChain:
      return ChainModel(spec, rng);
    case Topology::kBipedLike:
      return BipedModel(spec, rng);
    case Topology::kSpineChain:
      return SpineModel(spec, rng, spine_chains);
  }
  throw std::invalid_argument("unknown topology");
}

Observation Observe(const KinematicModel& model, const Eigen::VectorXd& y,
                    const SynthSpec& spec, int frame) {
  const CounterRng rng(spec.seed);
  Observation obs = Observation::AllVisible(PredictMarkers(model, y));
  const double sigma = spec.noise_sigma_mm / 1000.0;
  for (int k = 0; k < model.marker_count(); ++k) {
    if (spec.dropout_rate > 0.0 &&
        rng.Uniform(kDropout, frame, k) < spec.dropout_rate) {
      obs.visible[k] = false;
      obs.x_obs.segment<3>(3 * k).setConstant(
          std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    if (sigma > 0.0) {
      for (int a = 0; a < 3; ++a) {
        obs.x_obs[3 * k + a] += sigma * rng.Normal(kNoise, frame, k, a);
      }
    }
  }
  return obs;
}

SynthData Generate(const SynthSpec& spec) {
  std::vector<std::vector<int>> chains;
  KinematicModel model = GenerateModel(spec, &chains);
  const CounterRng rng(spec.seed);

  std::vector<Sinusoid> traj = spec.trajectory;
  if (traj.empty()) {
    traj = GenerateTrajectory(model, spec, rng);
    if (spec.topology == Topology::kSpineChain) {
      SpineTrajectory(spec, rng, chains, traj);
    }
  } else if (static_cast<int>(traj.size()) != model.nq()) {
    throw std::invalid_argument("synth spec: trajectory length differs from nq");
  }

  Eigen::VectorXd scale(model.ns());
  for (int i = 0; i < model.ns(); ++i) {
    scale[i] = rng.Uniform(spec.scale_lo, spec.scale_hi, kScale, i);
  }

  SynthData data{std::move(model), {}, {}, {}, std::move(chains), traj};
  data.truth.reserve(spec.frame_count);
  data.observations.reserve(spec.frame_count);
  for (int t = 0; t < spec.frame_count; ++t) {
    const double time = t / spec.frame_rate_hz;
    Eigen::VectorXd y(data.model.ny());
    for (int i = 0; i < data.model.nq(); ++i) y[i] = traj[i](time);
    y.tail(data.model.ns()) = scale;
    data.times.push_back(time);
    data.observations.push_back(Observe(data.model, y, spec, t));
    data.truth.push_back(std::move(y));
  }
  return data;
}

SynthSpec MakeAmbiguousSpec(std::uint64_t seed) {
  SynthSpec spec;
  spec.topology = Topology::kChain;
  spec.body_count = 4;
  spec.markers_per_body = 6;
  spec.layout = MarkerLayout::kClustered;
  spec.noise_sigma_mm = 2.0;
  spec.frame_count = 100;
  spec.scale_lo = 0.8;
  spec.scale_hi = 1.25;
  spec.seed = seed;
  return spec;
}

SynthSpec MakeSpineAblationSpec(std::uint64_t seed) {
  SynthSpec spec;
  spec.topology = Topology::kSpineChain;
  spec.body_count = 6;
  spec.noise_sigma_mm = 1.0;
  spec.frame_count = 200;
  spec.amplitude = 0.05;
  spec.seed = seed;
  return spec;
}

double ScalePoseConditionNumber(const KinematicModel& model,
                                const Eigen::VectorXd& y) {
  const Eigen::MatrixXd j = MarkerJacobian(model, y);
  std::vector<int> cols;
  for (int i = 0; i < model.ny(); ++i) {
    if (model.coord_kind(i) == CoordKind::kScale || model.coord_body(i) != 0) {
      if (j.col(i).norm() > 0.0) cols.push_back(i);
    }
  }
  Eigen::MatrixXd block(j.rows(), cols.size());
  for (std::size_t c = 0; c < cols.size(); ++c) block.col(c) = j.col(cols[c]);
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(block);
  const Eigen::VectorXd& sv = svd.singularValues();
  if (sv.size() == 0) return 1.0;
  const double smallest = sv[sv.size() - 1];
  return smallest > 0.0 ? sv[0] / smallest
                        : std::numeric_limits<double>::infinity();
}

}  // namespace scalepose
