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

#ifndef SCALEPOSE_SYNTHGEN_H_
#define SCALEPOSE_SYNTHGEN_H_

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "scalepose/framesolver.h"
#include "scalepose/kinmodel.h"

namespace scalepose {

// Counter-based generator: every draw is a pure function of its key, so
// results do not depend on evaluation order or thread count.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t Bits(std::uint64_t stream, std::uint64_t a, std::uint64_t b = 0,
                     std::uint64_t c = 0) const;
  // uniform in [0, 1)
  double Uniform(std::uint64_t stream, std::uint64_t a, std::uint64_t b = 0,
                 std::uint64_t c = 0) const;
  double Uniform(double lo, double hi, std::uint64_t stream, std::uint64_t a,
                 std::uint64_t b = 0, std::uint64_t c = 0) const;
  // standard normal (Box-Muller on two keyed uniforms)
  double Normal(std::uint64_t stream, std::uint64_t a, std::uint64_t b = 0,
                std::uint64_t c = 0) const;

 private:
  std::uint64_t seed_;
};

enum class Topology { kChain, kBipedLike, kSpineChain };
const char* TopologyName(Topology topology);
Topology ParseTopology(const std::string& name);

enum class MarkerLayout {
  kSpread,     // markers around the segment, well away from its long axis
  kClustered,  // markers bunched tightly around one point of the long axis
};

struct Sinusoid {
  double offset = 0.0;
  double amplitude = 0.0;
  double frequency_hz = 0.0;
  double phase = 0.0;

  double operator()(double t) const;
};

struct SynthSpec {
  Topology topology = Topology::kChain;
  // chain: bodies including the root; spine-chain: vertebral levels
  int body_count = 5;
  int markers_per_body = 3;
  MarkerLayout layout = MarkerLayout::kSpread;
  double noise_sigma_mm = 0.0;
  double dropout_rate = 0.0;
  int frame_count = 100;
  double frame_rate_hz = 100.0;
  // per-q sinusoids; generated from the seed when empty
  std::vector<Sinusoid> trajectory;
  double amplitude = 0.3;  // rad, scale of generated joint motion
  double scale_lo = 0.85;
  double scale_hi = 1.15;
  std::uint64_t seed = 1;

  // Throws std::invalid_argument describing the first infeasible field.
  void Validate() const;
};

struct SynthData {
  KinematicModel model;
  std::vector<Eigen::VectorXd> truth;  // y per frame
  std::vector<Observation> observations;
  std::vector<double> times;
  // spine-chain only: y indices of each bending-axis chain, root to tip
  std::vector<std::vector<int>> spine_chains;
  std::vector<Sinusoid> trajectory;
};

// Builds the model for spec (no trajectory).
KinematicModel GenerateModel(const SynthSpec& spec,
                             std::vector<std::vector<int>>* spine_chains = nullptr);

// Deterministic in spec (including seed).
SynthData Generate(const SynthSpec& spec);

// Adds noise and dropout keyed by (seed, frame, marker, axis).
Observation Observe(const KinematicModel& model, const Eigen::VectorXd& y,
                    const SynthSpec& spec, int frame);

// Leakage-prone spec: a four-segment chain whose inner segments carry tight
// marker clusters next to their proximal joints, so that a segment's length
// and its child's joint angle move the observed markers almost alike.
SynthSpec MakeAmbiguousSpec(std::uint64_t seed);

// Spine-chain spec used by the proxy ablation: six levels (12 bending DoFs),
// sparse markers on pelvis, mid and top levels, 1 mm noise, gait-sized
// bending.
SynthSpec MakeSpineAblationSpec(std::uint64_t seed);

// Condition number of the marker Jacobian restricted to the scale columns and
// the non-root joint columns. Both kinds of column are metres per unit
// coordinate, so no column scaling is applied.
double ScalePoseConditionNumber(const KinematicModel& model,
                                const Eigen::VectorXd& y);

}  // namespace scalepose

#endif  // SCALEPOSE_SYNTHGEN_H_
