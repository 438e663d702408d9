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

#ifndef SCALEPOSE_CLI_IO_H_
#define SCALEPOSE_CLI_IO_H_

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include "json.hpp"

#include "scalepose/audit.h"
#include "scalepose/framesolver.h"
#include "scalepose/kinmodel.h"
#include "scalepose/presolve.h"
#include "scalepose/proxy.h"

namespace scalepose {

// Malformed or inconsistent input data (exit code 2).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitData = 2,
  kExitSolverFailure = 3,
};

// ---------------------------------------------------------------------------
// Model documents

KinematicModel ParseModel(const nlohmann::json& doc);
nlohmann::json ModelToJson(const KinematicModel& model);
KinematicModel LoadModel(const std::string& path);
void SaveModel(const KinematicModel& model, const std::string& path);

// ---------------------------------------------------------------------------
// Marker tables: header "frame,time,<name>_x,<name>_y,<name>_z,..." in
// meters; an empty cell triple marks the marker invisible in that frame.

struct MarkerTable {
  std::vector<int> frame_ids;
  std::vector<double> times;
  std::vector<Observation> observations;
  double frame_rate_hz = 0.0;  // inferred from the time column; 0 if < 2 rows
};

MarkerTable ParseMarkers(const std::string& text, const KinematicModel& model);
MarkerTable LoadMarkers(const std::string& path, const KinematicModel& model);
std::string FormatMarkers(const KinematicModel& model,
                          const std::vector<Observation>& observations,
                          const std::vector<double>& times);
void SaveMarkers(const std::string& path, const KinematicModel& model,
                 const std::vector<Observation>& observations,
                 const std::vector<double>& times);

// Column label of every state coordinate, e.g. "thigh.q1" or "thigh.s".
std::vector<std::string> StateLabels(const KinematicModel& model);

// Shortest decimal form that round-trips.
std::string FormatNumber(double value);

// ---------------------------------------------------------------------------
// Run configuration

struct ProxySpec {
  std::string kind = "identity";  // identity | spine
  SpineMode spine_mode = SpineMode::kPoly;
  int degree = 2;
  int segments = 3;
  std::vector<std::vector<int>> chains;  // y indices, root to tip
};

enum class RunMode { kSolve, kAudit, kAblate, kBench, kSynth };
const char* RunModeName(RunMode mode);

struct RunConfig {
  RunMode mode = RunMode::kSolve;
  std::string model_path;
  std::vector<std::string> marker_paths;
  ProxySpec proxy;
  SolverConfig solver;
  int first_frame_max_iters = 100;
  int freeze_scale_after = -1;
  bool presolve = false;
  PresolveConfig presolve_config;
  std::string output_dir = ".";
  std::uint64_t seed = 1;
  // zero every wall-clock field in written artifacts
  bool deterministic = false;
  // exit with kExitSolverFailure when failed frames exceed this fraction
  double failure_threshold = 0.0;
  int trials = 0;  // audit/ablate/bench battery size; 0 selects a default
  int frames = 0;  // synthetic frame count; 0 selects a default
};

// Applies the keys present in doc on top of config. Unknown keys throw
// DataError.
void ApplyConfigJson(const nlohmann::json& doc, RunConfig& config);
nlohmann::json ConfigToJson(const RunConfig& config);

ProxyMap BuildProxy(const ProxySpec& spec, int ny);

// Neutral state with a free root rigidly aligned to the visible markers.
Eigen::VectorXd AlignedInitialState(const KinematicModel& model,
                                    const Observation& obs);

// ---------------------------------------------------------------------------
// Results

// Writes frames.csv, summary.json and resolved_config.json into dir.
void WriteResults(const KinematicModel& model, const TrialResult& trial,
                  const MetricReport* report, const RunConfig& config,
                  const std::string& dir);

void WriteText(const std::string& path, const std::string& text);

// Entry point for the scalepose binary.
int CliDispatch(int argc, char** argv);

}  // namespace scalepose

#endif  // SCALEPOSE_CLI_IO_H_
