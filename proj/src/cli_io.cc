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

#include "scalepose/cli_io.h"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <Eigen/Geometry>

#include "CLI11.hpp"
#include "scalepose/stats.h"
#include "scalepose/synthgen.h"

namespace scalepose {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// JSON field access with path-qualified errors

const json& Field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) throw DataError(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw DataError(where + ": missing field '" + key + "'");
  }
  return *it;
}

double Number(const json& v, const std::string& where) {
  if (!v.is_number()) throw DataError(where + ": expected a number");
  return v.get<double>();
}

int Integer(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw DataError(where + ": expected an integer");
  return v.get<int>();
}

std::string String(const json& v, const std::string& where) {
  if (!v.is_string()) throw DataError(where + ": expected a string");
  return v.get<std::string>();
}

bool Boolean(const json& v, const std::string& where) {
  if (!v.is_boolean()) throw DataError(where + ": expected true or false");
  return v.get<bool>();
}

Eigen::VectorXd Vector(const json& v, const std::string& where,
                       Eigen::Index size = -1) {
  if (!v.is_array()) throw DataError(where + ": expected an array");
  if (size >= 0 && static_cast<Eigen::Index>(v.size()) != size) {
    throw DataError(where + ": expected " + std::to_string(size) + " numbers");
  }
  Eigen::VectorXd out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = Number(v[i], where + "[" + std::to_string(i) + "]");
  }
  return out;
}

Eigen::Vector3d Vec3(const json& v, const std::string& where) {
  return Vector(v, where, 3);
}

json ToJson(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

json ToJson(const Eigen::Vector3d& v) {
  return json::array({v.x(), v.y(), v.z()});
}

std::string ReadText(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json ReadJson(const std::string& path) {
  const std::string text = ReadText(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DataError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// CSV helpers

std::vector<std::string> SplitRow(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double ParseDouble(const std::string& text, const std::string& where) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw DataError(where + ": malformed number '" + text + "'");
  }
  return value;
}

// ---------------------------------------------------------------------------
// Config sections

void ApplySolverJson(const json& doc, SolverConfig& c) {
  const std::string where = "config.solver";
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string& k = it.key();
    const std::string at = where + "." + k;
    const json& v = it.value();
    if (k == "lambda_init") c.lambda_init = Number(v, at);
    else if (k == "lambda_min") c.lambda_min = Number(v, at);
    else if (k == "lambda_max") c.lambda_max = Number(v, at);
    else if (k == "nu_up") c.nu_up = Number(v, at);
    else if (k == "nu_down") c.nu_down = Number(v, at);
    else if (k == "rho_low") c.rho_low = Number(v, at);
    else if (k == "rho_high") c.rho_high = Number(v, at);
    else if (k == "eps_rho") c.eps_rho = Number(v, at);
    else if (k == "tol_residual") c.tol_residual = Number(v, at);
    else if (k == "tol_rel_decrease") c.tol_rel_decrease = Number(v, at);
    else if (k == "max_iters") c.max_iters = Integer(v, at);
    else if (k == "step_bounds") {
      if (v.contains("angular")) c.step_bounds.angular = Number(v["angular"], at);
      if (v.contains("translational")) {
        c.step_bounds.translational = Number(v["translational"], at);
      }
      if (v.contains("scale")) c.step_bounds.scale = Number(v["scale"], at);
    } else if (k == "lower") c.lower = Vector(v, at);
    else if (k == "upper") c.upper = Vector(v, at);
    else if (k == "damping_diag") c.damping_diag = Vector(v, at);
    else if (k == "marker_weight") c.marker_weight = Number(v, at);
    else if (k == "tracking_weights") c.tracking_weights = Vector(v, at);
    else if (k == "y_ref") {
      if (v.is_null()) c.y_ref.reset();
      else c.y_ref = Vector(v, at);
    } else if (k == "scale_min") c.scale_min = Number(v, at);
    else if (k == "scale_max") c.scale_max = Number(v, at);
    else if (k == "freeze_scale") c.freeze_scale = Boolean(v, at);
    else throw DataError(where + ": unknown key '" + k + "'");
  }
}

json SolverToJson(const SolverConfig& c) {
  json j;
  j["lambda_init"] = c.lambda_init;
  j["lambda_min"] = c.lambda_min;
  j["lambda_max"] = c.lambda_max;
  j["nu_up"] = c.nu_up;
  j["nu_down"] = c.nu_down;
  j["rho_low"] = c.rho_low;
  j["rho_high"] = c.rho_high;
  j["eps_rho"] = c.eps_rho;
  j["tol_residual"] = c.tol_residual;
  j["tol_rel_decrease"] = c.tol_rel_decrease;
  j["max_iters"] = c.max_iters;
  j["step_bounds"] = {{"angular", c.step_bounds.angular},
                      {"translational", c.step_bounds.translational},
                      {"scale", c.step_bounds.scale}};
  j["lower"] = ToJson(c.lower);
  j["upper"] = ToJson(c.upper);
  j["damping_diag"] = ToJson(c.damping_diag);
  j["marker_weight"] = c.marker_weight;
  j["tracking_weights"] = ToJson(c.tracking_weights);
  j["y_ref"] = c.y_ref ? ToJson(*c.y_ref) : json(nullptr);
  j["scale_min"] = c.scale_min;
  j["scale_max"] = c.scale_max;
  j["freeze_scale"] = c.freeze_scale;
  return j;
}

RunMode ParseRunMode(const std::string& name) {
  for (RunMode m : {RunMode::kSolve, RunMode::kAudit, RunMode::kAblate,
                    RunMode::kBench, RunMode::kSynth}) {
    if (name == RunModeName(m)) return m;
  }
  throw DataError("unknown mode '" + name + "'");
}

// ---------------------------------------------------------------------------
// Output

std::string FrameCsv(const KinematicModel& model,
                     const std::vector<FrameResult>& frames) {
  std::ostringstream out;
  out << "frame,status,iterations,accepted,rmse_mm,time_us";
  for (const std::string& label : StateLabels(model)) out << ',' << label;
  out << '\n';
  for (std::size_t i = 0; i < frames.size(); ++i) {
    const FrameResult& f = frames[i];
    out << i << ',' << FrameStatusName(f.status) << ',' << f.iterations << ','
        << f.accepted_steps << ',';
    if (std::isfinite(f.marker_rmse_mm)) out << FormatNumber(f.marker_rmse_mm);
    out << ',' << FormatNumber(f.wall_time_us);
    for (Eigen::Index k = 0; k < f.y_est.size(); ++k) {
      out << ',' << FormatNumber(f.y_est[k]);
    }
    out << '\n';
  }
  return out.str();
}

json SummaryJson(const TrialSummary& s) {
  json j;
  j["frames"] = s.frames;
  j["status"] = {{"converged", s.converged},
                 {"max_iters", s.max_iters},
                 {"failed_nonfinite", s.failed}};
  j["throughput"] = {{"time_p50_ms", s.time_p50_ms},
                     {"time_p90_ms", s.time_p90_ms},
                     {"iters_p50", s.iters_p50},
                     {"iters_p90", s.iters_p90},
                     {"fps", s.fps},
                     {"total_time_us", s.total_time_us}};
  j["marker_rmse_mm"] = {{"p50", s.rmse_p50_mm},
                         {"p90", s.rmse_p90_mm},
                         {"mean", s.rmse_mean_mm}};
  if (s.frames == 0) j["note"] = "zero frames";
  return j;
}

json ReportJson(const MetricReport& r) {
  json j;
  j["mean_marker_rmse_mm"] = r.mean_marker_rmse_mm();
  j["temporal_roughness"] = ToJson(r.temporal_roughness);
  if (r.spatial_roughness.size() > 0) {
    j["spatial_roughness_median"] = Median(std::vector<double>(
        r.spatial_roughness.data(),
        r.spatial_roughness.data() + r.spatial_roughness.size()));
  }
  if (r.scale_mae) j["scale_mae"] = *r.scale_mae;
  if (r.pose_rmse_deg) j["pose_rmse_deg"] = *r.pose_rmse_deg;
  if (r.outlier_rate_percent) j["outlier_rate_percent"] = *r.outlier_rate_percent;
  return j;
}

json WinsJson(const LeakageTable& t) {
  json rows = json::array();
  for (const MetricWins* w : {&t.marker_rmse, &t.pose_rmse, &t.scale_mae}) {
    rows.push_back({{"metric", w->metric},
                    {"joint_mean", w->joint_mean},
                    {"baseline_mean", w->baseline_mean},
                    {"joint_wins", w->joint_wins},
                    {"baseline_wins", w->baseline_wins},
                    {"ties", w->ties}});
  }
  return {{"trials", t.trials},
          {"pose_reference", "synthetic ground-truth joint angles"},
          {"metrics", rows}};
}

std::string WinsTable(const LeakageTable& t) {
  std::ostringstream out;
  out << "metric            joint_mean  baseline_mean  wins (of " << t.trials
      << ")\n";
  for (const MetricWins* w : {&t.marker_rmse, &t.pose_rmse, &t.scale_mae}) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-16s  %10.4f  %13.4f  %d/%d\n",
                  w->metric.c_str(), w->joint_mean, w->baseline_mean,
                  w->joint_wins, t.trials);
    out << line;
  }
  return out.str();
}

void ZeroTimes(std::vector<FrameResult>& frames) {
  for (FrameResult& f : frames) f.wall_time_us = 0.0;
}

void EnsureDir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir + ": " + ec.message());
}

// ---------------------------------------------------------------------------
// Subcommands

SolverConfig ResolvedSolver(const RunConfig& config) {
  SolverConfig solver = config.solver;
  solver.Validate();
  return solver;
}

TrialResult RunSolve(const KinematicModel& model,
                     const std::vector<Observation>& frames,
                     const RunConfig& config) {
  if (frames.empty()) return {};
  const ProxyMap base = BuildProxy(config.proxy, model.ny());
  const Eigen::VectorXd y0 = AlignedInitialState(model, frames.front());
  const ProxyMap proxy = Rebase(base, y0);
  TrialOptions options;
  options.first_frame_max_iters = config.first_frame_max_iters;
  options.freeze_scale_after = config.freeze_scale_after;
  const SolverConfig solver = ResolvedSolver(config);
  if (config.presolve) {
    const PresolveConfig pre = config.presolve_config;
    options.warm_start = [&model, solver, pre](const Observation& obs,
                                               const Eigen::VectorXd& y) {
      return PresolveSweep(model, obs, y, solver, pre);
    };
  }
  return SolveTrial(model, proxy, frames, Project(proxy, y0), solver, options);
}

int FailureExit(const TrialSummary& s, double threshold) {
  if (s.frames == 0) return kExitOk;
  const double fraction = static_cast<double>(s.failed) / s.frames;
  return fraction > threshold ? kExitSolverFailure : kExitOk;
}

int CmdSolve(const RunConfig& config) {
  if (config.model_path.empty() || config.marker_paths.empty()) {
    std::cerr << "solve: --model and --markers are required\n";
    return kExitUsage;
  }
  const KinematicModel model = LoadModel(config.model_path);
  int code = kExitOk;
  for (std::size_t i = 0; i < config.marker_paths.size(); ++i) {
    const MarkerTable table = LoadMarkers(config.marker_paths[i], model);
    TrialResult trial = RunSolve(model, table.observations, config);
    if (config.deterministic) {
      ZeroTimes(trial.frames);
      trial.summary = SummarizeFrames(trial.frames);
    }
    const std::string dir =
        config.marker_paths.size() == 1
            ? config.output_dir
            : (fs::path(config.output_dir) / ("trial_" + std::to_string(i)))
                  .string();
    std::optional<MetricReport> report;
    if (!trial.frames.empty()) {
      report = BuildReport(model, trial.frames, MedianScales(model, trial.frames),
                           nullptr);
    }
    WriteResults(model, trial, report ? &*report : nullptr, config, dir);
    std::cerr << config.marker_paths[i] << ": " << trial.summary.frames
              << " frames, " << trial.summary.failed << " failed, median "
              << trial.summary.iters_p50 << " iterations\n";
    code = std::max(code, FailureExit(trial.summary, config.failure_threshold));
  }
  return code;
}

int CmdSynth(const RunConfig& config, SynthSpec spec) {
  spec.seed = config.seed;
  if (config.frames > 0) spec.frame_count = config.frames;
  const SynthData data = Generate(spec);
  EnsureDir(config.output_dir);
  const fs::path out(config.output_dir);
  SaveModel(data.model, (out / "model.json").string());
  SaveMarkers((out / "markers.csv").string(), data.model, data.observations,
              data.times);

  std::ostringstream truth;
  truth << "frame,time";
  for (const std::string& label : StateLabels(data.model)) truth << ',' << label;
  truth << '\n';
  for (std::size_t t = 0; t < data.truth.size(); ++t) {
    truth << t << ',' << FormatNumber(data.times[t]);
    for (Eigen::Index k = 0; k < data.truth[t].size(); ++k) {
      truth << ',' << FormatNumber(data.truth[t][k]);
    }
    truth << '\n';
  }
  WriteText((out / "truth.csv").string(), truth.str());

  json meta = {{"topology", TopologyName(spec.topology)},
               {"body_count", spec.body_count},
               {"markers_per_body", spec.markers_per_body},
               {"layout", spec.layout == MarkerLayout::kSpread ? "spread"
                                                                : "clustered"},
               {"noise_sigma_mm", spec.noise_sigma_mm},
               {"dropout_rate", spec.dropout_rate},
               {"frame_count", spec.frame_count},
               {"frame_rate_hz", spec.frame_rate_hz},
               {"seed", spec.seed}};
  json chains = json::array();
  for (const auto& c : data.spine_chains) chains.push_back(c);
  meta["spine_chains"] = chains;
  WriteText((out / "synth.json").string(), meta.dump(2) + "\n");
  std::cerr << "wrote " << data.truth.size() << " frames of "
            << data.model.marker_count() << " markers to " << out.string()
            << "\n";
  return kExitOk;
}

int CmdAudit(const RunConfig& config) {
  const SolverConfig solver = ResolvedSolver(config);
  std::vector<MetricReport> joint, baseline;
  std::ostringstream csv;
  csv << "trial,arm,marker_rmse_mm,pose_rmse_deg,scale_mae,stage1_failed\n";
  auto record = [&](int trial, const AuditTrialResult& r) {
    for (int arm = 0; arm < 2; ++arm) {
      const MetricReport& m = arm == 0 ? r.joint : r.baseline;
      csv << trial << ',' << (arm == 0 ? "joint" : "baseline") << ','
          << FormatNumber(m.mean_marker_rmse_mm()) << ','
          << (m.pose_rmse_deg ? FormatNumber(*m.pose_rmse_deg) : "") << ','
          << (m.scale_mae ? FormatNumber(*m.scale_mae) : "") << ','
          << (arm == 1 && r.baseline_stage1_failed ? 1 : 0) << '\n';
    }
    joint.push_back(r.joint);
    baseline.push_back(r.baseline);
  };

  if (!config.model_path.empty() && !config.marker_paths.empty()) {
    const KinematicModel model = LoadModel(config.model_path);
    for (std::size_t i = 0; i < config.marker_paths.size(); ++i) {
      const MarkerTable table = LoadMarkers(config.marker_paths[i], model);
      if (table.observations.empty()) {
        throw DataError(config.marker_paths[i] + ": no frames");
      }
      const int n = static_cast<int>(table.observations.size());
      record(static_cast<int>(i),
             AuditTrial(model, table.observations, nullptr,
                        AlignedInitialState(model, table.observations.front()),
                        solver, DefaultBaselineConfig(n)));
    }
  } else {
    const int trials = config.trials > 0 ? config.trials : 30;
    for (int i = 0; i < trials; ++i) {
      SynthSpec spec = MakeAmbiguousSpec(config.seed + i);
      if (config.frames > 0) spec.frame_count = config.frames;
      const SynthData data = Generate(spec);
      record(i, AuditTrial(data.model, data.observations, &data.truth,
                           AlignedInitialState(data.model,
                                               data.observations.front()),
                           solver, DefaultBaselineConfig(spec.frame_count)));
    }
  }

  const LeakageTable table = LeakageReport(joint, baseline);
  EnsureDir(config.output_dir);
  const fs::path out(config.output_dir);
  WriteText((out / "audit_trials.csv").string(), csv.str());
  json summary = {{"leakage", WinsJson(table)}};
  WriteText((out / "summary.json").string(), summary.dump(2) + "\n");
  WriteText((out / "resolved_config.json").string(),
            ConfigToJson(config).dump(2) + "\n");
  std::cout << WinsTable(table);
  return kExitOk;
}

int CmdAblate(const RunConfig& config) {
  const SolverConfig solver = ResolvedSolver(config);
  const int trials = config.trials > 0 ? config.trials : 5;
  std::ostringstream csv;
  csv << "trial,mode,spatial_roughness,temporal_roughness,marker_rmse_mm,"
         "iters_p50,total_time_us\n";
  std::map<std::string, std::vector<double>> spatial, temporal, rmse, time;
  for (int i = 0; i < trials; ++i) {
    SynthSpec spec = MakeSpineAblationSpec(config.seed + i);
    if (config.frames > 0) spec.frame_count = config.frames;
    const SynthData data = Generate(spec);
    const Eigen::VectorXd y0 =
        AlignedInitialState(data.model, data.observations.front());
    const std::vector<AblationArm> arms =
        RunSpineAblation(data.model, data.observations, data.spine_chains, y0,
                         solver, config.proxy.degree, config.proxy.segments);
    for (const AblationArm& arm : arms) {
      const std::string name = SpineModeName(arm.mode);
      const double total = config.deterministic ? 0.0 : arm.summary.total_time_us;
      csv << i << ',' << name << ',' << FormatNumber(arm.spatial_roughness)
          << ',' << FormatNumber(arm.temporal_roughness) << ','
          << FormatNumber(arm.marker_rmse_mm) << ','
          << FormatNumber(arm.summary.iters_p50) << ',' << FormatNumber(total)
          << '\n';
      spatial[name].push_back(arm.spatial_roughness);
      temporal[name].push_back(arm.temporal_roughness);
      rmse[name].push_back(arm.marker_rmse_mm);
      time[name].push_back(total);
    }
  }
  json modes = json::object();
  for (const auto& [name, values] : spatial) {
    modes[name] = {{"spatial_roughness_median", Median(values)},
                   {"temporal_roughness_median", Median(temporal[name])},
                   {"marker_rmse_mm_median", Median(rmse[name])},
                   {"total_time_us_median", Median(time[name])}};
    std::cout << name << ": spatial " << Median(values) << ", temporal "
              << Median(temporal[name]) << ", rmse " << Median(rmse[name])
              << " mm\n";
  }
  EnsureDir(config.output_dir);
  const fs::path out(config.output_dir);
  WriteText((out / "ablation.csv").string(), csv.str());
  WriteText((out / "summary.json").string(),
            json({{"trials", trials}, {"modes", modes}}).dump(2) + "\n");
  WriteText((out / "resolved_config.json").string(),
            ConfigToJson(config).dump(2) + "\n");
  return kExitOk;
}

int CmdBench(const RunConfig& config) {
  SynthSpec spec;
  spec.topology = Topology::kBipedLike;
  spec.noise_sigma_mm = 1.0;
  spec.frame_count = config.frames > 0 ? config.frames : 1000;
  spec.seed = config.seed;
  const SynthData data = Generate(spec);
  RunConfig run = config;
  TrialResult trial = RunSolve(data.model, data.observations, run);
  if (config.deterministic) {
    ZeroTimes(trial.frames);
    trial.summary = SummarizeFrames(trial.frames);
  }
  const TrialSummary& s = trial.summary;
  std::cout << "model: " << data.model.ny() - data.model.ns() << " DoF + "
            << data.model.ns() << " scales, " << s.frames << " frames\n"
            << "time p50 " << s.time_p50_ms << " ms, p90 " << s.time_p90_ms
            << " ms, " << s.fps << " fps\n"
            << "iterations p50 " << s.iters_p50 << ", p90 " << s.iters_p90
            << "\n";
  WriteResults(data.model, trial, nullptr, config, config.output_dir);
  return FailureExit(s, config.failure_threshold);
}

}  // namespace

// ---------------------------------------------------------------------------
// Models

KinematicModel ParseModel(const json& doc) {
  const json& bodies_doc = Field(doc, "bodies", "model");
  const json& markers_doc = Field(doc, "markers", "model");
  if (!bodies_doc.is_array()) throw DataError("model.bodies: expected an array");
  if (!markers_doc.is_array()) {
    throw DataError("model.markers: expected an array");
  }

  std::vector<BodyNode> bodies;
  for (std::size_t i = 0; i < bodies_doc.size(); ++i) {
    const json& b = bodies_doc[i];
    const std::string at = "model.bodies[" + std::to_string(i) + "]";
    BodyNode node;
    node.id = Integer(Field(b, "id", at), at + ".id");
    const json& parent = Field(b, "parent", at);
    node.parent = parent.is_null() ? kNoParent : Integer(parent, at + ".parent");
    node.name = b.contains("name") ? String(b["name"], at + ".name")
                                   : "body" + std::to_string(node.id);
    const json& joint = Field(b, "joint", at);
    const std::string kind = String(Field(joint, "kind", at + ".joint"),
                                    at + ".joint.kind");
    const std::optional<JointKind> parsed = ParseJointKind(kind);
    if (!parsed) throw DataError(at + ".joint.kind: unknown kind '" + kind + "'");
    node.joint.kind = *parsed;
    if (joint.contains("axis")) {
      node.joint.axis = Vec3(joint["axis"], at + ".joint.axis");
    }
    if (joint.contains("frame_offset")) {
      const json& off = joint["frame_offset"];
      const std::string oat = at + ".joint.frame_offset";
      if (off.contains("translation")) {
        node.joint.frame_offset.translation =
            Vec3(off["translation"], oat + ".translation");
      }
      if (off.contains("rotation")) {
        const Eigen::VectorXd q = Vector(off["rotation"], oat + ".rotation", 4);
        node.joint.frame_offset.rotation = Eigen::Quaterniond(q[0], q[1], q[2], q[3]);
      }
    }
    node.anchor = Vec3(Field(b, "anchor", at), at + ".anchor");
    if (b.contains("scale_slot") && !b["scale_slot"].is_null()) {
      node.scale_slot = Integer(b["scale_slot"], at + ".scale_slot");
    }
    bodies.push_back(std::move(node));
  }

  std::vector<MarkerAttachment> markers;
  for (std::size_t i = 0; i < markers_doc.size(); ++i) {
    const json& m = markers_doc[i];
    const std::string at = "model.markers[" + std::to_string(i) + "]";
    MarkerAttachment marker;
    marker.marker_id = Integer(Field(m, "marker_id", at), at + ".marker_id");
    marker.name = m.contains("name") ? String(m["name"], at + ".name")
                                     : "m" + std::to_string(marker.marker_id);
    marker.body = Integer(Field(m, "body", at), at + ".body");
    marker.local_offset = Vec3(Field(m, "local_offset", at), at + ".local_offset");
    if (m.contains("weight")) marker.weight = Number(m["weight"], at + ".weight");
    markers.push_back(std::move(marker));
  }

  try {
    return KinematicModel(std::move(bodies), std::move(markers));
  } catch (const ModelError& e) {
    throw DataError(std::string("model: ") + e.what());
  }
}

json ModelToJson(const KinematicModel& model) {
  json bodies = json::array();
  for (const BodyNode& b : model.bodies()) {
    const Eigen::Quaterniond& q = b.joint.frame_offset.rotation;
    json node = {
        {"id", b.id},
        {"parent", b.parent},
        {"name", b.name},
        {"joint",
         {{"kind", JointKindName(b.joint.kind)},
          {"axis", ToJson(b.joint.axis)},
          {"frame_offset",
           {{"translation", ToJson(b.joint.frame_offset.translation)},
            {"rotation", json::array({q.w(), q.x(), q.y(), q.z()})}}}}},
        {"anchor", ToJson(b.anchor)},
        {"scale_slot", b.scale_slot ? json(*b.scale_slot) : json(nullptr)}};
    bodies.push_back(std::move(node));
  }
  json markers = json::array();
  for (const MarkerAttachment& m : model.markers()) {
    markers.push_back({{"marker_id", m.marker_id},
                       {"name", m.name},
                       {"body", m.body},
                       {"local_offset", ToJson(m.local_offset)},
                       {"weight", m.weight}});
  }
  return {{"bodies", bodies}, {"markers", markers}};
}

KinematicModel LoadModel(const std::string& path) {
  try {
    return ParseModel(ReadJson(path));
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

void SaveModel(const KinematicModel& model, const std::string& path) {
  WriteText(path, ModelToJson(model).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Marker tables

MarkerTable ParseMarkers(const std::string& text, const KinematicModel& model) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("markers: empty file");
  const std::vector<std::string> header = SplitRow(line);
  if (header.size() < 2 || Trim(header[0]) != "frame" ||
      Trim(header[1]) != "time") {
    throw DataError("markers: header must start with frame,time");
  }
  if ((header.size() - 2) % 3 != 0) {
    throw DataError("markers: marker columns must come in x,y,z triples");
  }
  // column group -> model marker index
  std::vector<int> group_marker;
  std::set<int> seen;
  for (std::size_t c = 2; c < header.size(); c += 3) {
    const std::string name_x = Trim(header[c]);
    if (name_x.size() < 3 || name_x.substr(name_x.size() - 2) != "_x") {
      throw DataError("markers: column '" + name_x + "' should end in _x");
    }
    const std::string name = name_x.substr(0, name_x.size() - 2);
    if (Trim(header[c + 1]) != name + "_y" || Trim(header[c + 2]) != name + "_z") {
      throw DataError("markers: columns for '" + name + "' must be _x,_y,_z");
    }
    const int k = model.FindMarker(name);
    if (k < 0) throw DataError("markers: unknown marker id '" + name + "'");
    if (!seen.insert(k).second) {
      throw DataError("markers: marker '" + name + "' appears twice");
    }
    group_marker.push_back(k);
  }

  MarkerTable table;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (Trim(line).empty()) continue;
    const std::string at = "markers: row " + std::to_string(row);
    const std::vector<std::string> cells = SplitRow(line);
    if (cells.size() != header.size()) {
      throw DataError(at + ": expected " + std::to_string(header.size()) +
                      " cells, got " + std::to_string(cells.size()));
    }
    const double frame = ParseDouble(Trim(cells[0]), at + " frame");
    const double time = ParseDouble(Trim(cells[1]), at + " time");
    if (!table.times.empty() && !(time > table.times.back())) {
      throw DataError(at + ": time is not increasing");
    }
    Observation obs;
    obs.x_obs = Eigen::VectorXd::Zero(model.nx());
    obs.visible.assign(model.marker_count(), false);
    for (std::size_t g = 0; g < group_marker.size(); ++g) {
      const int k = group_marker[g];
      // an empty or nan cell means the marker was not seen
      Eigen::Vector3d p;
      int missing = 0;
      for (int a = 0; a < 3; ++a) {
        const std::string cell = Trim(cells[2 + 3 * g + a]);
        p[a] = cell.empty() ? std::nan("") : ParseDouble(cell, at);
        if (std::isnan(p[a])) ++missing;
      }
      if (missing == 3) continue;
      if (missing != 0) {
        throw DataError(at + ": partially empty triple for marker '" +
                        model.markers()[k].name + "'");
      }
      if (!p.allFinite()) {
        throw DataError(at + ": non-finite coordinate for marker '" +
                        model.markers()[k].name + "'");
      }
      obs.x_obs.segment<3>(3 * k) = p;
      obs.visible[k] = true;
    }
    table.frame_ids.push_back(static_cast<int>(frame));
    table.times.push_back(time);
    table.observations.push_back(std::move(obs));
  }
  if (table.times.size() >= 2) {
    table.frame_rate_hz = (table.times.size() - 1) /
                          (table.times.back() - table.times.front());
  }
  return table;
}

MarkerTable LoadMarkers(const std::string& path, const KinematicModel& model) {
  try {
    return ParseMarkers(ReadText(path), model);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

std::string FormatMarkers(const KinematicModel& model,
                          const std::vector<Observation>& observations,
                          const std::vector<double>& times) {
  if (observations.size() != times.size()) {
    throw std::invalid_argument("markers: frame and time counts differ");
  }
  std::ostringstream out;
  out << "frame,time";
  for (const MarkerAttachment& m : model.markers()) {
    out << ',' << m.name << "_x," << m.name << "_y," << m.name << "_z";
  }
  out << '\n';
  for (std::size_t t = 0; t < observations.size(); ++t) {
    const Observation& obs = observations[t];
    out << t << ',' << FormatNumber(times[t]);
    for (int k = 0; k < model.marker_count(); ++k) {
      for (int a = 0; a < 3; ++a) {
        out << ',';
        if (obs.visible[k]) out << FormatNumber(obs.x_obs[3 * k + a]);
      }
    }
    out << '\n';
  }
  return out.str();
}

void SaveMarkers(const std::string& path, const KinematicModel& model,
                 const std::vector<Observation>& observations,
                 const std::vector<double>& times) {
  WriteText(path, FormatMarkers(model, observations, times));
}

std::vector<std::string> StateLabels(const KinematicModel& model) {
  std::vector<std::string> labels;
  for (const BodyNode& b : model.bodies()) {
    for (int d = 0; d < JointDof(b.joint.kind); ++d) {
      labels.push_back(b.name + ".q" + std::to_string(d));
    }
  }
  std::vector<std::string> scales(model.ns());
  for (const BodyNode& b : model.bodies()) {
    const int s = model.scale_index(b.id);
    if (s >= 0) scales[s - model.nq()] = b.name + ".s";
  }
  labels.insert(labels.end(), scales.begin(), scales.end());
  return labels;
}

std::string FormatNumber(double value) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) return "nan";
  return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------
// Configuration

const char* RunModeName(RunMode mode) {
  switch (mode) {
    case RunMode::kSolve:
      return "solve";
    case RunMode::kAudit:
      return "audit";
    case RunMode::kAblate:
      return "ablate";
    case RunMode::kBench:
      return "bench";
    case RunMode::kSynth:
      return "synth";
  }
  return "unknown";
}

void ApplyConfigJson(const json& doc, RunConfig& c) {
  if (!doc.is_object()) throw DataError("config: expected an object");
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    const std::string& k = it.key();
    const std::string at = "config." + k;
    const json& v = it.value();
    if (k == "mode") {
      c.mode = ParseRunMode(String(v, at));
    } else if (k == "model_path") {
      c.model_path = String(v, at);
    } else if (k == "marker_paths") {
      if (!v.is_array()) throw DataError(at + ": expected an array");
      c.marker_paths.clear();
      for (const json& p : v) c.marker_paths.push_back(String(p, at));
    } else if (k == "proxy") {
      if (v.contains("kind")) c.proxy.kind = String(v["kind"], at + ".kind");
      if (v.contains("spine_mode")) {
        try {
          c.proxy.spine_mode = ParseSpineMode(String(v["spine_mode"], at));
        } catch (const std::invalid_argument& e) {
          throw DataError(at + ".spine_mode: " + e.what());
        }
      }
      if (v.contains("degree")) c.proxy.degree = Integer(v["degree"], at + ".degree");
      if (v.contains("segments")) {
        c.proxy.segments = Integer(v["segments"], at + ".segments");
      }
      if (v.contains("chains")) {
        c.proxy.chains.clear();
        for (const json& chain : v["chains"]) {
          std::vector<int> ids;
          for (const json& i : chain) ids.push_back(Integer(i, at + ".chains"));
          c.proxy.chains.push_back(std::move(ids));
        }
      }
    } else if (k == "solver") {
      ApplySolverJson(v, c.solver);
    } else if (k == "first_frame_max_iters") {
      c.first_frame_max_iters = Integer(v, at);
    } else if (k == "freeze_scale_after") {
      c.freeze_scale_after = Integer(v, at);
    } else if (k == "presolve") {
      c.presolve = Boolean(v, at);
    } else if (k == "presolve_params") {
      if (v.contains("window_size")) {
        c.presolve_config.window_size = Integer(v["window_size"], at);
      }
      if (v.contains("sweeps")) c.presolve_config.sweeps = Integer(v["sweeps"], at);
      if (v.contains("inner_cap")) {
        c.presolve_config.inner_cap = Integer(v["inner_cap"], at);
      }
      if (v.contains("step_bounds")) {
        const json& b = v["step_bounds"];
        StepBoundDefaults& s = c.presolve_config.step_bounds;
        if (b.contains("angular")) s.angular = Number(b["angular"], at);
        if (b.contains("translational")) {
          s.translational = Number(b["translational"], at);
        }
        if (b.contains("scale")) s.scale = Number(b["scale"], at);
      }
    } else if (k == "output_dir") {
      c.output_dir = String(v, at);
    } else if (k == "seed") {
      if (!v.is_number_unsigned() && !v.is_number_integer()) {
        throw DataError(at + ": expected an integer");
      }
      c.seed = v.get<std::uint64_t>();
    } else if (k == "deterministic") {
      c.deterministic = Boolean(v, at);
    } else if (k == "failure_threshold") {
      c.failure_threshold = Number(v, at);
    } else if (k == "trials") {
      c.trials = Integer(v, at);
    } else if (k == "frames") {
      c.frames = Integer(v, at);
    } else {
      throw DataError("config: unknown key '" + k + "'");
    }
  }
}

json ConfigToJson(const RunConfig& c) {
  json chains = json::array();
  for (const auto& chain : c.proxy.chains) chains.push_back(chain);
  const StepBoundDefaults& pb = c.presolve_config.step_bounds;
  return {
      {"mode", RunModeName(c.mode)},
      {"model_path", c.model_path},
      {"marker_paths", c.marker_paths},
      {"proxy",
       {{"kind", c.proxy.kind},
        {"spine_mode", SpineModeName(c.proxy.spine_mode)},
        {"degree", c.proxy.degree},
        {"segments", c.proxy.segments},
        {"chains", chains}}},
      {"solver", SolverToJson(c.solver)},
      {"first_frame_max_iters", c.first_frame_max_iters},
      {"freeze_scale_after", c.freeze_scale_after},
      {"presolve", c.presolve},
      {"presolve_params",
       {{"window_size", c.presolve_config.window_size},
        {"sweeps", c.presolve_config.sweeps},
        {"inner_cap", c.presolve_config.inner_cap},
        {"step_bounds",
         {{"angular", pb.angular},
          {"translational", pb.translational},
          {"scale", pb.scale}}}}},
      {"output_dir", c.output_dir},
      {"seed", c.seed},
      {"deterministic", c.deterministic},
      {"failure_threshold", c.failure_threshold},
      {"trials", c.trials},
      {"frames", c.frames}};
}

ProxyMap BuildProxy(const ProxySpec& spec, int ny) {
  if (spec.kind == "identity") return ProxyMap::Identity(ny);
  if (spec.kind == "spine") {
    if (spec.chains.empty()) throw DataError("proxy: spine needs chains");
    try {
      return MakeSpineComposite(ny, spec.chains, spec.spine_mode, spec.degree,
                                spec.segments);
    } catch (const std::invalid_argument& e) {
      throw DataError(std::string("proxy: ") + e.what());
    }
  }
  throw DataError("proxy: unknown kind '" + spec.kind + "'");
}

Eigen::VectorXd AlignedInitialState(const KinematicModel& model,
                                    const Observation& obs) {
  Eigen::VectorXd y = model.NeutralState();
  const BodyNode& root = model.bodies().front();
  if (root.joint.kind != JointKind::kFree6) return y;

  // Markers at the neutral pose expressed in the root joint frame, paired
  // with their observations in the same frame.
  const BodyFrames frames = ForwardKinematics(model, y);
  const Eigen::VectorXd x_neutral = PredictMarkers(model, frames, y);
  const Eigen::Matrix3d r0 = frames.joint_frame[0];
  const Eigen::Vector3d p0 = frames.position[0];
  std::vector<int> used;
  for (int k = 0; k < model.marker_count(); ++k) {
    if (obs.visible[k]) used.push_back(k);
  }
  if (used.size() < 3) return y;
  Eigen::Matrix3Xd src(3, used.size()), dst(3, used.size());
  for (std::size_t i = 0; i < used.size(); ++i) {
    const int k = used[i];
    src.col(i) = r0.transpose() * (x_neutral.segment<3>(3 * k) - p0);
    dst.col(i) = r0.transpose() * (obs.x_obs.segment<3>(3 * k) - p0);
  }
  const Eigen::Matrix3Xd centered = src.colwise() - src.rowwise().mean();
  Eigen::JacobiSVD<Eigen::Matrix3Xd> svd(centered);
  if (svd.singularValues()[1] < 1e-6) return y;  // collinear

  const Eigen::Matrix4d fit = Eigen::umeyama(src, dst, false);
  const Eigen::Matrix3d rot = fit.topLeftCorner<3, 3>();
  y.segment<3>(0) = fit.topRightCorner<3, 1>();
  y.segment<3>(3) = LogMap(rot);
  return y;
}

// ---------------------------------------------------------------------------
// Results

void WriteText(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << text;
  if (!out) throw DataError("write failed for " + path);
}

void WriteResults(const KinematicModel& model, const TrialResult& trial,
                  const MetricReport* report, const RunConfig& config,
                  const std::string& dir) {
  EnsureDir(dir);
  const fs::path out(dir);
  WriteText((out / "frames.csv").string(), FrameCsv(model, trial.frames));
  json summary = SummaryJson(trial.summary);
  if (report) summary["metrics"] = ReportJson(*report);
  WriteText((out / "summary.json").string(), summary.dump(2) + "\n");
  WriteText((out / "resolved_config.json").string(),
            ConfigToJson(config).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Dispatch

int CliDispatch(int argc, char** argv) {
  CLI::App app{"Joint pose and segment-scale estimation from marker data"};
  app.require_subcommand(0, 1);

  RunConfig config;
  std::string config_path;
  std::string model_path, out_dir;
  std::vector<std::string> marker_paths;
  bool presolve = false, deterministic = false;
  std::optional<std::uint64_t> seed;
  int trials = 0, frames = 0;

  auto add_common = [&](CLI::App* sub, bool data) {
    sub->add_option("--config", config_path, "JSON run configuration")
        ->check(CLI::ExistingFile);
    if (data) {
      sub->add_option("--model", model_path, "model document (JSON)");
      sub->add_option("--markers", marker_paths, "marker table(s) (CSV)");
    }
    sub->add_flag("--presolve", presolve, "run the pre-solve warm start");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--seed", seed, "random seed");
    sub->add_flag("--deterministic", deterministic,
                  "write zero wall-clock times so outputs are byte-identical");
  };

  CLI::App* solve = app.add_subcommand("solve", "estimate pose and scale for a trial");
  add_common(solve, true);
  CLI::App* audit = app.add_subcommand(
      "audit", "joint solve versus the stage-wise baseline (leakage report)");
  add_common(audit, true);
  audit->add_option("--trials", trials, "synthetic trials when no data is given");
  audit->add_option("--frames", frames, "frames per synthetic trial");
  CLI::App* ablate =
      app.add_subcommand("ablate", "poly / nopoly / classical spine comparison");
  add_common(ablate, false);
  ablate->add_option("--trials", trials, "synthetic spine trials");
  ablate->add_option("--frames", frames, "frames per trial");
  CLI::App* bench = app.add_subcommand("bench", "throughput on a synthetic biped");
  add_common(bench, false);
  bench->add_option("--frames", frames, "frames to solve");
  CLI::App* synth = app.add_subcommand("synth", "generate synthetic data");
  add_common(synth, false);
  std::string topology = "chain", layout = "spread";
  SynthSpec spec;
  bool ambiguous = false;
  synth->add_option("--topology", topology, "chain | biped | spine");
  synth->add_option("--bodies", spec.body_count, "bodies (chain) or levels (spine)");
  synth->add_option("--markers-per-body", spec.markers_per_body);
  synth->add_option("--layout", layout, "spread | clustered");
  synth->add_option("--noise-mm", spec.noise_sigma_mm, "marker noise sigma (mm)");
  synth->add_option("--dropout", spec.dropout_rate, "marker dropout probability");
  synth->add_option("--frames", frames, "frame count");
  synth->add_flag("--ambiguous", ambiguous, "leakage-prone clustered chain");

  if (argc <= 1) {
    std::cout << app.help();
    return kExitUsage;
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  if (app.get_subcommands().empty()) {
    std::cout << app.help();
    return kExitUsage;
  }
  CLI::App* sub = app.get_subcommands().front();

  try {
    if (!config_path.empty()) ApplyConfigJson(ReadJson(config_path), config);
    config.mode = ParseRunMode(sub->get_name());
    if (!model_path.empty()) config.model_path = model_path;
    if (!marker_paths.empty()) config.marker_paths = marker_paths;
    if (!out_dir.empty()) config.output_dir = out_dir;
    if (presolve) config.presolve = true;
    if (deterministic) config.deterministic = true;
    if (seed) config.seed = *seed;
    if (trials > 0) config.trials = trials;
    if (frames > 0) config.frames = frames;

    switch (config.mode) {
      case RunMode::kSolve:
        return CmdSolve(config);
      case RunMode::kAudit:
        return CmdAudit(config);
      case RunMode::kAblate:
        return CmdAblate(config);
      case RunMode::kBench:
        return CmdBench(config);
      case RunMode::kSynth: {
        if (ambiguous) {
          const SynthSpec amb = MakeAmbiguousSpec(config.seed);
          return CmdSynth(config, amb);
        }
        spec.topology = ParseTopology(topology);
        if (layout == "clustered") spec.layout = MarkerLayout::kClustered;
        else if (layout != "spread") throw DataError("unknown layout " + layout);
        spec.Validate();
        return CmdSynth(config, spec);
      }
    }
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::runtime_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace scalepose
