#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pitchlab/orchestrate.hpp"

namespace pitchlab::eval {

struct EvalConfig {
  int agility_trials = 10;
  int scoring_trials = 250;
  double penalty_seconds = 12.0;
  double agility_seconds = 10.0;  // cap per walking/turning/kicking trial
  double kick_window = 0.25;      // seconds after first kick for peak ball speed
  int gaze_episodes = 16;
  int gaze_steps = 100;

  static EvalConfig from(const Config& cfg);
};

// Table row label: walking / turning / kicking / scoring.
std::string metric_name(sim::ScenarioKind kind);

// Top-down paths of one trial, sampled every control step.
struct PathTrace {
  std::vector<Vec2> agent;
  std::vector<Vec2> ball;
};

struct SetPieceResult {
  sim::ScenarioKind kind = sim::ScenarioKind::WalkingSpeed;
  std::vector<double> trials;  // m/s, rad/s, m/s, or 0/1 scored
  double mean = 0.0;
  double std_error = 0.0;  // sample std / sqrt(trials); 0 for a single trial
  std::vector<PathTrace> traces;

  int count() const { return static_cast<int>(trials.size()); }
};

struct SetPieceRun {
  orchestrate::Pilot pilot = orchestrate::Pilot::Network;
  const diffnet::ParameterSet* params = nullptr;  // required for Network
  int trials = 10;
  uint64_t seed = 1;
};

// One scripted measurement per trial:
//   WalkingSpeed  mean body-frame forward speed until first within kick range
//                 of the ball (whole episode when never reached)
//   TurningSpeed  swept |heading delta| / elapsed until facing the ball
//                 within 0.1 rad
//   KickingPower  peak ball speed inside kick_window after the first kick,
//                 0 when the agent never kicks
//   Penalty       1 when agent 0 scores within penalty_seconds, else 0
// The opponent stays stationary. Other scenarios throw ConfigError.
SetPieceResult run_set_piece(const orchestrate::StageConfig& cfg, sim::ScenarioKind kind,
                             const EvalConfig& ev, const SetPieceRun& run);

struct GazeStudyResult {
  // Per-episode per-step gaze error, radians in [0, pi].
  std::vector<std::vector<double>> controlled;
  std::vector<std::vector<double>> fixed;
  double controlled_median = 0.0;
  double fixed_median = 0.0;
  double fov_half = 0.0;  // horizontal half field of view, radians
  int episodes = 0;
  int steps = 0;
};

// Head-pan isolation on the gaze-tracking scenario: the controlled condition
// keeps only the policy's head_pan_rate channel (all body channels zeroed
// before smoothing), the fixed condition zeroes every channel. Both share
// episode seeds, so the ball paths match pairwise.
GazeStudyResult run_gaze_study(const orchestrate::StageConfig& cfg,
                               const diffnet::ParameterSet& policy, const EvalConfig& ev,
                               uint64_t seed);

struct PolicyEvalSet {
  std::string policy;
  std::vector<SetPieceResult> set_pieces;
};

struct ReportInputs {
  std::vector<PolicyEvalSet> policies;
  const GazeStudyResult* gaze = nullptr;  // null: skip gaze artifacts
  std::string metrics_csv;                // training log to plot; empty: skip
  uint64_t config_hash = 0;
};

// Writes table1.csv, per-trial CSVs, trace + learning-curve + gaze SVGs and a
// manifest under out_dir. Returns the artifact paths in written order; empty
// inputs still yield the header-only table and the manifest.
std::vector<std::string> emit_report(const ReportInputs& in, const std::string& out_dir);

struct ComparisonRow {
  std::string policy;
  std::string metric;
  double mean = 0.0;
  double std_error = 0.0;
  int trials = 0;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;
  std::string csv_path;
};

// Trains a state and a vision scorer at the configured budget, then runs all
// four set pieces for both plus the scripted chase baseline. Artifacts land
// under exp_dir; the table is also written to exp_dir/report/state_vs_vision.csv.
ComparisonTable compare_state_vs_vision(const Config& cfg, const std::string& exp_dir);

double median(std::vector<double> v);

}  // namespace pitchlab::eval
