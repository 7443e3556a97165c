#pragma once

#include <array>
#include <string>
#include <vector>

#include "pitchlab/diffnet.hpp"
#include "pitchlab/orchestrate.hpp"

namespace pitchlab::probes {

constexpr double kStdFloor = 1e-3;  // meters

// Diagonal 2-D Gaussian mixture over positions.
struct MixtureDensity {
  std::vector<double> weight;                 // nonnegative, sums to 1
  std::vector<std::array<double, 2>> mean;
  std::vector<std::array<double, 2>> stddev;  // >= kStdFloor

  int components() const { return static_cast<int>(weight.size()); }
  double pdf(double x, double y) const;
  double nll(double x, double y) const;  // -log pdf
};

enum class ProbeTarget { SelfPosition, BallPosition, OpponentPosition };
std::string target_name(ProbeTarget t);
ProbeTarget target_from_string(const std::string& s);

struct ProbeConfig {
  int components = 5;
  double lr = 1e-3;
  int steps = 2000;
  int batch = 256;
  double holdout = 0.25;
  bool egocentric = false;  // ball/opponent labels in the agent body frame
  int heatmap_width = 100;
  int heatmap_height = 80;
  int episodes = 200;
  uint64_t seed = 1;
  static ProbeConfig from(const Config& cfg);
};

// One control step of frozen-policy play: recurrent features plus ground
// truth read straight from the simulator state.
struct ProbeSample {
  std::vector<float> features;
  double time = 0.0;
  std::array<double, 2> self_pos{}, ball_pos{}, opponent_pos{};
  uint8_t ball_visible = 0;

  const std::array<double, 2>& label(ProbeTarget t) const;
};

struct ProbeDataset {
  int feature_width = 0;
  std::vector<ProbeSample> samples;
  std::vector<size_t> episode_starts;  // index of each episode's first sample

  size_t episodes() const { return episode_starts.size(); }
  // Splits off the last `frac` of episodes (at least one when frac > 0).
  std::pair<ProbeDataset, ProbeDataset> split_holdout(double frac) const;
  // Label permutation destroying the feature-label pairing (chance control).
  ProbeDataset permute_labels(Rng& rng) const;
};

ProbeDataset collect_probe_data(const orchestrate::StageConfig& cfg,
                                const diffnet::ParameterSet& policy,
                                const std::vector<render::SceneVariant>& scenes,
                                orchestrate::OpponentKind opponent,
                                const orchestrate::SnapshotStore* pool, int episodes,
                                uint64_t seed, bool egocentric = false);

// Linear map from frozen recurrent features to mixture parameters for one
// target; the policy itself receives no gradient.
struct ProbeHead {
  ProbeTarget target = ProbeTarget::BallPosition;
  int components = 0;
  int feature_width = 0;
  diffnet::BasicParameterSet<double> params;  // "w" [5M, F], "b" [5M]

  MixtureDensity predict(const std::vector<float>& features) const;
};

struct FitResult {
  std::vector<double> nll;  // training NLL per step, before that step's update
};

ProbeHead fit_probe(const diffnet::ParameterSet& policy, const ProbeDataset& data,
                    ProbeTarget target, const ProbeConfig& cfg, FitResult* fit = nullptr);

struct Heatmap {
  int width = 0, height = 0;
  std::vector<double> density;   // row-major [row * width + col], cell centers
  std::vector<uint8_t> display;  // density scaled to [0, 255]
  int argmax_col = 0, argmax_row = 0;
  std::array<double, 2> argmax_pos{};  // pitch coordinates of the argmax cell center
  double cell_dx = 0.0, cell_dy = 0.0;
};

Heatmap heatmap(const MixtureDensity& density, const sim::PitchGeometry& pitch, int width,
                int height);

struct ProbeMetrics {
  size_t in_view_steps = 0, out_view_steps = 0;
  double nll_in = 0.0, nll_out = 0.0, nll_all = 0.0;
  double err_in = 0.0, err_out = 0.0, err_all = 0.0;  // Euclidean argmax error
};

// Visibility split keyed to the ball flag for every target (the study's
// subject is ball tracking in and out of view).
ProbeMetrics eval_probe(const ProbeHead& head, const ProbeDataset& held_out,
                        const sim::PitchGeometry& pitch, int grid_width = 100,
                        int grid_height = 80);

struct ProbeStudyResult {
  std::string metrics_csv;  // one row per (target, visibility)
  std::string track_csv;    // time,target,argmax_x,argmax_y,truth_x,truth_y,nll
  std::vector<std::string> heatmap_paths;
  ProbeMetrics ball, self, opponent;
  double permuted_ball_nll = 0.0;  // held-out NLL of the chance control
};

ProbeStudyResult run_probe_study(const Config& cfg, const std::string& snapshot_dir,
                                 const std::string& out_dir);

}  // namespace pitchlab::probes
