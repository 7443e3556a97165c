#pragma once

#include <atomic>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "pitchlab/config.hpp"
#include "pitchlab/learner.hpp"
#include "pitchlab/nets.hpp"
#include "pitchlab/render.hpp"
#include "pitchlab/replay.hpp"
#include "pitchlab/sim.hpp"

namespace pitchlab::orchestrate {

enum class Stage { ExpertGetUp, ExpertScorer, Distill };

std::string stage_name(Stage s);
Stage stage_from_string(const std::string& name);

struct ReturnStats {
  double mean = 0.0, best = 0.0, worst = 0.0;
  int episodes = 0;
};

struct PolicySnapshot {
  int index = 0;
  int64_t learner_step = 0;
  std::string stage;
  uint64_t config_hash = 0;
  ReturnStats returns;
  diffnet::ParameterSet params;
};

// On-disk ordered snapshot list: snap_NNNNNN.psnap + snap_NNNNNN.kv pairs in
// one directory. The .kv file is written last and acts as the commit marker,
// so a torn write never surfaces as a snapshot. Single writer, many readers.
class SnapshotStore {
 public:
  explicit SnapshotStore(std::string dir);

  int append(const diffnet::ParameterSet& params, int64_t learner_step, const std::string& stage,
             uint64_t config_hash, const ReturnStats& returns);
  size_t count() const;
  int last_index() const;  // 0 when empty
  std::vector<int> indices() const;
  PolicySnapshot load(int index) const;
  PolicySnapshot latest() const;
  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
  std::vector<int> indices_;  // sorted ascending
  std::unique_ptr<std::mutex> mu_;
};

// Uniform draw over snapshots with index <= floor(count/4); uniform over all
// of them when fewer than 4 exist. Empty store is a curriculum error.
PolicySnapshot sample_opponent(const SnapshotStore& store, Rng& rng);

struct StageConfig {
  Stage stage = Stage::ExpertScorer;
  nets::NetworkConfig net;
  sim::SimConfig sim;
  render::RenderConfig render_cfg;
  render::AugmentConfig augment;
  learner::LearnerConfig learn;  // trajectory_length resolved per stage

  int num_actors = 8;
  bool threaded = false;
  int snapshot_every = 500;
  int64_t step_budget = 20000;
  double episode_seconds = 20.0;
  double gaze_episode_frac = 0.15;
  double physics_rand = 0.1;  // +- fraction on restitution/friction/kick impulse
  double ratio_target = 16.0;
  size_t replay_capacity = 100000;
  double mix_ratio = 0.5;
  int min_fill_batches = 2;
  int return_window = 50;
  int eval_every = 0;  // learner steps between eval rows; 0 disables
  int eval_episodes = 8;
  bool export_buffer = false;
  int variant_count = 4;
  std::string scene_dir;  // empty: bake procedurally
  uint64_t seed = 1;
  uint64_t config_hash = 0;

  static StageConfig from(const Config& cfg, Stage stage);
};

// Baked variants, or PANO files from scene_dir when set.
std::vector<render::SceneVariant> load_scenes(const StageConfig& cfg);

enum class OpponentKind { None, UniformRandom, Snapshot };
enum class Pilot { Network, ScriptedGetUp, ScriptedChase };

// Scripted feasibility baselines. Both assume the agent-0 conventions
// (attacks +x) when aiming.
sim::Action scripted_getup(const sim::WorldState& w, int agent);
sim::Action scripted_chase_and_kick(const sim::WorldState& w, int agent,
                                    const sim::SimConfig& cfg);

// Returning false ends the episode early.
using SliceSink = std::function<bool(replay::TrajectorySlice&&)>;

// Per-control-step observer for analysis jobs (probes, gaze study). Fires
// after the pilot consumed the observation, before the physics step, so
// `world` is the state the observation was rendered from and `features` is
// the recurrent output that saw it (null for scripted pilots).
struct StepTrace {
  double time = 0.0;
  const sim::WorldState* world = nullptr;
  const std::vector<float>* features = nullptr;
};
using TraceSink = std::function<void(const StepTrace&)>;

struct EpisodeRequest {
  sim::ScenarioKind scenario = sim::ScenarioKind::FullGame;
  Pilot pilot = Pilot::Network;
  OpponentKind opponent = OpponentKind::UniformRandom;
  const diffnet::ParameterSet* opponent_params = nullptr;  // Snapshot opponents
  const nets::NetworkConfig* opponent_net = nullptr;
  double seconds = 20.0;
  uint64_t seed = 0;            // episode counter; all episode streams derive from it
  uint64_t policy_version = 0;  // snapshot index stamped on emitted slices
  bool act_mean = false;        // deterministic evaluation actions
  bool collect = true;          // emit slices (Network pilot only)
  bool rerender = false;        // record vision observations while acting on state
  SliceSink sink;               // null: slices accumulate in the result
  TraceSink trace;
};

struct EpisodeResult {
  std::vector<replay::TrajectorySlice> slices;
  double episode_return = 0.0;
  int goals_for = 0, goals_against = 0;
  int env_steps = 0;
  double first_upright_time = -1.0;  // seconds; -1 when never upright
  bool faulted = false;
  std::string fault;
};

// One episode of agent 0 under the given policy: per-episode scene/ball/
// physics draws, egocentric rendering when the encoder needs it, exponential
// action smoothing, slices of exactly learn.trajectory_length records
// (trailing partial slices are dropped). Env faults end the episode and are
// reported in the result, never thrown.
EpisodeResult run_episode(const StageConfig& cfg, const diffnet::ParameterSet& policy,
                          const std::vector<render::SceneVariant>& scenes,
                          const EpisodeRequest& req);

struct EvalStats {
  int episodes = 0;
  int wins = 0, draws = 0, losses = 0;
  int scored = 0;  // episodes with at least one goal for
  double mean_return = 0.0;
  double mean_goal_diff = 0.0;
  double upright_within_frac = 0.0;  // episodes upright within `upright_within_s`
};

EvalStats evaluate_policy(const StageConfig& cfg, const diffnet::ParameterSet& policy,
                          OpponentKind opponent, const diffnet::ParameterSet* opponent_params,
                          int episodes, uint64_t seed,
                          sim::ScenarioKind scenario = sim::ScenarioKind::FullGame,
                          double upright_within_s = 2.0);

// State shared between actor loops and the learner loop.
struct ActorChannel {
  replay::ReplayBuffer* sink = nullptr;
  replay::RatioGate* gate = nullptr;
  const SnapshotStore* store = nullptr;
  uint64_t warmup_env_steps = 0;  // actors run unthrottled until this many steps
  std::atomic<uint64_t> episode_counter{0};
  std::atomic<bool> stop{false};

  void push_return(double r);
  double running_return() const;
  ReturnStats window_stats() const;
  void log_fault(const std::string& what);
  std::vector<std::string> faults() const;

  int window_cap = 50;

 private:
  mutable std::mutex mu_;
  std::deque<double> window_;
  int total_episodes_ = 0;
  std::vector<std::string> faults_;
};

// Runs episodes until the stop flag or the episode budget (<= 0: unlimited),
// reading the latest snapshot at each episode start and pausing between
// slices while data is ahead of the learner. Thread-safe; one call per actor.
void actor_loop(const StageConfig& cfg, const std::vector<render::SceneVariant>& scenes,
                ActorChannel& ch, int episode_budget);

struct StageResult {
  std::string snapshots_dir;
  int64_t steps_done = 0;
  uint64_t env_steps = 0;
  uint64_t episodes = 0;
  double final_return = 0.0;
  std::vector<int> snapshot_indices;
  std::vector<int64_t> snapshot_steps;
};

// Stage-1 expert training (get-up or scorer). Creates/resumes the experiment
// directory layout under exp_dir and returns the snapshot store.
SnapshotStore run_stage1(Stage kind, const StageConfig& cfg, const std::string& exp_dir,
                         StageResult* result = nullptr);

// Stage-2 distillation: both teachers required, per-episode opponents drawn
// from the growing store, offline datasets mixed in at cfg.mix_ratio.
void run_stage2(const std::vector<learner::TeacherSpec>& teachers, SnapshotStore& store,
                const std::vector<replay::DatasetFile>& offline, const StageConfig& cfg,
                const std::string& exp_dir, StageResult* result = nullptr);

// Teacher from the newest snapshot in a store.
learner::TeacherSpec teacher_from_store(const std::string& name, const SnapshotStore& store,
                                        const nets::NetworkConfig& net, double return_threshold);

// Plays the state policy and records vision-format observations of the same
// timesteps (the acting network never sees the pixels). Returns slice count.
size_t generate_rerendered_dataset(const StageConfig& state_cfg,
                                   const diffnet::ParameterSet& state_policy,
                                   const std::vector<render::SceneVariant>& scenes, int episodes,
                                   int slice_length, uint64_t seed, const std::string& out_path,
                                   const std::string& experiment_id);

struct AblationResult {
  std::vector<std::string> labels;  // scratch, state_rae, vision_rae
  std::vector<double> final_returns;  // mean final eval return per arm over seeds
  std::string curves_csv, curves_svg;
  std::string state_dataset, vision_dataset;
};

// Fig. 8-style data-source study: matched-budget distill runs from scratch,
// from state-sourced re-rendered data, and from vision-sourced data.
AblationResult run_datasource_ablation(const Config& cfg, const std::string& exp_dir);

}  // namespace pitchlab::orchestrate
