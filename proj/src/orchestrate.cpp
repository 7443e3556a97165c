#include "pitchlab/orchestrate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "pitchlab/report.hpp"

namespace fs = std::filesystem;

namespace pitchlab::orchestrate {

std::string stage_name(Stage s) {
  switch (s) {
    case Stage::ExpertGetUp: return "expert_getup";
    case Stage::ExpertScorer: return "expert_scorer";
    case Stage::Distill: return "distill";
  }
  throw ConfigError("unknown stage");
}

Stage stage_from_string(const std::string& name) {
  if (name == "expert_getup" || name == "getup") return Stage::ExpertGetUp;
  if (name == "expert_scorer" || name == "scorer") return Stage::ExpertScorer;
  if (name == "distill") return Stage::Distill;
  throw ConfigError("unknown stage: " + name);
}

// ---------------------------------------------------------------------------
// Flat key=value files (snapshot metadata, checkpoints).
// ---------------------------------------------------------------------------

namespace {

void write_kv(const std::string& path, const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string body;
  for (const auto& [k, v] : kv) body += k + " = " + v + "\n";
  report::write_text(path, body);
}

std::map<std::string, std::string> read_kv(const std::string& path) {
  std::map<std::string, std::string> out;
  std::istringstream in(report::read_text(path));
  std::string line;
  while (std::getline(in, line)) {
    size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

std::string snap_stem(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "snap_%06d", index);
  return buf;
}

double kv_double(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DataError("snapshot metadata missing key: " + key);
  return std::stod(it->second);
}

std::string kv_str(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw DataError("snapshot metadata missing key: " + key);
  return it->second;
}

}  // namespace

// ---------------------------------------------------------------------------
// SnapshotStore
// ---------------------------------------------------------------------------

SnapshotStore::SnapshotStore(std::string dir)
    : dir_(std::move(dir)), mu_(std::make_unique<std::mutex>()) {
  report::ensure_dir(dir_);
  for (const auto& entry : fs::directory_iterator(dir_)) {
    std::string name = entry.path().filename().string();
    if (name.size() == 14 && name.rfind("snap_", 0) == 0 && name.substr(11) == ".kv")
      indices_.push_back(std::stoi(name.substr(5, 6)));
  }
  std::sort(indices_.begin(), indices_.end());
}

int SnapshotStore::append(const diffnet::ParameterSet& params, int64_t learner_step,
                          const std::string& stage, uint64_t config_hash,
                          const ReturnStats& returns) {
  std::lock_guard lock(*mu_);
  int index = indices_.empty() ? 1 : indices_.back() + 1;
  std::string stem = dir_ + "/" + snap_stem(index);
  diffnet::save_params(stem + ".psnap", params);
  write_kv(stem + ".kv", {{"index", std::to_string(index)},
                          {"learner_step", std::to_string(learner_step)},
                          {"stage", stage},
                          {"config_hash", std::to_string(config_hash)},
                          {"return_mean", report::format_double(returns.mean)},
                          {"return_best", report::format_double(returns.best)},
                          {"return_worst", report::format_double(returns.worst)},
                          {"return_episodes", std::to_string(returns.episodes)}});
  indices_.push_back(index);
  return index;
}

size_t SnapshotStore::count() const {
  std::lock_guard lock(*mu_);
  return indices_.size();
}

int SnapshotStore::last_index() const {
  std::lock_guard lock(*mu_);
  return indices_.empty() ? 0 : indices_.back();
}

std::vector<int> SnapshotStore::indices() const {
  std::lock_guard lock(*mu_);
  return indices_;
}

PolicySnapshot SnapshotStore::load(int index) const {
  std::string stem = dir_ + "/" + snap_stem(index);
  auto kv = read_kv(stem + ".kv");
  PolicySnapshot snap;
  snap.index = static_cast<int>(kv_double(kv, "index"));
  snap.learner_step = static_cast<int64_t>(kv_double(kv, "learner_step"));
  snap.stage = kv_str(kv, "stage");
  snap.config_hash = std::stoull(kv_str(kv, "config_hash"));
  snap.returns.mean = kv_double(kv, "return_mean");
  snap.returns.best = kv_double(kv, "return_best");
  snap.returns.worst = kv_double(kv, "return_worst");
  snap.returns.episodes = static_cast<int>(kv_double(kv, "return_episodes"));
  snap.params = diffnet::load_params(stem + ".psnap");
  return snap;
}

PolicySnapshot SnapshotStore::latest() const {
  int index = last_index();
  if (index == 0) throw DataError("snapshot store empty: " + dir_);
  return load(index);
}

PolicySnapshot sample_opponent(const SnapshotStore& store, Rng& rng) {
  std::vector<int> idx = store.indices();
  if (idx.empty()) throw DataError("curriculum error: empty snapshot store: " + store.dir());
  if (idx.size() >= 4) {
    int limit = static_cast<int>(idx.size()) / 4;
    idx.erase(std::remove_if(idx.begin(), idx.end(), [&](int i) { return i > limit; }),
              idx.end());
    if (idx.empty()) throw DataError("curriculum error: no snapshot with index <= count/4");
  }
  return store.load(idx[rng.uniform_int(idx.size())]);
}

// ---------------------------------------------------------------------------
// StageConfig
// ---------------------------------------------------------------------------

StageConfig StageConfig::from(const Config& cfg, Stage stage) {
  StageConfig s;
  s.stage = stage;
  s.net = nets::NetworkConfig::from(cfg);
  s.sim = sim::SimConfig::from(cfg);
  s.render_cfg = render::RenderConfig::from(cfg);
  s.augment = render::AugmentConfig::from(cfg);
  s.learn = learner::LearnerConfig::from(cfg);
  s.num_actors = static_cast<int>(cfg.get_int("orchestrate.num_actors"));
  s.threaded = cfg.get_string("orchestrate.mode") == "threads";
  if (!s.threaded && cfg.get_string("orchestrate.mode") != "sync")
    throw ConfigError("orchestrate.mode must be sync or threads");
  s.snapshot_every = static_cast<int>(cfg.get_int("orchestrate.snapshot_every"));
  s.step_budget = cfg.get_int("orchestrate.learner_steps");
  s.episode_seconds = cfg.get_double(stage == Stage::ExpertGetUp
                                         ? "orchestrate.getup_episode_seconds"
                                         : "orchestrate.episode_seconds");
  s.gaze_episode_frac = cfg.get_double("orchestrate.gaze_episode_frac");
  s.physics_rand = cfg.get_double("orchestrate.physics_rand");
  s.ratio_target = cfg.get_double("replay.ratio");
  s.replay_capacity = static_cast<size_t>(cfg.get_int("replay.capacity"));
  s.mix_ratio = cfg.get_double("replay.mix_ratio");
  s.min_fill_batches = static_cast<int>(cfg.get_int("replay.min_fill"));
  s.return_window = static_cast<int>(cfg.get_int("orchestrate.return_window"));
  s.eval_every = static_cast<int>(cfg.get_int("orchestrate.eval_every"));
  s.eval_episodes = static_cast<int>(cfg.get_int("orchestrate.eval_episodes"));
  s.export_buffer = cfg.get_bool("orchestrate.export_buffer");
  s.variant_count = static_cast<int>(cfg.get_int("render.variant_count"));
  s.scene_dir = cfg.get_string("render.scene_dir");
  s.seed = static_cast<uint64_t>(cfg.get_int("seed"));
  s.config_hash = cfg.hash();
  if (stage == Stage::Distill)
    s.learn.trajectory_length = static_cast<int>(cfg.get_int("learner.trajectory_length_distill"));
  if (stage == Stage::ExpertGetUp) {
    // Pure get-up task: upright time is the only objective.
    s.sim.w_scoring = 0.0;
    s.sim.w_velocity_to_ball = 0.0;
    s.sim.w_ball_to_goal = 0.0;
    s.sim.w_upright = 1.0;
  }
  return s;
}

std::vector<render::SceneVariant> load_scenes(const StageConfig& cfg) {
  if (cfg.scene_dir.empty()) return render::bake_default_variants(cfg.variant_count);
  std::vector<render::SceneVariant> out;
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(cfg.scene_dir))
    if (entry.path().extension() == ".pano") paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());
  for (const auto& p : paths) out.push_back(render::load_variant(p));
  if (out.empty()) throw ConfigError("render.scene_dir has no .pano files: " + cfg.scene_dir);
  return out;
}

// ---------------------------------------------------------------------------
// Scripted baselines
// ---------------------------------------------------------------------------

sim::Action scripted_getup(const sim::WorldState& w, int agent) {
  const auto& body = w.agents[agent];
  sim::Action a;
  if (body.fallen || std::abs(body.tilt) > 0.2)
    a.tilt_torque = body.tilt > 0 ? -1.0 : 1.0;
  return a;
}

sim::Action scripted_chase_and_kick(const sim::WorldState& w, int agent,
                                    const sim::SimConfig& cfg) {
  const auto& me = w.agents[agent];
  if (me.fallen) return scripted_getup(w, agent);

  Vec2 ball = w.ball_position;
  Vec2 goal = cfg.pitch.goal_center(sim::target_end(agent));
  Vec2 ball_to_goal = goal - ball;
  if (ball_to_goal.norm() < 1e-9) ball_to_goal = {1.0, 0.0};
  ball_to_goal = ball_to_goal.normalized();
  // Stand just inside kick range on the far side of the ball from the goal.
  double standoff = 0.5 * (cfg.agent_radius + w.ball_params.radius + cfg.kick_range);
  Vec2 spot = ball - ball_to_goal * standoff;

  Vec2 to_ball = ball - me.position;
  double ball_dist = to_ball.norm();
  double ball_bearing = wrap_angle(std::atan2(to_ball.y, to_ball.x) - me.heading);

  sim::Action a;
  // Head tracks the ball.
  a.head_pan_rate = clamp(5.0 * (ball_bearing - me.head_pan), -cfg.max_head_pan_rate,
                          cfg.max_head_pan_rate);
  a.tilt_torque = clamp(-2.0 * me.tilt, -1.0, 1.0);

  Vec2 to_spot = spot - me.position;
  double ahead = (me.position - ball).dot(ball_to_goal);  // > 0: goal side of the ball
  if (to_spot.norm() > 0.12 && ball_dist > cfg.kick_range) {
    // Approach leg. From the goal side, orbit the ball instead of walking
    // through it (a straight line would dribble it toward our own goal).
    Vec2 waypoint = spot;
    if (ahead > -0.05 && ball_dist < 0.9) {
      Vec2 perp{-ball_to_goal.y, ball_to_goal.x};
      double side = (me.position - ball).dot(perp) >= 0 ? 1.0 : -1.0;
      waypoint = ball + perp * (side * 3.0 * (cfg.agent_radius + w.ball_params.radius));
    }
    Vec2 to_wp = waypoint - me.position;
    double wp_bearing = wrap_angle(std::atan2(to_wp.y, to_wp.x) - me.heading);
    a.turn = clamp(3.0 * wp_bearing, -cfg.max_turn, cfg.max_turn);
    a.forward = std::abs(wp_bearing) < 1.0 ? cfg.max_forward * std::cos(wp_bearing) : 0.0;
    if (a.forward < 0) a.forward = 0;
  } else {
    // Kicking leg: square up so the heading carries the ball toward the goal.
    double goal_heading = std::atan2(ball_to_goal.y, ball_to_goal.x);
    double align = wrap_angle(goal_heading - me.heading);
    a.turn = clamp(3.0 * (std::abs(ball_bearing) > 0.4 ? ball_bearing : align), -cfg.max_turn,
                   cfg.max_turn);
    a.forward = ball_dist > cfg.kick_range * 0.8 ? 0.3 * cfg.max_forward : 0.0;
    if (ball_dist <= cfg.kick_range && std::abs(ball_bearing) < 0.5 && std::abs(align) < 0.45 &&
        me.kick_cooldown <= 0.0)
      a.kick = 1.0;
  }
  return a;
}

// ---------------------------------------------------------------------------
// run_episode
// ---------------------------------------------------------------------------

namespace {

sim::Action to_action(const std::vector<double>& v) {
  sim::Action a;
  for (int i = 0; i < sim::kActionDim; ++i) a[i] = v[i];
  return a;
}

sim::Action uniform_action(Rng& rng, const sim::SimConfig& cfg) {
  sim::Action lo = cfg.bounds_lo(), hi = cfg.bounds_hi();
  sim::Action a;
  for (int i = 0; i < sim::kActionDim; ++i) a[i] = rng.uniform(lo[i], hi[i]);
  return a;
}

}  // namespace

EpisodeResult run_episode(const StageConfig& cfg, const diffnet::ParameterSet& policy,
                          const std::vector<render::SceneVariant>& scenes,
                          const EpisodeRequest& req) {
  EpisodeResult result;
  Rng er = Rng::derive(cfg.seed, "episode", req.seed);
  uint64_t world_seed = er.next_u64();
  Rng scene_rng = er.split("scene");
  Rng ball_rng = er.split("ball");
  Rng phys_rng = er.split("physics");
  Rng pol_rng = er.split("policy");
  Rng opp_rng = er.split("opponent");
  Rng aug_rng = er.split("augment");

  // Per-episode physics randomization.
  sim::SimConfig world_cfg = cfg.sim;
  double r = cfg.physics_rand;
  double restitution_scale = 1.0 + phys_rng.uniform(-r, r);
  world_cfg.pitch.wall_restitution *= restitution_scale;
  world_cfg.agent_restitution *= restitution_scale;
  world_cfg.ball_friction_decel *= 1.0 + phys_rng.uniform(-r, r);
  world_cfg.kick_impulse *= 1.0 + phys_rng.uniform(-r, r);

  sim::WorldState world = sim::reset(world_cfg, req.scenario, world_seed);
  world.ball_params = render::randomize_ball(ball_rng, world.ball_params);

  bool my_vision = req.pilot == Pilot::Network &&
                   cfg.net.encoder == nets::NetworkConfig::Encoder::Vision;
  bool opp_vision = req.opponent == OpponentKind::Snapshot && req.opponent_net &&
                    req.opponent_net->encoder == nets::NetworkConfig::Encoder::Vision;
  bool need_scene = my_vision || opp_vision || req.rerender;
  const render::SceneVariant* scene = nullptr;
  if (need_scene) {
    if (scenes.empty()) throw ConfigError("vision episode without scene variants");
    scene = &render::sample_scene(scene_rng, scenes);
  }

  nets::Actor me(cfg.net, policy);
  std::optional<nets::Actor> opp;
  if (req.opponent == OpponentKind::Snapshot) {
    if (!req.opponent_params || !req.opponent_net)
      throw ConfigError("snapshot opponent without parameters");
    opp.emplace(*req.opponent_net, *req.opponent_params);
  }

  int L = cfg.learn.trajectory_length;
  bool collect = req.collect && req.pilot == Pilot::Network;
  int total_steps = static_cast<int>(std::floor(req.seconds / world_cfg.dt + 0.5));

  sim::Action my_prev, opp_prev;
  replay::TrajectorySlice cur;
  cur.policy_version = req.policy_version;
  auto begin_slice = [&] {
    cur.records.clear();
    cur.init_h.assign(me.state.h.begin(), me.state.h.end());
    cur.init_c.assign(me.state.c.begin(), me.state.c.end());
  };

  for (int t = 0; t < total_steps; ++t) {
    try {
      render::Frame my_frame;
      const render::Frame* my_frame_ptr = nullptr;
      if (my_vision || req.rerender) {
        my_frame = render::render_egocentric(world, 0, *scene, cfg.render_cfg);
        my_frame = render::augment(my_frame, aug_rng, cfg.augment);
        my_frame_ptr = &my_frame;
      }

      sim::Action my_cmd;
      replay::SliceRecord rec;
      bool have_rec = false;
      if (req.pilot == Pilot::ScriptedGetUp) {
        my_cmd = scripted_getup(world, 0);
      } else if (req.pilot == Pilot::ScriptedChase) {
        my_cmd = scripted_chase_and_kick(world, 0, world_cfg);
      } else {
        nets::Observation act_obs = nets::make_observation(
            world, 0, my_prev, my_vision ? my_frame_ptr : nullptr, cfg.net.encoder, world_cfg);
        if (collect && cur.records.empty()) begin_slice();
        diffnet::GaussianActionDistribution dist = me.step(act_obs);
        std::vector<double> a = req.act_mean ? dist.mean : dist.sample(pol_rng);
        my_cmd = to_action(a);
        if (collect) {
          if (req.rerender)
            rec.obs = nets::make_observation(world, 0, my_prev, my_frame_ptr,
                                             nets::NetworkConfig::Encoder::Vision, world_cfg);
          else
            rec.obs = std::move(act_obs);
          for (int i = 0; i < sim::kActionDim; ++i) {
            rec.action[i] = static_cast<float>(a[i]);
            rec.behavior_mean[i] = static_cast<float>(dist.mean[i]);
            rec.behavior_std[i] = static_cast<float>(dist.stddev[i]);
          }
          rec.behavior_log_prob = static_cast<float>(dist.log_prob(a));
          rec.episode_start = t == 0 ? 1 : 0;
          have_rec = true;
        }
      }

      if (req.trace) {
        StepTrace tr;
        tr.time = world.time;
        tr.world = &world;
        tr.features = req.pilot == Pilot::Network ? &me.state.h : nullptr;
        req.trace(tr);
      }

      sim::Action opp_cmd;
      if (req.opponent == OpponentKind::UniformRandom) {
        opp_cmd = uniform_action(opp_rng, world_cfg);
      } else if (req.opponent == OpponentKind::Snapshot) {
        render::Frame opp_frame;
        const render::Frame* opp_frame_ptr = nullptr;
        if (opp_vision) {
          opp_frame = render::render_egocentric(world, 1, *scene, cfg.render_cfg);
          opp_frame_ptr = &opp_frame;
        }
        nets::Observation opp_obs = nets::make_observation(world, 1, opp_prev, opp_frame_ptr,
                                                           req.opponent_net->encoder, world_cfg);
        opp_cmd = to_action(opp->step(opp_obs).sample(opp_rng));
      }

      sim::Action my_u = sim::smooth_action(my_prev, my_cmd, world_cfg);
      sim::Action opp_u = sim::smooth_action(opp_prev, opp_cmd, world_cfg);
      auto [next, events] = sim::step(world, {my_u, opp_u}, world_cfg);
      sim::RewardComponents rew = sim::compute_rewards(world, next, events, 0, world_cfg);

      if (have_rec) {
        rec.reward = rew;
        cur.records.push_back(std::move(rec));
        if (static_cast<int>(cur.records.size()) == L) {
          replay::TrajectorySlice done = std::move(cur);
          cur = replay::TrajectorySlice{};
          cur.policy_version = req.policy_version;
          if (req.sink) {
            if (!req.sink(std::move(done))) return result;
          } else {
            result.slices.push_back(std::move(done));
          }
        }
      }

      result.episode_return += rew.total;
      for (const auto& ev : events) {
        if (ev.type != sim::EventType::Goal) continue;
        (ev.agent == 0 ? result.goals_for : result.goals_against)++;
      }
      if (result.first_upright_time < 0 && !next.agents[0].fallen)
        result.first_upright_time = next.time;
      ++result.env_steps;
      my_prev = my_u;
      opp_prev = opp_u;
      world = next;
    } catch (const SimFault& e) {
      result.faulted = true;
      result.fault = e.what();
      break;
    } catch (const NetError& e) {
      result.faulted = true;
      result.fault = e.what();
      break;
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

EvalStats evaluate_policy(const StageConfig& cfg, const diffnet::ParameterSet& policy,
                          OpponentKind opponent, const diffnet::ParameterSet* opponent_params,
                          int episodes, uint64_t seed, sim::ScenarioKind scenario,
                          double upright_within_s) {
  EvalStats stats;
  std::vector<render::SceneVariant> scenes;
  if (cfg.net.encoder == nets::NetworkConfig::Encoder::Vision) scenes = load_scenes(cfg);
  int upright = 0;
  for (int i = 0; i < episodes; ++i) {
    EpisodeRequest req;
    req.scenario = scenario;
    req.opponent = opponent;
    req.opponent_params = opponent_params;
    req.opponent_net = &cfg.net;
    req.seconds = cfg.episode_seconds;
    req.seed = seed * 1000003ull + static_cast<uint64_t>(i);
    req.act_mean = true;
    req.collect = false;
    EpisodeResult ep = run_episode(cfg, policy, scenes, req);
    ++stats.episodes;
    stats.mean_return += ep.episode_return;
    int diff = ep.goals_for - ep.goals_against;
    stats.mean_goal_diff += diff;
    if (diff > 0)
      ++stats.wins;
    else if (diff < 0)
      ++stats.losses;
    else
      ++stats.draws;
    if (ep.goals_for > 0) ++stats.scored;
    if (ep.first_upright_time >= 0 && ep.first_upright_time <= upright_within_s) ++upright;
  }
  if (stats.episodes > 0) {
    stats.mean_return /= stats.episodes;
    stats.mean_goal_diff /= stats.episodes;
    stats.upright_within_frac = static_cast<double>(upright) / stats.episodes;
  }
  return stats;
}

// ---------------------------------------------------------------------------
// ActorChannel
// ---------------------------------------------------------------------------

void ActorChannel::push_return(double r) {
  std::lock_guard lock(mu_);
  window_.push_back(r);
  if (static_cast<int>(window_.size()) > window_cap) window_.pop_front();
  ++total_episodes_;
}

double ActorChannel::running_return() const {
  std::lock_guard lock(mu_);
  if (window_.empty()) return 0.0;
  double s = 0.0;
  for (double v : window_) s += v;
  return s / static_cast<double>(window_.size());
}

ReturnStats ActorChannel::window_stats() const {
  std::lock_guard lock(mu_);
  ReturnStats st;
  st.episodes = total_episodes_;
  if (window_.empty()) return st;
  st.best = st.worst = window_.front();
  for (double v : window_) {
    st.mean += v;
    st.best = std::max(st.best, v);
    st.worst = std::min(st.worst, v);
  }
  st.mean /= static_cast<double>(window_.size());
  return st;
}

void ActorChannel::log_fault(const std::string& what) {
  std::lock_guard lock(mu_);
  faults_.push_back(what);
}

std::vector<std::string> ActorChannel::faults() const {
  std::lock_guard lock(mu_);
  return faults_;
}

// ---------------------------------------------------------------------------
// Episode construction shared by the sync loop and actor threads
// ---------------------------------------------------------------------------

namespace {

struct EpisodePlan {
  EpisodeRequest req;
  PolicySnapshot policy;    // acting snapshot
  PolicySnapshot opponent;  // Snapshot opponents only
};

// Draws the scenario and opponent for one episode. Everything derives from
// the episode counter so the sync mode is replayable.
EpisodePlan plan_episode(const StageConfig& cfg, const SnapshotStore& store, uint64_t episode) {
  EpisodePlan plan;
  plan.policy = store.latest();
  plan.req.seed = episode;
  plan.req.policy_version = static_cast<uint64_t>(plan.policy.index);
  plan.req.seconds = cfg.episode_seconds;
  switch (cfg.stage) {
    case Stage::ExpertGetUp:
      plan.req.scenario = sim::ScenarioKind::Penalty;  // starts fallen
      plan.req.opponent = OpponentKind::None;
      break;
    case Stage::ExpertScorer:
    case Stage::Distill: {
      Rng rng = Rng::derive(cfg.seed, "scenario", episode);
      plan.req.scenario = rng.uniform() < cfg.gaze_episode_frac ? sim::ScenarioKind::GazeTracking
                                                                : sim::ScenarioKind::FullGame;
      if (cfg.stage == Stage::ExpertScorer) {
        plan.req.opponent = OpponentKind::UniformRandom;
      } else {
        Rng opp_rng = Rng::derive(cfg.seed, "opponent-draw", episode);
        plan.opponent = sample_opponent(store, opp_rng);
        plan.req.opponent = OpponentKind::Snapshot;
        plan.req.opponent_net = &cfg.net;
      }
      break;
    }
  }
  return plan;
}

// Rebinds the opponent pointer after the plan lands at its final address.
void bind_plan(EpisodePlan& plan) {
  if (plan.req.opponent == OpponentKind::Snapshot)
    plan.req.opponent_params = &plan.opponent.params;
}

}  // namespace

// Isolated env faults are tolerated and logged; this many in a row means the
// policy or env is systemically broken and the run should abort resumably.
constexpr int kMaxConsecutiveFaults = 25;

void actor_loop(const StageConfig& cfg, const std::vector<render::SceneVariant>& scenes,
                ActorChannel& ch, int episode_budget) {
  int done = 0, consecutive_faults = 0;
  while (!ch.stop.load() && (episode_budget <= 0 || done < episode_budget)) {
    uint64_t episode = ch.episode_counter.fetch_add(1);
    EpisodePlan plan = plan_episode(cfg, *ch.store, episode);
    bind_plan(plan);
    plan.req.sink = [&](replay::TrajectorySlice&& slice) {
      int len = slice.length();
      ch.sink->append(std::move(slice));
      ch.gate->note_env_steps(static_cast<uint64_t>(len));
      while (!ch.stop.load() && !ch.gate->actor_permitted(ch.warmup_env_steps))
        std::this_thread::sleep_for(std::chrono::microseconds(200));
      return !ch.stop.load();
    };
    EpisodeResult ep = run_episode(cfg, plan.policy.params, scenes, plan.req);
    if (ep.faulted) {
      ch.log_fault("episode " + std::to_string(episode) + ": " + ep.fault);
      if (++consecutive_faults >= kMaxConsecutiveFaults) {
        ch.log_fault("actor aborted after " + std::to_string(consecutive_faults) +
                     " consecutive episode faults");
        ch.stop = true;
        return;
      }
    } else {
      consecutive_faults = 0;
      ch.push_return(ep.episode_return);
    }
    ++done;
  }
}

// ---------------------------------------------------------------------------
// Training loop (both stages)
// ---------------------------------------------------------------------------

namespace {

// Append-aware CSV: writes the header only when creating the file, so a
// resumed run keeps one continuous table.
class AppendCsv {
 public:
  AppendCsv(const std::string& path, const std::vector<std::string>& columns) {
    bool fresh = !fs::exists(path) || fs::file_size(path) == 0;
    out_.open(path, std::ios::app);
    if (!out_) throw IoError("cannot open " + path);
    if (fresh) {
      for (size_t i = 0; i < columns.size(); ++i)
        out_ << (i ? "," : "") << columns[i];
      out_ << "\n";
    }
  }
  void row(const std::vector<double>& values) {
    for (size_t i = 0; i < values.size(); ++i)
      out_ << (i ? "," : "") << report::format_double(values[i]);
    out_ << "\n";
    out_.flush();
  }

 private:
  std::ofstream out_;
};

struct Checkpoint {
  int64_t step = 0;
  uint64_t episodes = 0;
  uint64_t env_steps = 0;
  double eta = 1.0, alpha_mean = 1.0, alpha_cov = 1.0;
  std::vector<double> lambdas;
  std::vector<double> window;
};

void write_checkpoint(const std::string& exp_dir, const learner::LearnerState& ls,
                      const ActorChannel& ch, const replay::RatioGate& gate) {
  std::string dir = exp_dir + "/checkpoint";
  report::ensure_dir(dir);
  diffnet::save_params(dir + "/policy.psnap", ls.policy);
  diffnet::save_params(dir + "/critic.psnap", ls.critic);
  diffnet::save_params(dir + "/policy_target.psnap", ls.policy_target);
  diffnet::save_params(dir + "/critic_target.psnap", ls.critic_target);
  std::string lambdas, window;
  for (size_t i = 0; i < ls.lambdas.size(); ++i)
    lambdas += (i ? ";" : "") + report::format_double(ls.lambdas[i]);
  ReturnStats st = ch.window_stats();
  // Persist the running mean as a single pseudo-entry; the exact window
  // contents are actor-order dependent and not needed for resumption.
  if (st.episodes > 0) window = report::format_double(st.mean);
  write_kv(exp_dir + "/checkpoint.kv",
           {{"step", std::to_string(ls.step_count)},
            {"episodes", std::to_string(ch.episode_counter.load())},
            {"env_steps", std::to_string(gate.env_steps())},
            {"learner_steps", std::to_string(gate.learner_steps())},
            {"eta", report::format_double(ls.duals.eta)},
            {"alpha_mean", report::format_double(ls.duals.alpha_mean)},
            {"alpha_cov", report::format_double(ls.duals.alpha_cov)},
            {"lambdas", lambdas},
            {"window", window},
            {"total_episodes", std::to_string(ch.window_stats().episodes)}});
}

std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::istringstream in(s);
  std::string tok;
  while (std::getline(in, tok, ';'))
    if (!tok.empty()) out.push_back(std::stod(tok));
  return out;
}

struct RunState {
  learner::LearnerState* ls;
  replay::ReplayBuffer* online;
  const std::vector<replay::DatasetFile>* offline;
  replay::RatioGate* gate;
  SnapshotStore* store;
  ActorChannel* ch;
  AppendCsv* metrics;
  AppendCsv* eval_csv;
  const StageConfig* cfg;
  const std::string* exp_dir;
  Rng sample_rng;
  size_t warm_slices = 0;
  int64_t budget = 0;
};

void snapshot_and_checkpoint(RunState& rs) {
  rs.store->append(rs.ls->policy, rs.ls->step_count, stage_name(rs.cfg->stage),
                   rs.cfg->config_hash, rs.ch->window_stats());
  write_checkpoint(*rs.exp_dir, *rs.ls, *rs.ch, *rs.gate);
}

void maybe_eval(RunState& rs) {
  if (rs.cfg->eval_every <= 0 || rs.ls->step_count % rs.cfg->eval_every != 0) return;
  OpponentKind kind =
      rs.cfg->stage == Stage::ExpertGetUp ? OpponentKind::None : OpponentKind::UniformRandom;
  sim::ScenarioKind scenario = rs.cfg->stage == Stage::ExpertGetUp ? sim::ScenarioKind::Penalty
                                                                   : sim::ScenarioKind::FullGame;
  EvalStats ev = evaluate_policy(*rs.cfg, rs.ls->policy, kind, nullptr, rs.cfg->eval_episodes,
                                 rs.cfg->seed + 7777, scenario);
  rs.eval_csv->row({static_cast<double>(rs.ls->step_count), ev.mean_return, ev.mean_goal_diff,
                    static_cast<double>(ev.wins), static_cast<double>(ev.scored),
                    ev.upright_within_frac});
}

// One learner update; returns false once the budget is exhausted.
bool learner_tick(RunState& rs) {
  if (rs.ls->step_count >= rs.budget) return false;
  std::vector<replay::TrajectorySlice> batch =
      replay::sample_batch(*rs.online, *rs.offline, rs.offline->empty() ? 0.0 : rs.cfg->mix_ratio,
                           static_cast<size_t>(rs.cfg->learn.batch_size), rs.sample_rng);
  std::vector<const replay::TrajectorySlice*> ptrs;
  ptrs.reserve(batch.size());
  for (const auto& s : batch) ptrs.push_back(&s);
  learner::StepMetrics m = learner::learner_step(*rs.ls, ptrs, rs.ch->running_return());
  rs.gate->note_learner_step();
  rs.metrics->row(learner::metrics_row(m));
  if (rs.ls->step_count % rs.cfg->snapshot_every == 0) snapshot_and_checkpoint(rs);
  maybe_eval(rs);
  return rs.ls->step_count < rs.budget;
}

bool learner_ready(const RunState& rs) {
  return rs.gate->learner_permitted() && rs.online->size() >= rs.warm_slices;
}

void run_training(const StageConfig& cfg, SnapshotStore& store,
                  const std::vector<learner::TeacherSpec>& teachers,
                  const std::vector<replay::DatasetFile>& offline, const std::string& exp_dir,
                  StageResult* result) {
  if (cfg.learn.trajectory_length >
      static_cast<int>(std::floor(cfg.episode_seconds / cfg.sim.dt + 0.5)))
    throw ConfigError("episode shorter than one trajectory slice");
  report::ensure_dir(exp_dir);
  report::ensure_dir(exp_dir + "/datasets");
  report::ensure_dir(exp_dir + "/report");

  std::vector<render::SceneVariant> scenes = load_scenes(cfg);
  learner::LearnerState ls(cfg.net, cfg.learn, cfg.seed);
  for (const auto& t : teachers) ls.add_teacher(t);

  replay::ReplayBuffer online(cfg.replay_capacity);
  replay::RatioGate gate(cfg.ratio_target);
  ActorChannel ch;
  ch.sink = &online;
  ch.gate = &gate;
  ch.store = &store;
  ch.window_cap = cfg.return_window;
  ch.warmup_env_steps = static_cast<uint64_t>(cfg.min_fill_batches) *
                        static_cast<uint64_t>(cfg.learn.batch_size) *
                        static_cast<uint64_t>(cfg.learn.trajectory_length);

  // Resume from the last checkpoint when one exists; otherwise seed the store
  // with the initial policy so actors and opponents always have a source.
  if (fs::exists(exp_dir + "/checkpoint.kv")) {
    auto kv = read_kv(exp_dir + "/checkpoint.kv");
    ls.policy = diffnet::load_params(exp_dir + "/checkpoint/policy.psnap");
    ls.critic = diffnet::load_params(exp_dir + "/checkpoint/critic.psnap");
    ls.policy_target = diffnet::load_params(exp_dir + "/checkpoint/policy_target.psnap");
    ls.critic_target = diffnet::load_params(exp_dir + "/checkpoint/critic_target.psnap");
    ls.step_count = static_cast<int64_t>(kv_double(kv, "step"));
    ls.duals.eta = kv_double(kv, "eta");
    ls.duals.alpha_mean = kv_double(kv, "alpha_mean");
    ls.duals.alpha_cov = kv_double(kv, "alpha_cov");
    std::vector<double> lambdas = parse_list(kv_str(kv, "lambdas"));
    if (lambdas.size() == ls.lambdas.size()) ls.lambdas = lambdas;
    ch.episode_counter = static_cast<uint64_t>(kv_double(kv, "episodes"));
    for (double v : parse_list(kv_str(kv, "window"))) ch.push_return(v);
    gate.note_env_steps(static_cast<uint64_t>(kv_double(kv, "env_steps")));
    for (int64_t i = 0, n = static_cast<int64_t>(kv_double(kv, "learner_steps")); i < n; ++i)
      gate.note_learner_step();
  } else if (store.count() == 0) {
    store.append(ls.policy, 0, stage_name(cfg.stage), cfg.config_hash, ReturnStats{});
    write_checkpoint(exp_dir, ls, ch, gate);
  }

  AppendCsv metrics(exp_dir + "/metrics.csv", learner::metrics_header(ls.teachers));
  AppendCsv eval_csv(exp_dir + "/report/eval_returns.csv",
                     {"step", "mean_return", "mean_goal_diff", "wins", "scored", "upright_frac"});

  RunState rs;
  rs.ls = &ls;
  rs.online = &online;
  rs.offline = &offline;
  rs.gate = &gate;
  rs.store = &store;
  rs.ch = &ch;
  rs.metrics = &metrics;
  rs.eval_csv = &eval_csv;
  rs.cfg = &cfg;
  rs.exp_dir = &exp_dir;
  rs.sample_rng = Rng::derive(cfg.seed, "sample-batch", 0);
  rs.warm_slices = static_cast<size_t>(cfg.min_fill_batches) *
                   static_cast<size_t>(cfg.learn.batch_size);
  rs.budget = cfg.step_budget;

  auto finish = [&](bool faulted) {
    write_checkpoint(exp_dir, ls, ch, gate);
    std::vector<std::string> faults = ch.faults();
    if (!faults.empty()) {
      std::string log;
      for (const auto& f : faults) log += f + "\n";
      report::write_text(exp_dir + "/report/faults.log", log);
    }
    if (!faulted && cfg.export_buffer) {
      std::vector<replay::TrajectorySlice> all = online.snapshot();
      if (!all.empty())
        replay::export_dataset(all, exp_dir + "/datasets/replay_export.raed",
                               stage_name(cfg.stage) + "-" + std::to_string(cfg.seed));
    }
    if (result) {
      result->snapshots_dir = store.dir();
      result->steps_done = ls.step_count;
      result->env_steps = gate.env_steps();
      result->episodes = ch.episode_counter.load();
      result->final_return = ch.running_return();
      result->snapshot_indices = store.indices();
      result->snapshot_steps.clear();
      for (int i : result->snapshot_indices)
        result->snapshot_steps.push_back(store.load(i).learner_step);
    }
  };

  try {
    if (!cfg.threaded) {
      // Deterministic interleave: episodes drive; each flushed slice lets the
      // learner drain whatever the ratio gate permits.
      int consecutive_faults = 0;
      while (ls.step_count < rs.budget) {
        uint64_t episode = ch.episode_counter.fetch_add(1);
        EpisodePlan plan = plan_episode(cfg, store, episode);
        bind_plan(plan);
        plan.req.sink = [&](replay::TrajectorySlice&& slice) {
          int len = slice.length();
          online.append(std::move(slice));
          gate.note_env_steps(static_cast<uint64_t>(len));
          bool more = true;
          while (more && learner_ready(rs)) more = learner_tick(rs);
          return more;
        };
        EpisodeResult ep = run_episode(cfg, plan.policy.params, scenes, plan.req);
        if (ep.faulted) {
          ch.log_fault("episode " + std::to_string(episode) + ": " + ep.fault);
          if (++consecutive_faults >= kMaxConsecutiveFaults)
            throw NetError("actor episodes failing repeatedly; last fault: " + ep.fault);
        } else {
          consecutive_faults = 0;
          ch.push_return(ep.episode_return);
        }
      }
    } else {
      std::vector<std::thread> actors;
      actors.reserve(cfg.num_actors);
      for (int i = 0; i < cfg.num_actors; ++i)
        actors.emplace_back([&] { actor_loop(cfg, scenes, ch, -1); });
      auto join_all = [&] {
        ch.stop = true;
        for (auto& t : actors) t.join();
      };
      try {
        bool more = true;
        while (more && ls.step_count < rs.budget) {
          if (ch.stop.load())
            throw NetError("actor loops aborted; see report/faults.log");
          if (!learner_ready(rs)) {
            std::this_thread::sleep_for(std::chrono::microseconds(200));
            continue;
          }
          more = learner_tick(rs);
        }
      } catch (...) {
        join_all();
        throw;
      }
      join_all();
    }
  } catch (...) {
    if (cfg.threaded) ch.stop = true;
    finish(true);
    throw;
  }
  finish(false);
}

}  // namespace

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

SnapshotStore run_stage1(Stage kind, const StageConfig& cfg, const std::string& exp_dir,
                         StageResult* result) {
  if (kind != Stage::ExpertGetUp && kind != Stage::ExpertScorer)
    throw ConfigError("run_stage1 takes an expert stage");
  if (cfg.stage != kind) throw ConfigError("stage config built for a different stage");
  report::ensure_dir(exp_dir);
  SnapshotStore store(exp_dir + "/snapshots");
  run_training(cfg, store, {}, {}, exp_dir, result);
  return store;
}

void run_stage2(const std::vector<learner::TeacherSpec>& teachers, SnapshotStore& store,
                const std::vector<replay::DatasetFile>& offline, const StageConfig& cfg,
                const std::string& exp_dir, StageResult* result) {
  if (cfg.stage != Stage::Distill) throw ConfigError("run_stage2 takes a distill stage config");
  if (teachers.size() < 2) throw ConfigError("distill requires both teachers");
  run_training(cfg, store, teachers, offline, exp_dir, result);
}

learner::TeacherSpec teacher_from_store(const std::string& name, const SnapshotStore& store,
                                        const nets::NetworkConfig& net, double return_threshold) {
  learner::TeacherSpec t;
  t.name = name;
  t.cfg = net;
  t.params = store.latest().params;
  t.return_threshold = return_threshold;
  return t;
}

// ---------------------------------------------------------------------------
// Data-source ablation
// ---------------------------------------------------------------------------

size_t generate_rerendered_dataset(const StageConfig& state_cfg,
                                   const diffnet::ParameterSet& state_policy,
                                   const std::vector<render::SceneVariant>& scenes, int episodes,
                                   int slice_length, uint64_t seed, const std::string& out_path,
                                   const std::string& experiment_id) {
  if (state_cfg.net.encoder != nets::NetworkConfig::Encoder::State)
    throw ConfigError("re-rendering requires a state-encoder policy");
  StageConfig cfg = state_cfg;
  cfg.learn.trajectory_length = slice_length;
  std::vector<replay::TrajectorySlice> slices;
  for (int i = 0; i < episodes; ++i) {
    EpisodeRequest req;
    Rng rng = Rng::derive(seed, "rerender-scenario", static_cast<uint64_t>(i));
    req.scenario = rng.uniform() < cfg.gaze_episode_frac ? sim::ScenarioKind::GazeTracking
                                                         : sim::ScenarioKind::FullGame;
    req.opponent = OpponentKind::UniformRandom;
    req.seconds = cfg.episode_seconds;
    req.seed = seed * 1000003ull + static_cast<uint64_t>(i);
    req.rerender = true;
    EpisodeResult ep = run_episode(cfg, state_policy, scenes, req);
    for (auto& s : ep.slices) slices.push_back(std::move(s));
  }
  if (slices.empty()) throw DataError("re-rendering produced no slices");
  return replay::export_dataset(slices, out_path, experiment_id);
}

AblationResult run_datasource_ablation(const Config& cfg, const std::string& exp_dir) {
  report::ensure_dir(exp_dir);
  report::ensure_dir(exp_dir + "/datasets");
  report::ensure_dir(exp_dir + "/report");
  AblationResult out;
  out.labels = {"scratch", "state_rae", "vision_rae"};

  // Shared state-encoder experts (cheap, also the distill teachers).
  Config state_cfg = cfg;
  state_cfg.set("network.kind", "state");
  StageConfig getup_cfg = StageConfig::from(state_cfg, Stage::ExpertGetUp);
  SnapshotStore getup_store = run_stage1(Stage::ExpertGetUp, getup_cfg, exp_dir + "/expert_getup");
  StageConfig scorer_cfg = StageConfig::from(state_cfg, Stage::ExpertScorer);
  SnapshotStore scorer_store =
      run_stage1(Stage::ExpertScorer, scorer_cfg, exp_dir + "/expert_scorer");

  nets::NetworkConfig state_net = nets::NetworkConfig::from(state_cfg);
  std::vector<learner::TeacherSpec> teachers{
      teacher_from_store("getup", getup_store, state_net,
                         cfg.get_double("learner.distill_threshold_getup")),
      teacher_from_store("scorer", scorer_store, state_net,
                         cfg.get_double("learner.distill_threshold_scorer"))};

  Config vision_cfg = cfg;
  vision_cfg.set("network.kind", "vision");
  StageConfig distill_probe = StageConfig::from(vision_cfg, Stage::Distill);
  int L = distill_probe.learn.trajectory_length;

  // State-sourced pixels: replay the trained state scorer and record frames.
  out.state_dataset = exp_dir + "/datasets/state_sourced.raed";
  {
    std::vector<render::SceneVariant> scenes = load_scenes(distill_probe);
    StageConfig rr_cfg = scorer_cfg;
    rr_cfg.episode_seconds = distill_probe.episode_seconds;
    rr_cfg.gaze_episode_frac = distill_probe.gaze_episode_frac;
    generate_rerendered_dataset(rr_cfg, scorer_store.latest().params, scenes,
                                std::max(2, distill_probe.eval_episodes), L,
                                distill_probe.seed + 101, out.state_dataset, "state-sourced");
  }

  // One distill run per (arm, seed); the scratch run at the base seed doubles
  // as the vision-data donor for the vision_rae arm.
  constexpr int kSeeds = 3;
  uint64_t base_seed = static_cast<uint64_t>(cfg.get_int("seed"));
  out.vision_dataset = exp_dir + "/datasets/vision_sourced.raed";
  std::vector<std::vector<double>> finals(3);
  std::vector<std::vector<std::pair<int64_t, double>>> curves(3);

  auto arm_dir = [&](int arm, int s) {
    return exp_dir + "/" + out.labels[arm] + "_seed" + std::to_string(s);
  };
  auto run_arm = [&](int arm, int s, const std::vector<replay::DatasetFile>& offline,
                     bool export_buffer) {
    Config run_cfg = vision_cfg;
    run_cfg.set("seed", std::to_string(base_seed + static_cast<uint64_t>(s)));
    StageConfig sc = StageConfig::from(run_cfg, Stage::Distill);
    sc.export_buffer = export_buffer;
    std::string dir = arm_dir(arm, s);
    report::ensure_dir(dir);
    SnapshotStore store(dir + "/snapshots");
    StageResult res;
    run_stage2(teachers, store, offline, sc, dir, &res);
    EvalStats ev = evaluate_policy(sc, store.latest().params, OpponentKind::UniformRandom,
                                   nullptr, sc.eval_episodes, base_seed + 31 + s);
    finals[arm].push_back(ev.mean_return);
    // Collect this run's eval curve for the mean report.
    std::istringstream in(report::read_text(dir + "/report/eval_returns.csv"));
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      std::istringstream row(line);
      std::string step, ret;
      std::getline(row, step, ',');
      std::getline(row, ret, ',');
      curves[arm].push_back({static_cast<int64_t>(std::stod(step)), std::stod(ret)});
    }
  };

  for (int s = 0; s < kSeeds; ++s) run_arm(0, s, {}, s == 0);
  {
    // Donate the base-seed scratch run's buffer as vision-sourced data.
    std::string donor = arm_dir(0, 0) + "/datasets/replay_export.raed";
    fs::copy_file(donor, out.vision_dataset, fs::copy_options::overwrite_existing);
  }
  std::vector<replay::DatasetFile> state_offline{replay::import_dataset(out.state_dataset)};
  std::vector<replay::DatasetFile> vision_offline{replay::import_dataset(out.vision_dataset)};
  for (int s = 0; s < kSeeds; ++s) run_arm(1, s, state_offline, false);
  for (int s = 0; s < kSeeds; ++s) run_arm(2, s, vision_offline, false);

  // Mean curve per arm, aligned by learner step.
  std::vector<report::Series> series(3);
  out.curves_csv = exp_dir + "/report/datasource_curves.csv";
  {
    std::ofstream csv(out.curves_csv);
    csv << "label,step,mean_return\n";
    for (int arm = 0; arm < 3; ++arm) {
      std::map<int64_t, std::pair<double, int>> acc;
      for (const auto& [step, ret] : curves[arm]) {
        acc[step].first += ret;
        acc[step].second += 1;
      }
      series[arm].label = out.labels[arm];
      for (const auto& [step, sum_n] : acc) {
        double mean = sum_n.first / sum_n.second;
        series[arm].x.push_back(static_cast<double>(step));
        series[arm].y.push_back(mean);
        csv << out.labels[arm] << "," << step << "," << report::format_double(mean) << "\n";
      }
    }
  }
  out.curves_svg = exp_dir + "/report/datasource_curves.svg";
  report::write_svg_lines(out.curves_svg, "final-eval return by data source", series);
  for (int arm = 0; arm < 3; ++arm) {
    double m = 0.0;
    for (double v : finals[arm]) m += v;
    out.final_returns.push_back(finals[arm].empty() ? 0.0 : m / finals[arm].size());
  }
  return out;
}

}  // namespace pitchlab::orchestrate
