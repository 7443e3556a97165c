#include "pitchlab/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

namespace pitchlab {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<ConfigEntry> build_schema() {
  std::vector<ConfigEntry> e;
  auto P = [&](const char* k, const char* v, const char* doc) { e.push_back({k, v, true, doc}); };
  auto N = [&](const char* k, const char* v, const char* doc) { e.push_back({k, v, false, doc}); };

  N("seed", "1", "root seed; every subsystem stream derives from it");
  N("out_dir", "run", "experiment directory");

  // sim
  P("sim.pitch_length", "5.0", "pitch length in meters");
  P("sim.pitch_width", "4.0", "pitch width in meters");
  N("sim.goal_width", "1.3", "goal mouth width in meters");
  N("sim.wall_restitution", "0.8", "ball rebound coefficient at walls");
  N("sim.agent_radius", "0.15", "agent disc radius");
  P("sim.agent_mass", "3.5", "agent mass in kg");
  N("sim.ball_radius", "0.065", "base ball radius (randomized per episode)");
  N("sim.ball_mass", "0.2", "base ball mass in kg");
  P("sim.control_dt", "0.025", "control period, 40 Hz");
  N("sim.max_forward_speed", "0.8", "action bound, m/s");
  N("sim.max_lateral_speed", "0.4", "action bound, m/s");
  N("sim.max_turn_rate", "2.5", "action bound, rad/s");
  N("sim.max_head_pan_rate", "3.5", "action bound, rad/s");
  P("sim.head_pan_limit", "2.5", "head pan joint limit, rad");
  N("sim.linear_accel", "2.5", "velocity tracking acceleration limit, m/s^2");
  N("sim.turn_accel", "12.0", "turn rate tracking limit, rad/s^2");
  N("sim.tilt_fall_threshold", "0.6", "|tilt| above this means fallen");
  N("sim.tilt_flat", "1.3", "tilt magnitude of a fully fallen agent");
  N("sim.tilt_torque_gain", "6.0", "tilt acceleration per unit torque, rad/s^2");
  N("sim.tilt_gravity_flat", "3.0", "outward pull beyond the fall threshold, rad/s^2");
  N("sim.tilt_restore", "8.0", "restoring stiffness while upright");
  N("sim.tilt_damping", "2.0", "tilt velocity damping");
  N("sim.kick_recoil", "1.2", "tilt velocity impulse per unit kick strength");
  N("sim.kick_range", "0.25", "ball center must be within this distance");
  N("sim.kick_cooldown", "0.5", "seconds between kicks");
  N("sim.kick_impulse", "0.5", "ball impulse at full strength, N*s");
  N("sim.kick_trigger", "0.5", "kick command threshold");
  N("sim.ball_friction_decel", "0.6", "rolling deceleration, m/s^2");
  N("sim.ball_damping", "0.15", "ball velocity damping, 1/s");
  N("sim.agent_restitution", "0.1", "agent-agent collision restitution");
  N("sim.collision_tilt_gain", "0.8", "tilt impulse per m/s of collision impact");
  N("sim.reward.scoring", "1.0", "reward weight: goal events");
  N("sim.reward.velocity_to_ball", "0.05", "reward weight: speed toward the ball");
  N("sim.reward.ball_to_goal", "0.1", "reward weight: ball speed toward target goal");
  N("sim.reward.upright", "0.01", "reward weight: per-step upright bonus");

  // render
  N("render.fov_deg", "70.0", "horizontal field of view");
  N("render.camera_height", "0.20", "camera height above floor, m");
  N("render.horizon_row", "11", "image row of the horizon");
  N("render.wall_height", "0.30", "rebound wall height, m");
  P("render.variant_count", "4", "baked scene variants per episode draw");
  N("render.scene_dir", "", "directory of PANO files; empty bakes procedurally");
  N("render.brightness_range", "25.5", "augment: additive range (+-)");
  N("render.contrast_range", "0.1", "augment: contrast scale range (+-)");
  N("render.saturation_range", "0.1", "augment: saturation scale range (+-)");
  N("render.hue_range", "0.1", "augment: hue rotation range, rad (+-)");
  P("render.ball_scale_min", "0.8", "ball randomization lower scale");
  P("render.ball_scale_max", "1.2", "ball randomization upper scale");

  // network
  N("network.kind", "vision", "vision | state");
  P("network.encoder_channels", "8,16,16", "residual block channels");
  P("network.lstm_width", "64", "recurrent width");
  N("network.feature_width", "64", "encoder output width");
  N("network.critic_hidden", "64", "critic head hidden width");
  N("network.atoms", "51", "critic support size");
  N("network.v_min", "-150.0", "critic support lower bound");
  N("network.v_max", "150.0", "critic support upper bound");
  N("network.init_std_frac", "0.3", "initial policy std as fraction of half-range");

  // learner
  P("learner.discount", "0.99", "discount factor");
  P("learner.batch_size", "80", "slices per learner step");
  P("learner.trajectory_length", "48", "expert-stage slice length");
  P("learner.trajectory_length_distill", "145", "distill-stage slice length");
  P("learner.action_samples", "20", "MPO action samples per state");
  P("learner.actor_lr", "1e-4", "actor Adam learning rate");
  P("learner.critic_lr", "1e-4", "critic Adam learning rate");
  P("learner.temperature_lr", "1e-2", "temperature Adam learning rate");
  P("learner.dual_lr", "1e-4", "KL multiplier learning rate");
  P("learner.epsilon_kl_mean", "0.0025", "M-step mean KL bound");
  P("learner.epsilon_kl_cov", "1e-6", "M-step covariance KL bound");
  N("learner.epsilon_temperature", "0.1", "E-step KL bound");
  N("learner.n_step", "5", "n-step return length");
  N("learner.target_refresh", "100", "target network refresh period, steps");
  N("learner.grad_clip", "40.0", "global gradient norm clip");
  N("learner.adam_beta1", "0.9", "Adam beta1");
  N("learner.adam_beta2", "0.999", "Adam beta2");
  N("learner.adam_eps", "1e-8", "Adam epsilon");
  N("learner.distill_initial", "1.0", "initial per-teacher KL coefficient");
  N("learner.distill_decay", "0.995", "per-step multiplicative decay once above threshold");
  N("learner.distill_threshold_getup", "2.0", "return threshold for the get-up teacher");
  N("learner.distill_threshold_scorer", "4.0", "return threshold for the scorer teacher");

  // replay
  P("replay.capacity", "100000", "max slices held");
  N("replay.mix_ratio", "0.5", "offline fraction when offline data present");
  P("replay.ratio", "16", "env steps per learner update");
  N("replay.min_fill", "2", "batches that must fit before learning starts");

  // orchestrate
  N("orchestrate.num_actors", "8", "environment loops");
  N("orchestrate.mode", "sync", "sync (deterministic) | threads");
  N("orchestrate.snapshot_every", "500", "learner steps between snapshots");
  N("orchestrate.learner_steps", "20000", "stage step budget");
  N("orchestrate.episode_seconds", "20.0", "full-game episode length");
  N("orchestrate.getup_episode_seconds", "4.0", "get-up expert episode length");
  N("orchestrate.gaze_episode_frac", "0.15", "fraction of episodes using the moving-ball placement");
  N("orchestrate.physics_rand", "0.1", "per-episode +- range on restitution/friction/kick");
  N("orchestrate.return_window", "50", "episodes in the running return mean");
  N("orchestrate.eval_every", "0", "learner steps between eval probes (0 = off)");
  N("orchestrate.eval_episodes", "8", "episodes per eval probe");
  N("orchestrate.export_buffer", "false", "export replay contents at stage end");

  // probes
  N("probes.components", "5", "mixture components");
  N("probes.episodes", "200", "evaluation episodes gathered for probe data");
  N("probes.lr", "1e-3", "probe Adam learning rate");
  N("probes.steps", "2000", "probe training steps");
  N("probes.batch", "256", "probe minibatch size");
  N("probes.holdout", "0.25", "fraction of episodes held out for probe evaluation");
  N("probes.egocentric", "false", "predict ball/opponent in the body frame instead of pitch frame");
  N("probes.heatmap_width", "100", "heatmap cells across the pitch length");
  N("probes.heatmap_height", "80", "heatmap cells across the pitch width");

  // eval
  P("eval.agility_trials", "10", "trials for walking/turning/kicking");
  P("eval.scoring_trials", "250", "penalty episodes");
  P("eval.penalty_seconds", "12.0", "time to score a penalty");
  P("eval.gaze_episodes", "16", "gaze study episodes");
  P("eval.gaze_steps", "100", "gaze study steps per episode");
  N("eval.kick_window", "0.25", "seconds after first kick for peak ball speed");
  N("eval.agility_seconds", "10.0", "cap per walking/turning/kicking trial");

  std::sort(e.begin(), e.end(), [](const auto& a, const auto& b) { return a.key < b.key; });
  return e;
}

const std::map<std::string, const ConfigEntry*>& schema_index() {
  static const auto* idx = [] {
    auto* m = new std::map<std::string, const ConfigEntry*>;
    for (const auto& entry : Config::schema()) (*m)[entry.key] = &entry;
    return m;
  }();
  return *idx;
}

}  // namespace

const std::vector<ConfigEntry>& Config::schema() {
  static const std::vector<ConfigEntry> s = build_schema();
  return s;
}

Config::Config() {
  for (const auto& entry : schema()) values_[entry.key] = entry.value;
}

void Config::set(const std::string& key, const std::string& value) {
  if (!schema_index().count(key)) throw ConfigError("unknown config key: " + key);
  values_[key] = value;
}

void Config::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void Config::apply_override(const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override must be key=value: " + assignment);
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

const std::string& Config::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  return it->second;
}

double Config::get_double(const std::string& key) const {
  const auto& s = raw(key);
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + ": not a number: " + s);
  }
}

int64_t Config::get_int(const std::string& key) const {
  const auto& s = raw(key);
  int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ConfigError("config key " + key + ": not an integer: " + s);
  return v;
}

bool Config::get_bool(const std::string& key) const {
  const auto& s = raw(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError("config key " + key + ": not a bool: " + s);
}

std::string Config::get_string(const std::string& key) const { return raw(key); }

std::vector<std::string> Config::get_strings(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(raw(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<int> Config::get_ints(const std::string& key) const {
  std::vector<int> out;
  for (const auto& s : get_strings(key)) out.push_back(std::stoi(s));
  return out;
}

std::string Config::effective_dump() const {
  std::string out;
  for (const auto& [key, value] : values_) {
    out += key;
    out += " = ";
    out += value;
    const auto* entry = schema_index().at(key);
    if (!entry->paper_default) out += "  # non_paper_default = true";
    out += "\n";
  }
  return out;
}

void Config::write_effective(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write effective config: " + path);
  out << effective_dump();
}

uint64_t Config::hash() const { return fnv1a(effective_dump()); }

}  // namespace pitchlab
