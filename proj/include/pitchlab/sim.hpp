#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pitchlab/common.hpp"
#include "pitchlab/config.hpp"
#include "pitchlab/rng.hpp"

namespace pitchlab::sim {

constexpr int kActionDim = 6;
constexpr int kPrivilegedDim = 12;

struct PitchGeometry {
  double length = 5.0;  // x extent
  double width = 4.0;   // y extent
  double goal_width = 1.3;
  double wall_restitution = 0.8;

  Vec2 center() const { return {length * 0.5, width * 0.5}; }
  // Goal center on the +x (index 1) or -x (index 0) end line.
  Vec2 goal_center(int end) const { return {end == 1 ? length : 0.0, width * 0.5}; }
  bool in_goal_mouth(double y) const {
    return std::abs(y - width * 0.5) <= goal_width * 0.5;
  }
};

// Ball properties drawn once per episode (see render::randomize_ball).
struct BallParams {
  std::array<float, 3> color = {230.0f, 120.0f, 30.0f};  // base orange, 0-255
  double radius = 0.065;
  double mass = 0.2;
};

struct AgentBody {
  Vec2 position;
  double heading = 0.0;  // radians, CCW from +x
  Vec2 linear_velocity;
  double angular_velocity = 0.0;
  double head_pan = 0.0;  // relative to heading
  double tilt = 0.0;      // 1-DoF fall axis
  double tilt_velocity = 0.0;
  bool fallen = false;
  double kick_cooldown = 0.0;
};

// Locomotion + head + kick command. Components are clamped to the bounds in
// SimConfig before being applied.
struct Action {
  double forward = 0.0;   // m/s, body frame
  double lateral = 0.0;   // m/s, body frame (+ left)
  double turn = 0.0;      // rad/s
  double head_pan_rate = 0.0;
  double tilt_torque = 0.0;  // [-1, 1]
  double kick = 0.0;         // [0, 1]

  double& operator[](int i) { return (&forward)[i]; }
  double operator[](int i) const { return (&forward)[i]; }
};

struct SimConfig {
  PitchGeometry pitch;
  double agent_radius = 0.15;
  double agent_mass = 3.5;
  double ball_radius = 0.065;
  double ball_mass = 0.2;
  double dt = 0.025;

  double max_forward = 0.8;
  double max_lateral = 0.4;
  double max_turn = 2.5;
  double max_head_pan_rate = 3.5;
  double head_pan_limit = 2.5;
  double linear_accel = 2.5;
  double turn_accel = 12.0;

  double tilt_fall_threshold = 0.6;
  double tilt_flat = 1.3;
  double tilt_torque_gain = 6.0;
  double tilt_gravity_flat = 3.0;
  double tilt_restore = 8.0;
  double tilt_damping = 2.0;
  double kick_recoil = 1.2;

  double kick_range = 0.25;
  double kick_cooldown = 0.5;
  double kick_impulse = 0.5;
  double kick_trigger = 0.5;

  double ball_friction_decel = 0.6;
  double ball_damping = 0.15;
  double agent_restitution = 0.1;
  double collision_tilt_gain = 0.8;

  double w_scoring = 1.0;
  double w_velocity_to_ball = 0.05;
  double w_ball_to_goal = 0.1;
  double w_upright = 0.01;

  static SimConfig from(const Config& c);

  Action bounds_lo() const {
    return {-max_forward, -max_lateral, -max_turn, -max_head_pan_rate, -1.0, 0.0};
  }
  Action bounds_hi() const {
    return {max_forward, max_lateral, max_turn, max_head_pan_rate, 1.0, 1.0};
  }
};

struct WorldState {
  std::array<AgentBody, 2> agents;
  Vec2 ball_position;
  Vec2 ball_velocity;
  BallParams ball_params;
  double time = 0.0;
  Rng rng;

  bool operator==(const WorldState& o) const;
};

// Everything in the agent's body frame: +x ahead, +y left. Velocities are
// relative to the agent and rotated into its frame.
struct PrivilegedState {
  Vec2 ball_position;
  Vec2 ball_velocity;
  Vec2 opponent_position;
  Vec2 opponent_velocity;
  Vec2 target_goal;
  Vec2 own_goal;

  std::array<float, kPrivilegedDim> flat() const {
    return {(float)ball_position.x,     (float)ball_position.y,
            (float)ball_velocity.x,     (float)ball_velocity.y,
            (float)opponent_position.x, (float)opponent_position.y,
            (float)opponent_velocity.x, (float)opponent_velocity.y,
            (float)target_goal.x,       (float)target_goal.y,
            (float)own_goal.x,          (float)own_goal.y};
  }
};

// Weighted contributions; total is their sum.
struct RewardComponents {
  double scoring = 0.0;
  double velocity_to_ball = 0.0;
  double ball_to_goal_velocity = 0.0;
  double upright = 0.0;
  double total = 0.0;
};

enum class EventType : uint8_t { Goal, Kick, Fall, WallBounce };

struct Event {
  EventType type;
  int agent = -1;   // scorer / kicker / faller; -1 for ball wall bounces
  double time = 0.0;
};

using EventList = std::vector<Event>;

enum class ScenarioKind {
  FullGame,
  Penalty,
  WalkingSpeed,
  TurningSpeed,
  KickingPower,
  GazeTracking,
};

ScenarioKind scenario_from_string(const std::string& name);
std::string scenario_name(ScenarioKind kind);

// Scenario placement. Identical (config, scenario, seed) give identical
// states. Agent 0 is the evaluated/learning agent and attacks +x.
WorldState reset(const SimConfig& config, ScenarioKind scenario, uint64_t seed);

// Exponential action filter u = 0.8 prev + 0.2 a, then clamp to bounds.
Action smooth_action(const Action& prev_u, const Action& a, const SimConfig& config);

Action clamp_action(const Action& a, const SimConfig& config);

// One 40 Hz step: semi-implicit Euler, disc collisions, kicks, goals, falls.
// Throws SimFault on non-finite inputs, naming the offending field.
std::pair<WorldState, EventList> step(const WorldState& world,
                                      const std::array<Action, 2>& actions,
                                      const SimConfig& config);

RewardComponents compute_rewards(const WorldState& world, const WorldState& next,
                                 const EventList& events, int agent_id,
                                 const SimConfig& config);

PrivilegedState privileged_state(const WorldState& world, int agent_id,
                                 const SimConfig& config);

// Target end line for an agent: agent 0 attacks the +x goal.
inline int target_end(int agent_id) { return agent_id == 0 ? 1 : 0; }

}  // namespace pitchlab::sim
