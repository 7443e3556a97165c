#include "pitchlab/sim.hpp"

#include <algorithm>
#include <cmath>

namespace pitchlab::sim {

namespace {

const char* kActionFieldNames[kActionDim] = {"forward",     "lateral",     "turn",
                                             "head_pan_rate", "tilt_torque", "kick"};

void check_action_finite(const Action& a, int agent_id) {
  for (int i = 0; i < kActionDim; ++i) {
    if (!std::isfinite(a[i]))
      throw SimFault("simulation fault: non-finite action field agent" +
                     std::to_string(agent_id) + "." + kActionFieldNames[i]);
  }
}

void check_state_finite(const WorldState& w) {
  auto bad = [](const Vec2& v) { return !std::isfinite(v.x) || !std::isfinite(v.y); };
  if (bad(w.ball_position)) throw SimFault("simulation fault: non-finite field ball_position");
  if (bad(w.ball_velocity)) throw SimFault("simulation fault: non-finite field ball_velocity");
  for (int i = 0; i < 2; ++i) {
    const auto& a = w.agents[i];
    const std::string tag = "agent" + std::to_string(i) + ".";
    if (bad(a.position)) throw SimFault("simulation fault: non-finite field " + tag + "position");
    if (bad(a.linear_velocity))
      throw SimFault("simulation fault: non-finite field " + tag + "linear_velocity");
    for (auto [v, name] : {std::pair{a.heading, "heading"}, {a.angular_velocity, "angular_velocity"},
                           {a.head_pan, "head_pan"}, {a.tilt, "tilt"},
                           {a.tilt_velocity, "tilt_velocity"}}) {
      if (!std::isfinite(v)) throw SimFault("simulation fault: non-finite field " + tag + name);
    }
  }
}

double approach(double current, double target, double max_delta) {
  double d = target - current;
  return current + clamp(d, -max_delta, max_delta);
}

// Tilt "gravity": restoring toward 0 while upright, pulling to flat beyond the
// fall threshold. Both wells are stable; the torque gain is sized so a full
// counter-torque can climb out of the flat well.
double tilt_gravity(double tilt, const SimConfig& c) {
  if (std::abs(tilt) <= c.tilt_fall_threshold) return -c.tilt_restore * tilt;
  double toward_flat = (tilt > 0 ? 1.0 : -1.0) * c.tilt_gravity_flat;
  return toward_flat * std::max(0.0, 1.0 - std::abs(tilt) / (c.tilt_flat + 0.1));
}

struct WallHit {
  double t;       // fraction of the substep
  int axis;       // 0 = x, 1 = y
  double plane;   // coordinate of the wall plane
  int end;        // 0 = low, 1 = high
};

}  // namespace

SimConfig SimConfig::from(const Config& c) {
  SimConfig s;
  s.pitch.length = c.get_double("sim.pitch_length");
  s.pitch.width = c.get_double("sim.pitch_width");
  s.pitch.goal_width = c.get_double("sim.goal_width");
  s.pitch.wall_restitution = c.get_double("sim.wall_restitution");
  if (s.pitch.length <= 0 || s.pitch.width <= 0)
    throw ConfigError("rejected configuration: pitch dimensions must be positive");
  if (s.pitch.goal_width <= 0 || s.pitch.goal_width >= s.pitch.width)
    throw ConfigError("rejected configuration: goal_width must be in (0, pitch_width)");
  s.agent_radius = c.get_double("sim.agent_radius");
  s.agent_mass = c.get_double("sim.agent_mass");
  s.ball_radius = c.get_double("sim.ball_radius");
  s.ball_mass = c.get_double("sim.ball_mass");
  s.dt = c.get_double("sim.control_dt");
  s.max_forward = c.get_double("sim.max_forward_speed");
  s.max_lateral = c.get_double("sim.max_lateral_speed");
  s.max_turn = c.get_double("sim.max_turn_rate");
  s.max_head_pan_rate = c.get_double("sim.max_head_pan_rate");
  s.head_pan_limit = c.get_double("sim.head_pan_limit");
  s.linear_accel = c.get_double("sim.linear_accel");
  s.turn_accel = c.get_double("sim.turn_accel");
  s.tilt_fall_threshold = c.get_double("sim.tilt_fall_threshold");
  s.tilt_flat = c.get_double("sim.tilt_flat");
  s.tilt_torque_gain = c.get_double("sim.tilt_torque_gain");
  s.tilt_gravity_flat = c.get_double("sim.tilt_gravity_flat");
  s.tilt_restore = c.get_double("sim.tilt_restore");
  s.tilt_damping = c.get_double("sim.tilt_damping");
  s.kick_recoil = c.get_double("sim.kick_recoil");
  s.kick_range = c.get_double("sim.kick_range");
  s.kick_cooldown = c.get_double("sim.kick_cooldown");
  s.kick_impulse = c.get_double("sim.kick_impulse");
  s.kick_trigger = c.get_double("sim.kick_trigger");
  s.ball_friction_decel = c.get_double("sim.ball_friction_decel");
  s.ball_damping = c.get_double("sim.ball_damping");
  s.agent_restitution = c.get_double("sim.agent_restitution");
  s.collision_tilt_gain = c.get_double("sim.collision_tilt_gain");
  s.w_scoring = c.get_double("sim.reward.scoring");
  s.w_velocity_to_ball = c.get_double("sim.reward.velocity_to_ball");
  s.w_ball_to_goal = c.get_double("sim.reward.ball_to_goal");
  s.w_upright = c.get_double("sim.reward.upright");
  return s;
}

bool WorldState::operator==(const WorldState& o) const {
  auto agent_eq = [](const AgentBody& a, const AgentBody& b) {
    return a.position == b.position && a.heading == b.heading &&
           a.linear_velocity == b.linear_velocity && a.angular_velocity == b.angular_velocity &&
           a.head_pan == b.head_pan && a.tilt == b.tilt && a.tilt_velocity == b.tilt_velocity &&
           a.fallen == b.fallen && a.kick_cooldown == b.kick_cooldown;
  };
  auto rng_eq = [](const Rng& a, const Rng& b) {
    auto sa = a.state(), sb = b.state();
    return std::equal(sa.s, sa.s + 4, sb.s) && sa.cached == sb.cached &&
           sa.has_cached == sb.has_cached;
  };
  return agent_eq(agents[0], o.agents[0]) && agent_eq(agents[1], o.agents[1]) &&
         ball_position == o.ball_position && ball_velocity == o.ball_velocity &&
         ball_params.color == o.ball_params.color && ball_params.radius == o.ball_params.radius &&
         ball_params.mass == o.ball_params.mass && time == o.time && rng_eq(rng, o.rng);
}

ScenarioKind scenario_from_string(const std::string& name) {
  if (name == "fullgame" || name == "FullGame") return ScenarioKind::FullGame;
  if (name == "penalty" || name == "Penalty") return ScenarioKind::Penalty;
  if (name == "walking" || name == "WalkingSpeed") return ScenarioKind::WalkingSpeed;
  if (name == "turning" || name == "TurningSpeed") return ScenarioKind::TurningSpeed;
  if (name == "kicking" || name == "KickingPower") return ScenarioKind::KickingPower;
  if (name == "gaze" || name == "GazeTracking") return ScenarioKind::GazeTracking;
  throw ConfigError("rejected configuration: unknown scenario: " + name);
}

std::string scenario_name(ScenarioKind kind) {
  switch (kind) {
    case ScenarioKind::FullGame: return "fullgame";
    case ScenarioKind::Penalty: return "penalty";
    case ScenarioKind::WalkingSpeed: return "walking";
    case ScenarioKind::TurningSpeed: return "turning";
    case ScenarioKind::KickingPower: return "kicking";
    case ScenarioKind::GazeTracking: return "gaze";
  }
  throw ConfigError("rejected configuration: unknown scenario");
}

WorldState reset(const SimConfig& config, ScenarioKind scenario, uint64_t seed) {
  const auto& pitch = config.pitch;
  auto rel = [&](double fx, double fy) { return Vec2{fx * pitch.length, fy * pitch.width}; };

  WorldState w;
  w.rng = Rng::derive(seed, "sim.reset", static_cast<uint64_t>(scenario));
  w.ball_params.radius = config.ball_radius;
  w.ball_params.mass = config.ball_mass;
  w.time = 0.0;

  // Default parking spots; scenarios override what they care about.
  w.agents[0].position = rel(0.25, 0.5);
  w.agents[0].heading = 0.0;
  w.agents[1].position = rel(0.75, 0.5);
  w.agents[1].heading = M_PI;
  w.ball_position = pitch.center();

  auto random_own_half = [&](int agent_id) {
    double fx = w.rng.uniform(0.1, 0.4);
    if (agent_id == 1) fx = 1.0 - fx;
    double fy = w.rng.uniform(0.15, 0.85);
    return rel(fx, fy);
  };

  switch (scenario) {
    case ScenarioKind::FullGame: {
      for (int i = 0; i < 2; ++i) {
        w.agents[i].position = random_own_half(i);
        Vec2 to_center = pitch.center() - w.agents[i].position;
        w.agents[i].heading =
            wrap_angle(std::atan2(to_center.y, to_center.x) + w.rng.uniform(-0.4, 0.4));
      }
      break;
    }
    case ScenarioKind::Penalty: {
      w.agents[0].position = random_own_half(0);
      w.agents[0].heading = w.rng.uniform(-M_PI, M_PI);
      double t = w.rng.uniform(0.9, config.tilt_flat);
      w.agents[0].tilt = w.rng.uniform() < 0.5 ? t : -t;
      w.agents[0].fallen = true;
      w.agents[1].position = rel(0.8, 0.5);
      w.agents[1].heading = M_PI;
      break;
    }
    case ScenarioKind::WalkingSpeed: {
      w.agents[0].position = rel(0.1, 0.5);
      w.agents[0].heading = 0.0;
      w.ball_position = rel(0.7, 0.5);
      w.agents[1].position = rel(0.95, 0.92);
      w.agents[1].heading = M_PI;
      break;
    }
    case ScenarioKind::TurningSpeed: {
      w.agents[0].position = rel(0.15, 0.15);
      w.ball_position = rel(0.85, 0.85);
      Vec2 to_ball = w.ball_position - w.agents[0].position;
      w.agents[0].heading = wrap_angle(std::atan2(to_ball.y, to_ball.x) + M_PI);
      w.agents[1].position = rel(0.9, 0.1);
      w.agents[1].heading = M_PI;
      break;
    }
    case ScenarioKind::KickingPower: {
      w.agents[0].position = rel(0.4, 0.5);
      w.agents[0].heading = 0.0;
      w.ball_position = w.agents[0].position + Vec2{0.23, 0.0};
      w.agents[1].position = rel(0.95, 0.92);
      w.agents[1].heading = M_PI;
      break;
    }
    case ScenarioKind::GazeTracking: {
      w.agents[0].position = rel(0.35, 0.5);
      w.agents[0].heading = 0.0;
      w.ball_position = w.agents[0].position + Vec2{1.0, 0.0};
      double speed = w.rng.uniform(0.0, 1.0);
      double dir = w.rng.uniform(0.0, 2.0 * M_PI);
      w.ball_velocity = Vec2{std::cos(dir), std::sin(dir)} * speed;
      w.agents[1].position = rel(0.95, 0.08);
      w.agents[1].heading = M_PI;
      break;
    }
  }
  for (auto& agent : w.agents) agent.fallen = std::abs(agent.tilt) > config.tilt_fall_threshold;
  return w;
}

Action clamp_action(const Action& a, const SimConfig& config) {
  Action lo = config.bounds_lo(), hi = config.bounds_hi();
  Action out;
  for (int i = 0; i < kActionDim; ++i) out[i] = clamp(a[i], lo[i], hi[i]);
  return out;
}

Action smooth_action(const Action& prev_u, const Action& a, const SimConfig& config) {
  for (int i = 0; i < kActionDim; ++i) {
    if (!std::isfinite(prev_u[i]) || !std::isfinite(a[i]))
      throw SimFault(std::string("simulation fault: non-finite action field ") +
                     kActionFieldNames[i]);
  }
  Action u;
  for (int i = 0; i < kActionDim; ++i) u[i] = 0.8 * prev_u[i] + 0.2 * a[i];
  return clamp_action(u, config);
}

std::pair<WorldState, EventList> step(const WorldState& world,
                                      const std::array<Action, 2>& actions,
                                      const SimConfig& config) {
  check_state_finite(world);
  check_action_finite(actions[0], 0);
  check_action_finite(actions[1], 1);

  WorldState w = world;
  EventList events;
  const double dt = config.dt;
  const auto& pitch = config.pitch;

  // Agent dynamics.
  for (int i = 0; i < 2; ++i) {
    AgentBody& a = w.agents[i];
    Action act = clamp_action(actions[i], config);

    bool was_fallen = a.fallen;

    // Locomotion tracks commanded body-frame velocity unless fallen.
    Vec2 v_target{0.0, 0.0};
    double w_target = 0.0;
    if (!was_fallen) {
      v_target = Vec2{act.forward, act.lateral}.rotated(a.heading);
      w_target = act.turn;
    }
    Vec2 dv = v_target - a.linear_velocity;
    double dv_norm = dv.norm();
    double max_dv = config.linear_accel * dt;
    if (dv_norm > max_dv) dv = dv * (max_dv / dv_norm);
    a.linear_velocity += dv;
    a.angular_velocity = approach(a.angular_velocity, w_target, config.turn_accel * dt);

    a.heading = wrap_angle(a.heading + a.angular_velocity * dt);
    a.position += a.linear_velocity * dt;

    // Head pan joint.
    a.head_pan = clamp(a.head_pan + act.head_pan_rate * dt, -config.head_pan_limit,
                       config.head_pan_limit);

    // Tilt axis.
    double tilt_acc = config.tilt_torque_gain * act.tilt_torque + tilt_gravity(a.tilt, config) -
                      config.tilt_damping * a.tilt_velocity;
    a.tilt_velocity += tilt_acc * dt;
    a.tilt += a.tilt_velocity * dt;
    if (std::abs(a.tilt) > config.tilt_flat) {
      a.tilt = a.tilt > 0 ? config.tilt_flat : -config.tilt_flat;
      a.tilt_velocity = 0.0;
    }

    a.kick_cooldown = std::max(0.0, a.kick_cooldown - dt);
  }

  // Agent-agent collision.
  {
    Vec2 d = w.agents[1].position - w.agents[0].position;
    double dist = d.norm();
    double min_dist = 2.0 * config.agent_radius;
    if (dist < min_dist && dist > 1e-9) {
      Vec2 n = d * (1.0 / dist);
      double rel_v = (w.agents[1].linear_velocity - w.agents[0].linear_velocity).dot(n);
      if (rel_v < 0) {
        double j = -(1.0 + config.agent_restitution) * rel_v * 0.5;  // equal masses
        w.agents[0].linear_velocity -= n * j;
        w.agents[1].linear_velocity += n * j;
        double bump = config.collision_tilt_gain * std::abs(rel_v);
        for (auto& a : w.agents) {
          double dir = a.tilt != 0.0 ? (a.tilt > 0 ? 1.0 : -1.0) : 1.0;
          a.tilt_velocity += dir * bump;
        }
      }
      double overlap = min_dist - dist;
      w.agents[0].position -= n * (overlap * 0.5);
      w.agents[1].position += n * (overlap * 0.5);
    }
  }

  // Ball dynamics: damping then rolling friction, then integrate.
  {
    w.ball_velocity = w.ball_velocity * std::max(0.0, 1.0 - config.ball_damping * dt);
    double speed = w.ball_velocity.norm();
    double drop = config.ball_friction_decel * dt;
    if (speed > drop)
      w.ball_velocity = w.ball_velocity * ((speed - drop) / speed);
    else
      w.ball_velocity = {0.0, 0.0};
  }
  Vec2 ball_prev = w.ball_position;
  w.ball_position += w.ball_velocity * dt;

  // Kicks (agent order is the tie-break).
  for (int i = 0; i < 2; ++i) {
    AgentBody& a = w.agents[i];
    const Action act = clamp_action(actions[i], config);
    if (act.kick < config.kick_trigger || a.kick_cooldown > 0.0 || a.fallen) continue;
    if ((w.ball_position - a.position).norm() > config.kick_range) continue;
    Vec2 dir{std::cos(a.heading), std::sin(a.heading)};
    double strength = act.kick;
    w.ball_velocity += dir * (strength * config.kick_impulse / w.ball_params.mass);
    a.kick_cooldown = config.kick_cooldown;
    double recoil_dir = a.tilt != 0.0 ? (a.tilt > 0 ? 1.0 : -1.0) : 1.0;
    a.tilt_velocity += recoil_dir * config.kick_recoil * strength;
    events.push_back({EventType::Kick, i, w.time + dt});
  }

  // Ball-agent collisions.
  for (int i = 0; i < 2; ++i) {
    AgentBody& a = w.agents[i];
    Vec2 d = w.ball_position - a.position;
    double dist = d.norm();
    double min_dist = config.agent_radius + w.ball_params.radius;
    if (dist < min_dist && dist > 1e-9) {
      Vec2 n = d * (1.0 / dist);
      double rel_v = (w.ball_velocity - a.linear_velocity).dot(n);
      if (rel_v < 0) {
        double m_a = config.agent_mass, m_b = w.ball_params.mass;
        double j = -(1.0 + pitch.wall_restitution) * rel_v / (1.0 / m_a + 1.0 / m_b);
        w.ball_velocity += n * (j / m_b);
        a.linear_velocity -= n * (j / m_a);
      }
      w.ball_position = a.position + n * min_dist;
    }
  }

  // Ball walls and goals. Resolve crossings earliest-first within the step.
  {
    const double rb = w.ball_params.radius;
    Vec2 prev = ball_prev;
    for (int pass = 0; pass < 4; ++pass) {
      Vec2 pos = w.ball_position;
      std::vector<WallHit> hits;
      auto consider = [&](int axis, double plane, int end) {
        double p0 = axis == 0 ? prev.x : prev.y;
        double p1 = axis == 0 ? pos.x : pos.y;
        bool out = end == 0 ? p1 < plane : p1 > plane;
        if (!out || p1 == p0) return;
        double t = (plane - p0) / (p1 - p0);
        hits.push_back({clamp(t, 0.0, 1.0), axis, plane, end});
      };
      consider(0, rb, 0);
      consider(0, pitch.length - rb, 1);
      consider(1, rb, 0);
      consider(1, pitch.width - rb, 1);
      if (hits.empty()) break;
      const WallHit hit = *std::min_element(
          hits.begin(), hits.end(), [](const WallHit& a, const WallHit& b) { return a.t < b.t; });

      if (hit.axis == 0) {
        // Crossing y at the end line decides wall vs goal mouth.
        double cross_y = prev.y + (pos.y - prev.y) * hit.t;
        if (pitch.in_goal_mouth(cross_y)) {
          double line = hit.end == 1 ? pitch.length : 0.0;
          bool crossed_line = hit.end == 1 ? pos.x >= line : pos.x <= line;
          if (crossed_line) {
            int scorer = hit.end == 1 ? 0 : 1;
            events.push_back({EventType::Goal, scorer, w.time + dt});
            w.ball_position = pitch.center();
            w.ball_velocity = {0.0, 0.0};
            break;
          }
          break;  // inside the mouth, between wall plane and line: keep rolling
        }
        w.ball_position.x = 2.0 * hit.plane - pos.x;
        w.ball_velocity.x = -pitch.wall_restitution * w.ball_velocity.x;
        events.push_back({EventType::WallBounce, -1, w.time + dt});
      } else {
        w.ball_position.y = 2.0 * hit.plane - pos.y;
        w.ball_velocity.y = -pitch.wall_restitution * w.ball_velocity.y;
        events.push_back({EventType::WallBounce, -1, w.time + dt});
      }
      prev = Vec2{hit.axis == 0 ? hit.plane : prev.x, hit.axis == 1 ? hit.plane : prev.y};
    }
    // Safety clamp (goal mouth interior excepted on x).
    if (!pitch.in_goal_mouth(w.ball_position.y))
      w.ball_position.x = clamp(w.ball_position.x, rb, pitch.length - rb);
    else
      w.ball_position.x = clamp(w.ball_position.x, 0.0, pitch.length);
    w.ball_position.y = clamp(w.ball_position.y, rb, pitch.width - rb);
  }

  // Agent containment: clamp and slide.
  for (auto& a : w.agents) {
    double r = config.agent_radius;
    if (a.position.x < r || a.position.x > pitch.length - r) {
      a.position.x = clamp(a.position.x, r, pitch.length - r);
      a.linear_velocity.x = 0.0;
    }
    if (a.position.y < r || a.position.y > pitch.width - r) {
      a.position.y = clamp(a.position.y, r, pitch.width - r);
      a.linear_velocity.y = 0.0;
    }
  }

  // Fall bookkeeping.
  for (int i = 0; i < 2; ++i) {
    bool now_fallen = std::abs(w.agents[i].tilt) > config.tilt_fall_threshold;
    if (now_fallen && !w.agents[i].fallen) events.push_back({EventType::Fall, i, w.time + dt});
    w.agents[i].fallen = now_fallen;
  }

  w.time += dt;
  return {std::move(w), std::move(events)};
}

RewardComponents compute_rewards(const WorldState& world, const WorldState& next,
                                 const EventList& events, int agent_id,
                                 const SimConfig& config) {
  (void)world;
  RewardComponents r;
  for (const auto& ev : events) {
    if (ev.type != EventType::Goal) continue;
    r.scoring += (ev.agent == agent_id ? 1.0 : -1.0) * config.w_scoring;
  }
  const AgentBody& me = next.agents[agent_id];
  Vec2 to_ball = next.ball_position - me.position;
  if (to_ball.norm() > 1e-9)
    r.velocity_to_ball = config.w_velocity_to_ball * me.linear_velocity.dot(to_ball.normalized());
  Vec2 goal = config.pitch.goal_center(target_end(agent_id));
  Vec2 to_goal = goal - next.ball_position;
  if (to_goal.norm() > 1e-9)
    r.ball_to_goal_velocity = config.w_ball_to_goal * next.ball_velocity.dot(to_goal.normalized());
  if (!me.fallen) r.upright = config.w_upright;
  r.total = r.scoring + r.velocity_to_ball + r.ball_to_goal_velocity + r.upright;
  return r;
}

PrivilegedState privileged_state(const WorldState& world, int agent_id,
                                 const SimConfig& config) {
  if (agent_id != 0 && agent_id != 1) throw SimFault("simulation fault: invalid agent_id");
  const AgentBody& me = world.agents[agent_id];
  const AgentBody& opp = world.agents[1 - agent_id];
  auto to_body = [&](const Vec2& p) { return (p - me.position).rotated(-me.heading); };
  auto vel_body = [&](const Vec2& v) { return (v - me.linear_velocity).rotated(-me.heading); };

  PrivilegedState p;
  p.ball_position = to_body(world.ball_position);
  p.ball_velocity = vel_body(world.ball_velocity);
  p.opponent_position = to_body(opp.position);
  p.opponent_velocity = vel_body(opp.linear_velocity);
  p.target_goal = to_body(config.pitch.goal_center(target_end(agent_id)));
  p.own_goal = to_body(config.pitch.goal_center(1 - target_end(agent_id)));
  return p;
}

}  // namespace pitchlab::sim
