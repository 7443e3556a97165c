#include <doctest.h>

#include <cmath>

#include "pitchlab/sim.hpp"

using namespace pitchlab;
using namespace pitchlab::sim;

namespace {

SimConfig default_config() { return SimConfig::from(Config{}); }

Action zero_action() { return {}; }

double kinetic_energy(const WorldState& w, const SimConfig& c) {
  double e = 0.5 * w.ball_params.mass * w.ball_velocity.norm_sq();
  for (const auto& a : w.agents) e += 0.5 * c.agent_mass * a.linear_velocity.norm_sq();
  return e;
}

}  // namespace

TEST_CASE("action filter follows the scalar recurrence u = 0.8u + 0.2a") {
  SimConfig c = default_config();
  // Independent oracle: iterate the scalar recurrence directly, and check the
  // closed form 1 - 0.8^t for a constant unit command.
  double ref = 0.0;
  Action u{};
  Action cmd{};
  cmd.tilt_torque = 1.0;
  for (int t = 1; t <= 10; ++t) {
    ref = 0.8 * ref + 0.2 * 1.0;
    u = smooth_action(u, cmd, c);
    CHECK(u.tilt_torque == doctest::Approx(ref).epsilon(1e-14));
    CHECK(u.tilt_torque == doctest::Approx(1.0 - std::pow(0.8, t)).epsilon(1e-12));
    CHECK(u.forward == 0.0);
  }
  CHECK(u.tilt_torque == doctest::Approx(0.8926258176).epsilon(1e-9));
}

TEST_CASE("action filter output is clamped to bounds") {
  SimConfig c = default_config();
  Action prev{};
  prev.forward = c.max_forward;
  Action cmd{};
  cmd.forward = 5.0;
  cmd.turn = -100.0;
  cmd.kick = 2.0;
  Action u = smooth_action(prev, cmd, c);
  CHECK(u.forward == c.max_forward);
  CHECK(u.turn == -c.max_turn);
  CHECK(u.kick <= 1.0);
  CHECK_THROWS_AS(smooth_action(prev, Action{0, 0, NAN, 0, 0, 0}, c), SimFault);
}

TEST_CASE("set-piece placements match the measured setup") {
  SimConfig c = default_config();

  WorldState walk = reset(c, ScenarioKind::WalkingSpeed, 3);
  CHECK(walk.agents[0].position.x == doctest::Approx(0.1 * c.pitch.length));
  CHECK(walk.agents[0].position.y == doctest::Approx(0.5 * c.pitch.width));
  CHECK(walk.ball_position.x == doctest::Approx(0.7 * c.pitch.length));
  CHECK(walk.ball_position.y == doctest::Approx(0.5 * c.pitch.width));
  CHECK_FALSE(walk.agents[0].fallen);

  WorldState pen = reset(c, ScenarioKind::Penalty, 3);
  CHECK(pen.ball_position.x == doctest::Approx(c.pitch.center().x));
  CHECK(pen.ball_position.y == doctest::Approx(c.pitch.center().y));
  CHECK(pen.agents[0].fallen);
  CHECK(std::abs(pen.agents[0].tilt) > c.tilt_fall_threshold);
  CHECK(pen.agents[1].linear_velocity.norm() == 0.0);
  // Shooter placed in its own half.
  CHECK(pen.agents[0].position.x < c.pitch.length * 0.5);

  WorldState turn = reset(c, ScenarioKind::TurningSpeed, 3);
  Vec2 to_ball = (turn.ball_position - turn.agents[0].position).normalized();
  Vec2 facing{std::cos(turn.agents[0].heading), std::sin(turn.agents[0].heading)};
  CHECK(facing.dot(to_ball) == doctest::Approx(-1.0).epsilon(1e-9));

  WorldState kick = reset(c, ScenarioKind::KickingPower, 3);
  CHECK((kick.ball_position - kick.agents[0].position).norm() <= c.kick_range);

  WorldState gaze = reset(c, ScenarioKind::GazeTracking, 3);
  CHECK((gaze.ball_position - gaze.agents[0].position).norm() == doctest::Approx(1.0));
  CHECK(gaze.ball_velocity.norm() <= 1.0);
}

TEST_CASE("reset is deterministic in (config, scenario, seed)") {
  SimConfig c = default_config();
  for (auto k : {ScenarioKind::FullGame, ScenarioKind::Penalty, ScenarioKind::GazeTracking}) {
    WorldState a = reset(c, k, 1234);
    WorldState b = reset(c, k, 1234);
    CHECK(a == b);
    WorldState d = reset(c, k, 1235);
    CHECK_FALSE(a == d);
  }
}

TEST_CASE("stepping is bit-reproducible") {
  SimConfig c = default_config();
  WorldState a = reset(c, ScenarioKind::FullGame, 7);
  WorldState b = reset(c, ScenarioKind::FullGame, 7);
  Rng rng = Rng::derive(7, "test.actions");
  for (int t = 0; t < 200; ++t) {
    std::array<Action, 2> acts;
    for (auto& act : acts)
      for (int i = 0; i < kActionDim; ++i) act[i] = rng.uniform(-1.0, 1.0);
    auto [na, ea] = step(a, acts, c);
    auto [nb, eb] = step(b, acts, c);
    a = na;
    b = nb;
    REQUIRE(a == b);
    REQUIRE(ea.size() == eb.size());
  }
}

TEST_CASE("kick applies the analytic impulse") {
  SimConfig c = default_config();
  WorldState w = reset(c, ScenarioKind::KickingPower, 11);
  REQUIRE(w.agents[0].heading == 0.0);
  std::array<Action, 2> acts{};
  acts[0].kick = 1.0;

  auto [next, events] = step(w, acts, c);
  // dv = strength * impulse / mass, along +x (heading 0), ball starting at rest.
  double dv = 1.0 * c.kick_impulse / w.ball_params.mass;
  CHECK(next.ball_velocity.x == doctest::Approx(dv).epsilon(1e-12));
  CHECK(next.ball_velocity.y == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(next.agents[0].kick_cooldown == doctest::Approx(c.kick_cooldown));
  CHECK(next.agents[0].tilt_velocity == doctest::Approx(c.kick_recoil).epsilon(1e-9));
  bool saw_kick = false;
  for (const auto& e : events) saw_kick |= e.type == EventType::Kick && e.agent == 0;
  CHECK(saw_kick);

  // A second kick inside the cooldown window does nothing; the ball only
  // decays by damping and rolling friction (contraction).
  auto [after, ev2] = step(next, acts, c);
  double vx = next.ball_velocity.x;
  double damped = vx * (1.0 - c.ball_damping * c.dt);
  double expect = damped - c.ball_friction_decel * c.dt;
  CHECK(after.ball_velocity.x == doctest::Approx(expect).epsilon(1e-12));
  for (const auto& e : ev2) CHECK(e.type != EventType::Kick);
  CHECK(after.ball_velocity.norm() < next.ball_velocity.norm());
}

TEST_CASE("fallen agents cannot kick") {
  SimConfig c = default_config();
  WorldState w = reset(c, ScenarioKind::KickingPower, 11);
  w.agents[0].tilt = 1.0;
  w.agents[0].fallen = true;
  std::array<Action, 2> acts{};
  acts[0].kick = 1.0;
  auto [next, events] = step(w, acts, c);
  CHECK(next.ball_velocity.norm() == 0.0);
  for (const auto& e : events) CHECK(e.type != EventType::Kick);
}

TEST_CASE("wall reflection obeys the restitution law") {
  SimConfig c = default_config();
  c.ball_damping = 0.0;
  c.ball_friction_decel = 0.0;
  WorldState w = reset(c, ScenarioKind::FullGame, 1);
  const double rb = w.ball_params.radius;
  w.ball_position = {2.5, 0.08};
  w.ball_velocity = {0.3, -2.0};
  // Park the agents away from the ball.
  w.agents[0].position = {1.0, 3.0};
  w.agents[1].position = {4.0, 3.0};

  std::array<Action, 2> acts{};
  auto [next, events] = step(w, acts, c);
  double y_free = 0.08 - 2.0 * c.dt;  // would be 0.03, inside the wall margin
  CHECK(y_free < rb);
  CHECK(next.ball_position.y == doctest::Approx(2.0 * rb - y_free).epsilon(1e-12));
  CHECK(next.ball_velocity.y == doctest::Approx(2.0 * c.pitch.wall_restitution).epsilon(1e-12));
  CHECK(next.ball_velocity.x == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(next.ball_position.x == doctest::Approx(2.5 + 0.3 * c.dt).epsilon(1e-12));
  bool bounced = false;
  for (const auto& e : events) bounced |= e.type == EventType::WallBounce;
  CHECK(bounced);
}

TEST_CASE("goal mouth admits the ball and scores on the line") {
  SimConfig c = default_config();
  c.ball_damping = 0.0;
  c.ball_friction_decel = 0.0;
  WorldState w = reset(c, ScenarioKind::FullGame, 1);
  w.agents[0].position = {1.0, 3.5};
  w.agents[1].position = {1.5, 3.5};
  w.ball_position = {4.9, 2.0};
  w.ball_velocity = {3.0, 0.0};
  std::array<Action, 2> acts{};

  auto [mid, ev1] = step(w, acts, c);
  // Past the wall plane but short of the line: rolling inside the mouth.
  CHECK(mid.ball_position.x == doctest::Approx(4.975));
  for (const auto& e : ev1) CHECK(e.type != EventType::Goal);

  auto [fin, ev2] = step(mid, acts, c);
  int goals = 0;
  for (const auto& e : ev2)
    if (e.type == EventType::Goal) {
      ++goals;
      CHECK(e.agent == 0);
    }
  CHECK(goals == 1);
  CHECK(fin.ball_position.x == doctest::Approx(c.pitch.center().x));
  CHECK(fin.ball_position.y == doctest::Approx(c.pitch.center().y));
  CHECK(fin.ball_velocity.norm() == 0.0);
}

TEST_CASE("end wall outside the mouth reflects instead of scoring") {
  SimConfig c = default_config();
  c.ball_damping = 0.0;
  c.ball_friction_decel = 0.0;
  WorldState w = reset(c, ScenarioKind::FullGame, 1);
  w.agents[0].position = {1.0, 3.5};
  w.agents[1].position = {1.5, 3.5};
  w.ball_position = {4.9, 0.5};  // outside the mouth band around y=2
  w.ball_velocity = {3.0, 0.0};
  std::array<Action, 2> acts{};
  auto [next, events] = step(w, acts, c);
  for (const auto& e : events) CHECK(e.type != EventType::Goal);
  const double plane = c.pitch.length - w.ball_params.radius;
  CHECK(next.ball_position.x == doctest::Approx(2.0 * plane - 4.975).epsilon(1e-12));
  CHECK(next.ball_velocity.x == doctest::Approx(-3.0 * c.pitch.wall_restitution).epsilon(1e-12));
}

TEST_CASE("own-goal credits the opponent") {
  SimConfig c = default_config();
  c.ball_damping = 0.0;
  c.ball_friction_decel = 0.0;
  WorldState w = reset(c, ScenarioKind::FullGame, 1);
  w.agents[0].position = {1.0, 3.5};
  w.agents[1].position = {1.5, 3.5};
  w.ball_position = {0.1, 2.0};
  w.ball_velocity = {-3.0, 0.0};
  std::array<Action, 2> acts{};
  auto [mid, ev1] = step(w, acts, c);
  auto [fin, ev2] = step(mid, acts, c);
  (void)fin;
  int scorer = -1;
  for (const auto& e : ev2)
    if (e.type == EventType::Goal) scorer = e.agent;
  CHECK(scorer == 1);
}

TEST_CASE("containment holds under random rollouts") {
  SimConfig c = default_config();
  Rng rng = Rng::derive(99, "containment");
  WorldState w = reset(c, ScenarioKind::FullGame, 99);
  const double ra = c.agent_radius, rb = c.ball_radius;
  for (int t = 0; t < 20000; ++t) {
    std::array<Action, 2> acts;
    for (auto& a : acts) {
      a.forward = rng.uniform(-1.0, 1.0);
      a.lateral = rng.uniform(-0.5, 0.5);
      a.turn = rng.uniform(-3.0, 3.0);
      a.head_pan_rate = rng.uniform(-4.0, 4.0);
      a.tilt_torque = rng.uniform(-1.0, 1.0);
      a.kick = rng.uniform(0.0, 1.0);
    }
    auto [next, events] = step(w, acts, c);
    w = next;
    for (const auto& a : w.agents) {
      REQUIRE(a.position.x >= ra - 1e-9);
      REQUIRE(a.position.x <= c.pitch.length - ra + 1e-9);
      REQUIRE(a.position.y >= ra - 1e-9);
      REQUIRE(a.position.y <= c.pitch.width - ra + 1e-9);
      REQUIRE(std::isfinite(a.tilt));
      REQUIRE(std::abs(a.tilt) <= c.tilt_flat + 1e-9);
      REQUIRE(std::abs(a.head_pan) <= c.head_pan_limit + 1e-12);
      REQUIRE(a.fallen == (std::abs(a.tilt) > c.tilt_fall_threshold));
    }
    REQUIRE(w.ball_position.y >= rb - 1e-9);
    REQUIRE(w.ball_position.y <= c.pitch.width - rb + 1e-9);
    REQUIRE(w.ball_position.x >= -1e-9);
    REQUIRE(w.ball_position.x <= c.pitch.length + 1e-9);
    if (w.ball_position.x < rb - 1e-9 || w.ball_position.x > c.pitch.length - rb + 1e-9)
      REQUIRE(c.pitch.in_goal_mouth(w.ball_position.y));
    REQUIRE(std::isfinite(w.ball_velocity.x));
    REQUIRE(std::isfinite(w.ball_velocity.y));
  }
}

TEST_CASE("kinetic energy does not increase without actuation") {
  SimConfig c = default_config();
  WorldState w = reset(c, ScenarioKind::FullGame, 5);
  w.ball_velocity = {2.0, 1.0};
  w.agents[0].linear_velocity = {0.6, -0.2};
  w.agents[1].linear_velocity = {-0.5, 0.3};
  std::array<Action, 2> acts{};
  double e = kinetic_energy(w, c);
  for (int t = 0; t < 400; ++t) {
    auto [next, events] = step(w, acts, c);
    w = next;
    double e2 = kinetic_energy(w, c);
    REQUIRE(e2 <= e + 1e-9);
    e = e2;
  }
  CHECK(e < 1e-6);
}

TEST_CASE("falls happen exactly at the tilt threshold and disable locomotion") {
  SimConfig c = default_config();
  WorldState w = reset(c, ScenarioKind::WalkingSpeed, 2);
  std::array<Action, 2> acts{};
  acts[0].tilt_torque = 1.0;
  acts[0].forward = 0.8;

  bool fell = false;
  for (int t = 0; t < 200 && !fell; ++t) {
    auto [next, events] = step(w, acts, c);
    bool event_fall = false;
    for (const auto& e : events) event_fall |= e.type == EventType::Fall && e.agent == 0;
    CHECK(event_fall == (!w.agents[0].fallen && next.agents[0].fallen));
    w = next;
    REQUIRE(w.agents[0].fallen == (std::abs(w.agents[0].tilt) > c.tilt_fall_threshold));
    fell = w.agents[0].fallen;
  }
  REQUIRE(fell);

  // Locomotion commands now decay the velocity instead of tracking it.
  acts[0].tilt_torque = 0.0;
  for (int t = 0; t < 120; ++t) {
    auto [next, events] = step(w, acts, c);
    w = next;
  }
  CHECK(w.agents[0].fallen);
  CHECK(w.agents[0].linear_velocity.norm() < 1e-6);

  // Full counter-torque climbs back out of the flat well.
  for (int t = 0; t < 400 && w.agents[0].fallen; ++t) {
    std::array<Action, 2> up{};
    up[0].tilt_torque = w.agents[0].tilt > 0 ? -1.0 : 1.0;
    auto [next, events] = step(w, up, c);
    w = next;
  }
  CHECK_FALSE(w.agents[0].fallen);
}

TEST_CASE("head pan saturates at the joint limit") {
  SimConfig c = default_config();
  WorldState w = reset(c, ScenarioKind::WalkingSpeed, 2);
  std::array<Action, 2> acts{};
  acts[0].head_pan_rate = 10.0;  // clamped to max rate
  for (int t = 0; t < 200; ++t) {
    auto [next, events] = step(w, acts, c);
    w = next;
    REQUIRE(w.agents[0].head_pan <= c.head_pan_limit);
  }
  CHECK(w.agents[0].head_pan == c.head_pan_limit);
}

TEST_CASE("non-finite actions fault with the field named") {
  SimConfig c = default_config();
  WorldState w = reset(c, ScenarioKind::FullGame, 3);
  std::array<Action, 2> acts{};
  acts[1].turn = NAN;
  try {
    step(w, acts, c);
    FAIL("expected SimFault");
  } catch (const SimFault& e) {
    CHECK(std::string(e.what()).find("agent1.turn") != std::string::npos);
  }
  acts[1].turn = 0.0;
  acts[0].kick = INFINITY;
  try {
    step(w, acts, c);
    FAIL("expected SimFault");
  } catch (const SimFault& e) {
    CHECK(std::string(e.what()).find("agent0.kick") != std::string::npos);
  }
}

TEST_CASE("reward components are weighted and sum to total") {
  SimConfig c = default_config();
  WorldState w = reset(c, ScenarioKind::FullGame, 4);
  WorldState next = w;
  next.agents[0].position = {1.0, 2.0};
  next.agents[0].linear_velocity = {0.5, 0.0};
  next.agents[0].fallen = false;
  next.ball_position = {2.0, 2.0};  // straight ahead of the agent
  next.ball_velocity = {1.0, 0.0};  // straight at the +x goal center
  EventList events;
  events.push_back({EventType::Goal, 0, 0.0});

  RewardComponents r0 = compute_rewards(w, next, events, 0, c);
  CHECK(r0.scoring == doctest::Approx(1.0));
  CHECK(r0.velocity_to_ball == doctest::Approx(0.05 * 0.5));
  // Ball at (2,2) moving (1,0); goal center (5,2): fully toward goal.
  CHECK(r0.ball_to_goal_velocity == doctest::Approx(0.1 * 1.0));
  CHECK(r0.upright == doctest::Approx(0.01));
  CHECK(r0.total == r0.scoring + r0.velocity_to_ball + r0.ball_to_goal_velocity + r0.upright);

  RewardComponents r1 = compute_rewards(w, next, events, 1, c);
  CHECK(r1.scoring == doctest::Approx(-1.0));

  next.agents[0].fallen = true;
  RewardComponents r2 = compute_rewards(w, next, {}, 0, c);
  CHECK(r2.upright == 0.0);
  CHECK(r2.scoring == 0.0);
}

TEST_CASE("privileged state is an exact frame transform") {
  SimConfig c = default_config();
  WorldState w = reset(c, ScenarioKind::FullGame, 4);
  w.agents[0].position = {1.0, 1.0};
  w.agents[0].heading = M_PI / 2;
  w.agents[0].linear_velocity = {0.0, 0.0};
  w.agents[1].position = {1.0, 0.0};
  w.agents[1].linear_velocity = {0.0, 0.5};
  w.ball_position = {1.0, 2.0};
  w.ball_velocity = {1.0, 0.0};

  PrivilegedState p = privileged_state(w, 0, c);
  // Facing +y: world +y is body +x, world +x is body -y.
  CHECK(p.ball_position.x == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.ball_position.y == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p.ball_velocity.x == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p.ball_velocity.y == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(p.opponent_position.x == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(p.opponent_position.y == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(p.opponent_velocity.x == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p.target_goal.x == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.target_goal.y == doctest::Approx(-4.0).epsilon(1e-12));
  CHECK(p.own_goal.y == doctest::Approx(1.0).epsilon(1e-12));

  // Round trip: rotate back and translate recovers world coordinates.
  Vec2 back = p.ball_position.rotated(w.agents[0].heading) + w.agents[0].position;
  CHECK(back.x == doctest::Approx(w.ball_position.x).epsilon(1e-12));
  CHECK(back.y == doctest::Approx(w.ball_position.y).epsilon(1e-12));

  auto flat = p.flat();
  CHECK(flat.size() == kPrivilegedDim);
  CHECK(flat[0] == doctest::Approx(1.0));
}

TEST_CASE("scenario names round trip") {
  for (auto k : {ScenarioKind::FullGame, ScenarioKind::Penalty, ScenarioKind::WalkingSpeed,
                 ScenarioKind::TurningSpeed, ScenarioKind::KickingPower,
                 ScenarioKind::GazeTracking}) {
    CHECK(scenario_from_string(scenario_name(k)) == k);
  }
  CHECK_THROWS_AS(scenario_from_string("quidditch"), ConfigError);
}

TEST_CASE("agents push each other apart on contact") {
  SimConfig c = default_config();
  WorldState w = reset(c, ScenarioKind::FullGame, 8);
  w.agents[0].position = {2.0, 2.0};
  w.agents[0].linear_velocity = {0.8, 0.0};
  w.agents[1].position = {2.25, 2.0};
  w.agents[1].linear_velocity = {-0.8, 0.0};
  std::array<Action, 2> acts{};
  auto [next, events] = step(w, acts, c);
  double dist = (next.agents[1].position - next.agents[0].position).norm();
  CHECK(dist >= 2.0 * c.agent_radius - 1e-9);
  // Head-on impact transfers momentum and bumps tilt.
  CHECK(next.agents[0].linear_velocity.x < w.agents[0].linear_velocity.x);
  CHECK(next.agents[1].linear_velocity.x > w.agents[1].linear_velocity.x);
  CHECK(next.agents[0].tilt_velocity != 0.0);
}

TEST_CASE("dribbling contact moves the ball") {
  SimConfig c = default_config();
  WorldState w = reset(c, ScenarioKind::FullGame, 8);
  w.agents[0].position = {2.0, 2.0};
  w.agents[0].linear_velocity = {0.8, 0.0};
  w.ball_position = {2.2, 2.0};
  w.agents[1].position = {4.0, 3.0};
  std::array<Action, 2> acts{};
  acts[0].forward = 0.8;
  auto [next, events] = step(w, acts, c);
  CHECK(next.ball_velocity.x > 0.0);
  double dist = (next.ball_position - next.agents[0].position).norm();
  CHECK(dist >= c.agent_radius + w.ball_params.radius - 1e-9);
}
