#include "pitchlab/evalmod.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <sstream>

#include "pitchlab/report.hpp"

namespace pitchlab::eval {

EvalConfig EvalConfig::from(const Config& cfg) {
  EvalConfig e;
  e.agility_trials = static_cast<int>(cfg.get_int("eval.agility_trials"));
  e.scoring_trials = static_cast<int>(cfg.get_int("eval.scoring_trials"));
  e.penalty_seconds = cfg.get_double("eval.penalty_seconds");
  e.agility_seconds = cfg.get_double("eval.agility_seconds");
  e.kick_window = cfg.get_double("eval.kick_window");
  e.gaze_episodes = static_cast<int>(cfg.get_int("eval.gaze_episodes"));
  e.gaze_steps = static_cast<int>(cfg.get_int("eval.gaze_steps"));
  if (e.agility_trials < 1 || e.scoring_trials < 1)
    throw ConfigError("evaluation config error: trial counts must be positive");
  if (e.penalty_seconds <= 0.0 || e.agility_seconds <= 0.0 || e.kick_window <= 0.0)
    throw ConfigError("evaluation config error: time budgets must be positive");
  if (e.gaze_episodes < 1 || e.gaze_steps < 2)
    throw ConfigError("evaluation config error: gaze study needs episodes and steps");
  return e;
}

std::string metric_name(sim::ScenarioKind kind) {
  switch (kind) {
    case sim::ScenarioKind::WalkingSpeed: return "walking";
    case sim::ScenarioKind::TurningSpeed: return "turning";
    case sim::ScenarioKind::KickingPower: return "kicking";
    case sim::ScenarioKind::Penalty: return "scoring";
    default:
      throw ConfigError("evaluation config error: " + sim::scenario_name(kind) +
                        " is not a set piece");
  }
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

struct StepSample {
  double time = 0.0;
  Vec2 agent_pos, ball_pos;
  Vec2 agent_vel, ball_vel;
  double heading = 0.0;
  double kick_cooldown = 0.0;
};

double bearing_error(const StepSample& s) {
  double az = std::atan2(s.ball_pos.y - s.agent_pos.y, s.ball_pos.x - s.agent_pos.x);
  return std::abs(wrap_angle(az - s.heading));
}

// Mean body-frame forward speed from the start until the first sample within
// kick range of the ball (whole trial when never reached).
double walking_speed(const std::vector<StepSample>& ss, double kick_range) {
  if (ss.empty()) return 0.0;
  size_t end = ss.size();
  for (size_t i = 0; i < ss.size(); ++i) {
    Vec2 d{ss[i].ball_pos.x - ss[i].agent_pos.x, ss[i].ball_pos.y - ss[i].agent_pos.y};
    if (std::hypot(d.x, d.y) <= kick_range) {
      end = i + 1;
      break;
    }
  }
  double sum = 0.0;
  for (size_t i = 0; i < end; ++i)
    sum += ss[i].agent_vel.x * std::cos(ss[i].heading) +
           ss[i].agent_vel.y * std::sin(ss[i].heading);
  return sum / static_cast<double>(end);
}

// Swept |heading delta| per second until the agent faces the ball within
// 0.1 rad; the scenario starts exactly opposite, so the sweep covers ~pi.
double turning_rate(const std::vector<StepSample>& ss) {
  constexpr double kFacing = 0.1;
  if (ss.size() < 2 || bearing_error(ss[0]) <= kFacing) return 0.0;
  double swept = 0.0;
  size_t k = ss.size() - 1;
  for (size_t i = 1; i < ss.size(); ++i) {
    swept += std::abs(wrap_angle(ss[i].heading - ss[i - 1].heading));
    if (bearing_error(ss[i]) <= kFacing) {
      k = i;
      break;
    }
  }
  double elapsed = ss[k].time - ss[0].time;
  return elapsed > 0.0 ? swept / elapsed : 0.0;
}

// Peak ball speed within `window` seconds of the first kick. Kicks show up as
// a cooldown increase between consecutive pre-step samples.
double kicking_power(const std::vector<StepSample>& ss, double window) {
  size_t k = ss.size();
  for (size_t i = 1; i < ss.size(); ++i) {
    if (ss[i].kick_cooldown > ss[i - 1].kick_cooldown + 1e-12) {
      k = i;
      break;
    }
  }
  if (k >= ss.size()) return 0.0;
  double best = 0.0;
  for (size_t i = k; i < ss.size() && ss[i].time <= ss[k].time + window; ++i)
    best = std::max(best, std::hypot(ss[i].ball_vel.x, ss[i].ball_vel.y));
  return best;
}

void finish_stats(SetPieceResult& r) {
  double n = static_cast<double>(r.trials.size());
  if (n == 0.0) return;
  double sum = 0.0;
  for (double v : r.trials) sum += v;
  r.mean = sum / n;
  if (n > 1.0) {
    double ss = 0.0;
    for (double v : r.trials) ss += (v - r.mean) * (v - r.mean);
    r.std_error = std::sqrt(ss / (n - 1.0) / n);
  }
}

std::string sanitize(const std::string& name) {
  std::string out;
  for (char c : name) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_')
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    else
      out += '_';
  }
  return out;
}

}  // namespace

SetPieceResult run_set_piece(const orchestrate::StageConfig& cfg, sim::ScenarioKind kind,
                             const EvalConfig& ev, const SetPieceRun& run) {
  metric_name(kind);  // rejects non-set-piece scenarios
  if (run.pilot == orchestrate::Pilot::Network && run.params == nullptr)
    throw ConfigError("evaluation config error: network pilot needs policy parameters");
  if (run.trials < 1)
    throw ConfigError("evaluation config error: trials must be positive");

  std::vector<render::SceneVariant> scenes;
  if (run.pilot == orchestrate::Pilot::Network &&
      cfg.net.encoder == nets::NetworkConfig::Encoder::Vision)
    scenes = orchestrate::load_scenes(cfg);
  diffnet::ParameterSet dummy;
  const diffnet::ParameterSet& policy = run.params ? *run.params : dummy;

  SetPieceResult result;
  result.kind = kind;
  for (int trial = 0; trial < run.trials; ++trial) {
    std::vector<StepSample> ss;
    orchestrate::EpisodeRequest req;
    req.scenario = kind;
    req.pilot = run.pilot;
    req.opponent = orchestrate::OpponentKind::None;
    req.seconds = kind == sim::ScenarioKind::Penalty ? ev.penalty_seconds : ev.agility_seconds;
    req.seed = run.seed * 1000003ull + static_cast<uint64_t>(trial);
    req.act_mean = true;
    req.collect = false;
    req.trace = [&ss](const orchestrate::StepTrace& tr) {
      const sim::AgentBody& a = tr.world->agents[0];
      ss.push_back({tr.world->time, a.position, tr.world->ball_position, a.linear_velocity,
                    tr.world->ball_velocity, a.heading, a.kick_cooldown});
    };
    orchestrate::EpisodeResult ep = orchestrate::run_episode(cfg, policy, scenes, req);

    double value = 0.0;
    switch (kind) {
      case sim::ScenarioKind::WalkingSpeed: value = walking_speed(ss, cfg.sim.kick_range); break;
      case sim::ScenarioKind::TurningSpeed: value = turning_rate(ss); break;
      case sim::ScenarioKind::KickingPower: value = kicking_power(ss, ev.kick_window); break;
      default: value = ep.goals_for > 0 ? 1.0 : 0.0; break;
    }
    result.trials.push_back(value);
    PathTrace trace;
    trace.agent.reserve(ss.size());
    trace.ball.reserve(ss.size());
    for (const StepSample& s : ss) {
      trace.agent.push_back(s.agent_pos);
      trace.ball.push_back(s.ball_pos);
    }
    result.traces.push_back(std::move(trace));
  }
  finish_stats(result);
  return result;
}

GazeStudyResult run_gaze_study(const orchestrate::StageConfig& cfg,
                               const diffnet::ParameterSet& policy, const EvalConfig& ev,
                               uint64_t seed) {
  GazeStudyResult g;
  g.fov_half = cfg.render_cfg.fov / 2.0;
  g.episodes = ev.gaze_episodes;
  g.steps = ev.gaze_steps;
  bool vision = cfg.net.encoder == nets::NetworkConfig::Encoder::Vision;
  std::vector<render::SceneVariant> scenes;
  if (vision) scenes = orchestrate::load_scenes(cfg);

  for (int condition = 0; condition < 2; ++condition) {
    bool controlled = condition == 0;
    for (int e = 0; e < ev.gaze_episodes; ++e) {
      // Both conditions share episode seeds, so the ball paths pair up.
      Rng er = Rng::derive(seed, "gaze-episode", static_cast<uint64_t>(e));
      sim::WorldState w = sim::reset(cfg.sim, sim::ScenarioKind::GazeTracking, er.next_u64());
      nets::Actor actor(cfg.net, policy);
      const render::SceneVariant* scene =
          vision ? &scenes[static_cast<size_t>(e) % scenes.size()] : nullptr;
      sim::Action prev{};
      std::vector<double> distances;
      distances.reserve(static_cast<size_t>(ev.gaze_steps));
      for (int s = 0; s < ev.gaze_steps; ++s) {
        distances.push_back(render::gaze_error(w, 0));
        sim::Action cmd{};  // body stays passive in both conditions
        if (controlled) {
          render::Frame frame;
          const render::Frame* fp = nullptr;
          if (vision) {
            frame = render::render_egocentric(w, 0, *scene, cfg.render_cfg);
            fp = &frame;
          }
          nets::Observation obs =
              nets::make_observation(w, 0, prev, fp, cfg.net.encoder, cfg.sim);
          diffnet::GaussianActionDistribution d = actor.step(obs);
          cmd.head_pan_rate = d.mean[3];
        }
        sim::Action u = sim::smooth_action(prev, cmd, cfg.sim);
        auto [next, events] = sim::step(w, {u, sim::Action{}}, cfg.sim);
        w = std::move(next);
        prev = u;
      }
      (controlled ? g.controlled : g.fixed).push_back(std::move(distances));
    }
  }

  std::vector<double> pool;
  for (const auto& ep : g.controlled) pool.insert(pool.end(), ep.begin(), ep.end());
  g.controlled_median = median(pool);
  pool.clear();
  for (const auto& ep : g.fixed) pool.insert(pool.end(), ep.begin(), ep.end());
  g.fixed_median = median(pool);
  return g;
}

namespace {

// Minimal CSV pull of two numeric columns keyed by header name.
bool load_curve(const std::string& path, const std::string& xcol, const std::string& ycol,
                report::Series& out) {
  std::ifstream in(path);
  if (!in) return false;
  std::string line;
  if (!std::getline(in, line)) return false;
  std::vector<std::string> cols;
  {
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) cols.push_back(cell);
  }
  auto find = [&](const std::string& name) {
    for (size_t i = 0; i < cols.size(); ++i)
      if (cols[i] == name) return static_cast<long>(i);
    return -1L;
  };
  long xi = find(xcol), yi = find(ycol);
  if (xi < 0 || yi < 0) return false;
  out.label = ycol;
  while (std::getline(in, line)) {
    std::stringstream rs(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(rs, cell, ',')) cells.push_back(cell);
    if (static_cast<long>(cells.size()) <= std::max(xi, yi)) continue;
    try {
      double x = std::stod(cells[static_cast<size_t>(xi)]);
      double y = std::stod(cells[static_cast<size_t>(yi)]);
      out.x.push_back(x);
      out.y.push_back(y);
    } catch (const std::exception&) {
      continue;
    }
  }
  return out.x.size() >= 2;
}

}  // namespace

std::vector<std::string> emit_report(const ReportInputs& in, const std::string& out_dir) {
  report::ensure_dir(out_dir);
  std::vector<std::string> paths;
  auto add = [&](const std::string& name) {
    paths.push_back(out_dir + "/" + name);
    return paths.back();
  };

  {
    report::CsvWriter table(add("table1.csv"),
                            {"policy", "metric", "mean", "std_error", "trials"});
    for (const PolicyEvalSet& p : in.policies)
      for (const SetPieceResult& sp : p.set_pieces)
        table.row(std::vector<std::string>{p.policy, metric_name(sp.kind),
                                           report::format_double(sp.mean),
                                           report::format_double(sp.std_error),
                                           std::to_string(sp.count())});
  }

  for (const PolicyEvalSet& p : in.policies) {
    for (const SetPieceResult& sp : p.set_pieces) {
      std::string base = sanitize(p.policy) + "_" + metric_name(sp.kind);
      {
        report::CsvWriter trials(add("trials_" + base + ".csv"), {"trial", "value"});
        for (size_t i = 0; i < sp.trials.size(); ++i)
          trials.row(std::vector<double>{static_cast<double>(i), sp.trials[i]});
      }
      if (!sp.traces.empty() && !sp.traces.front().agent.empty()) {
        const PathTrace& t = sp.traces.front();
        report::Series agent{"agent", {}, {}}, ball{"ball", {}, {}};
        for (const Vec2& v : t.agent) {
          agent.x.push_back(v.x);
          agent.y.push_back(v.y);
        }
        for (const Vec2& v : t.ball) {
          ball.x.push_back(v.x);
          ball.y.push_back(v.y);
        }
        report::write_svg_lines(add("traces_" + base + ".svg"),
                                p.policy + " " + metric_name(sp.kind) + " paths",
                                {agent, ball});
      }
    }
  }

  if (!in.metrics_csv.empty()) {
    report::Series critic, policy;
    bool ok_c = load_curve(in.metrics_csv, "step", "critic_loss", critic);
    bool ok_p = load_curve(in.metrics_csv, "step", "policy_loss", policy);
    if (ok_c && ok_p)
      report::write_svg_lines(add("learning_curves.svg"), "losses over learner steps",
                              {critic, policy});
  }

  if (in.gaze != nullptr) {
    const GazeStudyResult& g = *in.gaze;
    {
      report::CsvWriter summary(add("gaze_summary.csv"),
                                {"condition", "median", "episodes", "steps", "fov_half"});
      summary.row(std::vector<std::string>{
          "controlled", report::format_double(g.controlled_median),
          std::to_string(g.episodes), std::to_string(g.steps),
          report::format_double(g.fov_half)});
      summary.row(std::vector<std::string>{
          "fixed", report::format_double(g.fixed_median), std::to_string(g.episodes),
          std::to_string(g.steps), report::format_double(g.fov_half)});
    }
    constexpr int kBins = 18;
    std::array<double, kBins> ctrl{}, fixed{};
    auto tally = [&](const std::vector<std::vector<double>>& eps,
                     std::array<double, kBins>& bins) {
      for (const auto& ep : eps)
        for (double d : ep) {
          int b = std::min(kBins - 1, static_cast<int>(d / M_PI * kBins));
          bins[static_cast<size_t>(std::max(0, b))] += 1.0;
        }
    };
    tally(g.controlled, ctrl);
    tally(g.fixed, fixed);
    double peak = 1.0;
    for (int b = 0; b < kBins; ++b) peak = std::max({peak, ctrl[b], fixed[b]});
    report::Series sc{"controlled", {}, {}}, sf{"fixed", {}, {}},
        marker{"fov_half", {g.fov_half, g.fov_half}, {0.0, peak}};
    {
      report::CsvWriter hist(add("gaze_hist.csv"),
                             {"bin_left", "bin_right", "controlled", "fixed"});
      for (int b = 0; b < kBins; ++b) {
        double lo = M_PI * b / kBins, hi = M_PI * (b + 1) / kBins;
        hist.row(std::vector<double>{lo, hi, ctrl[b], fixed[b]});
        sc.x.push_back(0.5 * (lo + hi));
        sc.y.push_back(ctrl[b]);
        sf.x.push_back(0.5 * (lo + hi));
        sf.y.push_back(fixed[b]);
      }
    }
    report::write_svg_lines(add("gaze_hist.svg"), "gaze error distribution",
                            {sc, sf, marker});
  }

  {
    std::string manifest_path = out_dir + "/manifest.csv";
    report::CsvWriter manifest(manifest_path, {"file", "config_hash"});
    for (const std::string& p : paths) {
      size_t slash = p.find_last_of('/');
      manifest.row(std::vector<std::string>{
          slash == std::string::npos ? p : p.substr(slash + 1),
          std::to_string(in.config_hash)});
    }
    paths.push_back(manifest_path);
  }
  return paths;
}

ComparisonTable compare_state_vs_vision(const Config& cfg, const std::string& exp_dir) {
  report::ensure_dir(exp_dir);
  EvalConfig ev = EvalConfig::from(cfg);

  struct Entry {
    std::string name;
    orchestrate::Pilot pilot;
    orchestrate::StageConfig stage;
    diffnet::ParameterSet params;
  };
  std::vector<Entry> entries;
  for (const char* kind : {"state", "vision"}) {
    Config c = cfg;
    c.set("network.kind", kind);
    orchestrate::StageConfig sc =
        orchestrate::StageConfig::from(c, orchestrate::Stage::ExpertScorer);
    orchestrate::SnapshotStore store = orchestrate::run_stage1(
        orchestrate::Stage::ExpertScorer, sc, exp_dir + "/" + kind + "_expert");
    entries.push_back({kind, orchestrate::Pilot::Network, sc, store.latest().params});
  }
  entries.push_back({"scripted", orchestrate::Pilot::ScriptedChase,
                     orchestrate::StageConfig::from(cfg, orchestrate::Stage::ExpertScorer),
                     diffnet::ParameterSet{}});

  const sim::ScenarioKind kinds[] = {
      sim::ScenarioKind::WalkingSpeed, sim::ScenarioKind::TurningSpeed,
      sim::ScenarioKind::KickingPower, sim::ScenarioKind::Penalty};

  ComparisonTable table;
  std::vector<PolicyEvalSet> sets;
  for (size_t i = 0; i < entries.size(); ++i) {
    Entry& e = entries[i];
    PolicyEvalSet set;
    set.policy = e.name;
    for (sim::ScenarioKind kind : kinds) {
      SetPieceRun run;
      run.pilot = e.pilot;
      run.params = e.pilot == orchestrate::Pilot::Network ? &e.params : nullptr;
      run.trials = kind == sim::ScenarioKind::Penalty ? ev.scoring_trials : ev.agility_trials;
      run.seed = e.stage.seed + 1000 * (i + 1);
      SetPieceResult res = run_set_piece(e.stage, kind, ev, run);
      table.rows.push_back({e.name, metric_name(kind), res.mean, res.std_error, res.count()});
      set.set_pieces.push_back(std::move(res));
    }
    sets.push_back(std::move(set));
  }

  std::string report_dir = exp_dir + "/report";
  report::ensure_dir(report_dir);
  table.csv_path = report_dir + "/state_vs_vision.csv";
  {
    report::CsvWriter out(table.csv_path, {"policy", "metric", "mean", "std_error", "trials"});
    for (const ComparisonRow& r : table.rows)
      out.row(std::vector<std::string>{r.policy, r.metric, report::format_double(r.mean),
                                       report::format_double(r.std_error),
                                       std::to_string(r.trials)});
  }
  ReportInputs inputs;
  inputs.policies = std::move(sets);
  inputs.config_hash = cfg.hash();
  emit_report(inputs, report_dir);
  return table;
}

}  // namespace pitchlab::eval
