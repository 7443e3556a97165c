#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "doctest.h"
#include "pitchlab/orchestrate.hpp"
#include "pitchlab/report.hpp"

using namespace pitchlab;
using namespace pitchlab::orchestrate;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / "pitchlab_orch" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

diffnet::ParameterSet tiny_params(uint64_t seed) {
  diffnet::ParameterSet p;
  Rng rng(seed);
  auto& t = p.add("w", {3});
  for (auto& v : t.data) v = rng.normal();
  return p;
}

// Small nets and short episodes so harness tests run in milliseconds.
Config tiny_cfg(const std::string& kind) {
  Config c;
  c.set("network.kind", kind);
  c.set("network.encoder_channels", "2,2,2");
  c.set("network.feature_width", "12");
  c.set("network.lstm_width", "8");
  c.set("network.critic_hidden", "12");
  c.set("network.atoms", "11");
  c.set("network.v_min", "-30.0");
  c.set("network.v_max", "30.0");
  c.set("learner.batch_size", "4");
  c.set("learner.trajectory_length", "8");
  c.set("learner.trajectory_length_distill", "8");
  c.set("learner.action_samples", "6");
  c.set("learner.target_refresh", "5");
  c.set("replay.capacity", "128");
  c.set("replay.min_fill", "1");
  c.set("replay.ratio", "4");
  c.set("orchestrate.num_actors", "2");
  c.set("orchestrate.snapshot_every", "2");
  c.set("orchestrate.learner_steps", "6");
  c.set("orchestrate.episode_seconds", "1.2");
  c.set("orchestrate.getup_episode_seconds", "1.2");
  c.set("orchestrate.return_window", "8");
  c.set("render.variant_count", "2");
  return c;
}

std::string read_file(const std::string& path) { return report::read_text(path); }

size_t count_rows(const std::string& csv) {
  size_t rows = 0;
  for (char ch : csv)
    if (ch == '\n') ++rows;
  return rows ? rows - 1 : 0;  // minus header
}

}  // namespace

TEST_CASE("stage names round trip") {
  for (Stage s : {Stage::ExpertGetUp, Stage::ExpertScorer, Stage::Distill})
    CHECK(stage_from_string(stage_name(s)) == s);
  CHECK(stage_from_string("getup") == Stage::ExpertGetUp);
  CHECK_THROWS_AS(stage_from_string("warmup"), ConfigError);
}

TEST_CASE("snapshot store appends strictly increasing indices with metadata") {
  std::string dir = fresh_dir("store_basic");
  SnapshotStore store(dir);
  CHECK(store.count() == 0);
  CHECK(store.last_index() == 0);
  CHECK_THROWS_AS(store.latest(), DataError);

  ReturnStats rs{1.5, 4.0, -2.0, 7};
  int a = store.append(tiny_params(1), 0, "expert_scorer", 42, rs);
  int b = store.append(tiny_params(2), 500, "expert_scorer", 42, ReturnStats{});
  int c = store.append(tiny_params(3), 1000, "expert_scorer", 42, ReturnStats{});
  CHECK(a == 1);
  CHECK(b == 2);
  CHECK(c == 3);
  CHECK(store.indices() == std::vector<int>{1, 2, 3});

  PolicySnapshot snap = store.load(1);
  CHECK(snap.index == 1);
  CHECK(snap.learner_step == 0);
  CHECK(snap.stage == "expert_scorer");
  CHECK(snap.config_hash == 42);
  CHECK(snap.returns.mean == doctest::Approx(1.5));
  CHECK(snap.returns.best == doctest::Approx(4.0));
  CHECK(snap.returns.worst == doctest::Approx(-2.0));
  CHECK(snap.returns.episodes == 7);
  CHECK(store.latest().index == 3);
}

TEST_CASE("snapshots are immutable across re-reads and store reopens") {
  std::string dir = fresh_dir("store_immutable");
  SnapshotStore store(dir);
  store.append(tiny_params(11), 10, "distill", 7, ReturnStats{});
  uint64_t fp1 = store.load(1).params.fingerprint();
  store.append(tiny_params(12), 20, "distill", 7, ReturnStats{});
  uint64_t fp2 = store.load(1).params.fingerprint();
  CHECK(fp1 == fp2);

  SnapshotStore reopened(dir);
  CHECK(reopened.indices() == std::vector<int>{1, 2});
  CHECK(reopened.load(1).params.fingerprint() == fp1);
  CHECK(reopened.last_index() == 2);
  // A third append continues the index sequence after reopen.
  CHECK(reopened.append(tiny_params(13), 30, "distill", 7, ReturnStats{}) == 3);
}

TEST_CASE("torn snapshot writes are invisible") {
  std::string dir = fresh_dir("store_torn");
  SnapshotStore store(dir);
  store.append(tiny_params(5), 0, "distill", 1, ReturnStats{});
  // Params file without its .kv commit marker must not count.
  diffnet::save_params(dir + "/snap_000002.psnap", tiny_params(6));
  SnapshotStore reopened(dir);
  CHECK(reopened.count() == 1);
  CHECK(reopened.append(tiny_params(7), 5, "distill", 1, ReturnStats{}) == 2);
}

TEST_CASE("opponent sampling stays in the first quarter") {
  std::string dir = fresh_dir("store_curriculum");
  SnapshotStore store(dir);
  Rng rng(99);

  CHECK_THROWS_WITH_AS(sample_opponent(store, rng),
                       ("curriculum error: empty snapshot store: " + dir).c_str(), DataError);

  store.append(tiny_params(1), 0, "distill", 0, ReturnStats{});
  for (int i = 0; i < 20; ++i) CHECK(sample_opponent(store, rng).index == 1);

  store.append(tiny_params(2), 1, "distill", 0, ReturnStats{});
  store.append(tiny_params(3), 2, "distill", 0, ReturnStats{});
  // Below four snapshots: uniform over all of them.
  std::map<int, int> counts;
  for (int i = 0; i < 3000; ++i) counts[sample_opponent(store, rng).index]++;
  for (int idx : {1, 2, 3})
    CHECK(std::abs(counts[idx] / 3000.0 - 1.0 / 3.0) <= 0.04);
}

TEST_CASE("curriculum over 100 snapshots is uniform over indices 1-25") {
  std::string dir = fresh_dir("store_hundred");
  SnapshotStore store(dir);
  for (int i = 0; i < 100; ++i) store.append(tiny_params(i), i, "distill", 0, ReturnStats{});
  CHECK(store.count() == 100);

  Rng rng(123);
  std::map<int, int> counts;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    int idx = sample_opponent(store, rng).index;
    CHECK(idx >= 1);
    CHECK(idx <= 25);
    counts[idx]++;
  }
  double chi2 = 0.0;
  const double expected = draws / 25.0;
  for (int idx = 1; idx <= 25; ++idx) {
    CHECK(std::abs(counts[idx] / double(draws) - 0.04) <= 0.01);
    double d = counts[idx] - expected;
    chi2 += d * d / expected;
  }
  CHECK(chi2 < 42.98);  // dof 24, p = 0.01
}

TEST_CASE("stage config wires lengths, rewards, and modes per stage") {
  Config c;
  StageConfig expert = StageConfig::from(c, Stage::ExpertScorer);
  CHECK(expert.learn.trajectory_length == 48);
  CHECK(expert.episode_seconds == doctest::Approx(20.0));
  CHECK_FALSE(expert.threaded);
  CHECK(expert.sim.w_scoring == doctest::Approx(1.0));

  StageConfig distill = StageConfig::from(c, Stage::Distill);
  CHECK(distill.learn.trajectory_length == 145);

  StageConfig getup = StageConfig::from(c, Stage::ExpertGetUp);
  CHECK(getup.learn.trajectory_length == 48);
  CHECK(getup.episode_seconds == doctest::Approx(4.0));
  CHECK(getup.sim.w_scoring == doctest::Approx(0.0));
  CHECK(getup.sim.w_velocity_to_ball == doctest::Approx(0.0));
  CHECK(getup.sim.w_ball_to_goal == doctest::Approx(0.0));
  CHECK(getup.sim.w_upright == doctest::Approx(1.0));

  Config threads = tiny_cfg("state");
  threads.set("orchestrate.mode", "threads");
  CHECK(StageConfig::from(threads, Stage::ExpertScorer).threaded);
  Config bad;
  bad.set("orchestrate.mode", "fibers");
  CHECK_THROWS_AS(StageConfig::from(bad, Stage::ExpertScorer), ConfigError);
}

TEST_CASE("scripted get-up rights the agent within two seconds") {
  Config c;
  StageConfig cfg = StageConfig::from(c, Stage::ExpertGetUp);
  diffnet::ParameterSet unused;
  int up = 0;
  for (int i = 0; i < 20; ++i) {
    EpisodeRequest req;
    req.scenario = sim::ScenarioKind::Penalty;  // starts fallen
    req.pilot = Pilot::ScriptedGetUp;
    req.opponent = OpponentKind::None;
    req.seconds = 4.0;
    req.seed = 1000 + i;
    req.collect = false;
    EpisodeResult ep = run_episode(cfg, unused, {}, req);
    CHECK_FALSE(ep.faulted);
    if (ep.first_upright_time >= 0 && ep.first_upright_time <= 2.0) ++up;
  }
  CHECK(up >= 18);  // task solvable: >= 90% of episodes
}

TEST_CASE("scripted chase-and-kick scores against a random opponent") {
  Config c;
  StageConfig cfg = StageConfig::from(c, Stage::ExpertScorer);
  diffnet::ParameterSet unused;
  int scored = 0, against = 0;
  double ret = 0.0;
  for (int i = 0; i < 20; ++i) {
    EpisodeRequest req;
    req.pilot = Pilot::ScriptedChase;
    req.opponent = OpponentKind::UniformRandom;
    req.seconds = 20.0;
    req.seed = 5000 + i;
    req.collect = false;
    EpisodeResult ep = run_episode(cfg, unused, {}, req);
    CHECK_FALSE(ep.faulted);
    if (ep.goals_for > 0) ++scored;
    against += ep.goals_against;
    ret += ep.episode_return;
  }
  CHECK(scored >= 16);  // >= 80% of full games
  CHECK(against <= 2);
  CHECK(ret / 20.0 > 10.0);
}

TEST_CASE("episodes chunk into exact slices with recomputable behavior stats") {
  Config c = tiny_cfg("vision");
  c.set("learner.trajectory_length", "4");
  StageConfig cfg = StageConfig::from(c, Stage::ExpertScorer);
  Rng rng(7);
  diffnet::ParameterSet policy = nets::init_policy_params(cfg.net, rng);
  std::vector<render::SceneVariant> scenes = render::bake_default_variants(2);

  EpisodeRequest req;
  req.opponent = OpponentKind::UniformRandom;
  req.seconds = 0.5;  // 20 steps -> 5 slices of 4
  req.seed = 77;
  req.policy_version = 9;
  EpisodeResult ep = run_episode(cfg, policy, scenes, req);
  CHECK_FALSE(ep.faulted);
  CHECK(ep.env_steps == 20);
  REQUIRE(ep.slices.size() == 5);

  nets::Actor probe(cfg.net, policy);
  for (size_t si = 0; si < ep.slices.size(); ++si) {
    const auto& slice = ep.slices[si];
    CHECK(slice.length() == 4);
    CHECK(slice.policy_version == 9);
    probe.state.h.assign(slice.init_h.begin(), slice.init_h.end());
    probe.state.c.assign(slice.init_c.begin(), slice.init_c.end());
    for (int t = 0; t < slice.length(); ++t) {
      const auto& rec = slice.records[t];
      CHECK(rec.episode_start == (si == 0 && t == 0 ? 1 : 0));
      CHECK(rec.obs.pixels.size() == size_t(render::kFrameSize));
      diffnet::GaussianActionDistribution dist = probe.step(rec.obs);
      std::vector<double> a(sim::kActionDim);
      for (int i = 0; i < sim::kActionDim; ++i) {
        a[i] = rec.action[i];
        CHECK(std::abs(dist.mean[i] - rec.behavior_mean[i]) <= 1e-5);
        CHECK(std::abs(dist.stddev[i] - rec.behavior_std[i]) <= 1e-5);
      }
      CHECK(std::abs(dist.log_prob(a) - rec.behavior_log_prob) <= 1e-5);
    }
  }
}

TEST_CASE("episode results are reproducible from the seed") {
  Config c = tiny_cfg("state");
  StageConfig cfg = StageConfig::from(c, Stage::ExpertScorer);
  Rng rng(3);
  diffnet::ParameterSet policy = nets::init_policy_params(cfg.net, rng);
  EpisodeRequest req;
  req.opponent = OpponentKind::UniformRandom;
  req.seconds = 1.0;
  req.seed = 31;
  EpisodeResult a = run_episode(cfg, policy, {}, req);
  EpisodeResult b = run_episode(cfg, policy, {}, req);
  CHECK(a.episode_return == b.episode_return);
  CHECK(a.env_steps == b.env_steps);
  REQUIRE(a.slices.size() == b.slices.size());
  for (size_t i = 0; i < a.slices.size(); ++i)
    CHECK(replay::serialize_slice(a.slices[i]) == replay::serialize_slice(b.slices[i]));
  req.seed = 32;
  EpisodeResult d = run_episode(cfg, policy, {}, req);
  CHECK(d.episode_return != a.episode_return);
}

TEST_CASE("env faults end the episode without throwing") {
  Config c = tiny_cfg("state");
  StageConfig cfg = StageConfig::from(c, Stage::ExpertScorer);
  Rng rng(3);
  diffnet::ParameterSet policy = nets::init_policy_params(cfg.net, rng);
  policy.at("pi.mean.b").data.assign(sim::kActionDim,
                                     std::numeric_limits<double>::quiet_NaN());
  EpisodeRequest req;
  req.opponent = OpponentKind::UniformRandom;
  req.seconds = 1.0;
  req.seed = 5;
  EpisodeResult ep = run_episode(cfg, policy, {}, req);
  CHECK(ep.faulted);
  CHECK(ep.fault.find("non-finite action") != std::string::npos);
  CHECK(ep.env_steps == 0);
  CHECK(ep.slices.empty());
}

TEST_CASE("actor channel keeps a bounded return window") {
  ActorChannel ch;
  ch.window_cap = 3;
  CHECK(ch.running_return() == 0.0);
  ch.push_return(1.0);
  ch.push_return(5.0);
  CHECK(ch.running_return() == doctest::Approx(3.0));
  ch.push_return(-2.0);
  ch.push_return(6.0);  // evicts 1.0
  ReturnStats st = ch.window_stats();
  CHECK(st.episodes == 4);
  CHECK(st.mean == doctest::Approx(3.0));
  CHECK(st.best == doctest::Approx(6.0));
  CHECK(st.worst == doctest::Approx(-2.0));
  ch.log_fault("boom");
  CHECK(ch.faults() == std::vector<std::string>{"boom"});
}

TEST_CASE("stage-1 sync run snapshots on cadence and balances the ratio") {
  Config c = tiny_cfg("state");
  std::string dir = fresh_dir("stage1_sync");
  StageConfig cfg = StageConfig::from(c, Stage::ExpertScorer);
  StageResult res;
  SnapshotStore store = run_stage1(Stage::ExpertScorer, cfg, dir, &res);

  CHECK(res.steps_done == 6);
  CHECK(res.snapshot_indices == std::vector<int>{1, 2, 3, 4});
  CHECK(res.snapshot_steps == std::vector<int64_t>{0, 2, 4, 6});
  CHECK(store.count() == 4);
  CHECK(res.episodes >= 1);
  CHECK(double(res.env_steps) / double(res.steps_done) >= cfg.ratio_target);
  CHECK(count_rows(read_file(dir + "/metrics.csv")) == 6);
  CHECK(fs::exists(dir + "/checkpoint.kv"));
  CHECK(fs::exists(dir + "/datasets"));
  CHECK(fs::exists(dir + "/report"));

  // Snapshot params actually move as learning proceeds.
  CHECK(store.load(1).params.fingerprint() != store.load(4).params.fingerprint());
}

TEST_CASE("identical sync runs reproduce metrics.csv byte for byte") {
  Config c = tiny_cfg("state");
  std::string d1 = fresh_dir("determinism_a");
  std::string d2 = fresh_dir("determinism_b");
  StageConfig cfg = StageConfig::from(c, Stage::ExpertScorer);
  run_stage1(Stage::ExpertScorer, cfg, d1);
  run_stage1(Stage::ExpertScorer, cfg, d2);
  CHECK(read_file(d1 + "/metrics.csv") == read_file(d2 + "/metrics.csv"));
  CHECK(read_file(d1 + "/metrics.csv").size() > 100);
}

TEST_CASE("killed runs resume with identical snapshot indices and counters") {
  Config c = tiny_cfg("state");
  c.set("orchestrate.snapshot_every", "4");
  c.set("orchestrate.learner_steps", "10");
  StageConfig full = StageConfig::from(c, Stage::ExpertScorer);

  std::string uninterrupted = fresh_dir("resume_full");
  StageResult ref;
  run_stage1(Stage::ExpertScorer, full, uninterrupted, &ref);

  std::string resumed = fresh_dir("resume_split");
  StageConfig part = full;
  part.step_budget = 5;  // "kill" mid-interval after the end-of-run checkpoint
  StageResult first;
  run_stage1(Stage::ExpertScorer, part, resumed, &first);
  CHECK(first.steps_done == 5);
  CHECK(first.snapshot_indices == std::vector<int>{1, 2});

  StageResult second;
  run_stage1(Stage::ExpertScorer, full, resumed, &second);
  CHECK(second.steps_done == ref.steps_done);
  CHECK(second.snapshot_indices == ref.snapshot_indices);
  CHECK(second.snapshot_steps == ref.snapshot_steps);
  CHECK(count_rows(read_file(resumed + "/metrics.csv")) == 10);
  CHECK(count_rows(read_file(uninterrupted + "/metrics.csv")) == 10);
}

TEST_CASE("threaded harness tracks the env-to-learner ratio") {
  Config c = tiny_cfg("state");
  c.set("orchestrate.mode", "threads");
  c.set("orchestrate.num_actors", "8");
  c.set("orchestrate.learner_steps", "60");
  c.set("replay.ratio", "16");
  std::string dir = fresh_dir("threads_ratio");
  StageConfig cfg = StageConfig::from(c, Stage::ExpertScorer);
  StageResult res;
  run_stage1(Stage::ExpertScorer, cfg, dir, &res);
  CHECK(res.steps_done == 60);
  double ratio = double(res.env_steps) / double(res.steps_done);
  CHECK(ratio >= 16.0 * 0.8);
  CHECK(ratio <= 16.0 * 1.2);
}

TEST_CASE("stage-2 needs both teachers and a distill config") {
  Config c = tiny_cfg("state");
  StageConfig cfg = StageConfig::from(c, Stage::Distill);
  SnapshotStore store(fresh_dir("stage2_err") + "/snapshots");
  CHECK_THROWS_WITH_AS(run_stage2({}, store, {}, cfg, fresh_dir("stage2_err2")),
                       "distill requires both teachers", ConfigError);
  StageConfig wrong = StageConfig::from(c, Stage::ExpertScorer);
  learner::TeacherSpec t1, t2;
  t1.cfg = t2.cfg = cfg.net;
  CHECK_THROWS_AS(run_stage2({t1, t2}, store, {}, wrong, fresh_dir("stage2_err3")), ConfigError);
  CHECK_THROWS_AS(run_stage1(Stage::Distill, cfg, fresh_dir("stage2_err4")), ConfigError);
}

TEST_CASE("stage-2 grows the opponent pool and mixes offline data") {
  Config c = tiny_cfg("state");
  c.set("orchestrate.learner_steps", "4");
  c.set("orchestrate.export_buffer", "true");

  std::string getup_dir = fresh_dir("stage2_getup");
  StageConfig getup_cfg = StageConfig::from(c, Stage::ExpertGetUp);
  SnapshotStore getup_store = run_stage1(Stage::ExpertGetUp, getup_cfg, getup_dir);

  std::string scorer_dir = fresh_dir("stage2_scorer");
  StageConfig scorer_cfg = StageConfig::from(c, Stage::ExpertScorer);
  SnapshotStore scorer_store = run_stage1(Stage::ExpertScorer, scorer_cfg, scorer_dir);
  REQUIRE(fs::exists(scorer_dir + "/datasets/replay_export.raed"));

  std::vector<learner::TeacherSpec> teachers{
      teacher_from_store("getup", getup_store, getup_cfg.net, 2.0),
      teacher_from_store("scorer", scorer_store, scorer_cfg.net, 4.0)};
  CHECK(teachers[0].params.fingerprint() == getup_store.latest().params.fingerprint());

  std::vector<replay::DatasetFile> offline{
      replay::import_dataset(scorer_dir + "/datasets/replay_export.raed")};
  CHECK(offline[0].slices.size() > 0);

  Config c2 = tiny_cfg("state");
  c2.set("orchestrate.learner_steps", "6");
  std::string dir = fresh_dir("stage2_run");
  StageConfig cfg = StageConfig::from(c2, Stage::Distill);
  CHECK(cfg.learn.trajectory_length == 8);
  SnapshotStore store(dir + "/snapshots");
  StageResult res;
  run_stage2(teachers, store, offline, cfg, dir, &res);

  CHECK(res.steps_done == 6);
  CHECK(res.snapshot_indices == std::vector<int>{1, 2, 3, 4});  // pool grew
  CHECK(count_rows(read_file(dir + "/metrics.csv")) == 6);
  // Distill metrics carry one lambda column per teacher.
  std::string header = read_file(dir + "/metrics.csv").substr(0, 200);
  CHECK(header.find("lambda_getup") != std::string::npos);
  CHECK(header.find("lambda_scorer") != std::string::npos);
}

TEST_CASE("evaluate_policy aggregates wins and upright fractions") {
  Config c = tiny_cfg("state");
  StageConfig cfg = StageConfig::from(c, Stage::ExpertGetUp);
  Rng rng(5);
  diffnet::ParameterSet policy = nets::init_policy_params(cfg.net, rng);
  EvalStats ev = evaluate_policy(cfg, policy, OpponentKind::None, nullptr, 4, 900,
                                 sim::ScenarioKind::Penalty);
  CHECK(ev.episodes == 4);
  CHECK(ev.wins + ev.losses + ev.draws == 4);
  CHECK(ev.upright_within_frac >= 0.0);
  CHECK(ev.upright_within_frac <= 1.0);
}

TEST_CASE("re-rendered state gameplay yields vision-schema datasets") {
  Config c = tiny_cfg("state");
  StageConfig cfg = StageConfig::from(c, Stage::ExpertScorer);
  Rng rng(17);
  diffnet::ParameterSet policy = nets::init_policy_params(cfg.net, rng);
  std::vector<render::SceneVariant> scenes = render::bake_default_variants(2);
  std::string path = fresh_dir("rerender") + "/state_sourced.raed";

  CHECK_THROWS_AS(generate_rerendered_dataset(StageConfig::from(tiny_cfg("vision"),
                                                                Stage::ExpertScorer),
                                              policy, scenes, 1, 4, 3, path, "x"),
                  ConfigError);

  size_t n = generate_rerendered_dataset(cfg, policy, scenes, 2, 4, 3, path, "state-sourced");
  CHECK(n > 0);
  replay::DatasetFile df = replay::import_dataset(path);
  CHECK(df.experiment_id == "state-sourced");
  CHECK(df.slice_length == 4);
  REQUIRE(df.slices.size() == n);
  for (const auto& rec : df.slices[0].records) {
    CHECK(rec.obs.pixels.size() == size_t(render::kFrameSize));
    // Frames are real renders, not zero fill.
    int nonzero = 0;
    for (uint8_t px : rec.obs.pixels) nonzero += px != 0;
    CHECK(nonzero > 100);
  }
  // Schema matches genuine vision slices, so a vision learner can consume it.
  Config v = tiny_cfg("vision");
  v.set("learner.trajectory_length", "4");
  StageConfig vcfg = StageConfig::from(v, Stage::ExpertScorer);
  Rng vr(23);
  diffnet::ParameterSet vpolicy = nets::init_policy_params(vcfg.net, vr);
  EpisodeRequest req;
  req.seconds = 0.2;
  req.seed = 4;
  EpisodeResult ve = run_episode(vcfg, vpolicy, scenes, req);
  REQUIRE_FALSE(ve.slices.empty());
  CHECK(replay::schema_hash(df.slices[0]) == replay::schema_hash(ve.slices[0]));
}

TEST_CASE("datasource ablation emits three labeled curves and datasets") {
  Config c = tiny_cfg("state");
  c.set("orchestrate.learner_steps", "2");
  c.set("orchestrate.eval_every", "1");
  c.set("orchestrate.eval_episodes", "1");
  c.set("orchestrate.episode_seconds", "0.8");
  c.set("orchestrate.getup_episode_seconds", "0.8");
  c.set("learner.trajectory_length", "6");
  c.set("learner.trajectory_length_distill", "6");
  c.set("learner.batch_size", "2");
  std::string dir = fresh_dir("ablation");
  AblationResult res = run_datasource_ablation(c, dir);

  CHECK(res.labels == std::vector<std::string>{"scratch", "state_rae", "vision_rae"});
  CHECK(res.final_returns.size() == 3);
  CHECK(fs::exists(res.curves_csv));
  CHECK(fs::exists(res.curves_svg));
  CHECK(fs::exists(res.state_dataset));
  CHECK(fs::exists(res.vision_dataset));

  std::string csv = read_file(res.curves_csv);
  CHECK(csv.find("scratch,") != std::string::npos);
  CHECK(csv.find("state_rae,") != std::string::npos);
  CHECK(csv.find("vision_rae,") != std::string::npos);
  CHECK(replay::import_dataset(res.state_dataset).slices.size() > 0);
  CHECK(replay::import_dataset(res.vision_dataset).slices.size() > 0);
}
