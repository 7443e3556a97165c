#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "doctest.h"
#include "pitchlab/probes.hpp"
#include "pitchlab/report.hpp"

using namespace pitchlab;
using namespace pitchlab::probes;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / "pitchlab_probes" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

ProbeHead random_head(int M, int F, uint64_t seed, double scale = 0.5) {
  ProbeHead h;
  h.target = ProbeTarget::BallPosition;
  h.components = M;
  h.feature_width = F;
  Rng rng(seed);
  auto& w = h.params.add("w", {5 * M, F});
  auto& b = h.params.add("b", {5 * M});
  for (auto& v : w.data) v = scale * rng.normal();
  for (auto& v : b.data) v = scale * rng.normal();
  return h;
}

// Synthetic dataset spread over enough fake episodes to satisfy fit_probe.
ProbeDataset synthetic_dataset(size_t n, int F, uint64_t seed,
                               const std::function<void(Rng&, ProbeSample&)>& fill) {
  ProbeDataset d;
  d.feature_width = F;
  Rng rng(seed);
  size_t per_episode = std::max<size_t>(1, n / 12);
  for (size_t i = 0; i < n; ++i) {
    if (i % per_episode == 0) d.episode_starts.push_back(i);
    ProbeSample s;
    s.features.resize(F);
    s.time = double(i % per_episode) * 0.05;
    fill(rng, s);
    d.samples.push_back(std::move(s));
  }
  return d;
}

double mean_nll(const ProbeHead& head, const ProbeDataset& d) {
  double acc = 0.0;
  for (const auto& s : d.samples) {
    MixtureDensity mx = head.predict(s.features);
    const auto& y = s.label(head.target);
    acc += mx.nll(y[0], y[1]);
  }
  return acc / double(d.samples.size());
}

Config tiny_cfg() {
  Config c;
  c.set("network.kind", "state");
  c.set("network.encoder_channels", "2,2,2");
  c.set("network.feature_width", "12");
  c.set("network.lstm_width", "16");
  c.set("network.critic_hidden", "12");
  c.set("network.atoms", "11");
  c.set("orchestrate.episode_seconds", "1.2");
  c.set("render.variant_count", "2");
  return c;
}

}  // namespace

TEST_CASE("probe target names round trip") {
  for (ProbeTarget t : {ProbeTarget::SelfPosition, ProbeTarget::BallPosition,
                        ProbeTarget::OpponentPosition})
    CHECK(target_from_string(target_name(t)) == t);
  CHECK_THROWS_AS(target_from_string("referee"), ConfigError);
}

TEST_CASE("probe config reads its keys and rejects bad values") {
  Config c;
  ProbeConfig p = ProbeConfig::from(c);
  CHECK(p.components == 5);
  CHECK(p.steps == 2000);
  CHECK(p.batch == 256);
  CHECK(p.holdout == doctest::Approx(0.25));
  CHECK_FALSE(p.egocentric);
  CHECK(p.heatmap_width == 100);
  CHECK(p.heatmap_height == 80);
  CHECK(p.episodes == 200);
  c.set("probes.holdout", "1.5");
  CHECK_THROWS_AS(ProbeConfig::from(c), ConfigError);
  Config c2;
  c2.set("probes.components", "0");
  CHECK_THROWS_AS(ProbeConfig::from(c2), ConfigError);
}

TEST_CASE("predictions are well-formed mixtures on 10^4 random features") {
  ProbeHead head = random_head(5, 16, 21);
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    std::vector<float> f(16);
    for (auto& v : f) v = float(rng.normal(0.0, 2.0));
    MixtureDensity d = head.predict(f);
    REQUIRE(d.components() == 5);
    double sum = 0.0;
    for (int m = 0; m < 5; ++m) {
      CHECK(d.weight[m] >= 0.0);
      sum += d.weight[m];
      CHECK(std::isfinite(d.mean[m][0]));
      CHECK(std::isfinite(d.mean[m][1]));
      CHECK(d.stddev[m][0] >= kStdFloor);
      CHECK(d.stddev[m][1] >= kStdFloor);
    }
    CHECK(std::abs(sum - 1.0) <= 1e-6);
  }
}

TEST_CASE("prediction is deterministic for a fixed head and features") {
  ProbeHead head = random_head(3, 8, 5);
  std::vector<float> f{0.3f, -1.2f, 0.8f, 0.0f, 2.0f, -0.5f, 1.1f, 0.9f};
  MixtureDensity a = head.predict(f);
  MixtureDensity b = head.predict(f);
  CHECK(a.weight == b.weight);
  CHECK(a.mean == b.mean);
  CHECK(a.stddev == b.stddev);
}

TEST_CASE("mixture density integrates to one on a grid covering three sigma") {
  auto grid_integral = [](const MixtureDensity& d) {
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (int m = 0; m < d.components(); ++m) {
      x0 = std::min(x0, d.mean[m][0] - 3 * d.stddev[m][0]);
      x1 = std::max(x1, d.mean[m][0] + 3 * d.stddev[m][0]);
      y0 = std::min(y0, d.mean[m][1] - 3 * d.stddev[m][1]);
      y1 = std::max(y1, d.mean[m][1] + 3 * d.stddev[m][1]);
    }
    const int N = 200;
    double dx = (x1 - x0) / N, dy = (y1 - y0) / N;
    double acc = 0.0;
    for (int r = 0; r < N; ++r)
      for (int c = 0; c < N; ++c)
        acc += d.pdf(x0 + (c + 0.5) * dx, y0 + (r + 0.5) * dy);
    return acc * dx * dy;
  };

  MixtureDensity hand;
  hand.weight = {0.5, 0.3, 0.2};
  hand.mean = {{1.0, 1.0}, {3.5, 2.5}, {2.0, 3.0}};
  hand.stddev = {{0.3, 0.2}, {0.5, 0.6}, {0.15, 0.4}};
  CHECK(std::abs(grid_integral(hand) - 1.0) <= 1e-2);

  // Same property for densities produced by a head.
  ProbeHead head = random_head(4, 6, 9, 0.2);
  Rng rng(11);
  for (int i = 0; i < 5; ++i) {
    std::vector<float> f(6);
    for (auto& v : f) v = float(rng.normal());
    CHECK(std::abs(grid_integral(head.predict(f)) - 1.0) <= 1e-2);
  }
}

TEST_CASE("probe fitting never touches the policy and needs ten trajectories") {
  diffnet::ParameterSet policy;
  Rng rng(1);
  auto& t = policy.add("enc", {64});
  for (auto& v : t.data) v = float(rng.normal());
  uint64_t before = policy.fingerprint();

  ProbeDataset tiny = synthetic_dataset(8, 4, 2, [](Rng& r, ProbeSample& s) {
    for (auto& v : s.features) v = float(r.normal());
    s.ball_pos = {r.uniform(), r.uniform()};
  });
  tiny.episode_starts = {0, 1, 2, 3, 4, 5, 6, 7};  // 8 trajectories
  ProbeConfig pc;
  pc.steps = 10;
  CHECK_THROWS_WITH_AS(fit_probe(policy, tiny, ProbeTarget::BallPosition, pc),
                       "insufficient data: probe fitting needs at least 10 trajectories, got 8",
                       DataError);

  ProbeDataset ok = synthetic_dataset(60, 4, 2, [](Rng& r, ProbeSample& s) {
    for (auto& v : s.features) v = float(r.normal());
    s.ball_pos = {r.uniform(), r.uniform()};
  });
  fit_probe(policy, ok, ProbeTarget::BallPosition, pc);
  CHECK(policy.fingerprint() == before);
}

TEST_CASE("full-batch training NLL decreases monotonically at small learning rate") {
  ProbeDataset d = synthetic_dataset(80, 6, 7, [](Rng& r, ProbeSample& s) {
    for (auto& v : s.features) v = float(r.normal());
    s.ball_pos = {0.4 * s.features[0] + 0.1 * s.features[1] + 0.05 * r.normal(),
                  -0.3 * s.features[2] + 0.05 * r.normal()};
  });
  diffnet::ParameterSet policy;
  ProbeConfig pc;
  pc.components = 3;
  pc.lr = 1e-4;
  pc.steps = 100;
  pc.batch = 80;  // covers the set: fixed-set deterministic loss
  FitResult fit;
  fit_probe(policy, d, ProbeTarget::BallPosition, pc, &fit);
  REQUIRE(fit.nll.size() == 100);
  for (size_t k = 1; k < fit.nll.size(); ++k) CHECK(fit.nll[k] < fit.nll[k - 1]);
}

TEST_CASE("single-component probe converges to the label mean on constant features") {
  std::array<double, 2> mean_label{0.0, 0.0};
  ProbeDataset d = synthetic_dataset(120, 4, 13, [&](Rng& r, ProbeSample& s) {
    std::fill(s.features.begin(), s.features.end(), 0.5f);
    s.ball_pos = {1.4 + 0.3 * r.normal(), 2.2 + 0.25 * r.normal()};
    mean_label[0] += s.ball_pos[0];
    mean_label[1] += s.ball_pos[1];
  });
  mean_label[0] /= 120.0;
  mean_label[1] /= 120.0;

  diffnet::ParameterSet policy;
  ProbeConfig pc;
  pc.components = 1;
  pc.lr = 5e-3;
  pc.steps = 4000;
  pc.batch = 120;
  ProbeHead head = fit_probe(policy, d, ProbeTarget::BallPosition, pc);
  MixtureDensity out = head.predict(d.samples[0].features);
  CHECK(out.weight[0] == doctest::Approx(1.0));
  CHECK(std::abs(out.mean[0][0] - mean_label[0]) <= 2e-2);
  CHECK(std::abs(out.mean[0][1] - mean_label[1]) <= 2e-2);
}

TEST_CASE("heatmap pinpoints a tight component and flattens a broad one") {
  sim::PitchGeometry pitch;  // 5 x 4
  MixtureDensity tight;
  tight.weight = {1.0};
  tight.mean = {{2.3, 1.7}};
  tight.stddev = {{0.05, 0.05}};
  Heatmap hm = heatmap(tight, pitch, 100, 80);
  CHECK(hm.width == 100);
  CHECK(hm.height == 80);
  CHECK(std::abs(hm.argmax_pos[0] - 2.3) <= hm.cell_dx);
  CHECK(std::abs(hm.argmax_pos[1] - 1.7) <= hm.cell_dy);
  CHECK(hm.display[size_t(hm.argmax_row) * 100 + hm.argmax_col] == 255);

  MixtureDensity broad;
  broad.weight = {1.0};
  broad.mean = {{2.5, 2.0}};
  broad.stddev = {{50.0, 50.0}};
  Heatmap flat = heatmap(broad, pitch, 100, 80);
  double mx = *std::max_element(flat.density.begin(), flat.density.end());
  double mn = *std::min_element(flat.density.begin(), flat.density.end());
  CHECK(mx / mn < 10.0);
}

TEST_CASE("heatmap display round-trips through PGM losslessly") {
  sim::PitchGeometry pitch;
  MixtureDensity d;
  d.weight = {0.6, 0.4};
  d.mean = {{1.0, 1.0}, {4.0, 3.0}};
  d.stddev = {{0.4, 0.3}, {0.2, 0.5}};
  Heatmap hm = heatmap(d, pitch, 40, 32);
  std::string path = fresh_dir("pgm") + "/heat.pgm";
  report::write_pgm(path, hm.width, hm.height, hm.display);

  std::vector<uint8_t> bytes = report::read_bytes(path);
  std::string header(bytes.begin(), bytes.begin() + 32);
  size_t p1 = header.find('\n'), p2 = header.find('\n', p1 + 1), p3 = header.find('\n', p2 + 1);
  CHECK(header.substr(0, p1) == "P5");
  CHECK(header.substr(p1 + 1, p2 - p1 - 1) == "40 32");
  std::vector<uint8_t> payload(bytes.begin() + long(p3) + 1, bytes.end());
  CHECK(payload == hm.display);
}

TEST_CASE("oracle features drive argmax error to the grid floor") {
  sim::PitchGeometry pitch;
  auto leak = [&](Rng& r, ProbeSample& s) {
    double x = 0.3 + 4.4 * r.uniform(), y = 0.3 + 3.4 * r.uniform();
    s.ball_pos = {x, y};
    s.features = {float(x), float(y), 1.0f, 0.0f};
    s.ball_visible = 1;
  };
  ProbeDataset train = synthetic_dataset(240, 4, 31, leak);
  ProbeDataset held = synthetic_dataset(60, 4, 32, leak);

  diffnet::ParameterSet policy;
  ProbeConfig pc;
  pc.components = 2;
  pc.lr = 5e-3;
  pc.steps = 3000;
  pc.batch = 240;
  ProbeHead head = fit_probe(policy, train, ProbeTarget::BallPosition, pc);
  ProbeMetrics m = eval_probe(head, held, pitch, 100, 80);
  CHECK(m.in_view_steps == 60);
  CHECK(m.out_view_steps == 0);
  CHECK(m.err_all < 0.1);
  CHECK(std::isfinite(m.nll_all));
}

TEST_CASE("visibility split separates informative from blind steps") {
  sim::PitchGeometry pitch;
  auto fill = [&](Rng& r, ProbeSample& s) {
    double x = 0.3 + 4.4 * r.uniform(), y = 0.3 + 3.4 * r.uniform();
    s.ball_pos = {x, y};
    s.ball_visible = r.uniform() < 0.5 ? 1 : 0;
    if (s.ball_visible)
      s.features = {float(x), float(y), 1.0f, 0.0f};
    else
      s.features = {0.0f, 0.0f, 1.0f, 1.0f};
  };
  ProbeDataset train = synthetic_dataset(400, 4, 41, fill);
  ProbeDataset held = synthetic_dataset(100, 4, 42, fill);

  diffnet::ParameterSet policy;
  ProbeConfig pc;
  pc.components = 3;
  pc.lr = 5e-3;
  pc.steps = 2500;
  pc.batch = 400;
  ProbeHead head = fit_probe(policy, train, ProbeTarget::BallPosition, pc);
  ProbeMetrics m = eval_probe(head, held, pitch, 100, 80);
  CHECK(m.in_view_steps + m.out_view_steps == 100);
  CHECK(m.in_view_steps > 20);
  CHECK(m.out_view_steps > 20);
  CHECK(m.err_in < m.err_out);
  CHECK(m.nll_in < m.nll_out);
  CHECK(m.err_in < 0.15);
  CHECK(m.err_out > 0.5);  // blind steps can at best hit the marginal mean
}

TEST_CASE("holdout split keeps whole episodes and rebases indices") {
  ProbeDataset d = synthetic_dataset(120, 4, 51, [](Rng& r, ProbeSample& s) {
    for (auto& v : s.features) v = float(r.normal());
  });
  REQUIRE(d.episodes() == 12);
  auto [train, held] = d.split_holdout(0.25);
  CHECK(train.episodes() == 9);
  CHECK(held.episodes() == 3);
  CHECK(train.samples.size() == 90);
  CHECK(held.samples.size() == 30);
  CHECK(held.episode_starts[0] == 0);
  CHECK(held.episode_starts[1] == 10);
  CHECK(train.samples.size() + held.samples.size() == d.samples.size());
  CHECK(held.samples[0].features == d.samples[90].features);

  ProbeDataset one;
  one.feature_width = 4;
  one.episode_starts = {0};
  one.samples.resize(5);
  CHECK_THROWS_AS(one.split_holdout(0.25), DataError);
}

TEST_CASE("label permutation preserves marginals but breaks pairing") {
  ProbeDataset d = synthetic_dataset(60, 3, 61, [](Rng& r, ProbeSample& s) {
    for (auto& v : s.features) v = float(r.normal());
    s.ball_pos = {r.uniform(), r.uniform()};
    s.ball_visible = r.uniform() < 0.5;
  });
  Rng rng(9);
  ProbeDataset p = d.permute_labels(rng);
  REQUIRE(p.samples.size() == d.samples.size());
  int moved = 0;
  std::multiset<std::pair<double, double>> orig, perm;
  for (size_t i = 0; i < d.samples.size(); ++i) {
    CHECK(p.samples[i].features == d.samples[i].features);
    orig.insert({d.samples[i].ball_pos[0], d.samples[i].ball_pos[1]});
    perm.insert({p.samples[i].ball_pos[0], p.samples[i].ball_pos[1]});
    moved += p.samples[i].ball_pos != d.samples[i].ball_pos;
  }
  CHECK(orig == perm);
  CHECK(moved > 30);
}

TEST_CASE("collected play traces carry features, labels, and visibility") {
  Config c = tiny_cfg();
  orchestrate::StageConfig cfg = orchestrate::StageConfig::from(c, orchestrate::Stage::ExpertScorer);
  Rng rng(3);
  diffnet::ParameterSet policy = nets::init_policy_params(cfg.net, rng);

  ProbeDataset d = collect_probe_data(cfg, policy, {}, orchestrate::OpponentKind::UniformRandom,
                                      nullptr, 12, 77);
  CHECK(d.feature_width == 16);
  CHECK(d.episodes() == 12);
  CHECK(d.episode_starts[0] == 0);
  REQUIRE(d.samples.size() > 100);
  for (size_t e = 0; e < d.episode_starts.size(); ++e) {
    size_t end = e + 1 < d.episode_starts.size() ? d.episode_starts[e + 1] : d.samples.size();
    CHECK(d.samples[d.episode_starts[e]].time == doctest::Approx(0.0));
    for (size_t i = d.episode_starts[e] + 1; i < end; ++i)
      CHECK(d.samples[i].time > d.samples[i - 1].time);
  }
  for (const auto& s : d.samples) {
    CHECK(s.features.size() == 16);
    CHECK(s.ball_pos[0] >= 0.0);
    CHECK(s.ball_pos[0] <= cfg.sim.pitch.length);
    CHECK(s.self_pos[1] >= 0.0);
    CHECK(s.self_pos[1] <= cfg.sim.pitch.width);
  }

  // Same seed, same data; different seed, different play.
  ProbeDataset d2 = collect_probe_data(cfg, policy, {}, orchestrate::OpponentKind::UniformRandom,
                                       nullptr, 12, 77);
  CHECK(d2.samples.size() == d.samples.size());
  CHECK(d2.samples.back().ball_pos == d.samples.back().ball_pos);
  ProbeDataset d3 = collect_probe_data(cfg, policy, {}, orchestrate::OpponentKind::UniformRandom,
                                       nullptr, 12, 78);
  CHECK(d3.samples.back().features != d.samples.back().features);
}

TEST_CASE("egocentric labels rotate into the body frame") {
  Config c = tiny_cfg();
  orchestrate::StageConfig cfg = orchestrate::StageConfig::from(c, orchestrate::Stage::ExpertScorer);
  Rng rng(3);
  diffnet::ParameterSet policy = nets::init_policy_params(cfg.net, rng);
  ProbeDataset global = collect_probe_data(cfg, policy, {},
                                           orchestrate::OpponentKind::UniformRandom, nullptr, 2, 5);
  ProbeDataset ego = collect_probe_data(cfg, policy, {}, orchestrate::OpponentKind::UniformRandom,
                                        nullptr, 2, 5, true);
  REQUIRE(global.samples.size() == ego.samples.size());
  for (size_t i = 0; i < global.samples.size(); ++i) {
    // Same play (same seed): distances are frame-invariant, coordinates differ.
    const auto& g = global.samples[i];
    const auto& e = ego.samples[i];
    CHECK(g.self_pos == e.self_pos);
    double g_dist = std::hypot(g.ball_pos[0] - g.self_pos[0], g.ball_pos[1] - g.self_pos[1]);
    double e_dist = std::hypot(e.ball_pos[0], e.ball_pos[1]);
    CHECK(g_dist == doctest::Approx(e_dist).epsilon(1e-9));
  }
}

TEST_CASE("trained ball probe beats the permuted-label control on held-out play") {
  Config c = tiny_cfg();
  c.set("orchestrate.episode_seconds", "2.4");
  orchestrate::StageConfig cfg = orchestrate::StageConfig::from(c, orchestrate::Stage::ExpertScorer);
  Rng rng(3);
  diffnet::ParameterSet policy = nets::init_policy_params(cfg.net, rng);
  ProbeDataset d = collect_probe_data(cfg, policy, {}, orchestrate::OpponentKind::UniformRandom,
                                      nullptr, 60, 11, /*egocentric=*/true);
  auto [train, held] = d.split_holdout(0.25);

  // Features from a random-init policy are small (|f| ~ 0.06), so the linear
  // head needs a generous step budget to reach the least-squares scale; the
  // 60-episode set keeps that budget clear of the variance-collapse regime.
  ProbeConfig pc;
  pc.components = 2;
  pc.lr = 1e-2;
  pc.steps = 3000;
  pc.batch = 256;
  ProbeHead trained = fit_probe(policy, train, ProbeTarget::BallPosition, pc);
  Rng perm(4);
  ProbeHead chance = fit_probe(policy, train.permute_labels(perm), ProbeTarget::BallPosition, pc);
  double nll_trained = mean_nll(trained, held);
  double nll_chance = mean_nll(chance, held);
  CHECK(nll_trained < nll_chance);
}

TEST_CASE("probe study writes metrics, tracks, and heatmaps") {
  Config c = tiny_cfg();
  c.set("probes.episodes", "16");  // 4 held out leaves the 10+ training episodes fit_probe needs
  c.set("probes.steps", "80");
  c.set("probes.batch", "64");
  c.set("probes.components", "2");
  c.set("probes.heatmap_width", "20");
  c.set("probes.heatmap_height", "16");

  std::string snap_dir = fresh_dir("study_snaps");
  orchestrate::SnapshotStore store(snap_dir);
  Rng rng(3);
  orchestrate::StageConfig scfg =
      orchestrate::StageConfig::from(c, orchestrate::Stage::ExpertScorer);
  store.append(nets::init_policy_params(scfg.net, rng), 0, "expert_scorer", 0,
               orchestrate::ReturnStats{});

  std::string out = fresh_dir("study_out");
  ProbeStudyResult res = run_probe_study(c, snap_dir, out);

  std::string metrics = report::read_text(res.metrics_csv);
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 7);  // header + 6 rows
  for (const char* key : {"self,in_view", "self,out_of_view", "ball,in_view", "ball,out_of_view",
                          "opponent,in_view", "opponent,out_of_view"})
    CHECK(metrics.find(key) != std::string::npos);

  std::string track = report::read_text(res.track_csv);
  CHECK(track.substr(0, track.find('\n')) ==
        "time,target,argmax_x,argmax_y,truth_x,truth_y,nll");
  CHECK(std::count(track.begin(), track.end(), '\n') > 30);

  REQUIRE(res.heatmap_paths.size() == 3);
  for (const auto& p : res.heatmap_paths) {
    std::vector<uint8_t> bytes = report::read_bytes(p);
    CHECK(bytes.size() == size_t(20 * 16) + std::string("P5\n20 16\n255\n").size());
  }
  CHECK(std::isfinite(res.permuted_ball_nll));
  CHECK(std::isfinite(res.ball.nll_all));
  CHECK(fs::exists(out + "/probe_control.csv"));
}
