#include "pitchlab/probes.hpp"

#include <algorithm>
#include <cmath>

#include "pitchlab/report.hpp"

namespace pitchlab::probes {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

double softplus(double r) { return r > 0 ? r + std::log1p(std::exp(-r)) : std::log1p(std::exp(r)); }
double sigmoid(double r) { return r > 0 ? 1.0 / (1.0 + std::exp(-r)) : std::exp(r) / (1.0 + std::exp(r)); }

// log N(v | mu, sigma) for one axis.
double axis_log_density(double v, double mu, double sigma) {
  double z = (v - mu) / sigma;
  return -0.5 * kLog2Pi - std::log(sigma) - 0.5 * z * z;
}

}  // namespace

double MixtureDensity::nll(double x, double y) const {
  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> terms(weight.size());
  for (size_t m = 0; m < weight.size(); ++m) {
    double lw = weight[m] > 0 ? std::log(weight[m]) : -std::numeric_limits<double>::infinity();
    terms[m] = lw + axis_log_density(x, mean[m][0], stddev[m][0]) +
               axis_log_density(y, mean[m][1], stddev[m][1]);
    best = std::max(best, terms[m]);
  }
  if (!std::isfinite(best)) return std::numeric_limits<double>::infinity();
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - best);
  return -(best + std::log(acc));
}

double MixtureDensity::pdf(double x, double y) const { return std::exp(-nll(x, y)); }

std::string target_name(ProbeTarget t) {
  switch (t) {
    case ProbeTarget::SelfPosition: return "self";
    case ProbeTarget::BallPosition: return "ball";
    case ProbeTarget::OpponentPosition: return "opponent";
  }
  throw ConfigError("unknown probe target");
}

ProbeTarget target_from_string(const std::string& s) {
  if (s == "self") return ProbeTarget::SelfPosition;
  if (s == "ball") return ProbeTarget::BallPosition;
  if (s == "opponent") return ProbeTarget::OpponentPosition;
  throw ConfigError("unknown probe target: " + s);
}

ProbeConfig ProbeConfig::from(const Config& cfg) {
  ProbeConfig p;
  p.components = static_cast<int>(cfg.get_int("probes.components"));
  if (p.components < 1) throw ConfigError("rejected configuration: probes.components must be >= 1");
  p.lr = cfg.get_double("probes.lr");
  p.steps = static_cast<int>(cfg.get_int("probes.steps"));
  p.batch = static_cast<int>(cfg.get_int("probes.batch"));
  p.holdout = cfg.get_double("probes.holdout");
  if (p.holdout <= 0.0 || p.holdout >= 1.0)
    throw ConfigError("rejected configuration: probes.holdout must be in (0, 1)");
  p.egocentric = cfg.get_bool("probes.egocentric");
  p.heatmap_width = static_cast<int>(cfg.get_int("probes.heatmap_width"));
  p.heatmap_height = static_cast<int>(cfg.get_int("probes.heatmap_height"));
  p.episodes = static_cast<int>(cfg.get_int("probes.episodes"));
  p.seed = static_cast<uint64_t>(cfg.get_int("seed"));
  return p;
}

const std::array<double, 2>& ProbeSample::label(ProbeTarget t) const {
  switch (t) {
    case ProbeTarget::SelfPosition: return self_pos;
    case ProbeTarget::BallPosition: return ball_pos;
    case ProbeTarget::OpponentPosition: return opponent_pos;
  }
  throw ConfigError("unknown probe target");
}

std::pair<ProbeDataset, ProbeDataset> ProbeDataset::split_holdout(double frac) const {
  if (episodes() < 2) throw DataError("holdout split needs at least 2 episodes");
  size_t hold = std::clamp<size_t>(static_cast<size_t>(std::lround(frac * double(episodes()))),
                                   1, episodes() - 1);
  size_t cut_ep = episodes() - hold;
  size_t cut = episode_starts[cut_ep];

  ProbeDataset train, held;
  train.feature_width = held.feature_width = feature_width;
  train.samples.assign(samples.begin(), samples.begin() + long(cut));
  held.samples.assign(samples.begin() + long(cut), samples.end());
  for (size_t i = 0; i < episode_starts.size(); ++i) {
    if (i < cut_ep)
      train.episode_starts.push_back(episode_starts[i]);
    else
      held.episode_starts.push_back(episode_starts[i] - cut);
  }
  return {std::move(train), std::move(held)};
}

ProbeDataset ProbeDataset::permute_labels(Rng& rng) const {
  ProbeDataset out = *this;
  std::vector<size_t> order(samples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_int(i)]);
  for (size_t i = 0; i < order.size(); ++i) {
    const ProbeSample& src = samples[order[i]];
    out.samples[i].self_pos = src.self_pos;
    out.samples[i].ball_pos = src.ball_pos;
    out.samples[i].opponent_pos = src.opponent_pos;
    out.samples[i].ball_visible = src.ball_visible;
  }
  return out;
}

namespace {

std::array<double, 2> body_frame(const sim::AgentBody& a, Vec2 p) {
  double dx = p.x - a.position.x, dy = p.y - a.position.y;
  double c = std::cos(a.heading), s = std::sin(a.heading);
  return {c * dx + s * dy, -s * dx + c * dy};
}

}  // namespace

ProbeDataset collect_probe_data(const orchestrate::StageConfig& cfg,
                                const diffnet::ParameterSet& policy,
                                const std::vector<render::SceneVariant>& scenes,
                                orchestrate::OpponentKind opponent,
                                const orchestrate::SnapshotStore* pool, int episodes,
                                uint64_t seed, bool egocentric) {
  ProbeDataset data;
  data.feature_width = cfg.net.lstm_width;
  for (int i = 0; i < episodes; ++i) {
    orchestrate::EpisodeRequest req;
    req.scenario = sim::ScenarioKind::FullGame;
    req.opponent = opponent;
    orchestrate::PolicySnapshot opp;
    if (opponent == orchestrate::OpponentKind::Snapshot) {
      if (!pool) throw ConfigError("snapshot opponents need a snapshot store");
      Rng draw = Rng::derive(seed, "probe-opponent", static_cast<uint64_t>(i));
      opp = orchestrate::sample_opponent(*pool, draw);
      req.opponent_params = &opp.params;
      req.opponent_net = &cfg.net;
    }
    req.seconds = cfg.episode_seconds;
    req.seed = seed * 1000003ull + static_cast<uint64_t>(i);
    req.collect = false;
    size_t start = data.samples.size();
    req.trace = [&](const orchestrate::StepTrace& tr) {
      if (!tr.features) throw NetError("probe collection needs a network pilot");
      ProbeSample s;
      s.features = *tr.features;
      s.time = tr.time;
      const sim::WorldState& w = *tr.world;
      s.self_pos = {w.agents[0].position.x, w.agents[0].position.y};
      if (egocentric) {
        s.ball_pos = body_frame(w.agents[0], w.ball_position);
        s.opponent_pos = body_frame(w.agents[0], w.agents[1].position);
      } else {
        s.ball_pos = {w.ball_position.x, w.ball_position.y};
        s.opponent_pos = {w.agents[1].position.x, w.agents[1].position.y};
      }
      s.ball_visible = render::ball_in_view(w, 0, cfg.render_cfg) ? 1 : 0;
      data.samples.push_back(std::move(s));
    };
    orchestrate::EpisodeResult ep = orchestrate::run_episode(cfg, policy, scenes, req);
    if (ep.faulted) throw NetError("probe collection episode faulted: " + ep.fault);
    if (data.samples.size() > start) data.episode_starts.push_back(start);
  }
  return data;
}

// ---------------------------------------------------------------------------
// Head: out = W f + b, per component [logit, mu_x, mu_y, raw_sx, raw_sy].
// ---------------------------------------------------------------------------

namespace {

struct HeadOut {
  std::vector<double> logit, out;  // out is the raw linear output, width 5M
  MixtureDensity density;
};

HeadOut head_forward(const ProbeHead& head, const std::vector<float>& f) {
  const auto& w = head.params.at("w").data;
  const auto& b = head.params.at("b").data;
  const int M = head.components, F = head.feature_width;
  HeadOut h;
  h.out.assign(5 * size_t(M), 0.0);
  for (int o = 0; o < 5 * M; ++o) {
    double acc = b[o];
    const double* row = w.data() + size_t(o) * F;
    for (int i = 0; i < F; ++i) acc += row[i] * double(f[i]);
    h.out[o] = acc;
  }
  h.logit.resize(M);
  double mx = -std::numeric_limits<double>::infinity();
  for (int m = 0; m < M; ++m) {
    h.logit[m] = h.out[5 * size_t(m)];
    mx = std::max(mx, h.logit[m]);
  }
  double z = 0.0;
  for (int m = 0; m < M; ++m) z += std::exp(h.logit[m] - mx);
  h.density.weight.resize(M);
  h.density.mean.resize(M);
  h.density.stddev.resize(M);
  for (int m = 0; m < M; ++m) {
    h.density.weight[m] = std::exp(h.logit[m] - mx) / z;
    h.density.mean[m] = {h.out[5 * size_t(m) + 1], h.out[5 * size_t(m) + 2]};
    h.density.stddev[m] = {kStdFloor + softplus(h.out[5 * size_t(m) + 3]),
                           kStdFloor + softplus(h.out[5 * size_t(m) + 4])};
  }
  return h;
}

// NLL of `label` plus gradient wrt the raw linear output.
double head_backward(const HeadOut& h, const std::array<double, 2>& label,
                     std::vector<double>* dout) {
  const auto& d = h.density;
  const int M = d.components();
  std::vector<double> joint(M);
  double best = -std::numeric_limits<double>::infinity();
  for (int m = 0; m < M; ++m) {
    joint[m] = std::log(d.weight[m]) + axis_log_density(label[0], d.mean[m][0], d.stddev[m][0]) +
               axis_log_density(label[1], d.mean[m][1], d.stddev[m][1]);
    best = std::max(best, joint[m]);
  }
  double z = 0.0;
  for (int m = 0; m < M; ++m) z += std::exp(joint[m] - best);
  double logp = best + std::log(z);
  dout->assign(5 * size_t(M), 0.0);
  for (int m = 0; m < M; ++m) {
    double gamma = std::exp(joint[m] - logp);
    (*dout)[5 * size_t(m)] = d.weight[m] - gamma;
    for (int axis = 0; axis < 2; ++axis) {
      double mu = d.mean[m][axis], sg = d.stddev[m][axis];
      double diff = mu - label[axis];
      (*dout)[5 * size_t(m) + 1 + axis] = gamma * diff / (sg * sg);
      double dsg = gamma * (1.0 / sg - diff * diff / (sg * sg * sg));
      (*dout)[5 * size_t(m) + 3 + axis] = dsg * sigmoid(h.out[5 * size_t(m) + 3 + axis]);
    }
  }
  return -logp;
}

}  // namespace

MixtureDensity ProbeHead::predict(const std::vector<float>& features) const {
  if (static_cast<int>(features.size()) != feature_width)
    throw NetError("probe feature width mismatch");
  return head_forward(*this, features).density;
}

ProbeHead fit_probe(const diffnet::ParameterSet& policy, const ProbeDataset& data,
                    ProbeTarget target, const ProbeConfig& cfg, FitResult* fit) {
  if (data.episodes() < 10)
    throw DataError("insufficient data: probe fitting needs at least 10 trajectories, got " +
                    std::to_string(data.episodes()));
  if (data.feature_width <= 0 || data.samples.empty())
    throw DataError("insufficient data: probe dataset has no features");
  const uint64_t frozen = policy.fingerprint();

  ProbeHead head;
  head.target = target;
  head.components = cfg.components;
  head.feature_width = data.feature_width;
  const int M = cfg.components, F = data.feature_width;
  Rng init = Rng::derive(cfg.seed, "probe-init", static_cast<uint64_t>(target));
  auto& w = head.params.add("w", {5 * M, F});
  auto& b = head.params.add("b", {5 * M});
  for (auto& v : w.data) v = 0.01 * init.normal();
  for (auto& v : b.data) v = 0.01 * init.normal();

  diffnet::BasicAdam<double> adam(head.params);
  diffnet::BasicParameterSet<double> grads = head.params.zeros_like();
  Rng batch_rng = Rng::derive(cfg.seed, "probe-batch", static_cast<uint64_t>(target));
  const size_t n = data.samples.size();
  const size_t batch = std::min<size_t>(static_cast<size_t>(std::max(cfg.batch, 1)), n);
  std::vector<double> dout;

  for (int step = 0; step < cfg.steps; ++step) {
    grads.zero();
    auto& gw = grads.at("w").data;
    auto& gb = grads.at("b").data;
    double loss = 0.0;
    for (size_t k = 0; k < batch; ++k) {
      // Full-batch when batch covers the set, so fixed-set fits are
      // deterministic; minibatches sample uniformly otherwise.
      size_t idx = batch == n ? k : batch_rng.uniform_int(n);
      const ProbeSample& s = data.samples[idx];
      HeadOut h = head_forward(head, s.features);
      loss += head_backward(h, s.label(target), &dout);
      for (int o = 0; o < 5 * M; ++o) {
        gb[o] += dout[o];
        double* row = gw.data() + size_t(o) * F;
        for (int i = 0; i < F; ++i) row[i] += dout[o] * double(s.features[i]);
      }
    }
    grads.scale(1.0 / double(batch));
    if (fit) fit->nll.push_back(loss / double(batch));
    adam.update(head.params, grads, cfg.lr, 0.0);
  }

  if (policy.fingerprint() != frozen)
    throw NetError("probe training modified policy parameters");
  return head;
}

Heatmap heatmap(const MixtureDensity& density, const sim::PitchGeometry& pitch, int width,
                int height) {
  if (width < 1 || height < 1) throw ConfigError("heatmap resolution must be positive");
  Heatmap hm;
  hm.width = width;
  hm.height = height;
  hm.cell_dx = pitch.length / width;
  hm.cell_dy = pitch.width / height;
  hm.density.assign(size_t(width) * height, 0.0);

  // Diagonal components factor over the axes, so precompute per-axis tables.
  const int M = density.components();
  std::vector<double> fx(size_t(M) * width), fy(size_t(M) * height);
  for (int m = 0; m < M; ++m) {
    for (int c = 0; c < width; ++c)
      fx[size_t(m) * width + c] = std::exp(
          axis_log_density((c + 0.5) * hm.cell_dx, density.mean[m][0], density.stddev[m][0]));
    for (int r = 0; r < height; ++r)
      fy[size_t(m) * height + r] = std::exp(
          axis_log_density((r + 0.5) * hm.cell_dy, density.mean[m][1], density.stddev[m][1]));
  }
  for (int m = 0; m < M; ++m)
    for (int r = 0; r < height; ++r) {
      double wy = density.weight[m] * fy[size_t(m) * height + r];
      double* row = hm.density.data() + size_t(r) * width;
      const double* col = fx.data() + size_t(m) * width;
      for (int c = 0; c < width; ++c) row[c] += wy * col[c];
    }

  double mx = 0.0;
  for (size_t i = 0; i < hm.density.size(); ++i)
    if (hm.density[i] > hm.density[size_t(hm.argmax_row) * width + hm.argmax_col]) {
      hm.argmax_row = int(i) / width;
      hm.argmax_col = int(i) % width;
    }
  mx = hm.density[size_t(hm.argmax_row) * width + hm.argmax_col];
  hm.argmax_pos = {(hm.argmax_col + 0.5) * hm.cell_dx, (hm.argmax_row + 0.5) * hm.cell_dy};
  hm.display.resize(hm.density.size());
  for (size_t i = 0; i < hm.density.size(); ++i)
    hm.display[i] = mx > 0 ? static_cast<uint8_t>(std::lround(255.0 * hm.density[i] / mx)) : 0;
  return hm;
}

ProbeMetrics eval_probe(const ProbeHead& head, const ProbeDataset& held_out,
                        const sim::PitchGeometry& pitch, int grid_width, int grid_height) {
  ProbeMetrics m;
  for (const ProbeSample& s : held_out.samples) {
    MixtureDensity d = head.predict(s.features);
    const auto& y = s.label(head.target);
    double nll = d.nll(y[0], y[1]);
    Heatmap hm = heatmap(d, pitch, grid_width, grid_height);
    double err = std::hypot(hm.argmax_pos[0] - y[0], hm.argmax_pos[1] - y[1]);
    m.nll_all += nll;
    m.err_all += err;
    if (s.ball_visible) {
      m.nll_in += nll;
      m.err_in += err;
      ++m.in_view_steps;
    } else {
      m.nll_out += nll;
      m.err_out += err;
      ++m.out_view_steps;
    }
  }
  size_t total = m.in_view_steps + m.out_view_steps;
  if (total) {
    m.nll_all /= double(total);
    m.err_all /= double(total);
  }
  if (m.in_view_steps) {
    m.nll_in /= double(m.in_view_steps);
    m.err_in /= double(m.in_view_steps);
  }
  if (m.out_view_steps) {
    m.nll_out /= double(m.out_view_steps);
    m.err_out /= double(m.out_view_steps);
  }
  return m;
}

ProbeStudyResult run_probe_study(const Config& cfg, const std::string& snapshot_dir,
                                 const std::string& out_dir) {
  ProbeConfig pc = ProbeConfig::from(cfg);
  orchestrate::SnapshotStore store(snapshot_dir);
  orchestrate::PolicySnapshot snap = store.latest();
  orchestrate::StageConfig scfg =
      orchestrate::StageConfig::from(cfg, orchestrate::stage_from_string(snap.stage));
  std::vector<render::SceneVariant> scenes;
  if (scfg.net.encoder == nets::NetworkConfig::Encoder::Vision)
    scenes = orchestrate::load_scenes(scfg);

  ProbeDataset data =
      collect_probe_data(scfg, snap.params, scenes, orchestrate::OpponentKind::Snapshot, &store,
                         pc.episodes, pc.seed, pc.egocentric);
  auto [train, held] = data.split_holdout(pc.holdout);

  report::ensure_dir(out_dir);
  ProbeStudyResult res;
  res.metrics_csv = out_dir + "/probe_metrics.csv";
  res.track_csv = out_dir + "/probe_track.csv";
  report::CsvWriter metrics(res.metrics_csv,
                            {"target", "visibility", "steps", "nll", "argmax_err"});
  report::CsvWriter track(
      res.track_csv, {"time", "target", "argmax_x", "argmax_y", "truth_x", "truth_y", "nll"});

  const sim::PitchGeometry& pitch = scfg.sim.pitch;
  size_t track_end = held.episode_starts.size() > 1 ? held.episode_starts[1] : held.samples.size();
  for (ProbeTarget target : {ProbeTarget::SelfPosition, ProbeTarget::BallPosition,
                             ProbeTarget::OpponentPosition}) {
    ProbeHead head = fit_probe(snap.params, train, target, pc);
    ProbeMetrics pm = eval_probe(head, held, pitch, pc.heatmap_width, pc.heatmap_height);
    std::string name = target_name(target);
    metrics.row(std::vector<std::string>{name, "in_view", std::to_string(pm.in_view_steps),
                                         report::format_double(pm.nll_in),
                                         report::format_double(pm.err_in)});
    metrics.row(std::vector<std::string>{name, "out_of_view", std::to_string(pm.out_view_steps),
                                         report::format_double(pm.nll_out),
                                         report::format_double(pm.err_out)});
    switch (target) {
      case ProbeTarget::SelfPosition: res.self = pm; break;
      case ProbeTarget::BallPosition: res.ball = pm; break;
      case ProbeTarget::OpponentPosition: res.opponent = pm; break;
    }

    Heatmap hm;
    for (size_t i = 0; i < track_end; ++i) {
      const ProbeSample& s = held.samples[i];
      MixtureDensity d = head.predict(s.features);
      hm = heatmap(d, pitch, pc.heatmap_width, pc.heatmap_height);
      const auto& y = s.label(target);
      track.row(std::vector<std::string>{
          report::format_double(s.time), name, report::format_double(hm.argmax_pos[0]),
          report::format_double(hm.argmax_pos[1]), report::format_double(y[0]),
          report::format_double(y[1]), report::format_double(d.nll(y[0], y[1]))});
    }
    std::string pgm = out_dir + "/probe_" + name + ".pgm";
    report::write_pgm(pgm, hm.width, hm.height, hm.display);
    res.heatmap_paths.push_back(pgm);
  }

  // Chance control: same fit on permuted labels, scored on the same held-out set.
  Rng perm = Rng::derive(pc.seed, "probe-permute", 0);
  ProbeHead chance = fit_probe(snap.params, train.permute_labels(perm),
                               ProbeTarget::BallPosition, pc);
  res.permuted_ball_nll =
      eval_probe(chance, held, pitch, pc.heatmap_width, pc.heatmap_height).nll_all;
  report::CsvWriter control(out_dir + "/probe_control.csv",
                            {"trained_ball_nll", "permuted_ball_nll"});
  control.row(std::vector<double>{res.ball.nll_all, res.permuted_ball_nll});
  return res;
}

}  // namespace pitchlab::probes
