#include "pitchlab/nets.hpp"

#include <algorithm>
#include <cmath>

namespace pitchlab::nets {

using diffnet::BasicParameterSet;
using diffnet::RecurrentState;

NetworkConfig NetworkConfig::from(const Config& cfg) {
  NetworkConfig c;
  std::string kind = cfg.get_string("network.kind");
  if (kind == "vision")
    c.encoder = Encoder::Vision;
  else if (kind == "state")
    c.encoder = Encoder::State;
  else
    throw ConfigError("network.kind must be vision or state, got " + kind);
  auto ch = cfg.get_ints("network.encoder_channels");
  if (ch.size() != 3) throw ConfigError("network.encoder_channels needs exactly 3 entries");
  for (size_t i = 0; i < 3; ++i) {
    if (ch[i] <= 0) throw ConfigError("encoder channels must be positive");
    c.channels[i] = ch[i];
  }
  c.feature_width = cfg.get_int("network.feature_width");
  c.lstm_width = cfg.get_int("network.lstm_width");
  c.critic_hidden = cfg.get_int("network.critic_hidden");
  c.atoms = cfg.get_int("network.atoms");
  c.v_min = cfg.get_double("network.v_min");
  c.v_max = cfg.get_double("network.v_max");
  c.init_std = cfg.get_double("network.init_std_frac");
  if (c.feature_width <= 0 || c.lstm_width <= 0 || c.critic_hidden <= 0)
    throw ConfigError("network widths must be positive");
  if (c.atoms < 2) throw ConfigError("network.atoms must be at least 2");
  if (!(c.v_max > c.v_min)) throw ConfigError("network.v_max must exceed network.v_min");
  if (c.init_std <= 0.0) throw ConfigError("network.init_std_frac must be positive");
  return c;
}

std::vector<double> NetworkConfig::support() const {
  std::vector<double> z(atoms);
  double delta = (v_max - v_min) / (atoms - 1);
  for (int j = 0; j < atoms; ++j) z[j] = v_min + j * delta;
  return z;
}

int NetworkConfig::flat_dim() const {
  int h = render::kFrameHeight, w = render::kFrameWidth;
  for (int b = 0; b < 3; ++b) {
    h /= 2;
    w /= 2;
  }
  return channels[2] * h * w;
}

Observation make_observation(const sim::WorldState& w, int agent_id,
                             const sim::Action& prev_smoothed, const render::Frame* frame,
                             NetworkConfig::Encoder encoder, const sim::SimConfig& sim_cfg) {
  Observation o;
  const auto& body = w.agents[agent_id];
  o.proprio[0] = static_cast<float>(body.angular_velocity);
  o.proprio[1] = static_cast<float>(body.tilt);
  o.proprio[2] = static_cast<float>(body.head_pan);
  for (int i = 0; i < sim::kActionDim; ++i)
    o.proprio[3 + i] = static_cast<float>(prev_smoothed[i]);
  o.privileged = sim::privileged_state(w, agent_id, sim_cfg).flat();
  if (encoder == NetworkConfig::Encoder::Vision) {
    if (!frame) throw NetError("vision network requires a rendered frame");
    o.pixels.assign(frame->data.begin(), frame->data.end());
  }
  return o;
}

static std::string block_name(int b, const char* leaf) {
  return "enc.b" + std::to_string(b + 1) + "." + leaf;
}

static void init_trunk(diffnet::ParameterSet& p, const NetworkConfig& cfg, Rng& rng) {
  if (cfg.encoder == NetworkConfig::Encoder::Vision) {
    int cin = render::kFrameChannels;
    for (int b = 0; b < 3; ++b) {
      int cout = cfg.channels[b];
      diffnet::init_uniform(p.add(block_name(b, "ka"), {cout, cin, 3, 3}), cin * 9, rng);
      p.add(block_name(b, "ba"), {cout});
      diffnet::init_uniform(p.add(block_name(b, "kb"), {cout, cout, 3, 3}), cout * 9, rng);
      p.add(block_name(b, "bb"), {cout});
      cin = cout;
    }
    int nin = cfg.flat_dim() + kProprioDim;
    diffnet::init_uniform(p.add("enc.fc.w", {cfg.feature_width, nin}), nin, rng);
    p.add("enc.fc.b", {cfg.feature_width});
  } else {
    int nin = cfg.state_obs_dim();
    diffnet::init_uniform(p.add("enc.l1.w", {cfg.feature_width, nin}), nin, rng);
    p.add("enc.l1.b", {cfg.feature_width});
    diffnet::init_uniform(p.add("enc.l2.w", {cfg.feature_width, cfg.feature_width}),
                          cfg.feature_width, rng);
    p.add("enc.l2.b", {cfg.feature_width});
  }
  int cols = cfg.feature_width + cfg.lstm_width;
  diffnet::init_uniform(p.add("lstm.w", {4 * cfg.lstm_width, cols}), cols, rng);
  auto& lb = p.add("lstm.b", {4 * cfg.lstm_width});
  for (int j = 0; j < cfg.lstm_width; ++j) lb.data[cfg.lstm_width + j] = 1.0f;  // forget gate
}

diffnet::ParameterSet init_policy_params(const NetworkConfig& cfg, Rng& rng) {
  diffnet::ParameterSet p;
  init_trunk(p, cfg, rng);
  diffnet::init_uniform(p.add("pi.mean.w", {sim::kActionDim, cfg.lstm_width}), cfg.lstm_width,
                        rng);
  p.add("pi.mean.b", {sim::kActionDim});
  diffnet::init_uniform(p.add("pi.std.w", {sim::kActionDim, cfg.lstm_width}), cfg.lstm_width,
                        rng);
  auto& sb = p.add("pi.std.b", {sim::kActionDim});
  float pre = static_cast<float>(std::log(std::expm1(cfg.init_std - cfg.std_floor)));
  for (auto& x : sb.data) x = pre;
  return p;
}

diffnet::ParameterSet init_critic_params(const NetworkConfig& cfg, Rng& rng) {
  diffnet::ParameterSet p;
  init_trunk(p, cfg, rng);
  int nin = cfg.lstm_width + sim::kPrivilegedDim + sim::kActionDim;
  diffnet::init_uniform(p.add("q.h.w", {cfg.critic_hidden, nin}), nin, rng);
  p.add("q.h.b", {cfg.critic_hidden});
  diffnet::init_uniform(p.add("q.out.w", {cfg.atoms, cfg.critic_hidden}), cfg.critic_hidden,
                        rng);
  p.add("q.out.b", {cfg.atoms});
  return p;
}

// ---------------------------------------------------------------------------
// Trunk forward/backward.
// ---------------------------------------------------------------------------

struct BlockDims {
  int cin, cout, h, w, oh, ow;
};

static std::array<BlockDims, 3> block_dims(const NetworkConfig& cfg) {
  std::array<BlockDims, 3> d;
  int cin = render::kFrameChannels, h = render::kFrameHeight, w = render::kFrameWidth;
  for (int b = 0; b < 3; ++b) {
    d[b] = {cin, cfg.channels[b], h, w, h / 2, w / 2};
    cin = cfg.channels[b];
    h /= 2;
    w /= 2;
  }
  return d;
}

template <typename T>
static void forward_step(const BasicParameterSet<T>& params, const NetworkConfig& cfg,
                         const Observation& obs, const RecurrentState<T>& prev,
                         RecurrentState<T>& next, TrunkCache<T>& cache) {
  auto P = [&](const std::string& name) -> const std::vector<T>& { return params.at(name).data; };
  if (cfg.encoder == NetworkConfig::Encoder::Vision) {
    if (static_cast<int>(obs.pixels.size()) != render::kFrameSize)
      throw NetError("vision observation is missing frame bytes");
    const int fh = render::kFrameHeight, fw = render::kFrameWidth;
    cache.input.resize(render::kFrameSize);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < fh; ++y)
        for (int x = 0; x < fw; ++x)
          cache.input[(c * fh + y) * fw + x] =
              static_cast<T>(obs.pixels[(y * fw + x) * 3 + c]) / T(255);
    auto dims = block_dims(cfg);
    const T* src = cache.input.data();
    for (int b = 0; b < 3; ++b) {
      const auto& d = dims[b];
      cache.conv_a[b].resize(static_cast<size_t>(d.cout) * d.h * d.w);
      diffnet::conv3x3_forward(src, d.cin, d.h, d.w, P(block_name(b, "ka")).data(),
                               P(block_name(b, "ba")).data(), d.cout, cache.conv_a[b].data());
      diffnet::relu_forward(cache.conv_a[b].data(), static_cast<int>(cache.conv_a[b].size()),
                            cache.conv_a[b].data());
      size_t pooled = static_cast<size_t>(d.cout) * d.oh * d.ow;
      cache.pool[b].resize(pooled);
      cache.argmax[b].resize(pooled);
      diffnet::maxpool2_forward(cache.conv_a[b].data(), d.cout, d.h, d.w, cache.pool[b].data(),
                                cache.argmax[b].data());
      cache.conv_b[b].resize(pooled);
      diffnet::conv3x3_forward(cache.pool[b].data(), d.cout, d.oh, d.ow,
                               P(block_name(b, "kb")).data(), P(block_name(b, "bb")).data(),
                               d.cout, cache.conv_b[b].data());
      cache.block_out[b].resize(pooled);
      for (size_t i = 0; i < pooled; ++i) {
        T v = cache.pool[b][i] + cache.conv_b[b][i];
        cache.block_out[b][i] = v > T(0) ? v : T(0);
      }
      src = cache.block_out[b].data();
    }
    int flat = cfg.flat_dim();
    cache.feat_in.resize(flat + kProprioDim);
    std::copy(cache.block_out[2].begin(), cache.block_out[2].end(), cache.feat_in.begin());
    for (int i = 0; i < kProprioDim; ++i)
      cache.feat_in[flat + i] = static_cast<T>(obs.proprio[i]);
    cache.feature.resize(cfg.feature_width);
    diffnet::dense_forward(cache.feat_in.data(), flat + kProprioDim, P("enc.fc.w").data(),
                           P("enc.fc.b").data(), cfg.feature_width, cache.feature.data());
    diffnet::relu_forward(cache.feature.data(), cfg.feature_width, cache.feature.data());
  } else {
    cache.input.resize(cfg.state_obs_dim());
    for (int i = 0; i < sim::kPrivilegedDim; ++i)
      cache.input[i] = static_cast<T>(obs.privileged[i]);
    for (int i = 0; i < kProprioDim; ++i)
      cache.input[sim::kPrivilegedDim + i] = static_cast<T>(obs.proprio[i]);
    cache.feat1.resize(cfg.feature_width);
    diffnet::dense_forward(cache.input.data(), cfg.state_obs_dim(), P("enc.l1.w").data(),
                           P("enc.l1.b").data(), cfg.feature_width, cache.feat1.data());
    diffnet::relu_forward(cache.feat1.data(), cfg.feature_width, cache.feat1.data());
    cache.feature.resize(cfg.feature_width);
    diffnet::dense_forward(cache.feat1.data(), cfg.feature_width, P("enc.l2.w").data(),
                           P("enc.l2.b").data(), cfg.feature_width, cache.feature.data());
    diffnet::relu_forward(cache.feature.data(), cfg.feature_width, cache.feature.data());
  }
  diffnet::lstm_forward(cache.feature.data(), cfg.feature_width, prev, P("lstm.w").data(),
                        P("lstm.b").data(), cfg.lstm_width, &next, &cache.lstm);
}

template <typename T>
TrunkRollout<T> trunk_unroll(const BasicParameterSet<T>& params, const NetworkConfig& cfg,
                             const std::vector<Observation>& obs, RecurrentState<T> init) {
  TrunkRollout<T> roll;
  roll.steps.resize(obs.size());
  roll.states.resize(obs.size() + 1);
  roll.states[0] = std::move(init);
  for (size_t t = 0; t < obs.size(); ++t)
    forward_step(params, cfg, obs[t], roll.states[t], roll.states[t + 1], roll.steps[t]);
  return roll;
}

template <typename T>
std::vector<T> trunk_step(const BasicParameterSet<T>& params, const NetworkConfig& cfg,
                          const Observation& obs, RecurrentState<T>& state) {
  TrunkCache<T> scratch;
  RecurrentState<T> next;
  forward_step(params, cfg, obs, state, next, scratch);
  state = std::move(next);
  return state.h;
}

template <typename T>
void trunk_backward(const BasicParameterSet<T>& params, const NetworkConfig& cfg,
                    const TrunkRollout<T>& roll, const std::vector<std::vector<T>>& dh,
                    BasicParameterSet<T>& grads) {
  auto P = [&](const std::string& name) -> const std::vector<T>& { return params.at(name).data; };
  auto G = [&](const std::string& name) -> std::vector<T>& { return grads.at(name).data; };
  const int W = cfg.lstm_width, F = cfg.feature_width;
  const int L = static_cast<int>(roll.steps.size());
  if (static_cast<int>(dh.size()) != L) throw NetError("dh length mismatch in trunk_backward");

  std::vector<T> dh_rec(W, T(0)), dc_rec(W, T(0));
  std::vector<T> dh_total(W), dfeature(F), dh_prev(W), dc_prev(W);
  auto dims = block_dims(cfg);
  for (int t = L - 1; t >= 0; --t) {
    const auto& cache = roll.steps[t];
    for (int i = 0; i < W; ++i) dh_total[i] = dh_rec[i] + dh[t][i];
    std::fill(dfeature.begin(), dfeature.end(), T(0));
    std::fill(dh_prev.begin(), dh_prev.end(), T(0));
    std::fill(dc_prev.begin(), dc_prev.end(), T(0));
    diffnet::lstm_backward(P("lstm.w").data(), F, W, cache.lstm, dh_total.data(), dc_rec.data(),
                           G("lstm.w").data(), G("lstm.b").data(), dfeature.data(),
                           dh_prev.data(), dc_prev.data());
    dh_rec = dh_prev;
    dc_rec = dc_prev;

    if (cfg.encoder == NetworkConfig::Encoder::Vision) {
      int flat = cfg.flat_dim();
      std::vector<T> dpre(F, T(0));
      diffnet::relu_backward(cache.feature.data(), dfeature.data(), F, dpre.data());
      std::vector<T> dfeat_in(flat + kProprioDim, T(0));
      diffnet::dense_backward(cache.feat_in.data(), flat + kProprioDim, P("enc.fc.w").data(), F,
                              dpre.data(), G("enc.fc.w").data(), G("enc.fc.b").data(),
                              dfeat_in.data());
      std::vector<T> dblock(dfeat_in.begin(), dfeat_in.begin() + flat);
      for (int b = 2; b >= 0; --b) {
        const auto& d = dims[b];
        size_t pooled = static_cast<size_t>(d.cout) * d.oh * d.ow;
        std::vector<T> ds(pooled, T(0));
        diffnet::relu_backward(cache.block_out[b].data(), dblock.data(),
                               static_cast<int>(pooled), ds.data());
        std::vector<T> dpool(pooled, T(0));
        diffnet::conv3x3_backward(cache.pool[b].data(), d.cout, d.oh, d.ow,
                                  P(block_name(b, "kb")).data(), d.cout, ds.data(),
                                  G(block_name(b, "kb")).data(), G(block_name(b, "bb")).data(),
                                  dpool.data());
        for (size_t i = 0; i < pooled; ++i) dpool[i] += ds[i];  // residual path
        std::vector<T> dconva(static_cast<size_t>(d.cout) * d.h * d.w, T(0));
        diffnet::maxpool2_backward(cache.argmax[b].data(), d.cout, d.oh, d.ow, dpool.data(),
                                   dconva.data());
        std::vector<T> da(dconva.size(), T(0));
        diffnet::relu_backward(cache.conv_a[b].data(), dconva.data(),
                               static_cast<int>(dconva.size()), da.data());
        const T* block_in = (b == 0) ? cache.input.data() : cache.block_out[b - 1].data();
        if (b == 0) {
          diffnet::conv3x3_backward(block_in, d.cin, d.h, d.w, P(block_name(b, "ka")).data(),
                                    d.cout, da.data(), G(block_name(b, "ka")).data(),
                                    G(block_name(b, "ba")).data(), static_cast<T*>(nullptr));
        } else {
          std::vector<T> din(static_cast<size_t>(d.cin) * d.h * d.w, T(0));
          diffnet::conv3x3_backward(block_in, d.cin, d.h, d.w, P(block_name(b, "ka")).data(),
                                    d.cout, da.data(), G(block_name(b, "ka")).data(),
                                    G(block_name(b, "ba")).data(), din.data());
          dblock = std::move(din);
        }
      }
    } else {
      int nin = cfg.state_obs_dim();
      std::vector<T> dpre2(F, T(0));
      diffnet::relu_backward(cache.feature.data(), dfeature.data(), F, dpre2.data());
      std::vector<T> dfeat1(F, T(0));
      diffnet::dense_backward(cache.feat1.data(), F, P("enc.l2.w").data(), F, dpre2.data(),
                              G("enc.l2.w").data(), G("enc.l2.b").data(), dfeat1.data());
      std::vector<T> dpre1(F, T(0));
      diffnet::relu_backward(cache.feat1.data(), dfeat1.data(), F, dpre1.data());
      diffnet::dense_backward(cache.input.data(), nin, P("enc.l1.w").data(), F, dpre1.data(),
                              G("enc.l1.w").data(), G("enc.l1.b").data(),
                              static_cast<T*>(nullptr));
    }
  }
}

// ---------------------------------------------------------------------------
// Heads.
// ---------------------------------------------------------------------------

template <typename T>
PolicyHeadOut<T> policy_head_forward(const BasicParameterSet<T>& params,
                                     const NetworkConfig& cfg, const std::vector<T>& h) {
  auto P = [&](const std::string& name) -> const std::vector<T>& { return params.at(name).data; };
  PolicyHeadOut<T> out;
  out.mean.resize(sim::kActionDim);
  out.std_pre.resize(sim::kActionDim);
  out.stddev.resize(sim::kActionDim);
  diffnet::dense_forward(h.data(), cfg.lstm_width, P("pi.mean.w").data(), P("pi.mean.b").data(),
                         sim::kActionDim, out.mean.data());
  diffnet::dense_forward(h.data(), cfg.lstm_width, P("pi.std.w").data(), P("pi.std.b").data(),
                         sim::kActionDim, out.std_pre.data());
  for (int i = 0; i < sim::kActionDim; ++i)
    out.stddev[i] = diffnet::softplus(out.std_pre[i]) + static_cast<T>(cfg.std_floor);
  return out;
}

template <typename T>
void policy_head_backward(const BasicParameterSet<T>& params, const NetworkConfig& cfg,
                          const std::vector<T>& h, const PolicyHeadOut<T>& out,
                          const std::vector<T>& dmean, const std::vector<T>& dstd,
                          BasicParameterSet<T>& grads, std::vector<T>& dh) {
  auto P = [&](const std::string& name) -> const std::vector<T>& { return params.at(name).data; };
  auto G = [&](const std::string& name) -> std::vector<T>& { return grads.at(name).data; };
  diffnet::dense_backward(h.data(), cfg.lstm_width, P("pi.mean.w").data(), sim::kActionDim,
                          dmean.data(), G("pi.mean.w").data(), G("pi.mean.b").data(), dh.data());
  std::vector<T> dpre(sim::kActionDim);
  for (int i = 0; i < sim::kActionDim; ++i)
    dpre[i] = dstd[i] * diffnet::sigmoid(out.std_pre[i]);
  diffnet::dense_backward(h.data(), cfg.lstm_width, P("pi.std.w").data(), sim::kActionDim,
                          dpre.data(), G("pi.std.w").data(), G("pi.std.b").data(), dh.data());
}

template <typename T>
const std::vector<T>& critic_head_forward(const BasicParameterSet<T>& params,
                                          const NetworkConfig& cfg, const std::vector<T>& h,
                                          const float* privileged, const T* action,
                                          CriticHeadCache<T>& cache) {
  auto P = [&](const std::string& name) -> const std::vector<T>& { return params.at(name).data; };
  const int nin = cfg.lstm_width + sim::kPrivilegedDim + sim::kActionDim;
  cache.input.resize(nin);
  std::copy(h.begin(), h.end(), cache.input.begin());
  for (int i = 0; i < sim::kPrivilegedDim; ++i)
    cache.input[cfg.lstm_width + i] = static_cast<T>(privileged[i]);
  for (int i = 0; i < sim::kActionDim; ++i)
    cache.input[cfg.lstm_width + sim::kPrivilegedDim + i] = action[i];
  cache.hidden.resize(cfg.critic_hidden);
  diffnet::dense_forward(cache.input.data(), nin, P("q.h.w").data(), P("q.h.b").data(),
                         cfg.critic_hidden, cache.hidden.data());
  diffnet::relu_forward(cache.hidden.data(), cfg.critic_hidden, cache.hidden.data());
  cache.logits.resize(cfg.atoms);
  diffnet::dense_forward(cache.hidden.data(), cfg.critic_hidden, P("q.out.w").data(),
                         P("q.out.b").data(), cfg.atoms, cache.logits.data());
  cache.probs.resize(cfg.atoms);
  diffnet::softmax(cache.logits.data(), cfg.atoms, cache.probs.data());
  return cache.probs;
}

template <typename T>
void critic_head_backward(const BasicParameterSet<T>& params, const NetworkConfig& cfg,
                          const CriticHeadCache<T>& cache, const std::vector<T>& dlogits,
                          BasicParameterSet<T>& grads, std::vector<T>* dh) {
  auto P = [&](const std::string& name) -> const std::vector<T>& { return params.at(name).data; };
  auto G = [&](const std::string& name) -> std::vector<T>& { return grads.at(name).data; };
  const int nin = cfg.lstm_width + sim::kPrivilegedDim + sim::kActionDim;
  std::vector<T> dhidden(cfg.critic_hidden, T(0));
  diffnet::dense_backward(cache.hidden.data(), cfg.critic_hidden, P("q.out.w").data(), cfg.atoms,
                          dlogits.data(), G("q.out.w").data(), G("q.out.b").data(),
                          dhidden.data());
  std::vector<T> dpre(cfg.critic_hidden, T(0));
  diffnet::relu_backward(cache.hidden.data(), dhidden.data(), cfg.critic_hidden, dpre.data());
  std::vector<T> dinput(nin, T(0));
  diffnet::dense_backward(cache.input.data(), nin, P("q.h.w").data(), cfg.critic_hidden,
                          dpre.data(), G("q.h.w").data(), G("q.h.b").data(), dinput.data());
  if (dh)
    for (int i = 0; i < cfg.lstm_width; ++i) (*dh)[i] += dinput[i];
}

template <typename T>
double expected_value(const std::vector<T>& probs, const std::vector<double>& support) {
  double acc = 0.0;
  for (size_t j = 0; j < probs.size(); ++j) acc += static_cast<double>(probs[j]) * support[j];
  return acc;
}

diffnet::GaussianActionDistribution to_distribution(const PolicyHeadOut<float>& out) {
  diffnet::GaussianActionDistribution d;
  d.mean.assign(out.mean.begin(), out.mean.end());
  d.stddev.assign(out.stddev.begin(), out.stddev.end());
  return d;
}

diffnet::GaussianActionDistribution Actor::step(const Observation& obs) {
  std::vector<float> h = trunk_step(*params, *cfg, obs, state);
  return to_distribution(policy_head_forward(*params, *cfg, h));
}

#define PITCHLAB_INSTANTIATE(T)                                                                  \
  template TrunkRollout<T> trunk_unroll<T>(const BasicParameterSet<T>&, const NetworkConfig&,   \
                                           const std::vector<Observation>&, RecurrentState<T>); \
  template std::vector<T> trunk_step<T>(const BasicParameterSet<T>&, const NetworkConfig&,      \
                                        const Observation&, RecurrentState<T>&);                \
  template void trunk_backward<T>(const BasicParameterSet<T>&, const NetworkConfig&,            \
                                  const TrunkRollout<T>&, const std::vector<std::vector<T>>&,   \
                                  BasicParameterSet<T>&);                                       \
  template PolicyHeadOut<T> policy_head_forward<T>(const BasicParameterSet<T>&,                 \
                                                   const NetworkConfig&, const std::vector<T>&);\
  template void policy_head_backward<T>(const BasicParameterSet<T>&, const NetworkConfig&,      \
                                        const std::vector<T>&, const PolicyHeadOut<T>&,         \
                                        const std::vector<T>&, const std::vector<T>&,           \
                                        BasicParameterSet<T>&, std::vector<T>&);                \
  template const std::vector<T>& critic_head_forward<T>(                                        \
      const BasicParameterSet<T>&, const NetworkConfig&, const std::vector<T>&, const float*,   \
      const T*, CriticHeadCache<T>&);                                                           \
  template void critic_head_backward<T>(const BasicParameterSet<T>&, const NetworkConfig&,      \
                                        const CriticHeadCache<T>&, const std::vector<T>&,       \
                                        BasicParameterSet<T>&, std::vector<T>*);                \
  template double expected_value<T>(const std::vector<T>&, const std::vector<double>&);

PITCHLAB_INSTANTIATE(float)
PITCHLAB_INSTANTIATE(double)
#undef PITCHLAB_INSTANTIATE

}  // namespace pitchlab::nets
