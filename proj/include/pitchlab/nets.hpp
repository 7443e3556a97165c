#pragma once

#include <array>
#include <string>
#include <vector>

#include "pitchlab/config.hpp"
#include "pitchlab/diffnet.hpp"
#include "pitchlab/render.hpp"
#include "pitchlab/sim.hpp"

namespace pitchlab::nets {

inline constexpr int kProprioDim = 9;

struct NetworkConfig {
  enum class Encoder { Vision, State };
  Encoder encoder = Encoder::Vision;
  std::array<int, 3> channels{8, 16, 16};
  int feature_width = 64;
  int lstm_width = 64;
  int critic_hidden = 64;
  int atoms = 51;
  double v_min = -150.0;
  double v_max = 150.0;
  double std_floor = 1e-4;
  double init_std = 0.3;

  static NetworkConfig from(const Config& cfg);
  std::vector<double> support() const;
  int state_obs_dim() const { return sim::kPrivilegedDim + kProprioDim; }
  int flat_dim() const;  // flattened final conv block
};

// What a policy or critic consumes at one control step. pixels holds the
// egocentric frame bytes (empty when the encoder is state-based); privileged
// feeds the critic head and the state encoder.
struct Observation {
  std::vector<uint8_t> pixels;
  std::array<float, kProprioDim> proprio{};
  std::array<float, sim::kPrivilegedDim> privileged{};
};

Observation make_observation(const sim::WorldState& w, int agent_id,
                             const sim::Action& prev_smoothed, const render::Frame* frame,
                             NetworkConfig::Encoder encoder, const sim::SimConfig& sim_cfg);

diffnet::ParameterSet init_policy_params(const NetworkConfig& cfg, Rng& rng);
diffnet::ParameterSet init_critic_params(const NetworkConfig& cfg, Rng& rng);

// ---------------------------------------------------------------------------
// Shared encoder + recurrent trunk. Parameters: enc.* and lstm.*.
// ---------------------------------------------------------------------------

template <typename T>
struct TrunkCache {
  std::vector<T> input;  // scaled CHW frame (vision) or privileged+proprio (state)
  std::array<std::vector<T>, 3> conv_a, pool, conv_b, block_out;
  std::array<std::vector<int>, 3> argmax;
  std::vector<T> feat_in;   // flatten + proprio (vision only)
  std::vector<T> feat1;     // first dense relu (state only)
  std::vector<T> feature;   // lstm input
  diffnet::LstmCache<T> lstm;
};

template <typename T>
struct TrunkRollout {
  std::vector<TrunkCache<T>> steps;
  std::vector<diffnet::RecurrentState<T>> states;  // length steps+1, [0] = initial
  const std::vector<T>& h(int t) const { return states[t + 1].h; }
};

template <typename T>
TrunkRollout<T> trunk_unroll(const diffnet::BasicParameterSet<T>& params,
                             const NetworkConfig& cfg, const std::vector<Observation>& obs,
                             diffnet::RecurrentState<T> init);

// dh[t] is the external gradient on h(t); accumulates parameter grads.
template <typename T>
void trunk_backward(const diffnet::BasicParameterSet<T>& params, const NetworkConfig& cfg,
                    const TrunkRollout<T>& roll, const std::vector<std::vector<T>>& dh,
                    diffnet::BasicParameterSet<T>& grads);

// Single acting step without a retained cache; advances state, returns h.
template <typename T>
std::vector<T> trunk_step(const diffnet::BasicParameterSet<T>& params, const NetworkConfig& cfg,
                          const Observation& obs, diffnet::RecurrentState<T>& state);

// ---------------------------------------------------------------------------
// Heads. Policy: pi.mean.*, pi.std.*; critic: q.h.*, q.out.*.
// ---------------------------------------------------------------------------

template <typename T>
struct PolicyHeadOut {
  std::vector<T> mean, std_pre, stddev;  // stddev = softplus(std_pre) + floor
};

template <typename T>
PolicyHeadOut<T> policy_head_forward(const diffnet::BasicParameterSet<T>& params,
                                     const NetworkConfig& cfg, const std::vector<T>& h);

template <typename T>
void policy_head_backward(const diffnet::BasicParameterSet<T>& params, const NetworkConfig& cfg,
                          const std::vector<T>& h, const PolicyHeadOut<T>& out,
                          const std::vector<T>& dmean, const std::vector<T>& dstd,
                          diffnet::BasicParameterSet<T>& grads, std::vector<T>& dh);

template <typename T>
struct CriticHeadCache {
  std::vector<T> input, hidden, logits, probs;
};

// Returns atom probabilities for Q(state summary, action).
template <typename T>
const std::vector<T>& critic_head_forward(const diffnet::BasicParameterSet<T>& params,
                                          const NetworkConfig& cfg, const std::vector<T>& h,
                                          const float* privileged, const T* action,
                                          CriticHeadCache<T>& cache);

// dlogits is the gradient on pre-softmax logits; dh may be null.
template <typename T>
void critic_head_backward(const diffnet::BasicParameterSet<T>& params, const NetworkConfig& cfg,
                          const CriticHeadCache<T>& cache, const std::vector<T>& dlogits,
                          diffnet::BasicParameterSet<T>& grads, std::vector<T>* dh);

template <typename T>
double expected_value(const std::vector<T>& probs, const std::vector<double>& support);

diffnet::GaussianActionDistribution to_distribution(const PolicyHeadOut<float>& out);

// Float acting wrapper holding recurrent state; state.h doubles as the
// recurrent feature read by probes.
struct Actor {
  const NetworkConfig* cfg = nullptr;
  const diffnet::ParameterSet* params = nullptr;
  diffnet::RecurrentState<float> state;

  Actor() = default;
  Actor(const NetworkConfig& c, const diffnet::ParameterSet& p)
      : cfg(&c), params(&p), state(diffnet::RecurrentState<float>::zero(c.lstm_width)) {}
  void reset() { state = diffnet::RecurrentState<float>::zero(cfg->lstm_width); }
  diffnet::GaussianActionDistribution step(const Observation& obs);
};

}  // namespace pitchlab::nets
