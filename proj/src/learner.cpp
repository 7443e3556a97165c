#include "pitchlab/learner.hpp"

#include <algorithm>
#include <cmath>

namespace pitchlab::learner {

LearnerConfig LearnerConfig::from(const Config& cfg) {
  LearnerConfig c;
  c.discount = cfg.get_double("learner.discount");
  c.batch_size = cfg.get_int("learner.batch_size");
  c.trajectory_length = cfg.get_int("learner.trajectory_length");
  c.action_samples = cfg.get_int("learner.action_samples");
  c.actor_lr = cfg.get_double("learner.actor_lr");
  c.critic_lr = cfg.get_double("learner.critic_lr");
  c.temperature_lr = cfg.get_double("learner.temperature_lr");
  c.dual_lr = cfg.get_double("learner.dual_lr");
  c.epsilon_temperature = cfg.get_double("learner.epsilon_temperature");
  c.epsilon_kl_mean = cfg.get_double("learner.epsilon_kl_mean");
  c.epsilon_kl_cov = cfg.get_double("learner.epsilon_kl_cov");
  c.n_step = cfg.get_int("learner.n_step");
  c.target_refresh = cfg.get_int("learner.target_refresh");
  c.grad_clip = cfg.get_double("learner.grad_clip");
  c.adam_beta1 = cfg.get_double("learner.adam_beta1");
  c.adam_beta2 = cfg.get_double("learner.adam_beta2");
  c.adam_eps = cfg.get_double("learner.adam_eps");
  c.distill_initial = cfg.get_double("learner.distill_initial");
  c.distill_decay = cfg.get_double("learner.distill_decay");
  if (c.discount < 0.0 || c.discount > 1.0) throw ConfigError("learner.discount outside [0,1]");
  if (c.batch_size < 1) throw ConfigError("learner.batch_size must be positive");
  if (c.trajectory_length < 1) throw ConfigError("learner.trajectory_length must be positive");
  if (c.action_samples < 2) throw ConfigError("learner.action_samples must be at least 2");
  if (c.epsilon_temperature <= 0.0 || c.epsilon_kl_mean <= 0.0 || c.epsilon_kl_cov <= 0.0)
    throw ConfigError("learner KL bounds must be positive");
  if (c.n_step < 1) throw ConfigError("learner.n_step must be positive");
  if (c.target_refresh < 1) throw ConfigError("learner.target_refresh must be positive");
  if (c.distill_decay <= 0.0 || c.distill_decay > 1.0)
    throw ConfigError("learner.distill_decay outside (0,1]");
  return c;
}

std::vector<double> project_categorical(const std::vector<double>& support,
                                        const std::vector<double>& probs, double reward,
                                        double gamma_eff) {
  const int n = static_cast<int>(support.size());
  if (n < 2) throw ConfigError("projection support needs at least 2 atoms");
  if (probs.size() != support.size()) throw ConfigError("projection probs/support size mismatch");
  if (!std::isfinite(reward) || !std::isfinite(gamma_eff))
    throw DataError("projection on non-finite reward or discount");
  const double vmin = support.front(), vmax = support.back();
  const double delta = (vmax - vmin) / (n - 1);
  std::vector<double> out(n, 0.0);
  for (int j = 0; j < n; ++j) {
    double tz = std::clamp(reward + gamma_eff * support[j], vmin, vmax);
    double b = (tz - vmin) / delta;
    int l = static_cast<int>(std::floor(b));
    if (l >= n - 1) {
      out[n - 1] += probs[j];
      continue;
    }
    out[l] += probs[j] * (l + 1 - b);
    out[l + 1] += probs[j] * (b - l);
  }
  return out;
}

double categorical_cross_entropy(const std::vector<double>& target,
                                 const std::vector<float>& pred) {
  if (target.size() != pred.size()) throw DataError("cross-entropy size mismatch");
  double ce = 0.0;
  for (size_t j = 0; j < target.size(); ++j)
    if (target[j] > 0.0) ce -= target[j] * std::log(std::max(static_cast<double>(pred[j]), 1e-30));
  return ce;
}

std::vector<double> softmax_weights(const std::vector<double>& q, double eta) {
  for (double v : q)
    if (!std::isfinite(v)) throw NetError("learner fault: non-finite action value");
  double mx = *std::max_element(q.begin(), q.end());
  std::vector<double> w(q.size());
  double sum = 0.0;
  for (size_t k = 0; k < q.size(); ++k) {
    w[k] = std::exp((q[k] - mx) / eta);
    sum += w[k];
  }
  for (auto& x : w) x /= sum;
  return w;
}

double weight_kl_to_uniform(const std::vector<double>& w) {
  double acc = std::log(static_cast<double>(w.size()));
  for (double x : w)
    if (x > 0.0) acc += x * std::log(x);
  return acc;
}

double weight_entropy(const std::vector<double>& w) {
  double acc = 0.0;
  for (double x : w)
    if (x > 0.0) acc -= x * std::log(x);
  return acc;
}

double temperature_dual_gradient(const std::vector<double>& q, double eta, double epsilon) {
  // g(eta) = eta*eps + eta*log mean_k exp(q/eta); g'(eta) = eps - KL(w || uniform).
  return epsilon - weight_kl_to_uniform(softmax_weights(q, eta));
}

std::vector<double> estep_weights(const std::vector<double>& q, MpoDuals& duals, double epsilon,
                                  double lr) {
  auto w = softmax_weights(q, duals.eta);
  double g = temperature_dual_gradient(q, duals.eta, epsilon);
  duals.eta = std::max(kEtaFloor, duals.eta - duals.eta_adam.update(g, lr));
  return w;
}

MStepTerms mstep_terms(const diffnet::GaussianActionDistribution& pi_new,
                       const diffnet::GaussianActionDistribution& pi_old,
                       const std::vector<std::vector<double>>& actions,
                       const std::vector<double>& weights, const MpoDuals& duals,
                       double eps_mean, double eps_cov) {
  const size_t d = pi_new.mean.size();
  if (actions.size() != weights.size()) throw DataError("m-step actions/weights size mismatch");
  MStepTerms t;
  t.dmean.assign(d, 0.0);
  t.dstd.assign(d, 0.0);
  for (size_t k = 0; k < actions.size(); ++k) {
    t.nll -= weights[k] * pi_new.log_prob(actions[k]);
    for (size_t i = 0; i < d; ++i) {
      double z = actions[k][i] - pi_new.mean[i];
      double s = pi_new.stddev[i];
      t.dmean[i] -= weights[k] * z / (s * s);
      t.dstd[i] -= weights[k] * (z * z / (s * s * s) - 1.0 / s);
    }
  }
  t.kl_mean = diffnet::kl_mean_term(pi_old, pi_new);
  t.kl_cov = diffnet::kl_cov_term(pi_old, pi_new);
  for (size_t i = 0; i < d; ++i) {
    double so = pi_old.stddev[i], sn = pi_new.stddev[i];
    t.dmean[i] += duals.alpha_mean * (pi_new.mean[i] - pi_old.mean[i]) / (so * so);
    t.dstd[i] += duals.alpha_cov * (1.0 / sn - so * so / (sn * sn * sn));
  }
  t.loss = t.nll + duals.alpha_mean * (t.kl_mean - eps_mean) +
           duals.alpha_cov * (t.kl_cov - eps_cov);
  return t;
}

double distill_regularizer(const diffnet::GaussianActionDistribution& pi_new,
                           const diffnet::GaussianActionDistribution& teacher, double lambda,
                           std::vector<double>& dmean, std::vector<double>& dstd) {
  double kl = diffnet::kl_full(pi_new, teacher);
  for (size_t i = 0; i < pi_new.mean.size(); ++i) {
    double st = teacher.stddev[i], sn = pi_new.stddev[i];
    dmean[i] += lambda * (pi_new.mean[i] - teacher.mean[i]) / (st * st);
    dstd[i] += lambda * (sn / (st * st) - 1.0 / sn);
  }
  return lambda * kl;
}

LearnerState::LearnerState(const nets::NetworkConfig& net_cfg_, const LearnerConfig& cfg_,
                           uint64_t seed)
    : net_cfg(net_cfg_), cfg(cfg_), rng(Rng::derive(seed, "learner", 0)) {
  Rng pr = Rng::derive(seed, "init.policy", 0);
  Rng cr = Rng::derive(seed, "init.critic", 0);
  policy = nets::init_policy_params(net_cfg, pr);
  critic = nets::init_critic_params(net_cfg, cr);
  policy_target = policy;
  critic_target = critic;
  policy_opt = std::make_unique<diffnet::Adam>(policy, cfg.adam_beta1, cfg.adam_beta2,
                                               cfg.adam_eps);
  critic_opt = std::make_unique<diffnet::Adam>(critic, cfg.adam_beta1, cfg.adam_beta2,
                                               cfg.adam_eps);
  support = net_cfg.support();
}

void LearnerState::add_teacher(TeacherSpec t) {
  teachers.push_back(std::move(t));
  lambdas.push_back(cfg.distill_initial);
}

void LearnerState::refresh_targets() {
  policy_target = policy;
  critic_target = critic;
}

namespace {

struct ItemResult {
  diffnet::ParameterSet pgrad, cgrad;
  double policy_loss = 0.0, critic_loss = 0.0;
  double kl_mean = 0.0, kl_cov = 0.0;
  double dual_grad = 0.0, went = 0.0;
};

}  // namespace

StepMetrics learner_step(LearnerState& state,
                         const std::vector<const replay::TrajectorySlice*>& batch,
                         double running_return, bool parallel) {
  const auto& nc = state.net_cfg;
  const auto& lc = state.cfg;
  const int B = static_cast<int>(batch.size());
  if (B == 0) throw DataError("learner_step on an empty batch");
  const int L = batch[0]->length();
  if (L < 2) throw DataError("slices need at least 2 records");
  for (const auto* s : batch)
    if (s->length() != L) throw DataError("slice length mismatch in batch");
  const int K = lc.action_samples;
  const int A = sim::kActionDim;
  const int W = nc.lstm_width;
  const size_t J = state.teachers.size();
  const double pol_scale = 1.0 / (static_cast<double>(B) * L);
  const double crit_scale = 1.0 / (static_cast<double>(B) * (L - 1));

  uint64_t step_seed = state.rng.next_u64();
  std::vector<ItemResult> items(B);
  std::exception_ptr batch_error;

#pragma omp parallel for schedule(dynamic, 1) if (parallel)
  for (int b = 0; b < B; ++b) {
    try {
    const auto& slice = *batch[b];
    auto& item = items[b];
    item.pgrad = state.policy.zeros_like();
    item.cgrad = state.critic.zeros_like();

    std::vector<nets::Observation> obs;
    obs.reserve(L);
    for (const auto& r : slice.records) obs.push_back(r.obs);

    diffnet::RecurrentState<float> init = diffnet::RecurrentState<float>::zero(W);
    if (!slice.init_h.empty()) {
      if (static_cast<int>(slice.init_h.size()) != W ||
          static_cast<int>(slice.init_c.size()) != W)
        throw DataError("slice recurrent state width mismatch");
      init.h = slice.init_h;
      init.c = slice.init_c;
    }

    auto pol_roll = nets::trunk_unroll(state.policy, nc, obs, init);
    auto polt_roll = nets::trunk_unroll(state.policy_target, nc, obs, init);
    auto crit_roll =
        nets::trunk_unroll(state.critic, nc, obs, diffnet::RecurrentState<float>::zero(W));
    auto critt_roll =
        nets::trunk_unroll(state.critic_target, nc, obs, diffnet::RecurrentState<float>::zero(W));
    std::vector<nets::TrunkRollout<float>> teacher_rolls;
    teacher_rolls.reserve(J);
    for (const auto& teacher : state.teachers)
      teacher_rolls.push_back(nets::trunk_unroll(
          teacher.params, teacher.cfg, obs,
          diffnet::RecurrentState<float>::zero(teacher.cfg.lstm_width)));

    std::vector<nets::PolicyHeadOut<float>> old_outs(L);
    for (int t = 0; t < L; ++t)
      old_outs[t] = nets::policy_head_forward(state.policy_target, nc, polt_roll.h(t));

    std::vector<std::vector<float>> dh_pol(L, std::vector<float>(W, 0.0f));
    std::vector<std::vector<float>> dh_crit(L, std::vector<float>(W, 0.0f));

    Rng srng = Rng::derive(step_seed, "estep", static_cast<uint64_t>(b));
    nets::CriticHeadCache<float> qcache;
    std::vector<float> af(A);
    std::vector<double> q(K);
    std::vector<std::vector<double>> samples(K, std::vector<double>(A));

    for (int t = 0; t < L; ++t) {
      auto new_out = nets::policy_head_forward(state.policy, nc, pol_roll.h(t));
      auto pi_new = nets::to_distribution(new_out);
      auto pi_old = nets::to_distribution(old_outs[t]);
      const float* priv = slice.records[t].obs.privileged.data();

      for (int k = 0; k < K; ++k) {
        samples[k] = pi_old.sample(srng);
        for (int i = 0; i < A; ++i) af[i] = static_cast<float>(samples[k][i]);
        const auto& probs =
            nets::critic_head_forward(state.critic_target, nc, critt_roll.h(t), priv, af.data(),
                                      qcache);
        q[k] = nets::expected_value(probs, state.support);
      }
      auto w = softmax_weights(q, state.duals.eta);
      item.dual_grad += temperature_dual_gradient(q, state.duals.eta, lc.epsilon_temperature);
      item.went += weight_entropy(w);

      auto ms = mstep_terms(pi_new, pi_old, samples, w, state.duals, lc.epsilon_kl_mean,
                            lc.epsilon_kl_cov);
      double loss_t = ms.loss;
      for (size_t j = 0; j < J; ++j) {
        auto t_out =
            nets::policy_head_forward(state.teachers[j].params, state.teachers[j].cfg,
                                      teacher_rolls[j].h(t));
        loss_t += distill_regularizer(pi_new, nets::to_distribution(t_out), state.lambdas[j],
                                      ms.dmean, ms.dstd);
      }
      item.policy_loss += loss_t;
      item.kl_mean += ms.kl_mean;
      item.kl_cov += ms.kl_cov;

      std::vector<float> dmean(A), dstd(A);
      for (int i = 0; i < A; ++i) {
        dmean[i] = static_cast<float>(ms.dmean[i] * pol_scale);
        dstd[i] = static_cast<float>(ms.dstd[i] * pol_scale);
      }
      nets::policy_head_backward(state.policy, nc, pol_roll.h(t), new_out, dmean, dstd,
                                 item.pgrad, dh_pol[t]);

      if (t > L - 2) continue;  // no in-slice bootstrap state left
      int n_eff = std::min(lc.n_step, L - 1 - t);
      double racc = 0.0, gpow = 1.0, gamma_eff = 0.0;
      int boot = -1;
      for (int i = 0; i < n_eff; ++i) {
        racc += gpow * slice.records[t + i].reward.total;
        gpow *= lc.discount;
        if (slice.records[t + i + 1].episode_start) break;  // boundary: no bootstrap
        if (i == n_eff - 1) {
          boot = t + n_eff;
          gamma_eff = gpow;
        }
      }
      std::vector<double> boot_probs;
      if (boot >= 0) {
        for (int i = 0; i < A; ++i) af[i] = static_cast<float>(old_outs[boot].mean[i]);
        const auto& probs = nets::critic_head_forward(state.critic_target, nc,
                                                      critt_roll.h(boot),
                                                      slice.records[boot].obs.privileged.data(),
                                                      af.data(), qcache);
        boot_probs.assign(probs.begin(), probs.end());
      } else {
        boot_probs.assign(state.support.size(), 1.0 / state.support.size());
      }
      auto target = project_categorical(state.support, boot_probs, racc, gamma_eff);

      nets::CriticHeadCache<float> ccache;
      const auto& pred = nets::critic_head_forward(state.critic, nc, crit_roll.h(t), priv,
                                                   slice.records[t].action.data(), ccache);
      item.critic_loss += categorical_cross_entropy(target, pred);
      std::vector<float> dlogits(nc.atoms);
      for (int j = 0; j < nc.atoms; ++j)
        dlogits[j] = static_cast<float>((pred[j] - target[j]) * crit_scale);
      nets::critic_head_backward(state.critic, nc, ccache, dlogits, item.cgrad, &dh_crit[t]);
    }

    nets::trunk_backward(state.policy, nc, pol_roll, dh_pol, item.pgrad);
    nets::trunk_backward(state.critic, nc, crit_roll, dh_crit, item.cgrad);
    } catch (...) {
#pragma omp critical
      if (!batch_error) batch_error = std::current_exception();
    }
  }
  if (batch_error) std::rethrow_exception(batch_error);

  // Fixed-order reduction keeps parallel and serial runs bit-identical.
  diffnet::ParameterSet pgrad = state.policy.zeros_like();
  diffnet::ParameterSet cgrad = state.critic.zeros_like();
  StepMetrics m;
  double dual_grad = 0.0;
  for (int b = 0; b < B; ++b) {
    pgrad.add_scaled(items[b].pgrad, 1.0f);
    cgrad.add_scaled(items[b].cgrad, 1.0f);
    m.policy_loss += items[b].policy_loss * pol_scale;
    m.critic_loss += items[b].critic_loss * crit_scale;
    m.kl_mean += items[b].kl_mean * pol_scale;
    m.kl_cov += items[b].kl_cov * pol_scale;
    m.weight_entropy += items[b].went * pol_scale;
    dual_grad += items[b].dual_grad * pol_scale;
  }
  m.policy_grad_norm = pgrad.global_norm();
  m.critic_grad_norm = cgrad.global_norm();
  if (!std::isfinite(m.critic_loss) || !std::isfinite(m.policy_loss))
    throw NetError("learner fault: non-finite loss on batch of " + std::to_string(B) +
                   " slices at step " + std::to_string(state.step_count));

  state.policy_opt->update(state.policy, pgrad, lc.actor_lr, lc.grad_clip);
  state.critic_opt->update(state.critic, cgrad, lc.critic_lr, lc.grad_clip);

  state.duals.eta = std::max(
      kEtaFloor, state.duals.eta - state.duals.eta_adam.update(dual_grad, lc.temperature_lr));
  state.duals.alpha_mean =
      std::max(0.0, state.duals.alpha_mean + lc.dual_lr * (m.kl_mean - lc.epsilon_kl_mean));
  state.duals.alpha_cov =
      std::max(0.0, state.duals.alpha_cov + lc.dual_lr * (m.kl_cov - lc.epsilon_kl_cov));

  for (size_t j = 0; j < J; ++j)
    if (running_return >= state.teachers[j].return_threshold)
      state.lambdas[j] *= lc.distill_decay;

  ++state.step_count;
  if (state.step_count % lc.target_refresh == 0) state.refresh_targets();

  m.step = state.step_count;
  m.eta = state.duals.eta;
  m.alpha_mean = state.duals.alpha_mean;
  m.alpha_cov = state.duals.alpha_cov;
  m.lambdas = state.lambdas;
  return m;
}

std::vector<std::string> metrics_header(const std::vector<TeacherSpec>& teachers) {
  std::vector<std::string> h = {"step",        "critic_loss",    "policy_loss",
                                "kl_mean",     "kl_cov",         "eta",
                                "alpha_mean",  "alpha_cov",      "weight_entropy",
                                "policy_grad_norm", "critic_grad_norm"};
  for (const auto& t : teachers) h.push_back("lambda_" + t.name);
  return h;
}

std::vector<double> metrics_row(const StepMetrics& m) {
  std::vector<double> r = {static_cast<double>(m.step),
                           m.critic_loss,
                           m.policy_loss,
                           m.kl_mean,
                           m.kl_cov,
                           m.eta,
                           m.alpha_mean,
                           m.alpha_cov,
                           m.weight_entropy,
                           m.policy_grad_norm,
                           m.critic_grad_norm};
  r.insert(r.end(), m.lambdas.begin(), m.lambdas.end());
  return r;
}

}  // namespace pitchlab::learner
