#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pitchlab/config.hpp"
#include "pitchlab/diffnet.hpp"
#include "pitchlab/nets.hpp"
#include "pitchlab/replay.hpp"

namespace pitchlab::learner {

struct LearnerConfig {
  double discount = 0.99;
  int batch_size = 80;
  int trajectory_length = 48;
  int action_samples = 20;
  double actor_lr = 1e-4;
  double critic_lr = 1e-4;
  double temperature_lr = 1e-2;
  double dual_lr = 1e-4;
  double epsilon_temperature = 0.1;
  double epsilon_kl_mean = 0.0025;
  double epsilon_kl_cov = 1e-6;
  int n_step = 5;
  int target_refresh = 100;
  double grad_clip = 40.0;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  double distill_initial = 1.0;
  double distill_decay = 0.995;

  static LearnerConfig from(const Config& cfg);
};

struct MpoDuals {
  double eta = 1.0;
  double alpha_mean = 1.0;
  double alpha_cov = 1.0;
  diffnet::ScalarAdam eta_adam;
};

inline constexpr double kEtaFloor = 1e-6;

// Categorical projection of (reward + gamma_eff * z_j) onto the support.
// Conserves mass; conserves the mean when nothing clamps.
std::vector<double> project_categorical(const std::vector<double>& support,
                                        const std::vector<double>& probs, double reward,
                                        double gamma_eff);

// -sum target_j log pred_j. Equals the target entropy when pred == target.
double categorical_cross_entropy(const std::vector<double>& target,
                                 const std::vector<float>& pred);

// Softmax weights over one state's sampled q-values at temperature eta.
std::vector<double> softmax_weights(const std::vector<double>& q, double eta);
double weight_kl_to_uniform(const std::vector<double>& w);
double weight_entropy(const std::vector<double>& w);
// d/d eta of the temperature dual g(eta) = eta*eps + eta*log mean_k exp(q/eta).
double temperature_dual_gradient(const std::vector<double>& q, double eta, double epsilon);

// Computes weights at the current temperature, then applies one Adam step on
// the dual. Returns the weights.
std::vector<double> estep_weights(const std::vector<double>& q, MpoDuals& duals,
                                  double epsilon, double lr);

struct MStepTerms {
  double loss = 0.0;  // -sum_k w_k log pi_new(a_k) + alpha terms
  double nll = 0.0;
  double kl_mean = 0.0, kl_cov = 0.0;
  std::vector<double> dmean, dstd;  // gradients w.r.t. new mean / stddev
};

// Per-state M-step loss and gradients. Multipliers enter as constants;
// their own ascent step happens at batch level.
MStepTerms mstep_terms(const diffnet::GaussianActionDistribution& pi_new,
                       const diffnet::GaussianActionDistribution& pi_old,
                       const std::vector<std::vector<double>>& actions,
                       const std::vector<double>& weights, const MpoDuals& duals,
                       double eps_mean, double eps_cov);

// Per-state distillation penalty lambda * KL(pi_new || teacher); gradients
// accumulate into dmean/dstd.
double distill_regularizer(const diffnet::GaussianActionDistribution& pi_new,
                           const diffnet::GaussianActionDistribution& teacher, double lambda,
                           std::vector<double>& dmean, std::vector<double>& dstd);

struct TeacherSpec {
  std::string name;
  nets::NetworkConfig cfg;
  diffnet::ParameterSet params;
  double return_threshold = 0.0;
};

struct StepMetrics {
  int64_t step = 0;
  double critic_loss = 0.0;
  double policy_loss = 0.0;
  double kl_mean = 0.0, kl_cov = 0.0;
  double eta = 0.0, alpha_mean = 0.0, alpha_cov = 0.0;
  double weight_entropy = 0.0;
  double policy_grad_norm = 0.0, critic_grad_norm = 0.0;
  std::vector<double> lambdas;
};

class LearnerState {
 public:
  LearnerState(const nets::NetworkConfig& net_cfg, const LearnerConfig& cfg, uint64_t seed);

  nets::NetworkConfig net_cfg;
  LearnerConfig cfg;
  diffnet::ParameterSet policy, critic;
  diffnet::ParameterSet policy_target, critic_target;
  std::unique_ptr<diffnet::Adam> policy_opt, critic_opt;
  MpoDuals duals;
  std::vector<TeacherSpec> teachers;
  std::vector<double> lambdas;  // parallel to teachers
  std::vector<double> support;
  int64_t step_count = 0;
  Rng rng;

  void add_teacher(TeacherSpec t);
  void refresh_targets();
};

// One full update on a batch of slices. running_return drives lambda decay.
// parallel=false forces the serial batch loop (same results bit-for-bit).
StepMetrics learner_step(LearnerState& state,
                         const std::vector<const replay::TrajectorySlice*>& batch,
                         double running_return, bool parallel = true);

// CSV plumbing for metrics rows (one row per learner step, append-only).
std::vector<std::string> metrics_header(const std::vector<TeacherSpec>& teachers);
std::vector<double> metrics_row(const StepMetrics& m);

}  // namespace pitchlab::learner
