#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "mbrl/dynamics.hpp"
#include "mbrl/env.hpp"
#include "mbrl/policy.hpp"

namespace mbrl {

/// One-step dynamics source for synthetic rollouts: either a learned
/// ensemble (deterministic members, rng unused) or the task's own stepper.
struct SyntheticModel {
  int n_members = 1;
  std::function<Eigen::VectorXd(int member, const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                                Rng& rng)>
      step;
};

SyntheticModel exact_model(const Environment& env);
SyntheticModel ensemble_model(const DynamicsEnsemble& ensemble);

struct NpgConfig {
  double gamma = 0.995;
  double lambda = 0.97;
  int n_traj = 200;              // initial states per update; one rollout per member each
  int horizon = 500;             // clamped to the env horizon
  double step_size = 0.05;       // normalized KL-like step budget
  int cg_iters = 10;
  double cg_damping = 1e-4;
  double intermediate_frac = 0.5;  // share of rollouts started from visited real states
  int fisher_subsample = 2000;
  bool standardize_adv = true;
  bool worst_case_member = false;  // gradient from the lowest-return member only
  ValueFitConfig value_fit;
};

/// Flattened synthetic experience for one policy update.
struct RolloutBatch {
  std::vector<Trajectory> trajs;
  std::vector<int> member_of;  // ensemble member per trajectory
  Eigen::MatrixXd states, actions;
  Eigen::VectorXd rewards, advantages, value_targets;
  bool diverged = false;

  int total_samples() const { return static_cast<int>(states.rows()); }
};

/// Rolls the policy in the model: n_traj initial states, each expanded under
/// every ensemble member; rewards and termination come from the task.
/// Initial states are drawn from the task's own distribution, or with
/// probability intermediate_frac from the supplied visited real states.
/// Non-finite predictions truncate the rollout and set the diverged flag.
RolloutBatch synthetic_rollouts(const GaussianPolicy& policy, const SyntheticModel& model,
                                const Environment& env, const NpgConfig& cfg,
                                const std::vector<Eigen::VectorXd>& real_states,
                                std::uint64_t seed);

/// Fills advantages (GAE) and value_targets (advantage + baseline) in place.
void gae_advantages(RolloutBatch& batch, const ValueNet& value, double gamma, double lambda);

/// Mean score-weighted advantage: g = (1/n) sum_i advantage_i * score_i.
/// Standardization shifts advantages to zero mean and unit variance first.
Eigen::VectorXd policy_gradient(const GaussianPolicy& policy, const RolloutBatch& batch,
                                bool standardize);

/// Damped empirical Fisher built from score outer products on a state
/// subsample: apply(v) = (1/n) S^T (S v) + damping * v.
struct FisherOperator {
  Eigen::MatrixXd scores;  // [n, P]
  double damping = 0;

  Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    return scores.transpose() * (scores * v) / static_cast<double>(scores.rows()) + damping * v;
  }
};

FisherOperator make_fisher(const GaussianPolicy& policy, const RolloutBatch& batch,
                           int subsample, double damping, std::uint64_t seed);

struct CgResult {
  Eigen::VectorXd x;
  int iterations = 0;
  bool breakdown = false;
};

/// Conjugate gradient from x0 = 0 for a PSD operator.
CgResult cg_solve(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply,
                  const Eigen::VectorXd& b, int max_iters, double residual_tol = 1e-10);

struct NpgUpdateInfo {
  bool skipped = false;        // gradient numerically zero; parameters untouched
  bool cg_fallback = false;    // CG broke down; plain gradient direction used
  double quad_form = 0;        // step^T (F + damping I) step, recomputed after scaling
  double quadform_residual = 0;  // |quad_form - step_size| / step_size
  double ascent_inner = 0;     // g . step
  double step_norm = 0;
};

/// Normalized natural gradient step: solves (F + damping I) x = g by CG and
/// rescales x so the quadratic form equals step_size exactly.
NpgUpdateInfo npg_update(GaussianPolicy& policy, const Eigen::VectorXd& grad,
                         const FisherOperator& fisher, double step_size, int cg_iters);

struct NpgIterationStats {
  double mean_synth_return = 0;   // undiscounted, averaged over rollouts
  double kl_update = 0;           // mean KL(old || new) over batch states
  double explained_variance = 0;  // value fit quality on this batch
  double quadform_residual = 0;
  bool diverged = false;
  bool skipped = false;
  long synth_samples = 0;
};

/// One full policy improvement step: rollouts, GAE, gradient, Fisher, the
/// normalized update, then a value-function refit on the new targets.
NpgIterationStats npg_iteration(GaussianPolicy& policy, ValueNet& value,
                                const SyntheticModel& model, const Environment& env,
                                const NpgConfig& cfg,
                                const std::vector<Eigen::VectorXd>& real_states,
                                std::uint64_t seed);

}  // namespace mbrl
