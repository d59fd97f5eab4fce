#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace mbrl {

/// Thrown by kl_divergence when q assigns zero mass where p does not.
/// Callers that need a finite value must smooth q deliberately.
class SupportViolation : public std::runtime_error {
 public:
  explicit SupportViolation(const std::string& what) : std::runtime_error(what) {}
};

/// Finite MDP with state-only rewards. transitions[a](s, s') is the
/// probability of landing in s' after taking action a in state s.
struct TabularMdp {
  int n_states = 0;
  int n_actions = 0;
  std::vector<Eigen::MatrixXd> transitions;  // one n_states x n_states matrix per action
  Eigen::VectorXd rewards;                   // R(s), in [0, r_max]
  double gamma = 0.99;
  Eigen::VectorXd rho;                       // initial state distribution
  double r_max = 1.0;

  /// Throws std::invalid_argument on shape mismatch, row sums off by more
  /// than 1e-12, rewards outside [0, r_max], or gamma outside [0, 1).
  void validate() const;
};

/// Stochastic policy; probs(s, a) = pi(a | s), rows sum to 1.
struct TabularPolicy {
  Eigen::MatrixXd probs;

  void validate() const;
  static TabularPolicy uniform(int n_states, int n_actions);
  /// Deterministic policy from an action index per state.
  static TabularPolicy deterministic(const std::vector<int>& actions, int n_actions);
};

enum class VisitationKind { Average, Discounted, MarginalAt };

/// State and state-action occupancy under a policy.
struct VisitationDistribution {
  VisitationKind kind;
  int horizon_or_t = 0;          // horizon T for Average, step t for MarginalAt
  Eigen::VectorXd states;        // distribution over states
  Eigen::MatrixXd state_actions; // states(s) * pi(a | s)
};

struct PolicyValue {
  Eigen::VectorXd values;  // V(s)
  double performance = 0;  // J = rho . V
};

struct ValueIterationResult {
  TabularPolicy policy;
  Eigen::VectorXd values;
  double j_star = 0;
  int iterations = 0;
};

/// P_pi(s, s') = sum_a pi(a|s) P_a(s, s').
Eigen::MatrixXd policy_transition_matrix(const TabularMdp& mdp, const TabularPolicy& policy);

/// Exact policy evaluation: solves (I - gamma P_pi) V = R by LU decomposition
/// and checks the residual to 1e-9.
PolicyValue exact_policy_value(const TabularMdp& mdp, const TabularPolicy& policy);

/// Value iteration to sup-norm residual tol; returns the greedy policy and
/// its exact value. Throws if max_iter is exhausted first.
ValueIterationResult value_iteration(const TabularMdp& mdp, double tol = 1e-10,
                                     long max_iter = 1000000);

/// Average: mean of the forward marginals rho P_pi^t over t = 0..T-1.
/// Discounted: (1-gamma) sum_t gamma^t rho P_pi^t via linear solve.
/// MarginalAt: rho P_pi^t for a single t.
VisitationDistribution visitation(const TabularMdp& mdp, const TabularPolicy& policy,
                                  VisitationKind kind, int horizon_or_t);

/// Total variation distance between distributions of equal length.
double tv_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

/// KL(p || q); terms with p_i = 0 contribute zero. Throws SupportViolation
/// when q_i <= 0 while p_i > 0.
double kl_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

/// KL between isotropic Gaussians with common sigma: |m1 - m2|^2 / (2 sigma^2).
double gaussian_kl(const Eigen::VectorXd& mean1, const Eigen::VectorXd& mean2, double sigma);

}  // namespace mbrl
