#include "mbrl/mdp.hpp"

#include <cmath>

namespace mbrl {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

void TabularMdp::validate() const {
  check(n_states > 0 && n_actions > 0, "mdp: empty state or action space");
  check(static_cast<int>(transitions.size()) == n_actions, "mdp: one transition matrix per action required");
  check(gamma >= 0.0 && gamma < 1.0, "mdp: gamma must lie in [0, 1)");
  check(rewards.size() == n_states, "mdp: reward vector size mismatch");
  check(rho.size() == n_states, "mdp: rho size mismatch");
  for (int a = 0; a < n_actions; ++a) {
    const auto& P = transitions[a];
    check(P.rows() == n_states && P.cols() == n_states, "mdp: transition matrix shape mismatch");
    for (int s = 0; s < n_states; ++s) {
      check(P.row(s).minCoeff() >= 0.0, "mdp: negative transition probability");
      check(std::abs(P.row(s).sum() - 1.0) <= 1e-12, "mdp: transition row must sum to 1");
    }
  }
  for (int s = 0; s < n_states; ++s)
    check(rewards[s] >= 0.0 && rewards[s] <= r_max, "mdp: reward outside [0, r_max]");
  check(rho.minCoeff() >= 0.0 && std::abs(rho.sum() - 1.0) <= 1e-12, "mdp: rho must be a distribution");
}

void TabularPolicy::validate() const {
  check(probs.size() > 0, "policy: empty");
  for (int s = 0; s < probs.rows(); ++s) {
    check(probs.row(s).minCoeff() >= 0.0, "policy: negative probability");
    check(std::abs(probs.row(s).sum() - 1.0) <= 1e-12, "policy: row must sum to 1");
  }
}

TabularPolicy TabularPolicy::uniform(int n_states, int n_actions) {
  TabularPolicy p;
  p.probs = Eigen::MatrixXd::Constant(n_states, n_actions, 1.0 / n_actions);
  return p;
}

TabularPolicy TabularPolicy::deterministic(const std::vector<int>& actions, int n_actions) {
  TabularPolicy p;
  p.probs = Eigen::MatrixXd::Zero(static_cast<int>(actions.size()), n_actions);
  for (int s = 0; s < static_cast<int>(actions.size()); ++s) p.probs(s, actions[s]) = 1.0;
  return p;
}

Eigen::MatrixXd policy_transition_matrix(const TabularMdp& mdp, const TabularPolicy& policy) {
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(mdp.n_states, mdp.n_states);
  for (int a = 0; a < mdp.n_actions; ++a)
    P += policy.probs.col(a).asDiagonal() * mdp.transitions[a];
  return P;
}

PolicyValue exact_policy_value(const TabularMdp& mdp, const TabularPolicy& policy) {
  const Eigen::MatrixXd P = policy_transition_matrix(mdp, policy);
  const int n = mdp.n_states;
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) - mdp.gamma * P;
  Eigen::VectorXd V = A.partialPivLu().solve(mdp.rewards);
  const double residual = (V - (mdp.rewards + mdp.gamma * P * V)).cwiseAbs().maxCoeff();
  if (!(residual <= 1e-9))
    throw std::runtime_error("exact_policy_value: Bellman residual " + std::to_string(residual));
  return {V, mdp.rho.dot(V)};
}

ValueIterationResult value_iteration(const TabularMdp& mdp, double tol, long max_iter) {
  const int n = mdp.n_states;
  Eigen::VectorXd V = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd Q(n, mdp.n_actions);
  long it = 0;
  for (; it < max_iter; ++it) {
    for (int a = 0; a < mdp.n_actions; ++a)
      Q.col(a) = mdp.rewards + mdp.gamma * (mdp.transitions[a] * V);
    Eigen::VectorXd Vnext = Q.rowwise().maxCoeff();
    const double delta = (Vnext - V).cwiseAbs().maxCoeff();
    V = Vnext;
    if (delta <= tol) break;
  }
  if (it == max_iter)
    throw std::runtime_error("value_iteration: no convergence within iteration cap");

  std::vector<int> greedy(n, 0);
  for (int a = 0; a < mdp.n_actions; ++a)
    Q.col(a) = mdp.rewards + mdp.gamma * (mdp.transitions[a] * V);
  for (int s = 0; s < n; ++s) {
    int best = 0;
    for (int a = 1; a < mdp.n_actions; ++a)
      if (Q(s, a) > Q(s, best)) best = a;
    greedy[s] = best;
  }
  ValueIterationResult res;
  res.policy = TabularPolicy::deterministic(greedy, mdp.n_actions);
  PolicyValue pv = exact_policy_value(mdp, res.policy);
  res.values = pv.values;
  res.j_star = pv.performance;
  res.iterations = static_cast<int>(it) + 1;
  return res;
}

VisitationDistribution visitation(const TabularMdp& mdp, const TabularPolicy& policy,
                                  VisitationKind kind, int horizon_or_t) {
  const Eigen::MatrixXd P = policy_transition_matrix(mdp, policy);
  const int n = mdp.n_states;
  VisitationDistribution out;
  out.kind = kind;
  out.horizon_or_t = horizon_or_t;

  switch (kind) {
    case VisitationKind::Average: {
      if (horizon_or_t <= 0) throw std::invalid_argument("visitation: horizon must be positive");
      Eigen::VectorXd marginal = mdp.rho;
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
      for (int t = 0; t < horizon_or_t; ++t) {
        acc += marginal;
        if (t + 1 < horizon_or_t) marginal = P.transpose() * marginal;
      }
      out.states = acc / horizon_or_t;
      break;
    }
    case VisitationKind::Discounted: {
      Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n) - mdp.gamma * P.transpose();
      out.states = A.partialPivLu().solve((1.0 - mdp.gamma) * mdp.rho);
      break;
    }
    case VisitationKind::MarginalAt: {
      if (horizon_or_t < 0) throw std::invalid_argument("visitation: t must be nonnegative");
      Eigen::VectorXd marginal = mdp.rho;
      for (int t = 0; t < horizon_or_t; ++t) marginal = P.transpose() * marginal;
      out.states = marginal;
      break;
    }
  }

  const double total = out.states.sum();
  if (std::abs(total - 1.0) > 1e-9)
    throw std::runtime_error("visitation: distribution does not normalize");
  out.state_actions = out.states.asDiagonal() * policy.probs;
  return out;
}

double tv_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) throw std::invalid_argument("tv_distance: length mismatch");
  return 0.5 * (p - q).cwiseAbs().sum();
}

double kl_divergence(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: length mismatch");
  double kl = 0.0;
  for (int i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    if (q[i] <= 0.0)
      throw SupportViolation("kl_divergence: q has zero mass on the support of p");
    kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

double gaussian_kl(const Eigen::VectorXd& mean1, const Eigen::VectorXd& mean2, double sigma) {
  if (mean1.size() != mean2.size()) throw std::invalid_argument("gaussian_kl: length mismatch");
  if (sigma <= 0.0) throw std::invalid_argument("gaussian_kl: sigma must be positive");
  return (mean1 - mean2).squaredNorm() / (2.0 * sigma * sigma);
}

}  // namespace mbrl
