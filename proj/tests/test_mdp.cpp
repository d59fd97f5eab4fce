#include <cmath>

#include "doctest.h"
#include "mbrl/mdp.hpp"
#include "mbrl/rng.hpp"
#include "mbrl/verify.hpp"

using namespace mbrl;

namespace {

// Deterministic chain s0 -> s1 -> s1 with reward only in s1.
TabularMdp two_state_chain() {
  TabularMdp mdp;
  mdp.n_states = 2;
  mdp.n_actions = 1;
  mdp.transitions = {Eigen::MatrixXd{{0, 1}, {0, 1}}};
  mdp.rewards = Eigen::Vector2d(0, 1);
  mdp.gamma = 0.9;
  mdp.rho = Eigen::Vector2d(1, 0);
  mdp.validate();
  return mdp;
}

// Best deterministic policy by trying all n_actions^n_states of them.
double brute_force_optimum(const TabularMdp& mdp) {
  long combos = 1;
  for (int s = 0; s < mdp.n_states; ++s) combos *= mdp.n_actions;
  double best = -std::numeric_limits<double>::infinity();
  for (long code = 0; code < combos; ++code) {
    std::vector<int> actions(mdp.n_states);
    long rest = code;
    for (int s = 0; s < mdp.n_states; ++s) {
      actions[s] = static_cast<int>(rest % mdp.n_actions);
      rest /= mdp.n_actions;
    }
    TabularPolicy policy = TabularPolicy::deterministic(actions, mdp.n_actions);
    best = std::max(best, exact_policy_value(mdp, policy).performance);
  }
  return best;
}

}  // namespace

TEST_CASE("two-state chain value is the geometric sum") {
  TabularMdp mdp = two_state_chain();
  TabularPolicy policy = TabularPolicy::uniform(2, 1);
  PolicyValue v = exact_policy_value(mdp, policy);
  CHECK(v.performance == doctest::Approx(9.0).epsilon(1e-12));
  CHECK(v.values(1) == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("tv distance of hand distributions") {
  Eigen::VectorXd p(2), q(2);
  p << 0.8, 0.2;
  q << 0.6, 0.4;
  CHECK(tv_distance(p, q) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(tv_distance(p, p) == 0.0);
}

TEST_CASE("kl divergence matches the defining sum and flags support violations") {
  Eigen::VectorXd p(2), q(2);
  p << 0.5, 0.5;
  q << 0.25, 0.75;
  double expected = 0.5 * std::log(0.5 / 0.25) + 0.5 * std::log(0.5 / 0.75);
  CHECK(kl_divergence(p, q) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(kl_divergence(p, p) == doctest::Approx(0.0));

  Eigen::VectorXd bad(2);
  bad << 1.0, 0.0;
  CHECK_THROWS_AS(kl_divergence(p, bad), SupportViolation);
  CHECK_NOTHROW(kl_divergence(bad, p));
}

TEST_CASE("gaussian kl with unit variance and unit mean offset") {
  Eigen::VectorXd m1(1), m2(1);
  m1 << 0.0;
  m2 << 1.0;
  CHECK(gaussian_kl(m1, m2, 1.0) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("value iteration matches brute-force policy enumeration") {
  for (int trial = 0; trial < 20; ++trial) {
    Rng rng(mix_seed(0x6d6470, trial));
    RandomMdpSpec spec;
    spec.min_states = 3;
    spec.max_states = 6;
    spec.min_actions = 2;
    spec.max_actions = 3;
    TabularMdp mdp = random_mdp(rng, spec);
    ValueIterationResult vi = value_iteration(mdp, 1e-10);
    CHECK(vi.j_star == doctest::Approx(brute_force_optimum(mdp)).epsilon(1e-6));
  }
}

TEST_CASE("value iteration dominates random policies up to tolerance") {
  Rng rng(0x7669);
  RandomMdpSpec spec;
  spec.max_states = 8;
  TabularMdp mdp = random_mdp(rng, spec);
  double tol = 1e-10;
  ValueIterationResult vi = value_iteration(mdp, tol);
  for (int i = 0; i < 25; ++i) {
    TabularPolicy policy = random_policy(rng, mdp.n_states, mdp.n_actions);
    CHECK(vi.j_star >= exact_policy_value(mdp, policy).performance - 2 * tol / (1 - mdp.gamma));
  }
}

TEST_CASE("marginal at t=0 equals the initial distribution") {
  Rng rng(0x76697330);
  TabularMdp mdp = random_mdp(rng);
  TabularPolicy policy = random_policy(rng, mdp.n_states, mdp.n_actions);
  VisitationDistribution d = visitation(mdp, policy, VisitationKind::MarginalAt, 0);
  CHECK((d.states - mdp.rho).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("discounted visitation matches the truncated series oracle") {
  Rng rng(0x76697331);
  TabularMdp mdp = random_mdp(rng);
  TabularPolicy policy = random_policy(rng, mdp.n_states, mdp.n_actions);

  Eigen::MatrixXd chain = policy_transition_matrix(mdp, policy);
  Eigen::VectorXd series = Eigen::VectorXd::Zero(mdp.n_states);
  Eigen::VectorXd marginal = mdp.rho;
  double weight = 1 - mdp.gamma;
  int horizon = static_cast<int>(std::ceil(std::log(1e-13 * (1 - mdp.gamma)) /
                                           std::log(mdp.gamma)));
  for (int t = 0; t <= horizon; ++t) {
    series += weight * marginal;
    marginal = chain.transpose() * marginal;
    weight *= mdp.gamma;
  }

  VisitationDistribution d = visitation(mdp, policy, VisitationKind::Discounted, 0);
  CHECK((d.states - series).cwiseAbs().maxCoeff() <= 1e-9);
  CHECK(d.states.sum() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(d.state_actions.sum() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("average visitation is the mean of the first T marginals") {
  Rng rng(0x76697332);
  TabularMdp mdp = random_mdp(rng);
  TabularPolicy policy = random_policy(rng, mdp.n_states, mdp.n_actions);
  int horizon = 7;

  Eigen::MatrixXd chain = policy_transition_matrix(mdp, policy);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(mdp.n_states);
  Eigen::VectorXd marginal = mdp.rho;
  for (int t = 0; t < horizon; ++t) {
    mean += marginal / horizon;
    marginal = chain.transpose() * marginal;
  }

  VisitationDistribution d = visitation(mdp, policy, VisitationKind::Average, horizon);
  CHECK((d.states - mean).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("policy transition matrix rows are distributions") {
  Rng rng(0x70746d);
  TabularMdp mdp = random_mdp(rng);
  TabularPolicy policy = random_policy(rng, mdp.n_states, mdp.n_actions);
  Eigen::MatrixXd chain = policy_transition_matrix(mdp, policy);
  for (int s = 0; s < mdp.n_states; ++s) {
    CHECK(chain.row(s).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(chain.row(s).minCoeff() >= 0.0);
  }
}

TEST_CASE("validate rejects malformed inputs") {
  TabularMdp mdp = two_state_chain();
  mdp.transitions[0](0, 0) = 0.5;  // row no longer sums to 1
  CHECK_THROWS_AS(mdp.validate(), std::invalid_argument);

  TabularMdp bad_reward = two_state_chain();
  bad_reward.rewards(0) = -0.5;
  CHECK_THROWS_AS(bad_reward.validate(), std::invalid_argument);

  TabularPolicy policy;
  policy.probs = Eigen::MatrixXd{{0.7, 0.7}};
  CHECK_THROWS_AS(policy.validate(), std::invalid_argument);
}
