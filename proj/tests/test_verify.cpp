#include <cmath>
#include <limits>
#include <string>

#include "doctest.h"
#include "mbrl/verify.hpp"

using namespace mbrl;

namespace {

double term(const BoundReport& report, const std::string& key) {
  for (const auto& [name, value] : report.terms)
    if (name == key) return value;
  FAIL("missing term ", key, " in ", report.name);
  return 0;
}

struct Instance {
  TabularMdp w, m;
  TabularPolicy policy;
};

Instance random_instance(std::uint64_t trial, double noise_hi = 0.5) {
  Rng rng(mix_seed(0x766572ULL, trial));
  Instance inst;
  inst.w = random_mdp(rng);
  inst.m = perturb_mdp(inst.w, rng, rng.uniform(0.01, noise_hi));
  inst.policy = random_policy(rng, inst.w.n_states, inst.w.n_actions);
  return inst;
}

}  // namespace

TEST_CASE("all four certificates hold on random model-mismatch instances") {
  for (std::uint64_t trial = 0; trial < 50; ++trial) {
    CAPTURE(trial);
    const Instance inst = random_instance(trial);

    const BoundReport lemma1 = check_simulation_lemma(inst.w, inst.m, inst.policy);
    CHECK(lemma1.holds);
    CHECK_FALSE(lemma1.vacuous);
    CHECK(lemma1.lhs >= 0);
    CHECK(lemma1.tightness >= 0);
    CHECK(lemma1.tightness <= 1 + 1e-9);
    CHECK(term(lemma1, "epsilon_max_tv") <= 1.0);

    const BoundReport lemma2 = check_error_amplification(
        policy_transition_matrix(inst.w, inst.policy),
        policy_transition_matrix(inst.m, inst.policy), inst.w.rho, 30);
    CHECK(lemma2.holds);
    CHECK(lemma2.tightness <= 1 + 1e-9);
    const double worst_t = term(lemma2, "worst_t");
    CHECK(worst_t >= 1);
    CHECK(worst_t <= 30);

    const BoundReport lemma3 = check_performance_difference(inst.w, inst.m, inst.policy);
    CHECK(lemma3.holds);
    CHECK(lemma3.tightness <= 1 + 1e-9);
    // The visitation-weighted error never exceeds the worst-case one, so
    // this bound is at least as sharp up to its truncation slack.
    CHECK(term(lemma3, "epsilon_visitation_tv") <= term(lemma1, "epsilon_max_tv") + 1e-12);
    CHECK(lemma3.bound <= lemma1.bound + term(lemma3, "truncation_slack") + 1e-9);

    const BoundReport theorem = check_theorem1(inst.w, inst.m, inst.policy);
    CHECK(theorem.holds);
    CHECK_FALSE(theorem.vacuous);
    CHECK(std::isfinite(theorem.bound));
  }
}

TEST_CASE("a perfect model certifies with zero error terms") {
  Rng rng(0x70657266ULL);
  const TabularMdp w = random_mdp(rng);
  const TabularPolicy policy = random_policy(rng, w.n_states, w.n_actions);

  const BoundReport lemma1 = check_simulation_lemma(w, w, policy);
  CHECK(lemma1.holds);
  CHECK(lemma1.lhs == 0.0);
  CHECK(lemma1.bound == 0.0);
  CHECK(lemma1.tightness == 0.0);

  const TabularPolicy planner = value_iteration(w).policy;
  const BoundReport theorem = check_theorem1(w, w, planner);
  CHECK(theorem.holds);
  CHECK_FALSE(theorem.vacuous);
  CHECK(term(theorem, "epsilon_model_kl") == 0.0);
  CHECK(term(theorem, "domain_tv") == 0.0);
  CHECK(std::abs(term(theorem, "policy_subopt")) <= 1e-8);
}

TEST_CASE("expected divergence is within the square-root information bound") {
  // Per-timestep check of the inequality that justifies certifying a
  // sqrt(KL) model-error term from a KL-trained model.
  for (std::uint64_t trial = 0; trial < 10; ++trial) {
    CAPTURE(trial);
    const Instance inst = random_instance(trial + 100);
    for (int t = 0; t <= 20; ++t) {
      const Eigen::VectorXd marg =
          visitation(inst.w, inst.policy, VisitationKind::MarginalAt, t).states;
      double expected_tv = 0, expected_kl = 0;
      for (int s = 0; s < inst.w.n_states; ++s) {
        if (marg(s) <= 0) continue;
        for (int a = 0; a < inst.w.n_actions; ++a) {
          const double weight = marg(s) * inst.policy.probs(s, a);
          const Eigen::VectorXd pw = inst.w.transitions[a].row(s).transpose();
          const Eigen::VectorXd pm = inst.m.transitions[a].row(s).transpose();
          expected_tv += weight * tv_distance(pw, pm);
          expected_kl += weight * kl_divergence(pw, pm);
        }
      }
      CHECK(expected_tv <= std::sqrt(expected_kl / 2.0) + 1e-12);
    }
  }
}

TEST_CASE("missing support yields a vacuous certificate, never a false pass") {
  TabularMdp w;
  w.n_states = 2;
  w.n_actions = 1;
  w.transitions = {(Eigen::MatrixXd(2, 2) << 0.5, 0.5, 0.5, 0.5).finished()};
  w.rewards = Eigen::Vector2d(0.0, 1.0);
  w.gamma = 0.9;
  w.rho = Eigen::Vector2d(1.0, 0.0);
  w.validate();

  TabularMdp m = w;
  m.transitions = {(Eigen::MatrixXd(2, 2) << 1.0, 0.0, 1.0, 0.0).finished()};
  m.validate();

  const TabularPolicy policy = TabularPolicy::uniform(2, 1);
  const BoundReport theorem = check_theorem1(w, m, policy);
  CHECK(theorem.vacuous);
  CHECK(theorem.holds);
  CHECK(std::isinf(theorem.bound));
  CHECK(theorem.tightness == 0.0);

  // The TV-based certificates have a finite premise on the same instance.
  const BoundReport lemma1 = check_simulation_lemma(w, m, policy);
  CHECK_FALSE(lemma1.vacuous);
  CHECK(lemma1.holds);
}

TEST_CASE("drift between identical chains is zero") {
  Rng rng(0x64726966ULL);
  const TabularMdp w = random_mdp(rng);
  const TabularPolicy policy = random_policy(rng, w.n_states, w.n_actions);
  const Eigen::MatrixXd chain = policy_transition_matrix(w, policy);
  const BoundReport report = check_error_amplification(chain, chain, w.rho, 20);
  CHECK(report.holds);
  CHECK(report.lhs == 0.0);
  CHECK(report.bound == 0.0);
  CHECK(term(report, "epsilon_step_tv") == 0.0);
}

TEST_CASE("random instance generators emit valid, fully supported problems") {
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    Rng rng(mix_seed(0x67656eULL, trial));
    const TabularMdp w = random_mdp(rng);
    CHECK(w.n_states >= 3);
    CHECK(w.n_states <= 20);
    CHECK(w.n_actions >= 2);
    CHECK(w.n_actions <= 4);
    CHECK(w.gamma >= 0.1);
    CHECK(w.gamma <= 0.95);
    for (const auto& p : w.transitions) CHECK(p.minCoeff() > 0);

    const TabularMdp m = perturb_mdp(w, rng, 0.3);
    CHECK(m.n_states == w.n_states);
    for (const auto& p : m.transitions) CHECK(p.minCoeff() > 0);

    const TabularPolicy policy = random_policy(rng, w.n_states, w.n_actions);
    CHECK((policy.probs.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-12);

    const nlohmann::json j = mdp_to_json(w);
    CHECK(j.at("transitions").size() == static_cast<std::size_t>(w.n_actions));
    CHECK(j.at("rewards").size() == static_cast<std::size_t>(w.n_states));
    CHECK(policy_to_json(policy).at("probs").size() == static_cast<std::size_t>(w.n_states));
  }
}

TEST_CASE("a corrupted bound scale trips violations with serialized evidence") {
  SweepOptions honest;
  const SweepResult clean = verify_sweep("all", 40, 5, honest);
  CHECK(clean.trials == 40);
  CHECK(clean.violations == 0);
  CHECK(clean.failures.empty());

  SweepOptions corrupt;
  corrupt.bound_scale = 0.01;
  const SweepResult broken = verify_sweep("all", 40, 5, corrupt);
  CHECK(broken.violations > 0);
  REQUIRE(!broken.failures.empty());
  CHECK(broken.failures.size() <= 5);
  const nlohmann::json& failure = broken.failures.front();
  CHECK(failure.contains("suite"));
  CHECK(failure.contains("report"));
  CHECK(failure.contains("real_mdp"));
  CHECK(failure.contains("model_mdp"));
  CHECK(failure.contains("policy"));
  CHECK(failure.at("bound_scale") == 0.01);

  const SweepResult single = verify_sweep("lemma2", 7, 2);
  int lines = 0;
  for (char c : single.csv)
    if (c == '\n') ++lines;
  CHECK(lines == 8);  // header plus one row per trial
  CHECK(single.csv.rfind("suite,trial,states,actions,gamma,lhs,bound,tightness,holds,vacuous\n",
                         0) == 0);

  CHECK_THROWS_AS(verify_sweep("lemma9", 1, 0), std::invalid_argument);
}

TEST_CASE("an exact model produces an identically zero divergence profile") {
  for (const char* task : {"gridworld-goal", "pendulum"}) {
    CAPTURE(task);
    const auto env = make_env(task);
    const GaussianPolicy policy(env->state_dim(), env->action_dim(), {8},
                                mix_seed(0x70726f66ULL, 1));
    const SyntheticModel exact = exact_model(*env);
    const AmplificationProfile profile = amplification_profile(*env, policy, exact, 12, 4, 9);
    REQUIRE(profile.open_loop.size() == 13);
    REQUIRE(profile.closed_loop.size() == 13);
    CHECK_FALSE(profile.diverged);
    CHECK(profile.n_rollouts == 4);
    for (int t = 0; t <= 12; ++t) {
      CHECK(profile.open_loop[t] == 0.0);
      CHECK(profile.closed_loop[t] == 0.0);
    }
  }
}

TEST_CASE("an untrained model diverges from the task while starting at zero") {
  const auto env = make_env("point-reacher");
  const GaussianPolicy policy(env->state_dim(), env->action_dim(), {8},
                              mix_seed(0x70726f66ULL, 2));
  DynamicsEnsemble ensemble(env->state_dim(), env->action_dim(), {8}, 2,
                            mix_seed(0x70726f66ULL, 3));
  const AmplificationProfile profile =
      amplification_profile(*env, policy, ensemble_model(ensemble), 10, 3, 4);
  CHECK(profile.open_loop[0] == 0.0);
  CHECK(profile.closed_loop[0] == 0.0);
  double total = 0;
  for (double v : profile.open_loop) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0);
    total += v;
  }
  CHECK(total > 0);

  const std::string csv = profile.to_csv();
  CHECK(csv.rfind("t,L_open,L_closed\n", 0) == 0);
  int lines = 0;
  for (char c : csv)
    if (c == '\n') ++lines;
  CHECK(lines == 12);  // header plus horizon + 1 rows
}
