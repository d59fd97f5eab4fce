#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mbrl/env.hpp"
#include "mbrl/mdp.hpp"
#include "mbrl/npg.hpp"

namespace mbrl {

/// Outcome of checking one inequality on one instance. `holds` means
/// lhs <= bound + tolerance; `terms` itemizes every contribution to the
/// bound (including explicit slack for horizon truncation and approximate
/// planning) so certificates stay airtight.
struct BoundReport {
  std::string name;
  double lhs = 0;
  double bound = 0;
  double tolerance = 1e-9;
  bool holds = false;
  bool vacuous = false;  // premise infinite (e.g. KL support violation); holds trivially
  double tightness = 0;  // max(lhs, 0) / bound, 0 when the bound is 0 or infinite
  std::vector<std::pair<std::string, double>> terms;

  nlohmann::json to_json() const;
};

/// Worst-case model error: value gap of one policy between two MDPs against
/// 2 gamma eps R / (1-gamma)^2 with eps = max_(s,a) TV of next-state rows.
BoundReport check_simulation_lemma(const TabularMdp& w, const TabularMdp& m,
                                   const TabularPolicy& policy);

/// Marginal drift of two Markov chains from a shared start: for every
/// t <= horizon, TV of the time-t marginals is within eps * t, where eps
/// bounds the expected conditional TV along the first chain.
BoundReport check_error_amplification(const Eigen::MatrixXd& p1, const Eigen::MatrixXd& p2,
                                      const Eigen::VectorXd& rho, int horizon);

/// Visitation-weighted model error: value gap against
/// 2 gamma eps R / (1-gamma)^2 where eps is the maximum over t of the
/// expected next-state TV under the time-t visitation of the first MDP.
/// Marginals are enumerated to T* with the tail accounted as a named term.
BoundReport check_performance_difference(const TabularMdp& w, const TabularMdp& m,
                                         const TabularPolicy& policy, double tail_tol = 1e-9);

struct Theorem1Options {
  double vi_tol = 1e-12;
  double tail_tol = 1e-9;
  bool discounted_domain = true;  // false: average visitation over T* instead
};

/// Global near-optimality of a policy-model pair: suboptimality in the real
/// MDP against the sum of a sqrt(KL) model-error term, planning
/// suboptimality in the model, and the visitation shift of the optimal
/// policy between real and model dynamics.
BoundReport check_theorem1(const TabularMdp& w, const TabularMdp& m, const TabularPolicy& policy,
                           const Theorem1Options& opts = {});

/// Mean task-relevant deviation between real and model rollouts, by step.
/// Open loop replays the real action sequence on the model; closed loop lets
/// the policy act on the model's own states.
struct AmplificationProfile {
  std::vector<double> open_loop;    // length horizon + 1, entry 0 is 0
  std::vector<double> closed_loop;
  int n_rollouts = 0;
  bool diverged = false;

  std::string to_csv() const;  // t,L_open,L_closed
};

AmplificationProfile amplification_profile(const Environment& env, const GaussianPolicy& policy,
                                           const SyntheticModel& model, int horizon,
                                           int n_rollouts, std::uint64_t seed);

struct RandomMdpSpec {
  int min_states = 3, max_states = 20;
  int min_actions = 2, max_actions = 4;
  double gamma_lo = 0.1, gamma_hi = 0.95;
  double r_max = 1.0;
};

/// Dense MDP with strictly positive transition rows.
TabularMdp random_mdp(Rng& rng, const RandomMdpSpec& spec = {});
/// Nearby MDP: every row mixed with `noise` mass of a random positive row,
/// so the support always covers the original.
TabularMdp perturb_mdp(const TabularMdp& base, Rng& rng, double noise);
TabularPolicy random_policy(Rng& rng, int n_states, int n_actions);

nlohmann::json mdp_to_json(const TabularMdp& mdp);
nlohmann::json policy_to_json(const TabularPolicy& policy);

struct SweepOptions {
  double bound_scale = 1.0;  // deliberately corrupting this below 1 must trip violations
  RandomMdpSpec mdp_spec;
  int amplification_horizon = 50;
};

struct SweepResult {
  int trials = 0;
  int violations = 0;
  int vacuous = 0;
  std::string csv;  // one row per check: suite,trial,states,actions,gamma,lhs,bound,tightness,holds,vacuous
  std::vector<nlohmann::json> failures;  // violating instances, fully serialized
};

/// Runs a named suite ("lemma1", "lemma2", "lemma3", "theorem1", or "all")
/// on `trials` random instances.
SweepResult verify_sweep(const std::string& suite, int trials, std::uint64_t seed,
                         const SweepOptions& opts = {});

}  // namespace mbrl
