#include "mbrl/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mbrl/io.hpp"

namespace mbrl {

namespace {

void finalize(BoundReport& r) {
  r.holds = r.vacuous || r.lhs <= r.bound + r.tolerance;
  if (!r.vacuous && r.bound > 0 && std::isfinite(r.bound)) {
    r.tightness = std::max(r.lhs, 0.0) / r.bound;
  }
}

double scalar_value(const TabularMdp& mdp, const TabularPolicy& policy) {
  return exact_policy_value(mdp, policy).performance;
}

// Expected next-state TV between the two MDPs' dynamics under `policy`,
// weighted by a state distribution.
double expected_row_tv(const TabularMdp& w, const TabularMdp& m, const TabularPolicy& policy,
                       const Eigen::VectorXd& state_dist) {
  double total = 0;
  for (int s = 0; s < w.n_states; ++s) {
    if (state_dist(s) <= 0) continue;
    double per_state = 0;
    for (int a = 0; a < w.n_actions; ++a) {
      per_state += policy.probs(s, a) * tv_distance(w.transitions[a].row(s).transpose(),
                                                    m.transitions[a].row(s).transpose());
    }
    total += state_dist(s) * per_state;
  }
  return total;
}

// Smallest T with gamma^T * r_max / (1 - gamma) <= tail_tol.
int truncation_horizon(double gamma, double r_max, double tail_tol) {
  double head = r_max / (1.0 - gamma);
  int t = 0;
  double tail = head;
  while (tail > tail_tol) {
    tail *= gamma;
    ++t;
    if (t > 2000000) throw std::runtime_error("truncation horizon did not converge");
  }
  return t;
}

}  // namespace

nlohmann::json BoundReport::to_json() const {
  nlohmann::json j;
  j["name"] = name;
  j["lhs"] = lhs;
  j["bound"] = bound;
  j["tolerance"] = tolerance;
  j["holds"] = holds;
  j["vacuous"] = vacuous;
  j["tightness"] = tightness;
  nlohmann::json t = nlohmann::json::object();
  for (const auto& [key, value] : terms) t[key] = value;
  j["terms"] = t;
  return j;
}

BoundReport check_simulation_lemma(const TabularMdp& w, const TabularMdp& m,
                                   const TabularPolicy& policy) {
  if (w.n_states != m.n_states || w.n_actions != m.n_actions) {
    throw std::invalid_argument("simulation lemma: mismatched MDP shapes");
  }
  BoundReport r;
  r.name = "simulation_lemma";
  double eps = 0;
  for (int a = 0; a < w.n_actions; ++a) {
    for (int s = 0; s < w.n_states; ++s) {
      eps = std::max(eps, tv_distance(w.transitions[a].row(s).transpose(),
                                      m.transitions[a].row(s).transpose()));
    }
  }
  double gamma = w.gamma;
  r.lhs = std::abs(scalar_value(w, policy) - scalar_value(m, policy));
  r.bound = 2.0 * gamma * eps * w.r_max / ((1.0 - gamma) * (1.0 - gamma));
  r.terms = {{"epsilon_max_tv", eps}};
  finalize(r);
  return r;
}

BoundReport check_error_amplification(const Eigen::MatrixXd& p1, const Eigen::MatrixXd& p2,
                                      const Eigen::VectorXd& rho, int horizon) {
  if (p1.rows() != p1.cols() || p1.rows() != p2.rows() || p2.rows() != p2.cols() ||
      rho.size() != p1.rows()) {
    throw std::invalid_argument("error amplification: mismatched chain shapes");
  }
  BoundReport r;
  r.name = "error_amplification";

  int n = static_cast<int>(p1.rows());
  std::vector<Eigen::VectorXd> marg1(horizon + 1), marg2(horizon + 1);
  marg1[0] = rho;
  marg2[0] = rho;
  for (int t = 0; t < horizon; ++t) {
    marg1[t + 1] = p1.transpose() * marg1[t];
    marg2[t + 1] = p2.transpose() * marg2[t];
  }

  double eps = 0;
  for (int t = 0; t < horizon; ++t) {
    double e = 0;
    for (int s = 0; s < n; ++s) {
      if (marg1[t](s) <= 0) continue;
      e += marg1[t](s) * tv_distance(p1.row(s).transpose(), p2.row(s).transpose());
    }
    eps = std::max(eps, e);
  }

  // Worst timestep by ratio, so rescaling the bound cannot change the argmax.
  int worst_t = 1;
  double worst_ratio = -1;
  for (int t = 1; t <= horizon; ++t) {
    double tv = tv_distance(marg1[t], marg2[t]);
    double cap = eps * t;
    double ratio = cap > 0 ? tv / cap : (tv > r.tolerance ? std::numeric_limits<double>::infinity()
                                                          : 0.0);
    if (ratio > worst_ratio) {
      worst_ratio = ratio;
      worst_t = t;
    }
  }
  r.lhs = tv_distance(marg1[worst_t], marg2[worst_t]);
  r.bound = eps * worst_t;
  r.terms = {{"epsilon_step_tv", eps}, {"worst_t", static_cast<double>(worst_t)}};
  finalize(r);
  return r;
}

BoundReport check_performance_difference(const TabularMdp& w, const TabularMdp& m,
                                         const TabularPolicy& policy, double tail_tol) {
  if (w.n_states != m.n_states || w.n_actions != m.n_actions) {
    throw std::invalid_argument("performance difference: mismatched MDP shapes");
  }
  BoundReport r;
  r.name = "performance_difference";

  double gamma = w.gamma;
  int t_star = truncation_horizon(gamma, w.r_max, tail_tol);
  Eigen::MatrixXd chain = policy_transition_matrix(w, policy);

  double eps = 0;
  Eigen::VectorXd marginal = w.rho;
  for (int t = 0; t <= t_star; ++t) {
    eps = std::max(eps, expected_row_tv(w, m, policy, marginal));
    marginal = chain.transpose() * marginal;
  }

  double model_term = 2.0 * gamma * eps * w.r_max / ((1.0 - gamma) * (1.0 - gamma));
  double trunc = std::pow(gamma, t_star + 1) * w.r_max / (1.0 - gamma);
  r.lhs = std::abs(scalar_value(w, policy) - scalar_value(m, policy));
  r.bound = model_term + trunc;
  r.terms = {{"model_error_term", model_term},
             {"truncation_slack", trunc},
             {"epsilon_visitation_tv", eps},
             {"t_star", static_cast<double>(t_star)}};
  finalize(r);
  return r;
}

BoundReport check_theorem1(const TabularMdp& w, const TabularMdp& m, const TabularPolicy& policy,
                           const Theorem1Options& opts) {
  if (w.n_states != m.n_states || w.n_actions != m.n_actions) {
    throw std::invalid_argument("theorem1: mismatched MDP shapes");
  }
  BoundReport r;
  r.name = "theorem1";

  double gamma = w.gamma;
  double vi_slack = 2.0 * opts.vi_tol / ((1.0 - gamma) * (1.0 - gamma));

  ValueIterationResult vi_w = value_iteration(w, opts.vi_tol);
  ValueIterationResult vi_m = value_iteration(m, opts.vi_tol);
  double j_pi_w = scalar_value(w, policy);
  double j_pi_m = scalar_value(m, policy);

  r.lhs = vi_w.j_star + vi_slack - j_pi_w;
  double policy_subopt = vi_m.j_star - j_pi_m;

  // Expected KL of real vs model dynamics under each per-timestep visitation
  // of `policy` in the real MDP.
  Eigen::MatrixXd kl_rows(w.n_states, w.n_actions);
  bool support_ok = true;
  for (int s = 0; s < w.n_states && support_ok; ++s) {
    for (int a = 0; a < w.n_actions; ++a) {
      try {
        kl_rows(s, a) = kl_divergence(w.transitions[a].row(s).transpose(),
                                      m.transitions[a].row(s).transpose());
      } catch (const SupportViolation&) {
        support_ok = false;
        break;
      }
    }
  }
  if (!support_ok) {
    r.vacuous = true;
    r.bound = std::numeric_limits<double>::infinity();
    r.terms = {{"policy_subopt", policy_subopt}};
    finalize(r);
    return r;
  }

  int t_star = truncation_horizon(gamma, w.r_max, opts.tail_tol);
  Eigen::MatrixXd chain = policy_transition_matrix(w, policy);
  double eps_m = 0;
  Eigen::VectorXd marginal = w.rho;
  for (int t = 0; t <= t_star; ++t) {
    double loss = 0;
    for (int s = 0; s < w.n_states; ++s) {
      if (marginal(s) <= 0) continue;
      loss += marginal(s) * policy.probs.row(s).dot(kl_rows.row(s));
    }
    eps_m = std::max(eps_m, loss);
    marginal = chain.transpose() * marginal;
  }

  Eigen::MatrixXd mu_w, mu_m;
  if (opts.discounted_domain) {
    mu_w = visitation(w, vi_w.policy, VisitationKind::Discounted, 0).state_actions;
    mu_m = visitation(m, vi_w.policy, VisitationKind::Discounted, 0).state_actions;
  } else {
    mu_w = visitation(w, vi_w.policy, VisitationKind::Average, t_star + 1).state_actions;
    mu_m = visitation(m, vi_w.policy, VisitationKind::Average, t_star + 1).state_actions;
  }
  double domain_tv = 0.5 * (mu_w - mu_m).array().abs().sum();

  double model_term =
      2.0 * gamma * std::sqrt(eps_m) * w.r_max / ((1.0 - gamma) * (1.0 - gamma));
  double domain_term = 2.0 * w.r_max / (1.0 - gamma) * domain_tv;
  double trunc = std::pow(gamma, t_star + 1) * w.r_max / (1.0 - gamma);

  r.bound = model_term + policy_subopt + vi_slack + domain_term + trunc;
  r.terms = {{"model_error_term", model_term},
             {"policy_subopt", policy_subopt},
             {"domain_shift_term", domain_term},
             {"vi_slack", vi_slack},
             {"truncation_slack", trunc},
             {"epsilon_model_kl", eps_m},
             {"domain_tv", domain_tv},
             {"t_star", static_cast<double>(t_star)}};
  finalize(r);
  return r;
}

std::string AmplificationProfile::to_csv() const {
  std::ostringstream out;
  out << "t,L_open,L_closed\n";
  for (std::size_t t = 0; t < open_loop.size(); ++t) {
    out << t << "," << format_double(open_loop[t]) << "," << format_double(closed_loop[t])
        << "\n";
  }
  return out.str();
}

AmplificationProfile amplification_profile(const Environment& env, const GaussianPolicy& policy,
                                           const SyntheticModel& model, int horizon,
                                           int n_rollouts, std::uint64_t seed) {
  AmplificationProfile profile;
  profile.n_rollouts = n_rollouts;
  profile.open_loop.assign(horizon + 1, 0.0);
  profile.closed_loop.assign(horizon + 1, 0.0);
  std::vector<double> open_count(horizon + 1, 0.0), closed_count(horizon + 1, 0.0);

  std::vector<int> coords = env.error_coords();

  auto coord_error = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    double sq = 0;
    for (int c : coords) {
      double d = a(c) - b(c);
      sq += d * d;
    }
    return std::sqrt(sq);
  };

  // Both replay modes re-create the world's draw stream and consume it in
  // the same order (one policy sample, then one transition, per step). A
  // model that matches the environment exactly therefore reproduces the
  // reference trajectory draw for draw, and both profiles are identically
  // zero even on stochastic tasks.
  for (int i = 0; i < n_rollouts; ++i) {
    const std::uint64_t world_stream = mix_seed(seed, 0x776f726cULL, static_cast<std::uint64_t>(i));
    Rng init_rng(mix_seed(seed, 0x696e6974ULL, static_cast<std::uint64_t>(i)));
    Rng world_rng(world_stream);
    std::vector<Eigen::VectorXd> states(horizon + 1);
    std::vector<Eigen::VectorXd> actions(horizon);
    states[0] = env.sample_init(init_rng);
    for (int t = 0; t < horizon; ++t) {
      actions[t] = policy.sample(states[t], world_rng);
      states[t + 1] = env.step(states[t], actions[t], world_rng);
    }

    for (int k = 0; k < model.n_members; ++k) {
      Rng open_rng(world_stream);
      Eigen::VectorXd s = states[0];
      for (int t = 0; t <= horizon; ++t) {
        profile.open_loop[t] += coord_error(states[t], s);
        open_count[t] += 1;
        if (t == horizon) break;
        policy.sample(s, open_rng);  // keeps the stream aligned; the world action is replayed
        s = model.step(k, s, actions[t], open_rng);
        if (!s.allFinite()) {
          profile.diverged = true;
          break;
        }
      }

      Rng closed_rng(world_stream);
      s = states[0];
      for (int t = 0; t <= horizon; ++t) {
        profile.closed_loop[t] += coord_error(states[t], s);
        closed_count[t] += 1;
        if (t == horizon) break;
        Eigen::VectorXd a = policy.sample(s, closed_rng);
        s = model.step(k, s, a, closed_rng);
        if (!s.allFinite()) {
          profile.diverged = true;
          break;
        }
      }
    }
  }

  for (int t = 0; t <= horizon; ++t) {
    if (open_count[t] > 0) profile.open_loop[t] /= open_count[t];
    if (closed_count[t] > 0) profile.closed_loop[t] /= closed_count[t];
  }
  return profile;
}

namespace {

Eigen::VectorXd dirichlet_row(Rng& rng, int n) {
  Eigen::VectorXd row(n);
  for (int i = 0; i < n; ++i) {
    row(i) = -std::log(1.0 - rng.uniform()) + 1e-12;
  }
  row /= row.sum();
  return row;
}

}  // namespace

TabularMdp random_mdp(Rng& rng, const RandomMdpSpec& spec) {
  TabularMdp mdp;
  mdp.n_states = spec.min_states + rng.uniform_int(spec.max_states - spec.min_states + 1);
  mdp.n_actions = spec.min_actions + rng.uniform_int(spec.max_actions - spec.min_actions + 1);
  mdp.gamma = rng.uniform(spec.gamma_lo, spec.gamma_hi);
  mdp.r_max = spec.r_max;
  mdp.transitions.resize(mdp.n_actions);
  for (int a = 0; a < mdp.n_actions; ++a) {
    mdp.transitions[a].resize(mdp.n_states, mdp.n_states);
    for (int s = 0; s < mdp.n_states; ++s) {
      mdp.transitions[a].row(s) = dirichlet_row(rng, mdp.n_states).transpose();
    }
  }
  mdp.rewards.resize(mdp.n_states);
  for (int s = 0; s < mdp.n_states; ++s) mdp.rewards(s) = rng.uniform(0.0, spec.r_max);
  mdp.rho = dirichlet_row(rng, mdp.n_states);
  mdp.validate();
  return mdp;
}

TabularMdp perturb_mdp(const TabularMdp& base, Rng& rng, double noise) {
  TabularMdp mdp = base;
  for (int a = 0; a < mdp.n_actions; ++a) {
    for (int s = 0; s < mdp.n_states; ++s) {
      Eigen::VectorXd mix = dirichlet_row(rng, mdp.n_states);
      mdp.transitions[a].row(s) =
          (1.0 - noise) * base.transitions[a].row(s) + noise * mix.transpose();
    }
  }
  mdp.validate();
  return mdp;
}

TabularPolicy random_policy(Rng& rng, int n_states, int n_actions) {
  TabularPolicy policy;
  policy.probs.resize(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) {
    policy.probs.row(s) = dirichlet_row(rng, n_actions).transpose();
  }
  policy.validate();
  return policy;
}

nlohmann::json mdp_to_json(const TabularMdp& mdp) {
  nlohmann::json j;
  j["n_states"] = mdp.n_states;
  j["n_actions"] = mdp.n_actions;
  j["gamma"] = mdp.gamma;
  j["r_max"] = mdp.r_max;
  j["rewards"] = std::vector<double>(mdp.rewards.data(), mdp.rewards.data() + mdp.rewards.size());
  j["rho"] = std::vector<double>(mdp.rho.data(), mdp.rho.data() + mdp.rho.size());
  nlohmann::json trans = nlohmann::json::array();
  for (const auto& p : mdp.transitions) {
    nlohmann::json rows = nlohmann::json::array();
    for (int s = 0; s < mdp.n_states; ++s) {
      std::vector<double> row(mdp.n_states);
      for (int s2 = 0; s2 < mdp.n_states; ++s2) row[s2] = p(s, s2);
      rows.push_back(row);
    }
    trans.push_back(rows);
  }
  j["transitions"] = trans;
  return j;
}

nlohmann::json policy_to_json(const TabularPolicy& policy) {
  nlohmann::json rows = nlohmann::json::array();
  for (int s = 0; s < policy.probs.rows(); ++s) {
    Eigen::VectorXd row = policy.probs.row(s).transpose();
    rows.push_back(std::vector<double>(row.data(), row.data() + row.size()));
  }
  return nlohmann::json{{"probs", rows}};
}

SweepResult verify_sweep(const std::string& suite, int trials, std::uint64_t seed,
                         const SweepOptions& opts) {
  std::vector<std::string> suites;
  if (suite == "all") {
    suites = {"lemma1", "lemma2", "lemma3", "theorem1"};
  } else if (suite == "lemma1" || suite == "lemma2" || suite == "lemma3" || suite == "theorem1") {
    suites = {suite};
  } else {
    throw std::invalid_argument("unknown verification suite: " + suite);
  }

  SweepResult result;
  result.trials = trials;
  std::ostringstream csv;
  csv << "suite,trial,states,actions,gamma,lhs,bound,tightness,holds,vacuous\n";

  for (int trial = 0; trial < trials; ++trial) {
    Rng rng(mix_seed(seed, 0x737765ULL, static_cast<std::uint64_t>(trial)));
    TabularMdp w = random_mdp(rng, opts.mdp_spec);
    double noise = rng.uniform(0.01, 0.5);
    TabularMdp m = perturb_mdp(w, rng, noise);
    TabularPolicy policy;
    if (rng.uniform() < 0.5) {
      policy = random_policy(rng, w.n_states, w.n_actions);
    } else {
      // Near-optimal in the model: relevant regime for the global bound.
      TabularPolicy greedy = value_iteration(m, 1e-10).policy;
      policy.probs = 0.9 * greedy.probs +
                     0.1 * Eigen::MatrixXd::Constant(w.n_states, w.n_actions, 1.0 / w.n_actions);
      policy.validate();
    }

    for (const std::string& name : suites) {
      BoundReport report;
      if (name == "lemma1") {
        report = check_simulation_lemma(w, m, policy);
      } else if (name == "lemma2") {
        report = check_error_amplification(policy_transition_matrix(w, policy),
                                           policy_transition_matrix(m, policy), w.rho,
                                           opts.amplification_horizon);
      } else if (name == "lemma3") {
        report = check_performance_difference(w, m, policy);
      } else {
        report = check_theorem1(w, m, policy);
      }

      bool holds =
          report.vacuous || report.lhs <= report.bound * opts.bound_scale + report.tolerance;
      if (report.vacuous) ++result.vacuous;
      if (!holds) {
        ++result.violations;
        if (result.failures.size() < 5) {
          nlohmann::json failure;
          failure["suite"] = name;
          failure["trial"] = trial;
          failure["bound_scale"] = opts.bound_scale;
          failure["report"] = report.to_json();
          failure["real_mdp"] = mdp_to_json(w);
          failure["model_mdp"] = mdp_to_json(m);
          failure["policy"] = policy_to_json(policy);
          result.failures.push_back(std::move(failure));
        }
      }
      csv << name << "," << trial << "," << w.n_states << "," << w.n_actions << ","
          << format_double(w.gamma) << "," << format_double(report.lhs) << ","
          << format_double(report.bound) << "," << format_double(report.tightness) << ","
          << (holds ? 1 : 0) << "," << (report.vacuous ? 1 : 0) << "\n";
    }
  }
  result.csv = csv.str();
  return result;
}

}  // namespace mbrl
