#include "mbrl/npg.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mbrl {

SyntheticModel exact_model(const Environment& env) {
  SyntheticModel m;
  m.n_members = 1;
  m.step = [&env](int, const Eigen::VectorXd& s, const Eigen::VectorXd& a, Rng& rng) {
    return env.step(s, a, rng);
  };
  return m;
}

SyntheticModel ensemble_model(const DynamicsEnsemble& ensemble) {
  SyntheticModel m;
  m.n_members = ensemble.size();
  m.step = [&ensemble](int member, const Eigen::VectorXd& s, const Eigen::VectorXd& a, Rng&) {
    return ensemble.predict(member, s, a);
  };
  return m;
}

namespace {

Trajectory roll_one(const GaussianPolicy& policy, const SyntheticModel& model,
                    const Environment& env, int member, Eigen::VectorXd s, int horizon,
                    Rng& rng) {
  Trajectory tr;
  for (int t = 0; t < horizon; ++t) {
    Eigen::VectorXd a = policy.sample(s, rng);
    Eigen::VectorXd sn = model.step(member, s, a, rng);
    if (!sn.allFinite()) {
      tr.diverged = true;
      break;
    }
    const double r = env.reward(s, a, sn);
    const bool done = env.terminal(sn);
    tr.steps.push_back({t, s, a, r, sn, done});
    s = std::move(sn);
    if (done) {
      tr.terminated = true;
      break;
    }
  }
  return tr;
}

}  // namespace

RolloutBatch synthetic_rollouts(const GaussianPolicy& policy, const SyntheticModel& model,
                                const Environment& env, const NpgConfig& cfg,
                                const std::vector<Eigen::VectorXd>& real_states,
                                std::uint64_t seed) {
  if (cfg.n_traj < 1) throw std::invalid_argument("synthetic_rollouts: n_traj must be positive");
  const int horizon = std::min(cfg.horizon, env.horizon());
  Rng master(seed);
  RolloutBatch batch;
  for (int j = 0; j < cfg.n_traj; ++j) {
    Rng stream = master.split(static_cast<std::uint64_t>(j));
    Eigen::VectorXd s0;
    if (cfg.intermediate_frac > 0 && !real_states.empty() &&
        stream.uniform() < cfg.intermediate_frac) {
      s0 = real_states[stream.uniform_int(static_cast<int>(real_states.size()))];
    } else {
      s0 = env.sample_init(stream);
    }
    for (int k = 0; k < model.n_members; ++k) {
      Trajectory tr;
      if (k == 0) {
        tr = roll_one(policy, model, env, k, s0, horizon, stream);
      } else {
        Rng member_stream = master.split(mix_seed(0x726f6c6c, j, k));
        tr = roll_one(policy, model, env, k, s0, horizon, member_stream);
      }
      batch.diverged = batch.diverged || tr.diverged;
      batch.member_of.push_back(k);
      batch.trajs.push_back(std::move(tr));
    }
  }

  long total = 0;
  for (const auto& tr : batch.trajs) total += tr.length();
  batch.states.resize(total, env.state_dim());
  batch.actions.resize(total, env.action_dim());
  batch.rewards.resize(total);
  long row = 0;
  for (const auto& tr : batch.trajs)
    for (const auto& step : tr.steps) {
      batch.states.row(row) = step.s.transpose();
      batch.actions.row(row) = step.a.transpose();
      batch.rewards[row] = step.r;
      ++row;
    }
  return batch;
}

void gae_advantages(RolloutBatch& batch, const ValueNet& value, double gamma, double lambda) {
  const long total = batch.total_samples();
  batch.advantages.resize(total);
  batch.value_targets.resize(total);
  long row = 0;
  for (const auto& tr : batch.trajs) {
    const int len = tr.length();
    if (len == 0) continue;
    Eigen::MatrixXd states(len + 1, batch.states.cols());
    for (int t = 0; t < len; ++t) states.row(t) = tr.steps[t].s.transpose();
    states.row(len) = tr.steps.back().s_next.transpose();
    const Eigen::VectorXd v = value.value_batch(states);
    double acc = 0;
    for (int t = len - 1; t >= 0; --t) {
      const double not_done = tr.steps[t].done ? 0.0 : 1.0;
      const double delta = tr.steps[t].r + gamma * not_done * v[t + 1] - v[t];
      acc = delta + gamma * lambda * not_done * acc;
      batch.advantages[row + t] = acc;
      batch.value_targets[row + t] = acc + v[t];
    }
    row += len;
  }
}

Eigen::VectorXd policy_gradient(const GaussianPolicy& policy, const RolloutBatch& batch,
                                bool standardize) {
  const long n = batch.total_samples();
  if (n == 0) return Eigen::VectorXd::Zero(policy.param_count());
  Eigen::VectorXd adv = batch.advantages;
  if (standardize) {
    const double mean = adv.mean();
    const double sd = std::sqrt((adv.array() - mean).square().sum() / n);
    adv = (adv.array() - mean) / (sd + 1e-8);
  }
  return policy.weighted_score(batch.states, batch.actions, adv / static_cast<double>(n));
}

FisherOperator make_fisher(const GaussianPolicy& policy, const RolloutBatch& batch,
                           int subsample, double damping, std::uint64_t seed) {
  const int n = batch.total_samples();
  if (n == 0) throw std::invalid_argument("make_fisher: empty batch");
  FisherOperator op;
  op.damping = damping;
  if (subsample > 0 && n > subsample) {
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(mix_seed(seed, 0x66697368));
    for (int i = 0; i < subsample; ++i) std::swap(idx[i], idx[i + rng.uniform_int(n - i)]);
    Eigen::MatrixXd S(subsample, batch.states.cols()), A(subsample, batch.actions.cols());
    for (int i = 0; i < subsample; ++i) {
      S.row(i) = batch.states.row(idx[i]);
      A.row(i) = batch.actions.row(idx[i]);
    }
    op.scores = policy.score_batch(S, A);
  } else {
    op.scores = policy.score_batch(batch.states, batch.actions);
  }
  return op;
}

CgResult cg_solve(const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& apply,
                  const Eigen::VectorXd& b, int max_iters, double residual_tol) {
  CgResult res;
  res.x = Eigen::VectorXd::Zero(b.size());
  Eigen::VectorXd r = b, p = b;
  double rs = r.squaredNorm();
  for (int it = 0; it < max_iters; ++it) {
    if (std::sqrt(rs) < residual_tol) break;
    const Eigen::VectorXd Ap = apply(p);
    const double pAp = p.dot(Ap);
    if (!(pAp > 0) || !Ap.allFinite()) {
      res.breakdown = true;
      break;
    }
    const double alpha = rs / pAp;
    res.x += alpha * p;
    r -= alpha * Ap;
    const double rs_next = r.squaredNorm();
    p = r + (rs_next / rs) * p;
    rs = rs_next;
    ++res.iterations;
  }
  return res;
}

NpgUpdateInfo npg_update(GaussianPolicy& policy, const Eigen::VectorXd& grad,
                         const FisherOperator& fisher, double step_size, int cg_iters) {
  NpgUpdateInfo info;
  if (grad.cwiseAbs().maxCoeff() < 1e-12) {
    info.skipped = true;
    return info;
  }
  if (step_size <= 0) {
    info.skipped = true;
    return info;
  }
  auto apply = [&fisher](const Eigen::VectorXd& v) { return fisher.apply(v); };
  CgResult cg = cg_solve(apply, grad, cg_iters);
  Eigen::VectorXd direction = cg.x;
  if (cg.breakdown && direction.cwiseAbs().maxCoeff() < 1e-300) {
    direction = grad;
    info.cg_fallback = true;
  }
  const double quad = direction.dot(fisher.apply(direction));
  if (!(quad > 0)) {
    info.skipped = true;
    return info;
  }
  const Eigen::VectorXd step = std::sqrt(step_size / quad) * direction;
  info.quad_form = step.dot(fisher.apply(step));
  info.quadform_residual = std::abs(info.quad_form - step_size) / step_size;
  info.ascent_inner = grad.dot(step);
  info.step_norm = step.norm();
  policy.set_flat(policy.flatten() + step);
  return info;
}

NpgIterationStats npg_iteration(GaussianPolicy& policy, ValueNet& value,
                                const SyntheticModel& model, const Environment& env,
                                const NpgConfig& cfg,
                                const std::vector<Eigen::VectorXd>& real_states,
                                std::uint64_t seed) {
  RolloutBatch batch = synthetic_rollouts(policy, model, env, cfg, real_states, seed);
  gae_advantages(batch, value, cfg.gamma, cfg.lambda);

  NpgIterationStats stats;
  stats.diverged = batch.diverged;
  stats.synth_samples = batch.total_samples();
  double ret = 0;
  for (const auto& tr : batch.trajs) ret += tr.total_reward();
  stats.mean_synth_return = batch.trajs.empty() ? 0 : ret / batch.trajs.size();

  RolloutBatch* grad_batch = &batch;
  RolloutBatch worst;
  if (cfg.worst_case_member && model.n_members > 1) {
    // Restrict the gradient to the lowest-return member's trajectories.
    std::vector<double> sum(model.n_members, 0);
    std::vector<int> count(model.n_members, 0);
    for (size_t i = 0; i < batch.trajs.size(); ++i) {
      sum[batch.member_of[i]] += batch.trajs[i].total_reward();
      count[batch.member_of[i]] += 1;
    }
    int worst_k = 0;
    double worst_mean = std::numeric_limits<double>::infinity();
    for (int k = 0; k < model.n_members; ++k) {
      const double m = count[k] ? sum[k] / count[k] : 0;
      if (m < worst_mean) {
        worst_mean = m;
        worst_k = k;
      }
    }
    long total = 0;
    for (size_t i = 0; i < batch.trajs.size(); ++i)
      if (batch.member_of[i] == worst_k) total += batch.trajs[i].length();
    worst.states.resize(total, batch.states.cols());
    worst.actions.resize(total, batch.actions.cols());
    worst.advantages.resize(total);
    worst.value_targets.resize(total);
    worst.rewards.resize(total);
    long row = 0, src = 0;
    for (size_t i = 0; i < batch.trajs.size(); ++i) {
      const long len = batch.trajs[i].length();
      if (batch.member_of[i] == worst_k) {
        worst.states.middleRows(row, len) = batch.states.middleRows(src, len);
        worst.actions.middleRows(row, len) = batch.actions.middleRows(src, len);
        worst.advantages.segment(row, len) = batch.advantages.segment(src, len);
        worst.value_targets.segment(row, len) = batch.value_targets.segment(src, len);
        worst.rewards.segment(row, len) = batch.rewards.segment(src, len);
        row += len;
      }
      src += len;
    }
    grad_batch = &worst;
  }

  const Eigen::VectorXd g = policy_gradient(policy, *grad_batch, cfg.standardize_adv);
  const FisherOperator fisher =
      make_fisher(policy, *grad_batch, cfg.fisher_subsample, cfg.cg_damping, seed);
  GaussianPolicy old_policy = policy;
  const NpgUpdateInfo update = npg_update(policy, g, fisher, cfg.step_size, cfg.cg_iters);
  stats.quadform_residual = update.quadform_residual;
  stats.skipped = update.skipped;
  if (!update.skipped)
    stats.kl_update = GaussianPolicy::mean_kl(old_policy, policy, grad_batch->states);

  if (batch.total_samples() > 0) {
    ValueFitReport vr = value.fit(batch.states, batch.value_targets, cfg.value_fit,
                                  mix_seed(seed, 0x7666));
    stats.explained_variance = vr.explained_variance;
  }
  return stats;
}

}  // namespace mbrl
