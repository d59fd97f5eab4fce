#include "mbrl/game.hpp"

#include <chrono>
#include <cmath>
#include <sstream>

#include "mbrl/io.hpp"

namespace mbrl {

std::string to_string(SolverKind kind) {
  switch (kind) {
    case SolverKind::Pal: return "pal";
    case SolverKind::Mal: return "mal";
    case SolverKind::Gda: return "gda";
    case SolverKind::Br: return "br";
  }
  return "pal";
}

SolverKind solver_from_string(const std::string& name) {
  if (name == "pal") return SolverKind::Pal;
  if (name == "mal") return SolverKind::Mal;
  if (name == "gda") return SolverKind::Gda;
  if (name == "br") return SolverKind::Br;
  throw std::invalid_argument("unknown solver: " + name);
}

void GameConfig::validate() const {
  if (total_samples < 1) throw std::invalid_argument("config: total_samples must be positive");
  if (n_init < 1) throw std::invalid_argument("config: n_init must be positive");
  if (n_per_iter < 1) throw std::invalid_argument("config: n_per_iter must be positive");
  if (policy_steps < 1) throw std::invalid_argument("config: policy_steps must be positive");
  if (model_epochs < 1) throw std::invalid_argument("config: model_epochs must be positive");
  if (ensemble_size < 1) throw std::invalid_argument("config: ensemble_size must be positive");
  if (eval_episodes < 1) throw std::invalid_argument("config: eval_episodes must be positive");
  if (npg.gamma <= 0 || npg.gamma >= 1) throw std::invalid_argument("config: npg.gamma must be in (0, 1)");
  if (npg.lambda < 0 || npg.lambda > 1) throw std::invalid_argument("config: npg.lambda must be in [0, 1]");
  if (npg.step_size < 0) throw std::invalid_argument("config: npg.step_size must be nonnegative");
  if (npg.n_traj < 1) throw std::invalid_argument("config: npg.n_traj must be positive");
  if (npg.horizon < 1) throw std::invalid_argument("config: npg.horizon must be positive");
  if (npg.intermediate_frac < 0 || npg.intermediate_frac > 1)
    throw std::invalid_argument("config: npg.intermediate_frac must be in [0, 1]");
  make_env(env_name);  // throws on unknown task
}

GameConfig solver_preset(SolverKind solver, const std::string& env_name,
                         const EnvParams& env_params) {
  GameConfig cfg;
  cfg.solver = solver;
  cfg.env_name = env_name;
  cfg.env_params = env_params;
  const auto env = make_env(env_name, env_params);
  const long h = env->horizon();
  switch (solver) {
    case SolverKind::Pal:
      cfg.n_init = 2500;
      cfg.n_per_iter = std::min<long>(5 * h, 1000);
      cfg.buffer_capacity = 2500;
      cfg.policy_steps = 4;
      cfg.model_epochs = 100;
      cfg.init_model_epochs = 0;
      cfg.ensemble_size = 4;
      break;
    case SolverKind::Mal:
      cfg.n_init = 5000;
      cfg.n_per_iter = std::min<long>(20 * h, 3000);
      cfg.buffer_capacity.reset();
      cfg.policy_steps = 25;
      cfg.model_epochs = 10;
      cfg.init_model_epochs = 100;
      cfg.ensemble_size = 4;
      break;
    case SolverKind::Gda:
      cfg.n_init = 2500;
      cfg.n_per_iter = std::min<long>(5 * h, 1000);
      cfg.buffer_capacity = 2500;
      cfg.policy_steps = 1;
      cfg.model_epochs = 1;
      cfg.init_model_epochs = 100;
      cfg.ensemble_size = 4;
      break;
    case SolverKind::Br:
      cfg.n_init = 5000;
      cfg.n_per_iter = std::min<long>(20 * h, 3000);
      cfg.buffer_capacity.reset();
      cfg.fresh_buffer = true;
      cfg.policy_steps = 25;
      cfg.model_epochs = 100;
      cfg.init_model_epochs = 100;
      cfg.model_reinit = true;
      cfg.ensemble_size = 4;
      break;
  }
  return cfg;
}

std::string IterationRecord::csv_header() {
  return "# schema_version=1\n"
         "iter,cum_samples,eval_samples,real_return,real_return_se,disc_return,disc_return_se,"
         "success_rate,mean_dist,synth_return,model_loss_train,model_loss_holdout,kl_update,"
         "explained_var,quadform_resid,model_event,policy_event,perturb_applied,diverged";
}

std::string IterationRecord::csv_row() const {
  std::ostringstream out;
  out << iter << ',' << cum_samples << ',' << eval_samples;
  for (double v : {real_return, real_return_se, disc_return, disc_return_se, success_rate,
                   mean_dist, synth_return, model_loss_train, model_loss_holdout, kl_update,
                   explained_var, quadform_resid})
    out << ',' << (std::isnan(v) ? "" : format_double(v));
  out << ',' << model_event << ',' << policy_event << ',' << perturb_applied << ',' << diverged;
  return out.str();
}

std::string TrainingLog::to_csv() const {
  std::string out = IterationRecord::csv_header() + "\n";
  for (const auto& rec : records) out += rec.csv_row() + "\n";
  return out;
}

nlohmann::json TrainingLog::summary() const {
  return nlohmann::json{{"schema_version", 1},
                        {"solver", solver},
                        {"env", env},
                        {"seed", seed},
                        {"iterations", records.empty() ? 0 : records.back().iter},
                        {"samples_to_success", samples_to_success},
                        {"final_success", final_success},
                        {"final_J", final_disc_return},
                        {"final_model_loss", final_model_holdout},
                        {"total_env_samples", total_env_samples},
                        {"total_eval_samples", total_eval_samples},
                        {"wall_time_s", wall_time_s}};
}

namespace {

struct EvalStats {
  double real_return = 0, real_return_se = 0;
  double disc_return = 0, disc_return_se = 0;
  double success_rate = 0;
  double mean_dist = 0;
  long samples = 0;
};

EvalStats evaluate(const Environment& env, const GaussianPolicy& policy, int episodes,
                   double gamma, std::uint64_t seed) {
  ActionSampler sampler = [&policy](const Eigen::VectorXd& s, Rng& rng) {
    return policy.sample(s, rng);
  };
  const std::vector<Trajectory> trajs = collect_episodes(env, sampler, episodes, seed);
  EvalStats stats;
  Eigen::VectorXd rets(episodes), discs(episodes);
  for (int i = 0; i < episodes; ++i) {
    const Trajectory& tr = trajs[i];
    rets[i] = tr.total_reward();
    discs[i] = tr.discounted_return(gamma);
    stats.success_rate += env.success(tr) ? 1.0 : 0.0;
    double dist = 0;
    for (const auto& step : tr.steps) dist += env.distance(step.s_next);
    stats.mean_dist += tr.steps.empty() ? 0 : dist / tr.length();
    stats.samples += tr.length();
  }
  stats.success_rate /= episodes;
  stats.mean_dist /= episodes;
  stats.real_return = rets.mean();
  stats.disc_return = discs.mean();
  if (episodes > 1) {
    stats.real_return_se =
        std::sqrt((rets.array() - stats.real_return).square().sum() / (episodes - 1) / episodes);
    stats.disc_return_se =
        std::sqrt((discs.array() - stats.disc_return).square().sum() / (episodes - 1) / episodes);
  }
  return stats;
}

std::vector<Eigen::VectorXd> buffer_states(const ReplayBuffer& buffer) {
  std::vector<Eigen::VectorXd> states;
  states.reserve(buffer.size());
  for (std::size_t i = 0; i < buffer.size(); ++i) states.push_back(buffer[i].s);
  return states;
}

/// One full-batch gradient step on every member, learning-rate limited.
ModelTrainReport single_gradient_step(DynamicsEnsemble& ensemble, const ReplayBuffer& buffer,
                                      double lr) {
  ModelTrainConfig cfg;
  cfg.epochs = 1;
  cfg.minibatch = static_cast<int>(buffer.size());
  cfg.lr = lr;
  cfg.min_steps = 1;
  cfg.max_steps = 1;
  cfg.holdout_frac = 0.0;
  return ensemble.train(buffer, cfg);
}

}  // namespace

GameResult run_game(const GameConfig& cfg) {
  cfg.validate();
  const auto start_time = std::chrono::steady_clock::now();

  GameResult result;
  result.env = make_env(cfg.env_name, cfg.env_params);
  Environment& env = *result.env;
  result.policy = std::make_unique<GaussianPolicy>(env.state_dim(), env.action_dim(),
                                                   cfg.policy_hidden, mix_seed(cfg.seed, 1),
                                                   cfg.log_std_init);
  result.value = std::make_unique<ValueNet>(env.state_dim(), cfg.value_hidden, mix_seed(cfg.seed, 2));
  result.ensemble = std::make_unique<DynamicsEnsemble>(env.state_dim(), env.action_dim(),
                                                       cfg.model_hidden, cfg.ensemble_size,
                                                       mix_seed(cfg.seed, 3));
  GaussianPolicy& policy = *result.policy;
  ValueNet& value = *result.value;
  DynamicsEnsemble& ensemble = *result.ensemble;

  TrainingLog& log = result.log;
  log.solver = to_string(cfg.solver);
  log.env = cfg.env_name;
  log.seed = cfg.seed;

  ActionSampler sampler = [&policy](const Eigen::VectorXd& s, Rng& rng) {
    return policy.sample(s, rng);
  };

  ReplayBuffer buffer(cfg.fresh_buffer ? std::nullopt : cfg.buffer_capacity);
  NpgConfig npg_cfg = cfg.npg;
  npg_cfg.horizon = std::min(npg_cfg.horizon, env.horizon());

  ModelTrainConfig model_cfg;
  model_cfg.minibatch = cfg.model_minibatch;
  model_cfg.lr = cfg.model_lr;

  long cum_samples = 0;
  long event_seq = 0;
  bool perturbed = false;

  // Seed data under the initial policy, then an optional pre-loop model fit.
  buffer.insert(collect_rollouts(env, sampler, cfg.n_init, mix_seed(cfg.seed, 7)));
  cum_samples += cfg.n_init;

  IterationRecord init_rec;
  init_rec.iter = 0;
  init_rec.cum_samples = cum_samples;
  if (cfg.init_model_epochs > 0) {
    ModelTrainConfig init_cfg = model_cfg;
    init_cfg.epochs = cfg.init_model_epochs;
    init_cfg.seed = mix_seed(cfg.seed, 5, 1u << 20);
    const ModelTrainReport rep = ensemble.train(buffer, init_cfg);
    init_rec.model_loss_train = rep.train_loss;
    init_rec.model_loss_holdout = rep.holdout_loss;
    init_rec.model_event = event_seq++;
  } else {
    init_rec.model_loss_train = init_rec.model_loss_holdout = NAN;
  }
  init_rec.synth_return = NAN;
  init_rec.kl_update = NAN;
  init_rec.explained_var = NAN;
  init_rec.quadform_resid = NAN;
  {
    const EvalStats ev = evaluate(env, policy, cfg.eval_episodes, npg_cfg.gamma, mix_seed(cfg.seed, 6, 0));
    init_rec.real_return = ev.real_return;
    init_rec.real_return_se = ev.real_return_se;
    init_rec.disc_return = ev.disc_return;
    init_rec.disc_return_se = ev.disc_return_se;
    init_rec.success_rate = ev.success_rate;
    init_rec.mean_dist = ev.mean_dist;
    init_rec.eval_samples = ev.samples;
    log.total_eval_samples += ev.samples;
  }
  log.records.push_back(init_rec);

  for (int iter = 1; cum_samples < cfg.total_samples; ++iter) {
    IterationRecord rec;
    rec.iter = iter;
    rec.synth_return = NAN;
    rec.kl_update = NAN;
    rec.explained_var = NAN;
    rec.quadform_resid = 0;
    rec.model_loss_train = rec.model_loss_holdout = NAN;

    if (cfg.perturbation && !perturbed && cum_samples > cfg.perturbation->trigger_samples) {
      env.apply_perturbation(*cfg.perturbation);
      perturbed = true;
      rec.perturb_applied = 1;
    }

    auto policy_steps = [&](const SyntheticModel& model) {
      const std::vector<Eigen::VectorXd> starts = buffer_states(buffer);
      for (int j = 0; j < cfg.policy_steps; ++j) {
        const NpgIterationStats stats = npg_iteration(policy, value, model, env, npg_cfg, starts,
                                                      mix_seed(cfg.seed, 4, iter * 1024 + j));
        rec.synth_return = stats.mean_synth_return;
        rec.kl_update = stats.kl_update;
        rec.explained_var = stats.explained_variance;
        rec.quadform_resid = std::max(rec.quadform_resid, stats.quadform_residual);
        rec.diverged += stats.diverged ? 1 : 0;
      }
    };
    auto train_model = [&](int epochs, bool reinit) {
      ModelTrainConfig c = model_cfg;
      c.epochs = epochs;
      c.reinitialize = reinit;
      c.seed = mix_seed(cfg.seed, 5, iter);
      ModelTrainReport rep;
      if (cfg.mal_single_step && cfg.solver == SolverKind::Mal)
        rep = single_gradient_step(ensemble, buffer, cfg.mal_step_lr);
      else
        rep = ensemble.train(buffer, c);
      rec.model_loss_train = rep.train_loss;
      rec.model_loss_holdout = rep.holdout_loss;
    };
    auto collect = [&]() {
      const std::vector<Trajectory> batch =
          collect_rollouts(env, sampler, cfg.n_per_iter, mix_seed(cfg.seed, 3, iter));
      if (cfg.fresh_buffer) buffer.clear();
      buffer.insert(batch);
      cum_samples += cfg.n_per_iter;
    };

    switch (cfg.solver) {
      case SolverKind::Pal: {
        // Model leads with an aggressive refit; policy follows conservatively.
        train_model(cfg.model_epochs, cfg.model_reinit);
        rec.model_event = event_seq++;
        policy_steps(ensemble_model(ensemble));
        rec.policy_event = event_seq++;
        collect();
        break;
      }
      case SolverKind::Mal: {
        // Policy leads with aggressive optimization against the current model.
        policy_steps(ensemble_model(ensemble));
        rec.policy_event = event_seq++;
        collect();
        train_model(cfg.model_epochs, cfg.model_reinit);
        rec.model_event = event_seq++;
        break;
      }
      case SolverKind::Gda:
      case SolverKind::Br: {
        // Both players move from the same snapshot; updates land together.
        const DynamicsEnsemble snapshot = ensemble;
        train_model(cfg.model_epochs, cfg.model_reinit);
        policy_steps(ensemble_model(snapshot));
        rec.model_event = rec.policy_event = event_seq++;
        collect();
        break;
      }
    }

    const EvalStats ev =
        evaluate(env, policy, cfg.eval_episodes, npg_cfg.gamma, mix_seed(cfg.seed, 6, iter));
    rec.cum_samples = cum_samples;
    rec.real_return = ev.real_return;
    rec.real_return_se = ev.real_return_se;
    rec.disc_return = ev.disc_return;
    rec.disc_return_se = ev.disc_return_se;
    rec.success_rate = ev.success_rate;
    rec.mean_dist = ev.mean_dist;
    rec.eval_samples = ev.samples;
    log.total_eval_samples += ev.samples;
    log.records.push_back(rec);

    if (log.samples_to_success < 0 && rec.success_rate >= cfg.success_threshold)
      log.samples_to_success = rec.cum_samples;
    if (cfg.early_stop_success >= 0 && rec.success_rate >= cfg.early_stop_success) break;
  }

  const IterationRecord& last = log.records.back();
  log.final_success = last.success_rate;
  log.final_disc_return = last.disc_return;
  log.final_model_holdout = last.model_loss_holdout;
  log.total_env_samples = cum_samples;
  log.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
  return result;
}

}  // namespace mbrl
