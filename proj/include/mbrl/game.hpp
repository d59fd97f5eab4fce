#pragma once

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mbrl/dynamics.hpp"
#include "mbrl/env.hpp"
#include "mbrl/npg.hpp"

namespace mbrl {

/// The four schedules for the policy-model game. All share one loop; they
/// differ in update ordering, aggressiveness (steps and epochs), and buffer
/// policy:
///  - Pal: aggressive model refit on a short FIFO window, then conservative
///    policy steps against the freshly updated model.
///  - Mal: aggressive policy optimization against the current model, then a
///    conservative model pass over all data ever collected.
///  - Gda: one conservative step each, computed from the same snapshot and
///    applied together.
///  - Br: both players best-respond to the previous iterate; the model is
///    retrained from scratch on only the latest batch.
enum class SolverKind { Pal, Mal, Gda, Br };

std::string to_string(SolverKind kind);
SolverKind solver_from_string(const std::string& name);

struct GameConfig {
  SolverKind solver = SolverKind::Pal;
  std::string env_name = "gridworld-goal";
  std::uint64_t seed = 0;
  long total_samples = 30000;

  long n_init = 2500;                       // seed data collected before the loop
  long n_per_iter = 250;                    // world samples per iteration
  std::optional<std::size_t> buffer_capacity = 2500;  // unset = unbounded
  bool fresh_buffer = false;                // replace instead of aggregate after each iteration
  int policy_steps = 1;                     // policy-player updates per iteration
  int model_epochs = 100;                   // model-player pass over the buffer
  int init_model_epochs = 0;                // pre-loop fit; 0 = skip (model unfit until the loop)
  bool model_reinit = false;                // fresh weights each model update
  bool mal_single_step = false;             // one full-batch gradient step instead of epochs
  double mal_step_lr = 1e-3;

  int ensemble_size = 4;
  std::vector<int> model_hidden{128, 128};
  int model_minibatch = 200;
  double model_lr = 1e-3;

  std::vector<int> policy_hidden{32, 32};
  std::vector<int> value_hidden{64, 64};
  double log_std_init = -1.0;

  NpgConfig npg;

  int eval_episodes = 40;
  double success_threshold = 0.9;
  double early_stop_success = -1;  // stop once the eval success rate reaches this; <0 disables

  EnvParams env_params;
  std::optional<PerturbationSchedule> perturbation;

  void validate() const;  // throws std::invalid_argument naming the offending field
};

/// Defaults for a solver/task pair; counts follow the per-task collection
/// rules (samples per iteration scale with the task horizon, capped).
GameConfig solver_preset(SolverKind solver, const std::string& env_name,
                         const EnvParams& env_params = {});

struct IterationRecord {
  int iter = 0;
  long cum_samples = 0;   // world samples charged to the learning budget
  long eval_samples = 0;  // evaluation rollouts, tracked separately
  double real_return = 0, real_return_se = 0;        // undiscounted eval return
  double disc_return = 0, disc_return_se = 0;        // discounted eval return
  double success_rate = 0;
  double mean_dist = 0;        // trajectory-averaged distance diagnostic
  double synth_return = 0;     // model-side return seen by the policy player
  double model_loss_train = 0, model_loss_holdout = 0;
  double kl_update = 0;
  double explained_var = 0;
  double quadform_resid = 0;   // worst normalized-step residual this iteration
  long model_event = -1, policy_event = -1;  // logical timestamps; equal = simultaneous
  int perturb_applied = 0;
  int diverged = 0;

  static std::string csv_header();  // carries the schema version
  std::string csv_row() const;
};

struct TrainingLog {
  std::vector<IterationRecord> records;
  std::string solver, env;
  std::uint64_t seed = 0;
  long samples_to_success = -1;  // first budget count whose eval met success_threshold
  double final_success = 0;
  double final_disc_return = 0;
  double final_model_holdout = 0;
  long total_env_samples = 0;
  long total_eval_samples = 0;
  double wall_time_s = 0;  // reported in the summary only, never in the CSV

  std::string to_csv() const;
  nlohmann::json summary() const;
};

/// Final learner state alongside the log, for checkpointing and diagnosis.
struct GameResult {
  TrainingLog log;
  std::unique_ptr<GaussianPolicy> policy;
  std::unique_ptr<ValueNet> value;
  std::unique_ptr<DynamicsEnsemble> ensemble;
  std::unique_ptr<Environment> env;  // reflects any applied perturbation
};

GameResult run_game(const GameConfig& cfg);

}  // namespace mbrl
