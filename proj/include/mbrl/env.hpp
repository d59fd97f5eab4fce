#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "mbrl/mdp.hpp"
#include "mbrl/rng.hpp"

namespace mbrl {

struct Transition {
  int t = 0;
  Eigen::VectorXd s;
  Eigen::VectorXd a;
  double r = 0;
  Eigen::VectorXd s_next;
  bool done = false;
};

struct Trajectory {
  std::vector<Transition> steps;
  bool terminated = false;  // ended by the termination predicate, not the horizon
  bool diverged = false;    // truncated after a non-finite prediction

  double total_reward() const;
  double discounted_return(double gamma) const;
  int length() const { return static_cast<int>(steps.size()); }
};

/// A mid-run task change. DynamicsShift scales a physical parameter of the
/// transition function; GoalShift moves the goal sampler to a disjoint
/// region. A schedule never changes both.
struct PerturbationSchedule {
  enum class Kind { DynamicsShift, GoalShift };
  Kind kind = Kind::DynamicsShift;
  long trigger_samples = 0;  // applied before the first iteration whose cumulative samples exceed this
  double magnitude = 1.0;    // 1.0 leaves dynamics unchanged
};

/// Episodic task with continuous observation and action vectors. Steppers are
/// pure functions of (state, action, rng), so rollouts are reproducible from
/// per-trajectory streams alone.
class Environment {
 public:
  virtual ~Environment() = default;

  const std::string& name() const { return name_; }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  int horizon() const { return horizon_; }
  double r_max() const { return r_max_; }

  virtual Eigen::VectorXd sample_init(Rng& rng) const = 0;
  virtual Eigen::VectorXd step(const Eigen::VectorXd& s, const Eigen::VectorXd& a, Rng& rng) const = 0;
  virtual double reward(const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                        const Eigen::VectorXd& s_next) const = 0;
  virtual bool terminal(const Eigen::VectorXd& s) const = 0;
  /// Scalar progress diagnostic (distance to goal or equivalent), >= 0.
  virtual double distance(const Eigen::VectorXd& s) const = 0;
  virtual bool success(const Trajectory& traj) const = 0;
  /// Throws std::invalid_argument for kinds the task does not support.
  virtual void apply_perturbation(const PerturbationSchedule& schedule) = 0;
  /// State coordinates compared in model-error profiles.
  virtual std::vector<int> error_coords() const = 0;

 protected:
  std::string name_;
  int state_dim_ = 0, action_dim_ = 0, horizon_ = 0;
  double r_max_ = 1.0;
};

using ActionSampler = std::function<Eigen::VectorXd(const Eigen::VectorXd&, Rng&)>;

/// Collects whole episodes until exactly n_samples transitions are gathered;
/// the last episode is cut short if needed. Trajectory i consumes only the
/// sub-stream seed split i, so results are byte-identical for a given seed.
std::vector<Trajectory> collect_rollouts(const Environment& env, const ActionSampler& policy,
                                         long n_samples, std::uint64_t seed);

/// Collects a fixed number of episodes, each run to horizon or termination.
std::vector<Trajectory> collect_episodes(const Environment& env, const ActionSampler& policy,
                                         int n_episodes, std::uint64_t seed);

struct GridworldConfig {
  int size = 8;
  double slip = 0.1;
  int horizon = 50;
  bool terminate_at_goal = true;
  std::optional<int> fixed_goal;  // cell index; goal resampled per episode when unset
};

/// Grid navigation with a per-episode goal. Observations are
/// (x, y, goal_x, goal_y) scaled to [-1, 1]; actions are 2-vectors whose
/// dominant axis and sign select one of the four moves. The executed move
/// slips to a uniformly random one with probability `slip`; moves off the
/// edge leave the position unchanged. Reward is 1 on transitions that enter
/// the goal cell, else 0.
class GridworldEnv : public Environment {
 public:
  explicit GridworldEnv(const GridworldConfig& cfg = {});

  Eigen::VectorXd sample_init(Rng& rng) const override;
  Eigen::VectorXd step(const Eigen::VectorXd& s, const Eigen::VectorXd& a, Rng& rng) const override;
  double reward(const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                const Eigen::VectorXd& s_next) const override;
  bool terminal(const Eigen::VectorXd& s) const override;
  double distance(const Eigen::VectorXd& s) const override;
  bool success(const Trajectory& traj) const override;
  void apply_perturbation(const PerturbationSchedule& schedule) override;
  std::vector<int> error_coords() const override { return {0, 1}; }

  int n_cells() const { return cfg_.size * cfg_.size; }
  double slip() const { return cfg_.slip; }
  int cell_index(int x, int y) const { return y * cfg_.size + x; }
  /// Position cell of an observation (rounded and clamped to the grid).
  int position_cell(const Eigen::VectorXd& s) const;
  int goal_cell(const Eigen::VectorXd& s) const;
  Eigen::VectorXd observation(int cell, int goal) const;
  /// Canonical continuous action for a move index (+x, -x, +y, -y).
  Eigen::VectorXd move_action(int move) const;
  /// Move index selected by a continuous action.
  int intended_move(const Eigen::VectorXd& a) const;

  /// Exact MDP over cells with the goal absorbing: R(s) = 1 at the goal,
  /// rho uniform over the other cells, actions = the four moves.
  TabularMdp export_tabular(int goal, double gamma) const;

  /// Empirical move distribution of a continuous action sampler, per cell.
  TabularPolicy export_policy(const ActionSampler& policy, int goal, int n_draws,
                              std::uint64_t seed) const;

  /// Tabular transition model induced by one-step predictors (one per
  /// ensemble member). Predicted positions are soft-assigned to the four
  /// surrounding grid points and the row is mixed with `smoothing` mass of
  /// the uniform distribution so it has full support.
  using Predictor = std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)>;
  TabularMdp export_model_tabular(const std::vector<Predictor>& members, int goal, double gamma,
                                  double smoothing = 1e-3) const;

 private:
  int apply_move(int cell, int move) const;
  GridworldConfig cfg_;
};

struct ReacherConfig {
  double dt = 0.05;
  double mass = 1.0;
  int horizon = 100;
  double success_dist = 0.05;
  Eigen::Vector2d goal_lo{0.2, 0.2};
  Eigen::Vector2d goal_hi{0.8, 0.8};
  double init_half_width = 0.2;
};

/// Planar double integrator: state (pos, vel, goal), action a force clipped
/// to [-1, 1]^2. Position integrates the previous velocity, then velocity
/// integrates the clipped force. Reward is the negative distance between the
/// new position and the goal.
class ReacherEnv : public Environment {
 public:
  explicit ReacherEnv(const ReacherConfig& cfg = {});

  Eigen::VectorXd sample_init(Rng& rng) const override;
  Eigen::VectorXd step(const Eigen::VectorXd& s, const Eigen::VectorXd& a, Rng& rng) const override;
  double reward(const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                const Eigen::VectorXd& s_next) const override;
  bool terminal(const Eigen::VectorXd&) const override { return false; }
  double distance(const Eigen::VectorXd& s) const override;
  bool success(const Trajectory& traj) const override;
  void apply_perturbation(const PerturbationSchedule& schedule) override;
  std::vector<int> error_coords() const override { return {0, 1}; }

  double mass() const { return cfg_.mass; }
  const ReacherConfig& config() const { return cfg_; }

 private:
  ReacherConfig cfg_;
};

struct PendulumConfig {
  double dt = 0.05;
  double mass = 1.0;
  double length = 1.0;
  double gravity = 10.0;
  double max_torque = 2.0;
  double max_speed = 8.0;
  int horizon = 200;
  double success_angle = 0.3;
};

/// Torque-limited swing-up. Observation (cos t, sin t, t_dot); reward
/// penalizes angle from upright, angular velocity, and torque.
class PendulumEnv : public Environment {
 public:
  explicit PendulumEnv(const PendulumConfig& cfg = {});

  Eigen::VectorXd sample_init(Rng& rng) const override;
  Eigen::VectorXd step(const Eigen::VectorXd& s, const Eigen::VectorXd& a, Rng& rng) const override;
  double reward(const Eigen::VectorXd& s, const Eigen::VectorXd& a,
                const Eigen::VectorXd& s_next) const override;
  bool terminal(const Eigen::VectorXd&) const override { return false; }
  double distance(const Eigen::VectorXd& s) const override;
  bool success(const Trajectory& traj) const override;
  void apply_perturbation(const PerturbationSchedule& schedule) override;
  std::vector<int> error_coords() const override { return {0, 1, 2}; }

 private:
  PendulumConfig cfg_;
};

/// Optional overrides applied on top of each task's defaults.
struct EnvParams {
  std::optional<int> horizon;
  std::optional<double> slip;
  std::optional<double> success_dist;
};

/// Builds "gridworld-goal", "point-reacher", or "pendulum".
std::unique_ptr<Environment> make_env(const std::string& name, const EnvParams& params = {});

}  // namespace mbrl
