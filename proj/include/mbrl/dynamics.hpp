#pragma once

#include <Eigen/Dense>
#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "mbrl/env.hpp"
#include "mbrl/net.hpp"

namespace mbrl {

/// Per-coordinate statistics for states, actions, and one-step deltas.
/// Scales are standard deviations floored at `floor` so constant
/// coordinates stay numerically inert instead of dividing by zero.
struct Normalizer {
  Eigen::VectorXd s_mean, s_scale, a_mean, a_scale, delta_scale;
  bool fitted = false;

  static Normalizer fit(std::span<const Transition> data, double floor = 1e-6);

  /// Concatenated [(s - s_mean)/s_scale, (a - a_mean)/a_scale] rows.
  Eigen::MatrixXd normalized_inputs(const Eigen::MatrixXd& states,
                                    const Eigen::MatrixXd& actions) const;
};

/// FIFO transition store. With a capacity, inserting past the limit evicts
/// the oldest entries first; without one it grows unboundedly.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::optional<std::size_t> capacity = std::nullopt);

  void insert(const Transition& tr);
  void insert(const std::vector<Trajectory>& trajs);
  void clear() { data_.clear(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  const Transition& operator[](std::size_t i) const { return data_[i]; }
  std::optional<std::size_t> capacity() const { return capacity_; }
  std::vector<Transition> snapshot() const { return {data_.begin(), data_.end()}; }

 private:
  std::optional<std::size_t> capacity_;
  std::deque<Transition> data_;
};

struct ModelTrainConfig {
  int epochs = 100;
  int minibatch = 200;
  double lr = 1e-3;
  double holdout_frac = 0.1;   // reporting split only, never trained on
  long min_steps = 100;        // per-member gradient step clamp
  long max_steps = 100000;
  bool reinitialize = false;   // fresh weights before fitting
  std::uint64_t seed = 0;
};

struct ModelTrainReport {
  double train_loss = 0;    // normalized-delta MSE on the training split
  double holdout_loss = 0;  // same loss on the held-out split
  long steps_per_member = 0;
};

/// Ensemble of delta MLPs sharing one normalizer. Member k predicts
/// s + delta_scale .* net_k(normalized(s, a)); members differ only in their
/// weight initialization and minibatch order.
class DynamicsEnsemble {
 public:
  DynamicsEnsemble(int state_dim, int action_dim, std::vector<int> hidden, int n_members,
                   std::uint64_t seed);

  int size() const { return static_cast<int>(members_.size()); }
  int state_dim() const { return state_dim_; }
  int action_dim() const { return action_dim_; }
  const Normalizer& normalizer() const { return norm_; }
  void set_normalizer(const Normalizer& n) { norm_ = n; }
  const Mlp& member(int k) const { return members_.at(k); }
  Mlp& member(int k) { return members_.at(k); }

  Eigen::VectorXd predict(int member, const Eigen::VectorXd& s, const Eigen::VectorXd& a) const;
  /// Row-per-sample batched prediction.
  Eigen::MatrixXd predict(int member, const Eigen::MatrixXd& states,
                          const Eigen::MatrixXd& actions) const;

  /// Refits the normalizer on the whole buffer, then fits every member by
  /// Adam on minibatches of normalized-delta MSE. The per-member gradient
  /// step count is epochs * ceil(n_train / minibatch) clamped to
  /// [min_steps, max_steps].
  ModelTrainReport train(const ReplayBuffer& buffer, const ModelTrainConfig& cfg);

  /// Normalized-delta MSE averaged over members.
  double loss(std::span<const Transition> data) const;

 private:
  int state_dim_, action_dim_;
  std::vector<int> hidden_;
  std::uint64_t seed_;
  std::vector<Mlp> members_;
  Normalizer norm_;
};

}  // namespace mbrl
