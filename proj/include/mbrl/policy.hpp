#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mbrl/net.hpp"
#include "mbrl/rng.hpp"

namespace mbrl {

/// Diagonal Gaussian policy: tanh MLP mean plus a state-independent learned
/// log standard deviation per action dimension. Parameters flatten as
/// [mean net, log_std], so score vectors and updates share one layout.
struct GaussianPolicy {
  Mlp mean_net;
  Eigen::VectorXd log_std;

  GaussianPolicy(int state_dim, int action_dim, const std::vector<int>& hidden,
                 std::uint64_t seed, double log_std_init = -1.0);

  int state_dim() const { return mean_net.input_dim(); }
  int action_dim() const { return mean_net.output_dim(); }
  int param_count() const { return mean_net.param_count() + static_cast<int>(log_std.size()); }

  Eigen::VectorXd flatten() const;
  void set_flat(const Eigen::VectorXd& flat);

  Eigen::VectorXd mean(const Eigen::VectorXd& s) const;
  Eigen::MatrixXd mean_batch(const Eigen::MatrixXd& states) const;
  Eigen::VectorXd sample(const Eigen::VectorXd& s, Rng& rng) const;
  double log_prob(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const;

  /// Score rows d log pi(a_i | s_i) / d theta, one per sample.
  Eigen::MatrixXd score_batch(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions) const;

  /// sum_i w_i * score_i computed in a single backward pass.
  Eigen::VectorXd weighted_score(const Eigen::MatrixXd& states, const Eigen::MatrixXd& actions,
                                 const Eigen::VectorXd& weights) const;

  /// Mean KL(p || q) over the given states for two policies of equal shape.
  static double mean_kl(const GaussianPolicy& p, const GaussianPolicy& q,
                        const Eigen::MatrixXd& states);
};

struct ValueFitConfig {
  int epochs = 2;
  int minibatch = 64;
  double lr = 1e-3;
};

struct ValueFitReport {
  double mse = 0;
  double explained_variance = 0;
};

/// MLP state-value estimator fit by Adam regression on given targets.
struct ValueNet {
  Mlp net;

  ValueNet(int state_dim, const std::vector<int>& hidden, std::uint64_t seed);

  double value(const Eigen::VectorXd& s) const;
  Eigen::VectorXd value_batch(const Eigen::MatrixXd& states) const;
  ValueFitReport fit(const Eigen::MatrixXd& states, const Eigen::VectorXd& targets,
                     const ValueFitConfig& cfg, std::uint64_t seed);
};

}  // namespace mbrl
