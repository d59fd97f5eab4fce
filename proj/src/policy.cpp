#include "mbrl/policy.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mbrl {

GaussianPolicy::GaussianPolicy(int state_dim, int action_dim, const std::vector<int>& hidden,
                               std::uint64_t seed, double log_std_init) {
  std::vector<int> widths{state_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(action_dim);
  Rng rng(mix_seed(seed, 0x706f6c));
  // Small final layer keeps the initial policy near zero-mean.
  mean_net = Mlp::create(widths, Activation::Tanh, rng, 0.01);
  log_std = Eigen::VectorXd::Constant(action_dim, log_std_init);
}

Eigen::VectorXd GaussianPolicy::flatten() const {
  Eigen::VectorXd flat(param_count());
  flat.head(mean_net.param_count()) = mean_net.flatten_params();
  flat.tail(log_std.size()) = log_std;
  return flat;
}

void GaussianPolicy::set_flat(const Eigen::VectorXd& flat) {
  if (flat.size() != param_count())
    throw std::invalid_argument("policy: flat parameter size mismatch");
  mean_net.set_params(flat.head(mean_net.param_count()));
  log_std = flat.tail(log_std.size());
}

Eigen::VectorXd GaussianPolicy::mean(const Eigen::VectorXd& s) const {
  return mean_net.forward(s.transpose()).row(0).transpose();
}

Eigen::MatrixXd GaussianPolicy::mean_batch(const Eigen::MatrixXd& states) const {
  return mean_net.forward(states);
}

Eigen::VectorXd GaussianPolicy::sample(const Eigen::VectorXd& s, Rng& rng) const {
  Eigen::VectorXd a = mean(s);
  for (int d = 0; d < a.size(); ++d) a[d] += std::exp(log_std[d]) * rng.normal();
  return a;
}

double GaussianPolicy::log_prob(const Eigen::VectorXd& s, const Eigen::VectorXd& a) const {
  const Eigen::VectorXd m = mean(s);
  double lp = 0;
  for (int d = 0; d < a.size(); ++d) {
    const double sigma = std::exp(log_std[d]);
    const double z = (a[d] - m[d]) / sigma;
    lp += -0.5 * z * z - log_std[d] - 0.5 * std::log(2.0 * M_PI);
  }
  return lp;
}

Eigen::MatrixXd GaussianPolicy::score_batch(const Eigen::MatrixXd& states,
                                            const Eigen::MatrixXd& actions) const {
  const int n = static_cast<int>(states.rows());
  const int da = action_dim();
  const Eigen::VectorXd inv_var = (-2.0 * log_std).array().exp();
  Eigen::MatrixXd scores(n, param_count());
  Mlp::Tape tape;
  for (int i = 0; i < n; ++i) {
    const Eigen::MatrixXd m = mean_net.forward(states.row(i), tape);
    const Eigen::MatrixXd diff = actions.row(i) - m;  // 1 x da
    // d log pi / d mean = (a - m) / sigma^2, chained through the mean net.
    const Eigen::MatrixXd upstream = diff.cwiseProduct(inv_var.transpose());
    const Mlp::Gradients grads = mean_net.backward(tape, upstream);
    scores.row(i).head(mean_net.param_count()) = mean_net.flatten(grads).transpose();
    // d log pi / d log_std = z^2 - 1 with z = (a - m) / sigma.
    scores.row(i).tail(da) =
        diff.cwiseProduct(diff).cwiseProduct(inv_var.transpose()).array() - 1.0;
  }
  return scores;
}

Eigen::VectorXd GaussianPolicy::weighted_score(const Eigen::MatrixXd& states,
                                               const Eigen::MatrixXd& actions,
                                               const Eigen::VectorXd& weights) const {
  const int da = action_dim();
  const Eigen::VectorXd inv_var = (-2.0 * log_std).array().exp();
  Mlp::Tape tape;
  const Eigen::MatrixXd m = mean_net.forward(states, tape);
  const Eigen::MatrixXd diff = actions - m;
  Eigen::MatrixXd upstream =
      (diff.array().rowwise() * inv_var.transpose().array()).colwise() * weights.array();
  const Mlp::Gradients grads = mean_net.backward(tape, upstream);
  Eigen::VectorXd out(param_count());
  out.head(mean_net.param_count()) = mean_net.flatten(grads);
  const Eigen::MatrixXd z2 = diff.cwiseProduct(diff).array().rowwise() * inv_var.transpose().array();
  out.tail(da) = (z2.array() - 1.0).matrix().transpose() * weights;
  return out;
}

double GaussianPolicy::mean_kl(const GaussianPolicy& p, const GaussianPolicy& q,
                               const Eigen::MatrixXd& states) {
  const Eigen::MatrixXd mp = p.mean_batch(states), mq = q.mean_batch(states);
  const int n = static_cast<int>(states.rows());
  double acc = 0;
  for (int d = 0; d < p.action_dim(); ++d) {
    const double vp = std::exp(2.0 * p.log_std[d]), vq = std::exp(2.0 * q.log_std[d]);
    const double base = q.log_std[d] - p.log_std[d] - 0.5;
    acc += n * (base + 0.5 * vp / vq);
    acc += 0.5 * (mp.col(d) - mq.col(d)).squaredNorm() / vq;
  }
  return acc / n;
}

ValueNet::ValueNet(int state_dim, const std::vector<int>& hidden, std::uint64_t seed) {
  std::vector<int> widths{state_dim};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(1);
  Rng rng(mix_seed(seed, 0x76616c));
  net = Mlp::create(widths, Activation::Tanh, rng);
}

double ValueNet::value(const Eigen::VectorXd& s) const {
  return net.forward(s.transpose())(0, 0);
}

Eigen::VectorXd ValueNet::value_batch(const Eigen::MatrixXd& states) const {
  return net.forward(states).col(0);
}

ValueFitReport ValueNet::fit(const Eigen::MatrixXd& states, const Eigen::VectorXd& targets,
                             const ValueFitConfig& cfg, std::uint64_t seed) {
  const int n = static_cast<int>(states.rows());
  if (n == 0 || targets.size() != n) throw std::invalid_argument("value fit: bad data shapes");
  Eigen::VectorXd params = net.flatten_params();
  AdamState adam(static_cast<int>(params.size()), cfg.lr);
  Rng rng(mix_seed(seed, 0x76666974));
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  const int mb = std::min(cfg.minibatch, n);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.uniform_int(i + 1)]);
    for (int lo = 0; lo < n; lo += mb) {
      const int count = std::min(mb, n - lo);
      Eigen::MatrixXd X(count, states.cols());
      Eigen::VectorXd T(count);
      for (int i = 0; i < count; ++i) {
        X.row(i) = states.row(order[lo + i]);
        T[i] = targets[order[lo + i]];
      }
      Mlp::Tape tape;
      const Eigen::MatrixXd out = net.forward(X, tape);
      const Eigen::MatrixXd upstream = (2.0 / count) * (out.col(0) - T);
      const Mlp::Gradients grads = net.backward(tape, upstream);
      adam.update(params, net.flatten(grads));
      net.set_params(params);
    }
  }
  ValueFitReport report;
  const Eigen::VectorXd pred = value_batch(states);
  report.mse = (pred - targets).squaredNorm() / n;
  const double target_var = (targets.array() - targets.mean()).square().sum() / n;
  report.explained_variance = target_var > 0 ? 1.0 - report.mse / target_var : 0.0;
  return report;
}

}  // namespace mbrl
