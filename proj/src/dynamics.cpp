#include "mbrl/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace mbrl {

Normalizer Normalizer::fit(std::span<const Transition> data, double floor) {
  if (data.empty()) throw std::invalid_argument("normalizer: no data");
  const int ds = static_cast<int>(data[0].s.size());
  const int da = static_cast<int>(data[0].a.size());
  const double n = static_cast<double>(data.size());

  Normalizer out;
  out.s_mean = Eigen::VectorXd::Zero(ds);
  out.a_mean = Eigen::VectorXd::Zero(da);
  Eigen::VectorXd d_mean = Eigen::VectorXd::Zero(ds);
  for (const auto& tr : data) {
    out.s_mean += tr.s;
    out.a_mean += tr.a;
    d_mean += tr.s_next - tr.s;
  }
  out.s_mean /= n;
  out.a_mean /= n;
  d_mean /= n;

  Eigen::VectorXd s_var = Eigen::VectorXd::Zero(ds);
  Eigen::VectorXd a_var = Eigen::VectorXd::Zero(da);
  Eigen::VectorXd d_var = Eigen::VectorXd::Zero(ds);
  for (const auto& tr : data) {
    s_var += (tr.s - out.s_mean).cwiseAbs2();
    a_var += (tr.a - out.a_mean).cwiseAbs2();
    d_var += (tr.s_next - tr.s - d_mean).cwiseAbs2();
  }
  out.s_scale = (s_var / n).cwiseSqrt().cwiseMax(floor);
  out.a_scale = (a_var / n).cwiseSqrt().cwiseMax(floor);
  out.delta_scale = (d_var / n).cwiseSqrt().cwiseMax(floor);
  out.fitted = true;
  return out;
}

Eigen::MatrixXd Normalizer::normalized_inputs(const Eigen::MatrixXd& states,
                                              const Eigen::MatrixXd& actions) const {
  if (!fitted) throw std::runtime_error("normalizer: not fitted");
  Eigen::MatrixXd X(states.rows(), states.cols() + actions.cols());
  X.leftCols(states.cols()) =
      (states.rowwise() - s_mean.transpose()).array().rowwise() / s_scale.transpose().array();
  X.rightCols(actions.cols()) =
      (actions.rowwise() - a_mean.transpose()).array().rowwise() / a_scale.transpose().array();
  return X;
}

ReplayBuffer::ReplayBuffer(std::optional<std::size_t> capacity) : capacity_(capacity) {
  if (capacity_ && *capacity_ == 0) throw std::invalid_argument("replay buffer: zero capacity");
}

void ReplayBuffer::insert(const Transition& tr) {
  data_.push_back(tr);
  if (capacity_ && data_.size() > *capacity_) data_.pop_front();
}

void ReplayBuffer::insert(const std::vector<Trajectory>& trajs) {
  for (const auto& traj : trajs)
    for (const auto& tr : traj.steps) insert(tr);
}

DynamicsEnsemble::DynamicsEnsemble(int state_dim, int action_dim, std::vector<int> hidden,
                                   int n_members, std::uint64_t seed)
    : state_dim_(state_dim), action_dim_(action_dim), hidden_(std::move(hidden)), seed_(seed) {
  if (n_members < 1) throw std::invalid_argument("ensemble: need at least one member");
  std::vector<int> widths{state_dim_ + action_dim_};
  widths.insert(widths.end(), hidden_.begin(), hidden_.end());
  widths.push_back(state_dim_);
  for (int k = 0; k < n_members; ++k) {
    Rng rng(mix_seed(seed_, 0x6d6f64, k));
    members_.push_back(Mlp::create(widths, Activation::Relu, rng));
  }
  // Identity scales until the first fit so predict() works out of the box.
  norm_.s_mean = Eigen::VectorXd::Zero(state_dim_);
  norm_.s_scale = Eigen::VectorXd::Ones(state_dim_);
  norm_.a_mean = Eigen::VectorXd::Zero(action_dim_);
  norm_.a_scale = Eigen::VectorXd::Ones(action_dim_);
  norm_.delta_scale = Eigen::VectorXd::Ones(state_dim_);
  norm_.fitted = true;
}

Eigen::VectorXd DynamicsEnsemble::predict(int member, const Eigen::VectorXd& s,
                                          const Eigen::VectorXd& a) const {
  const Eigen::MatrixXd s_row = s.transpose();
  const Eigen::MatrixXd a_row = a.transpose();
  return predict(member, s_row, a_row).row(0).transpose();
}

Eigen::MatrixXd DynamicsEnsemble::predict(int member, const Eigen::MatrixXd& states,
                                          const Eigen::MatrixXd& actions) const {
  const Eigen::MatrixXd out = members_.at(member).forward(norm_.normalized_inputs(states, actions));
  return states + (out.array().rowwise() * norm_.delta_scale.transpose().array()).matrix();
}

namespace {

struct Dataset {
  Eigen::MatrixXd inputs;   // normalized (s, a)
  Eigen::MatrixXd targets;  // deltas divided by delta_scale
};

Dataset make_dataset(const std::vector<Transition>& data, const std::vector<int>& idx,
                     const Normalizer& norm) {
  const int n = static_cast<int>(idx.size());
  const int ds = static_cast<int>(norm.s_mean.size());
  const int da = static_cast<int>(norm.a_mean.size());
  Eigen::MatrixXd S(n, ds), A(n, da), D(n, ds);
  for (int i = 0; i < n; ++i) {
    const Transition& tr = data[idx[i]];
    S.row(i) = tr.s.transpose();
    A.row(i) = tr.a.transpose();
    D.row(i) = (tr.s_next - tr.s).transpose();
  }
  Dataset ds_out;
  ds_out.inputs = norm.normalized_inputs(S, A);
  ds_out.targets = D.array().rowwise() / norm.delta_scale.transpose().array();
  return ds_out;
}

}  // namespace

ModelTrainReport DynamicsEnsemble::train(const ReplayBuffer& buffer, const ModelTrainConfig& cfg) {
  if (buffer.empty()) throw std::invalid_argument("ensemble train: empty buffer");
  if (cfg.minibatch < 1 || cfg.epochs < 1)
    throw std::invalid_argument("ensemble train: epochs and minibatch must be positive");
  const std::vector<Transition> data = buffer.snapshot();
  norm_ = Normalizer::fit(data);

  // Holdout split for loss reporting.
  const int n = static_cast<int>(data.size());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng(mix_seed(cfg.seed, 0x73706c69));
  for (int i = n - 1; i > 0; --i) std::swap(order[i], order[split_rng.uniform_int(i + 1)]);
  const int n_holdout = n >= 10 ? static_cast<int>(std::floor(cfg.holdout_frac * n)) : 0;
  const std::vector<int> holdout_idx(order.begin(), order.begin() + n_holdout);
  const std::vector<int> train_idx(order.begin() + n_holdout, order.end());

  const Dataset train_set = make_dataset(data, train_idx, norm_);
  const int n_train = static_cast<int>(train_idx.size());
  const int mb = std::min(cfg.minibatch, n_train);
  const long steps_per_epoch = (n_train + mb - 1) / mb;
  const long steps = std::clamp(static_cast<long>(cfg.epochs) * steps_per_epoch, cfg.min_steps,
                                cfg.max_steps);

  const int ds = state_dim_;
  std::vector<int> batch_order(n_train);
  for (int k = 0; k < size(); ++k) {
    Rng rng(mix_seed(cfg.seed, 0x747261696e, k));
    if (cfg.reinitialize) {
      std::vector<int> widths{state_dim_ + action_dim_};
      widths.insert(widths.end(), hidden_.begin(), hidden_.end());
      widths.push_back(state_dim_);
      members_[k] = Mlp::create(widths, Activation::Relu, rng);
    }
    Mlp& net = members_[k];
    Eigen::VectorXd params = net.flatten_params();
    AdamState adam(static_cast<int>(params.size()), cfg.lr);
    std::iota(batch_order.begin(), batch_order.end(), 0);
    long done = 0;
    while (done < steps) {
      for (int i = n_train - 1; i > 0; --i)
        std::swap(batch_order[i], batch_order[rng.uniform_int(i + 1)]);
      for (long b = 0; b < steps_per_epoch && done < steps; ++b, ++done) {
        const int lo = static_cast<int>(b) * mb;
        const int count = std::min(mb, n_train - lo);
        Eigen::MatrixXd X(count, train_set.inputs.cols()), T(count, ds);
        for (int i = 0; i < count; ++i) {
          X.row(i) = train_set.inputs.row(batch_order[lo + i]);
          T.row(i) = train_set.targets.row(batch_order[lo + i]);
        }
        Mlp::Tape tape;
        const Eigen::MatrixXd out = net.forward(X, tape);
        const Eigen::MatrixXd err = out - T;
        const Eigen::MatrixXd upstream = (2.0 / (count * ds)) * err;
        const Mlp::Gradients grads = net.backward(tape, upstream);
        adam.update(params, net.flatten(grads));
        net.set_params(params);
      }
    }
  }

  ModelTrainReport report;
  report.steps_per_member = steps;
  std::vector<Transition> train_data, holdout_data;
  for (int i : train_idx) train_data.push_back(data[i]);
  for (int i : holdout_idx) holdout_data.push_back(data[i]);
  report.train_loss = loss(train_data);
  report.holdout_loss = holdout_data.empty() ? report.train_loss : loss(holdout_data);
  return report;
}

double DynamicsEnsemble::loss(std::span<const Transition> data) const {
  if (data.empty()) throw std::invalid_argument("ensemble loss: no data");
  const int n = static_cast<int>(data.size());
  Eigen::MatrixXd S(n, state_dim_), A(n, action_dim_), D(n, state_dim_);
  for (int i = 0; i < n; ++i) {
    S.row(i) = data[i].s.transpose();
    A.row(i) = data[i].a.transpose();
    D.row(i) = (data[i].s_next - data[i].s).transpose();
  }
  const Eigen::MatrixXd X = norm_.normalized_inputs(S, A);
  const Eigen::MatrixXd T = D.array().rowwise() / norm_.delta_scale.transpose().array();
  double acc = 0;
  for (const auto& net : members_) acc += (net.forward(X) - T).squaredNorm() / (n * state_dim_);
  return acc / size();
}

}  // namespace mbrl
