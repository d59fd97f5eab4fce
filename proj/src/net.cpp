#include "mbrl/net.hpp"

#include <cmath>
#include <stdexcept>

namespace mbrl {

namespace {

Eigen::MatrixXd apply_act(const Eigen::MatrixXd& z, Activation act) {
  switch (act) {
    case Activation::Tanh: return z.array().tanh();
    case Activation::Relu: return z.cwiseMax(0.0);
    case Activation::Identity: return z;
  }
  return z;
}

// Derivative expressed through the activation output where possible.
Eigen::MatrixXd act_grad(const Eigen::MatrixXd& z, const Eigen::MatrixXd& a, Activation act) {
  switch (act) {
    case Activation::Tanh: return 1.0 - a.array().square();
    case Activation::Relu: return (z.array() > 0.0).cast<double>();
    case Activation::Identity: return Eigen::MatrixXd::Ones(z.rows(), z.cols());
  }
  return Eigen::MatrixXd::Ones(z.rows(), z.cols());
}

}  // namespace

Mlp Mlp::create(const std::vector<int>& widths, Activation act, Rng& rng,
                double last_layer_scale) {
  if (widths.size() < 2) throw std::invalid_argument("mlp: need at least input and output widths");
  Mlp net;
  net.hidden_act = act;
  for (size_t l = 0; l + 1 < widths.size(); ++l) {
    const int in = widths[l], out = widths[l + 1];
    if (in <= 0 || out <= 0) throw std::invalid_argument("mlp: widths must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    Eigen::MatrixXd W(out, in);
    for (int i = 0; i < out; ++i)
      for (int j = 0; j < in; ++j) W(i, j) = rng.uniform(-bound, bound);
    if (l + 2 == widths.size()) W *= last_layer_scale;
    net.weights.push_back(std::move(W));
    net.biases.push_back(Eigen::VectorXd::Zero(out));
  }
  return net;
}

int Mlp::param_count() const {
  int n = 0;
  for (size_t l = 0; l < weights.size(); ++l)
    n += static_cast<int>(weights[l].size() + biases[l].size());
  return n;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& input) const {
  Eigen::MatrixXd h = input;
  for (size_t l = 0; l < weights.size(); ++l) {
    Eigen::MatrixXd z = (h * weights[l].transpose()).rowwise() + biases[l].transpose();
    h = (l + 1 < weights.size()) ? apply_act(z, hidden_act) : z;
  }
  return h;
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& input, Tape& tape) const {
  tape.acts.clear();
  tape.pre.clear();
  tape.acts.push_back(input);
  for (size_t l = 0; l < weights.size(); ++l) {
    Eigen::MatrixXd z = (tape.acts.back() * weights[l].transpose()).rowwise() + biases[l].transpose();
    tape.pre.push_back(z);
    tape.acts.push_back(l + 1 < weights.size() ? apply_act(z, hidden_act) : z);
  }
  return tape.acts.back();
}

Mlp::Gradients Mlp::backward(const Tape& tape, const Eigen::MatrixXd& upstream,
                             Eigen::MatrixXd* input_grad) const {
  const int L = n_layers();
  if (static_cast<int>(tape.pre.size()) != L)
    throw std::invalid_argument("mlp backward: tape does not match network");
  Gradients g = zero_gradients();
  Eigen::MatrixXd delta = upstream;  // d loss / d pre-activation of layer l
  for (int l = L - 1; l >= 0; --l) {
    g.d_weights[l] = delta.transpose() * tape.acts[l];
    g.d_biases[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      delta = (delta * weights[l]).cwiseProduct(
          act_grad(tape.pre[l - 1], tape.acts[l], hidden_act));
    } else if (input_grad) {
      *input_grad = delta * weights[0];
    }
  }
  return g;
}

Mlp::Gradients Mlp::zero_gradients() const {
  Gradients g;
  for (size_t l = 0; l < weights.size(); ++l) {
    g.d_weights.push_back(Eigen::MatrixXd::Zero(weights[l].rows(), weights[l].cols()));
    g.d_biases.push_back(Eigen::VectorXd::Zero(biases[l].size()));
  }
  return g;
}

Eigen::VectorXd Mlp::flatten_params() const {
  Eigen::VectorXd flat(param_count());
  int k = 0;
  for (size_t l = 0; l < weights.size(); ++l) {
    for (int j = 0; j < weights[l].cols(); ++j)
      for (int i = 0; i < weights[l].rows(); ++i) flat[k++] = weights[l](i, j);
    for (int i = 0; i < biases[l].size(); ++i) flat[k++] = biases[l][i];
  }
  return flat;
}

void Mlp::set_params(const Eigen::VectorXd& flat) {
  if (flat.size() != param_count()) throw std::invalid_argument("mlp: flat parameter size mismatch");
  int k = 0;
  for (size_t l = 0; l < weights.size(); ++l) {
    for (int j = 0; j < weights[l].cols(); ++j)
      for (int i = 0; i < weights[l].rows(); ++i) weights[l](i, j) = flat[k++];
    for (int i = 0; i < biases[l].size(); ++i) biases[l][i] = flat[k++];
  }
}

Eigen::VectorXd Mlp::flatten(const Gradients& grads) const {
  Eigen::VectorXd flat(param_count());
  int k = 0;
  for (size_t l = 0; l < weights.size(); ++l) {
    for (int j = 0; j < grads.d_weights[l].cols(); ++j)
      for (int i = 0; i < grads.d_weights[l].rows(); ++i) flat[k++] = grads.d_weights[l](i, j);
    for (int i = 0; i < grads.d_biases[l].size(); ++i) flat[k++] = grads.d_biases[l][i];
  }
  return flat;
}

void AdamState::update(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (params.size() != m.size() || grad.size() != m.size())
    throw std::invalid_argument("adam: dimension mismatch");
  if (!grad.allFinite()) throw std::runtime_error("adam: non-finite gradient");
  ++step;
  m = beta1 * m + (1.0 - beta1) * grad;
  v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  params -= (lr / bc1) * m.cwiseQuotient(((v / bc2).cwiseSqrt().array() + eps).matrix());
}

}  // namespace mbrl
