#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mbrl/rng.hpp"

namespace mbrl {

enum class Activation { Tanh, Relu, Identity };

/// Fully connected network, float64 throughout. Hidden layers share one
/// activation; the output layer is linear. Inputs are row-per-sample
/// matrices, so forward(X) has shape [n, out_dim].
struct Mlp {
  std::vector<Eigen::MatrixXd> weights;  // weights[l]: [out, in]
  std::vector<Eigen::VectorXd> biases;
  Activation hidden_act = Activation::Tanh;

  /// Caches per-layer pre-activations and activations for backward().
  struct Tape {
    std::vector<Eigen::MatrixXd> acts;  // acts[0] = input, acts[L] = output
    std::vector<Eigen::MatrixXd> pre;   // pre[l] = acts[l-1] W_l^T + b_l
  };

  struct Gradients {
    std::vector<Eigen::MatrixXd> d_weights;
    std::vector<Eigen::VectorXd> d_biases;
  };

  /// widths = {in, hidden..., out}. Weights start uniform in
  /// +-1/sqrt(fan_in); the output layer is additionally scaled.
  static Mlp create(const std::vector<int>& widths, Activation act, Rng& rng,
                    double last_layer_scale = 1.0);

  int input_dim() const { return static_cast<int>(weights.front().cols()); }
  int output_dim() const { return static_cast<int>(weights.back().rows()); }
  int n_layers() const { return static_cast<int>(weights.size()); }
  int param_count() const;

  Eigen::MatrixXd forward(const Eigen::MatrixXd& input) const;
  Eigen::MatrixXd forward(const Eigen::MatrixXd& input, Tape& tape) const;

  /// Backpropagates upstream [n, out_dim] through the tape. Returns parameter
  /// gradients summed over samples; optionally also the gradient wrt inputs.
  Gradients backward(const Tape& tape, const Eigen::MatrixXd& upstream,
                     Eigen::MatrixXd* input_grad = nullptr) const;

  Gradients zero_gradients() const;

  /// Round-trip parameter packing; unflatten(flatten()) is the identity.
  Eigen::VectorXd flatten_params() const;
  void set_params(const Eigen::VectorXd& flat);
  Eigen::VectorXd flatten(const Gradients& grads) const;
};

/// Adam with bias correction. Caller owns the parameter vector.
struct AdamState {
  Eigen::VectorXd m, v;
  long step = 0;
  double lr;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  AdamState(int dim, double lr_)
      : m(Eigen::VectorXd::Zero(dim)), v(Eigen::VectorXd::Zero(dim)), lr(lr_) {}

  /// One descent update in place. Throws on non-finite gradient entries.
  void update(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
};

}  // namespace mbrl
