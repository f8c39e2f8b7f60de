#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "pdqn/errors.hpp"
#include "pdqn/linalg.hpp"
#include "pdqn/random.hpp"

namespace pdqn {

/// Actions of the trading agent.
enum Action : int { kCash = 0, kInvest = 1 };

/// Weights and biases of a dense feed-forward net. Also used for gradients
/// and optimizer moments, which share the parameter shapes.
template <typename Scalar>
struct Parameters {
  std::vector<Matrix<Scalar>> weights;  // layer l: dims[l+1] x dims[l]
  std::vector<Vector<Scalar>> biases;   // layer l: dims[l+1]

  static Parameters zeros(std::span<const std::size_t> dims) {
    Parameters p;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      const auto rows = static_cast<Eigen::Index>(dims[l + 1]);
      const auto cols = static_cast<Eigen::Index>(dims[l]);
      p.weights.push_back(Matrix<Scalar>::Zero(rows, cols));
      p.biases.push_back(Vector<Scalar>::Zero(rows));
    }
    return p;
  }

  static Parameters zeros_like(const Parameters& other) {
    Parameters p;
    for (const auto& w : other.weights) p.weights.push_back(Matrix<Scalar>::Zero(w.rows(), w.cols()));
    for (const auto& b : other.biases) p.biases.push_back(Vector<Scalar>::Zero(b.size()));
    return p;
  }

  bool same_shape(const Parameters& other) const {
    if (weights.size() != other.weights.size() || biases.size() != other.biases.size()) return false;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != other.weights[l].rows() ||
          weights[l].cols() != other.weights[l].cols() ||
          biases[l].size() != other.biases[l].size()) {
        return false;
      }
    }
    return true;
  }

  bool all_finite() const {
    for (const auto& w : weights) if (!w.allFinite()) return false;
    for (const auto& b : biases) if (!b.allFinite()) return false;
    return true;
  }

  template <typename To>
  Parameters<To> cast() const {
    Parameters<To> p;
    for (const auto& w : weights) p.weights.push_back(w.template cast<To>());
    for (const auto& b : biases) p.biases.push_back(b.template cast<To>());
    return p;
  }

  friend bool operator==(const Parameters& a, const Parameters& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t l = 0; l < a.weights.size(); ++l) {
      if (a.weights[l] != b.weights[l] || a.biases[l] != b.biases[l]) return false;
    }
    return true;
  }
};

/// Feed-forward Q-network: ReLU hidden layers, identity output with one
/// unit per action.
template <typename Scalar>
class QNetwork {
 public:
  QNetwork() = default;

  explicit QNetwork(std::vector<std::size_t> dims) : dims_(std::move(dims)) {
    if (dims_.size() < 2) throw ArgumentError("a network needs at least input and output layers");
    for (auto d : dims_) {
      if (d == 0) throw ArgumentError("layer widths must be positive");
    }
    if (dims_.back() != 2) throw ArgumentError("Q-network output dimension must be 2");
    params_ = Parameters<Scalar>::zeros(dims_);
  }

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t layer_count() const { return params_.weights.size(); }

  Parameters<Scalar>& params() { return params_; }
  const Parameters<Scalar>& params() const { return params_; }

  template <typename To>
  QNetwork<To> cast() const {
    QNetwork<To> out(dims_);
    out.params() = params_.template cast<To>();
    return out;
  }

  friend bool operator==(const QNetwork& a, const QNetwork& b) {
    return a.dims_ == b.dims_ && a.params_ == b.params_;
  }

 private:
  std::vector<std::size_t> dims_;
  Parameters<Scalar> params_;
};

using QNet = QNetwork<double>;

/// Layer dims for the standard two-hidden-layer agent.
inline std::vector<std::size_t> agent_dims(std::size_t input, std::size_t hidden) {
  return {input, hidden, hidden, 2};
}

template <typename Scalar>
struct QValues {
  Scalar q0{};
  Scalar q1{};
};

/// Weights ~ U[-sqrt(6/fan_in), +sqrt(6/fan_in)] drawn row-major layer by
/// layer; biases zero.
template <typename Scalar = double>
QNetwork<Scalar> init(std::vector<std::size_t> dims, std::uint64_t seed) {
  QNetwork<Scalar> net(std::move(dims));
  Rng rng{splitmix64(seed)};
  for (auto& w : net.params().weights) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w.cols()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        w(r, c) = static_cast<Scalar>(uniform(rng, -bound, bound));
      }
    }
  }
  return net;
}

/// Q-values for a batch of states stored as columns (input_dim x batch).
/// Returns a 2 x batch matrix.
template <typename Scalar, typename Derived>
Matrix<Scalar> forward_batch(const QNetwork<Scalar>& net,
                             const Eigen::MatrixBase<Derived>& states) {
  if (states.rows() != static_cast<Eigen::Index>(net.input_dim())) {
    throw ArgumentError("state dimension " + std::to_string(states.rows()) +
                        " does not match network input " + std::to_string(net.input_dim()));
  }
  const auto& p = net.params();
  Matrix<Scalar> z = states.template cast<Scalar>();
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    Matrix<Scalar> a = (p.weights[l] * z).colwise() + p.biases[l];
    if (l + 1 < p.weights.size()) {
      z = a.cwiseMax(Scalar(0));
    } else {
      z = std::move(a);
    }
  }
  return z;
}

template <typename Scalar, typename Derived>
QValues<Scalar> forward(const QNetwork<Scalar>& net, const Eigen::MatrixBase<Derived>& state) {
  if (state.cols() != 1) throw ArgumentError("forward expects a single state column");
  const Matrix<Scalar> q = forward_batch(net, state);
  return {q(0, 0), q(1, 0)};
}

/// Greedy action; exact ties go to cash.
template <typename Scalar>
Action greedy_action(const QValues<Scalar>& q) {
  return q.q1 > q.q0 ? kInvest : kCash;
}

/// Terminal: reward. Otherwise reward + gamma * max(q0, q1).
template <typename Scalar>
Scalar td_target(Scalar reward, Scalar gamma, const QValues<Scalar>& next_q, bool terminal) {
  if (terminal) return reward;
  return reward + gamma * std::max(next_q.q0, next_q.q1);
}

template <typename Scalar>
struct LossAndGradient {
  Scalar loss{};
  Parameters<Scalar> grads;
};

/// Mean squared TD error over the batch, (target - Q(s, a))^2, and its
/// gradient. Targets are constants; only the taken action's output
/// receives gradient.
template <typename Scalar, typename Derived>
LossAndGradient<Scalar> loss_and_gradient(const QNetwork<Scalar>& net,
                                          const Eigen::MatrixBase<Derived>& states,
                                          std::span<const int> actions,
                                          const Vector<Scalar>& targets) {
  const Eigen::Index batch = states.cols();
  if (batch == 0) throw ArgumentError("loss_and_gradient on an empty batch");
  if (static_cast<Eigen::Index>(actions.size()) != batch || targets.size() != batch) {
    throw ArgumentError("batch states, actions and targets differ in length");
  }
  if (states.rows() != static_cast<Eigen::Index>(net.input_dim())) {
    throw ArgumentError("state dimension does not match network input");
  }
  const auto& p = net.params();
  const std::size_t layers = p.weights.size();

  std::vector<Matrix<Scalar>> inputs;       // input to layer l
  std::vector<Matrix<Scalar>> preacts;      // affine output of layer l
  inputs.reserve(layers);
  preacts.reserve(layers);
  inputs.push_back(states.template cast<Scalar>());
  for (std::size_t l = 0; l < layers; ++l) {
    preacts.push_back((p.weights[l] * inputs.back()).colwise() + p.biases[l]);
    if (l + 1 < layers) inputs.push_back(preacts.back().cwiseMax(Scalar(0)));
  }
  const Matrix<Scalar>& q = preacts.back();

  LossAndGradient<Scalar> out;
  out.grads = Parameters<Scalar>::zeros_like(p);
  Matrix<Scalar> delta = Matrix<Scalar>::Zero(q.rows(), batch);
  const Scalar inv_batch = Scalar(1) / static_cast<Scalar>(batch);
  Scalar loss = 0;
  for (Eigen::Index j = 0; j < batch; ++j) {
    const int a = actions[static_cast<std::size_t>(j)];
    if (a != kCash && a != kInvest) throw ArgumentError("actions must be 0 or 1");
    const Scalar err = targets(j) - q(a, j);
    loss += err * err;
    delta(a, j) = Scalar(-2) * err * inv_batch;
  }
  out.loss = loss * inv_batch;

  for (std::size_t l = layers; l-- > 0;) {
    out.grads.weights[l].noalias() = delta * inputs[l].transpose();
    out.grads.biases[l] = delta.rowwise().sum();
    if (l > 0) {
      Matrix<Scalar> back = p.weights[l].transpose() * delta;
      delta = (preacts[l - 1].array() > Scalar(0)).select(back, Scalar(0));
    }
  }
  return out;
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon_hat = 1e-8;
};

template <typename Scalar>
struct AdamState {
  Parameters<Scalar> first_moment;
  Parameters<Scalar> second_moment;
  std::uint64_t step_count = 0;
  AdamConfig config;

  static AdamState for_network(const QNetwork<Scalar>& net, AdamConfig config = {}) {
    AdamState s;
    s.first_moment = Parameters<Scalar>::zeros_like(net.params());
    s.second_moment = Parameters<Scalar>::zeros_like(net.params());
    s.config = config;
    return s;
  }
};

/// Bias-corrected Adam update of every parameter; increments step_count.
template <typename Scalar>
void adam_step(QNetwork<Scalar>& net, AdamState<Scalar>& adam, const Parameters<Scalar>& grads) {
  auto& p = net.params();
  if (!p.same_shape(grads) || !p.same_shape(adam.first_moment) ||
      !p.same_shape(adam.second_moment)) {
    throw ArgumentError("adam_step: gradient or moment shapes do not match the network");
  }
  adam.step_count += 1;
  const auto& c = adam.config;
  const Scalar b1 = static_cast<Scalar>(c.beta1);
  const Scalar b2 = static_cast<Scalar>(c.beta2);
  const Scalar lr = static_cast<Scalar>(c.learning_rate);
  const Scalar eps = static_cast<Scalar>(c.epsilon_hat);
  const Scalar t = static_cast<Scalar>(adam.step_count);
  const Scalar corr1 = Scalar(1) - std::pow(b1, t);
  const Scalar corr2 = Scalar(1) - std::pow(b2, t);

  auto update = [&](auto& theta, auto& m, auto& v, const auto& g) {
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.cwiseProduct(g);
    theta.array() -= lr * (m.array() / corr1) / ((v.array() / corr2).sqrt() + eps);
  };
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    update(p.weights[l], adam.first_moment.weights[l], adam.second_moment.weights[l],
           grads.weights[l]);
    update(p.biases[l], adam.first_moment.biases[l], adam.second_moment.biases[l],
           grads.biases[l]);
  }
}

}  // namespace pdqn
