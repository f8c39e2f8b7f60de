#include <cmath>
#include <cstring>

#include "doctest.h"
#include "fixtures.hpp"
#include "oracles.hpp"
#include "pdqn/checkpoint.hpp"
#include "pdqn/qnet.hpp"

using namespace pdqn;
using namespace pdqn::testing;

namespace {

struct RandomBatch {
  MatrixXd states;
  std::vector<int> actions;
  VectorXd targets;
};

RandomBatch random_batch(Rng& rng, std::size_t dim, Eigen::Index n) {
  RandomBatch b;
  b.states.resize(static_cast<Eigen::Index>(dim), n);
  for (Eigen::Index i = 0; i < b.states.size(); ++i) b.states.data()[i] = standard_normal(rng);
  b.targets.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    b.actions.push_back(coin(rng) ? 1 : 0);
    b.targets(j) = standard_normal(rng);
  }
  return b;
}

}  // namespace

TEST_CASE("network construction") {
  CHECK_THROWS_AS(QNet({3, 4, 3}), ArgumentError);
  CHECK_THROWS_AS(QNet({3, 0, 2}), ArgumentError);
  CHECK_THROWS_AS(QNet({2}), ArgumentError);
  const QNet net(agent_dims(29, 32));
  CHECK(net.layer_count() == 3);
  CHECK(net.params().weights[0].rows() == 32);
  CHECK(net.params().weights[0].cols() == 29);
  CHECK(net.params().weights[2].rows() == 2);
}

TEST_CASE("init is seeded, bounded and starts with zero biases") {
  const auto a = init(agent_dims(29, 64), 5);
  const auto b = init(agent_dims(29, 64), 5);
  const auto c = init(agent_dims(29, 64), 6);
  CHECK(a == b);
  CHECK_FALSE(a == c);
  for (std::size_t l = 0; l < a.layer_count(); ++l) {
    const auto& w = a.params().weights[l];
    const double bound = std::sqrt(6.0 / double(w.cols()));
    CHECK(w.cwiseAbs().maxCoeff() <= bound);
    CHECK(w.cwiseAbs().maxCoeff() > 0.5 * bound);
    CHECK(a.params().biases[l].isZero(0));
  }
}

TEST_CASE("forward pass") {
  SUBCASE("zero network") {
    const QNet net(agent_dims(5, 8));
    const auto q = forward(net, VectorXd::Random(5));
    CHECK(q.q0 == 0.0);
    CHECK(q.q1 == 0.0);
  }
  SUBCASE("hand-built 1-1-1-2 path") {
    QNet net({1, 1, 1, 2});
    auto& p = net.params();
    p.weights[0](0, 0) = 2.0;
    p.biases[0](0) = -1.0;
    p.weights[1](0, 0) = 3.0;
    p.biases[1](0) = 0.5;
    p.weights[2] << 1.0, -2.0;
    p.biases[2] << 0.25, 0.0;
    // x = 2: h1 = relu(3) = 3, h2 = relu(9.5) = 9.5, q = (9.75, -19).
    auto q = forward(net, VectorXd::Constant(1, 2.0));
    CHECK(q.q0 == 9.75);
    CHECK(q.q1 == -19.0);
    // x = 0: h1 = relu(-1) = 0, h2 = 0.5, q = (0.75, -1).
    q = forward(net, VectorXd::Zero(1));
    CHECK(q.q0 == 0.75);
    CHECK(q.q1 == -1.0);
    CHECK(greedy_action(q) == kCash);
  }
  SUBCASE("output layer linearity and purity") {
    auto net = init(agent_dims(6, 16), 3);
    const VectorXd x = VectorXd::LinSpaced(6, -1, 1);
    const auto q = forward(net, x);
    const auto again = forward(net, x);
    CHECK(std::memcmp(&q, &again, sizeof q) == 0);
    net.params().weights.back() *= 2.0;
    const auto q2 = forward(net, x);
    CHECK(q2.q0 == doctest::Approx(2 * q.q0).epsilon(1e-14));
    CHECK(q2.q1 == doctest::Approx(2 * q.q1).epsilon(1e-14));
  }
  SUBCASE("batch columns match single calls") {
    const auto net = init(agent_dims(4, 8), 1);
    const MatrixXd s = MatrixXd::Random(4, 7);
    const MatrixXd q = forward_batch(net, s);
    for (Eigen::Index j = 0; j < 7; ++j) {
      const auto one = forward(net, VectorXd(s.col(j)));
      CHECK(q(0, j) == doctest::Approx(one.q0).epsilon(1e-15));
      CHECK(q(1, j) == doctest::Approx(one.q1).epsilon(1e-15));
    }
  }
  CHECK_THROWS_AS(forward(QNet(agent_dims(3, 4)), VectorXd::Zero(4)), ArgumentError);
  CHECK(greedy_action(QValues<double>{0.1, 0.1}) == kCash);
  CHECK(greedy_action(QValues<double>{0.1, 0.2}) == kInvest);
}

TEST_CASE("td_target") {
  CHECK(td_target(0.013, 0.9, QValues<double>{5, 7}, true) == 0.013);
  CHECK(td_target(0.01, 0.9, QValues<double>{0.2, 0.5}, false) == doctest::Approx(0.46));
  CHECK(td_target(0.01, 0.0, QValues<double>{0.2, 0.5}, false) == 0.01);
}

TEST_CASE("loss and gradient") {
  SUBCASE("targets equal predictions") {
    const auto net = init(agent_dims(3, 5), 2);
    Rng rng(1);
    auto b = random_batch(rng, 3, 6);
    const MatrixXd q = forward_batch(net, b.states);
    for (Eigen::Index j = 0; j < 6; ++j) b.targets(j) = q(b.actions[static_cast<std::size_t>(j)], j);
    const auto lg = loss_and_gradient(net, b.states, b.actions, b.targets);
    CHECK(lg.loss == 0.0);
    for (const auto& w : lg.grads.weights) CHECK(w.isZero(0));
  }
  SUBCASE("scalar chain rule by hand") {
    QNet net({1, 1, 2});
    net.params().weights[0](0, 0) = 0.5;
    net.params().biases[0](0) = 0.1;
    net.params().weights[1] << 2.0, -1.0;
    net.params().biases[1] << 0.3, 0.0;
    // x = 2: h = 1.1, q1 = -1.1, err = y - q1 = 1.1 + 1.1.
    const MatrixXd x = MatrixXd::Constant(1, 1, 2.0);
    const std::vector<int> a{1};
    const VectorXd y = VectorXd::Constant(1, 1.1);
    const auto lg = loss_and_gradient(net, x, a, y);
    const double err = 2.2;
    CHECK(lg.loss == doctest::Approx(err * err));
    CHECK(lg.grads.weights[1](1, 0) == doctest::Approx(-2 * err * 1.1));
    CHECK(lg.grads.biases[1](1) == doctest::Approx(-2 * err));
    CHECK(lg.grads.weights[1](0, 0) == 0.0);
    CHECK(lg.grads.weights[0](0, 0) == doctest::Approx(-2 * err * -1.0 * 2.0));
    CHECK(lg.grads.biases[0](0) == doctest::Approx(-2 * err * -1.0));
  }
  SUBCASE("finite differences on random nets") {
    Rng rng(42);
    for (int trial = 0; trial < 10; ++trial) {
      const auto net = random_network(agent_dims(5, 4), 100 + trial);
      const auto b = random_batch(rng, 5, 8);
      const auto lg = loss_and_gradient(net, b.states, b.actions, b.targets);
      const auto fd = finite_difference_gradient(net, b.states, b.actions, b.targets);
      CHECK(max_relative_error(lg.grads, fd) < 1e-5);
    }
  }
  SUBCASE("untaken action row has no influence") {
    auto net = init(agent_dims(4, 6), 8);
    Rng rng(3);
    auto b = random_batch(rng, 4, 10);
    std::fill(b.actions.begin(), b.actions.end(), 1);
    const auto before = loss_and_gradient(net, b.states, b.actions, b.targets);
    CHECK(before.grads.weights.back().row(0).isZero(0));
    CHECK(before.grads.biases.back()(0) == 0.0);
    net.params().weights.back().row(0).array() += 3.0;
    net.params().biases.back()(0) -= 1.0;
    CHECK(loss_and_gradient(net, b.states, b.actions, b.targets).loss == before.loss);
  }
  SUBCASE("malformed batches") {
    const auto net = init(agent_dims(2, 3), 1);
    const MatrixXd s = MatrixXd::Zero(2, 2);
    CHECK_THROWS_AS(loss_and_gradient(net, s, std::vector<int>{0}, VectorXd(VectorXd::Zero(2))), ArgumentError);
    CHECK_THROWS_AS(loss_and_gradient(net, s, std::vector<int>{0, 2}, VectorXd(VectorXd::Zero(2))), ArgumentError);
  }
}

TEST_CASE("adam") {
  SUBCASE("first step moves by the learning rate against the gradient sign") {
    QNet net({1, 2});
    auto adam = AdamState<double>::for_network(net);
    auto g = Parameters<double>::zeros_like(net.params());
    g.weights[0](0, 0) = 0.37;
    g.weights[0](1, 0) = -2.5;
    adam_step(net, adam, g);
    CHECK(adam.step_count == 1);
    CHECK(net.params().weights[0](0, 0) == doctest::Approx(-1e-3).epsilon(1e-6));
    CHECK(net.params().weights[0](1, 0) == doctest::Approx(1e-3).epsilon(1e-6));
    CHECK(net.params().biases[0].isZero(0));
  }
  SUBCASE("zero gradients leave parameters alone") {
    auto net = init(agent_dims(3, 4), 9);
    const auto start = net;
    auto adam = AdamState<double>::for_network(net);
    const auto zero = Parameters<double>::zeros_like(net.params());
    for (int i = 0; i < 50; ++i) adam_step(net, adam, zero);
    CHECK(net == start);
    CHECK(adam.step_count == 50);
  }
  SUBCASE("two steps against a hand recursion") {
    const double lr = 0.01, b1 = 0.8, b2 = 0.99, eps = 1e-6, g = 0.5, w0 = 0.3;
    QNet net({1, 2});
    net.params().weights[0](0, 0) = w0;
    auto adam = AdamState<double>::for_network(net, {lr, b1, b2, eps});
    auto grads = Parameters<double>::zeros_like(net.params());
    grads.weights[0](0, 0) = g;
    adam_step(net, adam, grads);
    adam_step(net, adam, grads);
    double w = w0, m = 0, v = 0;
    for (int t = 1; t <= 2; ++t) {
      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g * g;
      const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
      w -= lr * mh / (std::sqrt(vh) + eps);
    }
    CHECK(net.params().weights[0](0, 0) == doctest::Approx(w).epsilon(1e-14));
  }
  SUBCASE("shape mismatch") {
    QNet net({1, 2});
    auto adam = AdamState<double>::for_network(net);
    CHECK_THROWS_AS(adam_step(net, adam, Parameters<double>::zeros(std::vector<std::size_t>{2, 2})),
                    ArgumentError);
  }
}

TEST_CASE("checkpoint format") {
  const auto net = init(agent_dims(29, 32), 4);
  const Scaler sc{VectorXd::LinSpaced(28, -1, 1), VectorXd::LinSpaced(28, 0.5, 2)};
  const auto bytes = encode_checkpoint({net, sc, 0xabcdef01u});
  const auto back = decode_checkpoint(bytes);
  CHECK(back.net == net);
  CHECK(back.scaler.means == sc.means);
  CHECK(back.scaler.stds == sc.stds);
  CHECK(back.fingerprint == 0xabcdef01u);
  CHECK(encode_checkpoint(back) == bytes);

  auto bad = bytes;
  std::memcpy(bad.data(), "XXXX", 4);
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{20}, bytes.size() - 1}) {
    CHECK_THROWS_AS(decode_checkpoint({bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut)}),
                    FormatError);
  }
  auto longer = bytes;
  longer.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(longer), FormatError);

  TempDir dir("ckpt");
  save_checkpoint(net, sc, 7, dir / "m.qnet");
  CHECK(load_checkpoint(dir / "m.qnet").net == net);
  CHECK_FALSE(std::filesystem::exists(dir / "m.qnet.tmp"));
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.qnet"), IoError);
}
