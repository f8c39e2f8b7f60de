#include <cmath>
#include <map>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "pdqn/checkpoint.hpp"
#include "pdqn/trainer.hpp"

using namespace pdqn;
using namespace pdqn::testing;

namespace {

const PreparedUniverse& small_universe() {
  static const PreparedUniverse data = [] {
    SyntheticSpec spec;
    spec.n_assets = 4;
    spec.n_days = 400;
    spec.seed = 3;
    return synthetic_universe(spec, 320, 360);
  }();
  return data;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.iterations = 600;
  c.memory_capacity = 200;
  c.gradient_interval = 10;
  c.evaluation_interval = 100;
  c.batch_size = 8;
  c.hidden_widths = {4};
  c.seed = 1;
  return c;
}

Transition labelled(double id, bool terminal = false) {
  Transition t;
  t.state = VectorXd::Constant(3, id);
  t.action = static_cast<int>(id) % 2;
  t.reward = id;
  t.terminal = terminal;
  if (!terminal) t.next_state = VectorXd::Constant(3, -id);
  return t;
}

}  // namespace

TEST_CASE("config validation") {
  CHECK_NOTHROW(TrainConfig{}.validate());
  auto c = TrainConfig{};
  c.memory_capacity = c.iterations + 1;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = TrainConfig{};
  c.evaluation_interval = c.gradient_interval - 1;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = TrainConfig{};
  c.epsilon = 1.5;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = TrainConfig{};
  c.hidden_widths.clear();
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = TrainConfig{};
  c.batch_size = 0;
  try {
    c.validate();
    FAIL("expected a usage error");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()).find("batchSize") != std::string::npos);
  }
}

TEST_CASE("replay memory") {
  SUBCASE("oldest-first eviction") {
    ReplayMemory m(2, 3);
    m.push(labelled(1));
    m.push(labelled(2));
    m.push(labelled(3));
    REQUIRE(m.size() == 2);
    CHECK(m.at(0).reward == 2);
    CHECK(m.at(1).reward == 3);
    CHECK(*m.at(1).next_state == VectorXd::Constant(3, -3.0));
  }
  SUBCASE("long FIFO sequence") {
    ReplayMemory m(7, 3);
    for (int i = 0; i < 100; ++i) {
      m.push(labelled(i, i % 5 == 0));
      const int n = std::min(i + 1, 7);
      REQUIRE(m.size() == static_cast<std::size_t>(n));
      for (int k = 0; k < n; ++k) CHECK(m.at(static_cast<std::size_t>(k)).reward == i - n + 1 + k);
    }
  }
  SUBCASE("terminal transitions carry no next state") {
    ReplayMemory m(3, 3);
    m.push(labelled(4, true));
    CHECK(m.at(0).terminal);
    CHECK_FALSE(m.at(0).next_state.has_value());
    auto bad = labelled(5, true);
    bad.next_state = VectorXd::Zero(3);
    CHECK_THROWS(m.push(bad));
    auto wrong = labelled(5);
    wrong.state = VectorXd::Zero(4);
    CHECK_THROWS(m.push(wrong));
  }
  SUBCASE("sampling") {
    ReplayMemory m(10, 3);
    Rng rng(2);
    CHECK_THROWS_AS(m.sample(4, rng), StateError);
    m.push(labelled(9));
    const auto b = m.sample(4, rng);
    CHECK(b.states.cols() == 4);
    for (Eigen::Index j = 0; j < 4; ++j) {
      CHECK(b.rewards(j) == 9);
      CHECK(b.states.col(j) == VectorXd::Constant(3, 9.0));
      CHECK(b.next_states.col(j) == VectorXd::Constant(3, -9.0));
    }
    for (int i = 0; i < 20; ++i) m.push(labelled(i));
    std::map<std::size_t, int> counts;
    for (int i = 0; i < 1000; ++i) {
      for (auto s : m.sample_indices(100, rng)) ++counts[s];
    }
    CHECK(counts.size() == 10);
    for (const auto& [slot, n] : counts) CHECK(std::abs(n / 100000.0 - 0.1) < 0.01);
  }
}

TEST_CASE("epsilon-greedy") {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    CHECK(epsilon_greedy({0.1, 0.7}, 0.0, rng) == kInvest);
    CHECK(epsilon_greedy({0.4, 0.4}, 0.0, rng) == kCash);
  }
  int ones = 0, randoms = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto c = epsilon_greedy_choice({0.9, 0.1}, 1.0, rng);
    ones += c.action;
    randoms += c.random;
  }
  CHECK(randoms == n);
  CHECK(std::abs(ones / double(n) - 0.5) < 0.01);
}

TEST_CASE("training with zero iterations") {
  TempDir dir("train0");
  auto c = tiny_config();
  c.iterations = 0;
  write_file(dir / "stale.qnet", "old");
  const auto r = train(small_universe(), c, dir / "stale.qnet");
  CHECK(r.evaluation_curve.empty());
  CHECK_FALSE(r.checkpoint_written);
  CHECK_FALSE(std::filesystem::exists(dir / "stale.qnet"));
  CHECK(r.best_validation_return == 0.0);
}

TEST_CASE("checkpoint tracks the best validation evaluation") {
  TempDir dir("best");
  auto c = tiny_config();
  c.iterations = 300;
  std::vector<QNet> seen;
  const std::vector<double> curve{0.1, 0.3, 0.2};
  TrainHooks hooks;
  hooks.evaluator = [&](const QNet& net) {
    seen.push_back(net);
    return curve[seen.size() - 1];
  };
  std::ostringstream log;
  hooks.progress = &log;
  const auto r = train(small_universe(), c, dir / "m.qnet", hooks);
  REQUIRE(r.evaluation_curve.size() == 3);
  CHECK(r.evaluation_curve[1].iteration == 200);
  CHECK(r.best_validation_return == 0.3);
  CHECK(r.checkpoint_written);
  REQUIRE(seen.size() == 3);
  CHECK_FALSE(seen[1] == seen[2]);
  const auto ck = load_checkpoint(dir / "m.qnet");
  CHECK(ck.net == seen[1]);
  CHECK(*r.best_network == seen[1]);
  CHECK(ck.fingerprint == small_universe().features.fingerprint());
  CHECK(ck.scaler.means == small_universe().scaler.means);
  std::size_t lines = 0;
  for (char ch : log.str()) lines += ch == '\n';
  CHECK(lines == 3);
  CHECK(log.str().rfind("100\t0.1\t0.1\t", 0) == 0);
}

TEST_CASE("no checkpoint when validation never beats zero") {
  TempDir dir("never");
  auto c = tiny_config();
  TrainHooks hooks;
  hooks.evaluator = [](const QNet&) { return 0.0; };
  const auto r = train(small_universe(), c, dir / "m.qnet", hooks);
  CHECK(r.evaluation_curve.size() == 6);
  CHECK_FALSE(r.checkpoint_written);
  CHECK_FALSE(std::filesystem::exists(dir / "m.qnet"));
  CHECK(r.note.find("no checkpoint") != std::string::npos);
  CHECK_FALSE(r.best_network.has_value());
}

TEST_CASE("gradient cadence and exploration share") {
  for (std::size_t n : {599u, 600u, 1234u}) {
    auto c = tiny_config();
    c.iterations = n;
    c.memory_capacity = 200;
    TrainHooks hooks;
    hooks.evaluator = [](const QNet&) { return -1.0; };
    std::size_t steps = 0;
    hooks.on_gradient_step = [&](std::size_t t, double loss) {
      CHECK(t % c.gradient_interval == 0);
      CHECK(std::isfinite(loss));
      ++steps;
    };
    const auto r = train(small_universe(), c, {}, hooks);
    CHECK(steps == n / c.gradient_interval);
    CHECK(r.gradient_steps == steps);
  }
  auto c = tiny_config();
  c.iterations = 20000;
  c.memory_capacity = 1000;
  c.gradient_interval = 1000;
  c.evaluation_interval = 5000;
  TrainHooks hooks;
  hooks.evaluator = [](const QNet&) { return -1.0; };
  const auto r = train(small_universe(), c, {}, hooks);
  CHECK(std::abs(r.random_actions / 20000.0 - c.epsilon) < 0.01);
  CHECK(r.episodes > 1);
}

TEST_CASE("training is deterministic for a seed") {
  TempDir dir("det");
  auto c = tiny_config();
  TrainHooks hooks;
  int calls = 0;
  hooks.evaluator = [&](const QNet&) { return 0.01 * ++calls; };
  const auto a = train(small_universe(), c, dir / "a.qnet", hooks);
  calls = 0;
  const auto b = train(small_universe(), c, dir / "b.qnet", hooks);
  CHECK(*a.best_network == *b.best_network);
  CHECK(a.random_actions == b.random_actions);
  CHECK(a.episodes == b.episodes);
  CHECK(read_file(dir / "a.qnet") == read_file(dir / "b.qnet"));
  c.seed = 2;
  calls = 0;
  const auto d = train(small_universe(), c, {}, hooks);
  CHECK_FALSE(*a.best_network == *d.best_network);
}

TEST_CASE("real validation backtest drives checkpointing") {
  auto c = tiny_config();
  const auto r = train(small_universe(), c);
  CHECK(r.evaluation_curve.size() == 6);
  double best = 0;
  for (const auto& p : r.evaluation_curve) best = std::max(best, p.validation_return);
  CHECK(r.best_validation_return == best);
  CHECK(r.checkpoint_written == (best > 0));
}

TEST_CASE("ensemble plan and training") {
  TrainConfig defaults;
  const auto plan = plan_ensemble(defaults, "ck");
  REQUIRE(plan.size() == 3);
  CHECK(plan[0].hidden_width == 32);
  CHECK(plan[2].hidden_width == 128);
  CHECK(plan[1].seed == defaults.seed + 1);
  CHECK(plan[2].checkpoint == std::filesystem::path("ck") / "member2_h128.qnet");
  CHECK_FALSE(init(agent_dims(29, 32), plan[0].seed) == init(agent_dims(29, 32), plan[1].seed));

  TempDir dir("ens");
  auto c = tiny_config();
  c.hidden_widths = {4, 6, 8};
  const auto widths = c.hidden_widths;
  const auto hooks_for = [](const EnsembleMember& m) {
    TrainHooks h;
    h.evaluator = [w = m.hidden_width](const QNet& net) {
      return 0.01 * double(w) + 1e-6 * net.params().weights[0](0, 0);
    };
    return h;
  };
  const auto reports = train_ensemble(small_universe(), c, dir.path(), 2, hooks_for);
  REQUIRE(reports.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const auto ck = load_checkpoint(dir / ("member" + std::to_string(i) + "_h" + std::to_string(widths[i]) + ".qnet"));
    CHECK(ck.net.dims() == std::vector<std::size_t>{29, widths[i], widths[i], 2});
    CHECK(reports[i].seed == c.seed + i);
  }
  const auto ens = to_ensemble(reports, small_universe());
  CHECK(ens.members.size() == 3);

  const auto failing = [](const EnsembleMember& m) {
    TrainHooks h;
    h.evaluator = [i = m.index](const QNet&) { return i == 1 ? -0.5 : 0.5; };
    return h;
  };
  try {
    train_ensemble(small_universe(), c, dir.path(), 1, failing);
    FAIL("expected a training error");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("member 1") != std::string::npos);
  }
}
