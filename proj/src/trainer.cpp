#include "pdqn/trainer.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

#include "pdqn/checkpoint.hpp"

namespace pdqn {

void TrainConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) {
    throw UsageError("invalid " + field + ": " + why);
  };
  if (!(gamma >= 0.0 && gamma <= 1.0)) fail("gamma", "must lie in [0, 1]");
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) fail("epsilon", "must lie in [0, 1]");
  if (memory_capacity == 0) fail("memory", "must be positive");
  if (iterations > 0 && memory_capacity > iterations) {
    fail("memory", "must not exceed iterations");
  }
  if (gradient_interval == 0) fail("gradientInterval", "must be positive");
  if (evaluation_interval == 0) fail("evaluationInterval", "must be positive");
  if (evaluation_interval < gradient_interval) {
    fail("evaluationInterval", "must be at least gradientInterval");
  }
  if (batch_size == 0) fail("batchSize", "must be positive");
  if (hidden_widths.empty()) fail("hiddenWidths", "needs at least one width");
  for (auto w : hidden_widths) {
    if (w == 0) fail("hiddenWidths", "widths must be positive");
  }
  if (!(cost_bps >= 0.0)) fail("costBps", "must be non-negative");
  if (!(adam.learning_rate > 0.0)) fail("learningRate", "must be positive");
}

ReplayMemory::ReplayMemory(std::size_t capacity, std::size_t dimension)
    : capacity_(capacity),
      dimension_(dimension),
      states_(static_cast<Eigen::Index>(dimension), static_cast<Eigen::Index>(capacity)),
      next_states_(static_cast<Eigen::Index>(dimension), static_cast<Eigen::Index>(capacity)),
      actions_(capacity),
      rewards_(capacity),
      terminal_(capacity) {
  if (capacity == 0) throw ArgumentError("replay memory capacity must be positive");
}

void ReplayMemory::push(const Transition& t) {
  if (t.state.size() != static_cast<Eigen::Index>(dimension_)) {
    throw ArgumentError("transition state has the wrong dimension");
  }
  if (t.terminal == t.next_state.has_value()) {
    throw ArgumentError("terminal transitions carry no next state, others must");
  }
  std::size_t s;
  if (size_ < capacity_) {
    s = slot(size_);
    ++size_;
  } else {
    s = head_;
    head_ = (head_ + 1) % capacity_;
  }
  const auto col = static_cast<Eigen::Index>(s);
  states_.col(col) = t.state;
  if (t.next_state) {
    next_states_.col(col) = *t.next_state;
  } else {
    next_states_.col(col).setZero();
  }
  actions_[s] = t.action;
  rewards_[s] = t.reward;
  terminal_[s] = t.terminal ? 1 : 0;
}

Transition ReplayMemory::at(std::size_t i) const {
  if (i >= size_) throw ArgumentError("replay memory index out of range");
  const auto col = static_cast<Eigen::Index>(slot(i));
  Transition t;
  t.state = states_.col(col);
  t.action = actions_[slot(i)];
  t.reward = rewards_[slot(i)];
  t.terminal = terminal_[slot(i)] != 0;
  if (!t.terminal) t.next_state = next_states_.col(col);
  return t;
}

std::vector<std::size_t> ReplayMemory::sample_indices(std::size_t batch_size, Rng& rng) const {
  if (size_ == 0) throw StateError("cannot sample from an empty replay memory");
  std::vector<std::size_t> idx(batch_size);
  for (auto& i : idx) i = slot(uniform_index(rng, size_));
  return idx;
}

TransitionBatch ReplayMemory::sample(std::size_t batch_size, Rng& rng) const {
  const auto idx = sample_indices(batch_size, rng);
  TransitionBatch b;
  const auto n = static_cast<Eigen::Index>(batch_size);
  const auto dim = static_cast<Eigen::Index>(dimension_);
  b.states.resize(dim, n);
  b.next_states.resize(dim, n);
  b.rewards.resize(n);
  b.actions.resize(batch_size);
  b.terminal.resize(batch_size);
  for (std::size_t j = 0; j < batch_size; ++j) {
    const auto col = static_cast<Eigen::Index>(idx[j]);
    const auto out = static_cast<Eigen::Index>(j);
    b.states.col(out) = states_.col(col);
    b.next_states.col(out) = next_states_.col(col);
    b.rewards(out) = rewards_[idx[j]];
    b.actions[j] = actions_[idx[j]];
    b.terminal[j] = terminal_[idx[j]];
  }
  return b;
}

ExplorationChoice epsilon_greedy_choice(const QValues<double>& q, double epsilon, Rng& rng) {
  if (uniform01(rng) < epsilon) return {coin(rng) ? kInvest : kCash, true};
  return {greedy_action(q), false};
}

TrainReport train(const PreparedUniverse& data, const TrainConfig& config,
                  const std::filesystem::path& checkpoint, const TrainHooks& hooks) {
  config.validate();
  const std::size_t width = config.hidden_widths.front();
  const std::size_t dim = data.features.dimension();
  const double cost = CostModel::from_bps(config.cost_bps).rate;

  TrainReport report;
  report.hidden_width = width;
  report.seed = config.seed;
  report.checkpoint_path = checkpoint;
  if (!checkpoint.empty()) {
    std::error_code ec;
    std::filesystem::remove(checkpoint, ec);
  }
  if (config.iterations == 0) {
    report.note = "no iterations requested; no checkpoint written";
    return report;
  }

  Rng init_rng = make_stream(config.seed, static_cast<std::uint64_t>(RngStream::Init));
  Rng asset_rng = make_stream(config.seed, static_cast<std::uint64_t>(RngStream::Asset));
  Rng explore_rng = make_stream(config.seed, static_cast<std::uint64_t>(RngStream::Exploration));
  Rng memory_rng = make_stream(config.seed, static_cast<std::uint64_t>(RngStream::Memory));

  QNet net = init(agent_dims(dim, width), init_rng());
  auto adam = AdamState<double>::for_network(net, config.adam);
  ReplayMemory memory(config.memory_capacity, dim);

  const CostModel validation_cost = CostModel::from_bps(config.cost_bps);
  auto evaluate = [&](const QNet& current) -> double {
    if (hooks.evaluator) return hooks.evaluator(current);
    const auto ledger = run_backtest(current, data.validation, validation_cost);
    if (ledger.rows.empty()) {
      throw ArgumentError("validation partition has no tradable periods");
    }
    return cumulative_return(ledger);
  };

  const auto started = std::chrono::steady_clock::now();
  Episode episode = reset(data.train, cost, asset_rng);
  report.episodes = 1;
  std::size_t omega = 0;

  for (std::size_t t = 1; t <= config.iterations; ++t) {
    if (++omega == config.evaluation_interval) {
      const double cr = evaluate(net);
      report.evaluation_curve.push_back({t, cr});
      if (cr > report.best_validation_return) {
        report.best_validation_return = cr;
        report.best_network = net;
        if (!checkpoint.empty()) {
          save_checkpoint(net, data.scaler, data.features.fingerprint(), checkpoint);
        }
        report.checkpoint_written = true;
      }
      if (hooks.progress) {
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        *hooks.progress << t << '\t' << format_double(cr) << '\t'
                        << format_double(report.best_validation_return) << '\t'
                        << format_double(std::round(secs * 1000.0) / 1000.0) << '\n';
        hooks.progress->flush();
      }
      omega = 0;
    }

    VectorXd state = episode.state();
    const auto choice = epsilon_greedy_choice(forward(net, state), config.epsilon, explore_rng);
    if (choice.random) ++report.random_actions;
    StepResult result = step(episode, choice.action);
    memory.push({std::move(state), choice.action, result.reward, std::move(result.next_state),
                 result.terminal});

    if (t % config.gradient_interval == 0 && memory.size() >= config.batch_size) {
      const auto batch = memory.sample(config.batch_size, memory_rng);
      const MatrixXd next_q = forward_batch(net, batch.next_states);
      VectorXd targets(batch.rewards.size());
      for (Eigen::Index j = 0; j < targets.size(); ++j) {
        targets(j) = td_target(batch.rewards(j), config.gamma,
                               QValues<double>{next_q(0, j), next_q(1, j)},
                               batch.terminal[static_cast<std::size_t>(j)] != 0);
      }
      auto lg = loss_and_gradient(net, batch.states, batch.actions, targets);
      if (!std::isfinite(lg.loss) || !lg.grads.all_finite()) {
        throw NumericError("non-finite loss at iteration " + std::to_string(t) +
                           " (width " + std::to_string(width) + ", seed " +
                           std::to_string(config.seed) + ")");
      }
      adam_step(net, adam, lg.grads);
      ++report.gradient_steps;
      if (hooks.on_gradient_step) hooks.on_gradient_step(t, lg.loss);
    }

    if (result.terminal) {
      episode = reset(data.train, cost, asset_rng);
      ++report.episodes;
    }
  }

  if (!report.checkpoint_written) {
    report.note = "no validation evaluation exceeded CR_v* = 0; no checkpoint written";
  }
  return report;
}

std::vector<EnsembleMember> plan_ensemble(const TrainConfig& config,
                                          const std::filesystem::path& checkpoint_dir) {
  std::vector<EnsembleMember> members;
  for (std::size_t i = 0; i < config.hidden_widths.size(); ++i) {
    EnsembleMember m;
    m.index = i;
    m.hidden_width = config.hidden_widths[i];
    m.seed = config.seed + i;
    if (!checkpoint_dir.empty()) {
      m.checkpoint = checkpoint_dir / ("member" + std::to_string(i) + "_h" +
                                       std::to_string(m.hidden_width) + ".qnet");
    }
    members.push_back(m);
  }
  return members;
}

std::vector<TrainReport> train_ensemble(
    const PreparedUniverse& data, const TrainConfig& config,
    const std::filesystem::path& checkpoint_dir, std::size_t threads,
    const std::function<TrainHooks(const EnsembleMember&)>& hooks_for) {
  config.validate();
  const auto plan = plan_ensemble(config, checkpoint_dir);
  std::vector<TrainReport> reports(plan.size());
  std::vector<std::exception_ptr> errors(plan.size());

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < plan.size(); i = next++) {
      try {
        TrainConfig member = config;
        member.hidden_widths = {plan[i].hidden_width};
        member.seed = plan[i].seed;
        const TrainHooks hooks = hooks_for ? hooks_for(plan[i]) : TrainHooks{};
        reports[i] = train(data, member, plan[i].checkpoint, hooks);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(threads, plan.size()));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t k = 0; k < n_threads; ++k) pool.emplace_back(worker);
  }

  for (std::size_t i = 0; i < plan.size(); ++i) {
    const std::string who = "ensemble member " + std::to_string(i) + " (width " +
                            std::to_string(plan[i].hidden_width) + ", seed " +
                            std::to_string(plan[i].seed) + ")";
    if (errors[i]) {
      try {
        std::rethrow_exception(errors[i]);
      } catch (const std::exception& e) {
        throw TrainingError(who + " failed: " + e.what());
      }
    }
    if (config.iterations > 0 && !reports[i].checkpoint_written) {
      throw TrainingError(who + ": " + reports[i].note);
    }
  }
  return reports;
}

Ensemble to_ensemble(const std::vector<TrainReport>& reports, const PreparedUniverse& data) {
  Ensemble e;
  e.scaler = data.scaler;
  e.fingerprint = data.features.fingerprint();
  for (const auto& r : reports) {
    if (!r.best_network) {
      throw StateError("ensemble member of width " + std::to_string(r.hidden_width) +
                       " has no checkpointed network");
    }
    e.members.push_back(*r.best_network);
  }
  return e;
}

}  // namespace pdqn
