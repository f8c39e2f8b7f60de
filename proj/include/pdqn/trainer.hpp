#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pdqn/backtest.hpp"
#include "pdqn/env.hpp"
#include "pdqn/qnet.hpp"
#include "pdqn/random.hpp"

namespace pdqn {

struct TrainConfig {
  double gamma = 0.9;
  double epsilon = 0.3;
  std::size_t iterations = 3'000'000;
  std::size_t memory_capacity = 300'000;
  std::size_t gradient_interval = 20;
  std::size_t evaluation_interval = 10'000;
  std::size_t batch_size = 1024;
  std::vector<std::size_t> hidden_widths{32, 64, 128};
  double cost_bps = 5.0;
  std::uint64_t seed = 0;
  AdamConfig adam;

  /// Throws UsageError naming the offending field.
  void validate() const;
};

struct Transition {
  VectorXd state;
  int action = kCash;
  double reward = 0.0;
  std::optional<VectorXd> next_state;  // empty exactly when terminal
  bool terminal = false;
};

struct TransitionBatch {
  MatrixXd states;       // dim x batch
  std::vector<int> actions;
  VectorXd rewards;
  MatrixXd next_states;  // dim x batch, zero columns for terminal samples
  std::vector<char> terminal;
};

/// Fixed-capacity ring buffer; evicts oldest first, samples uniformly with
/// replacement.
class ReplayMemory {
 public:
  ReplayMemory(std::size_t capacity, std::size_t dimension);

  void push(const Transition& t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }
  /// i = 0 is the oldest stored transition.
  Transition at(std::size_t i) const;
  TransitionBatch sample(std::size_t batch_size, Rng& rng) const;
  /// Slot indices drawn by `sample` (exposed for frequency checks).
  std::vector<std::size_t> sample_indices(std::size_t batch_size, Rng& rng) const;

 private:
  std::size_t slot(std::size_t i) const { return (head_ + i) % capacity_; }

  std::size_t capacity_;
  std::size_t dimension_;
  std::size_t head_ = 0;  // slot of the oldest element
  std::size_t size_ = 0;
  MatrixXd states_;
  MatrixXd next_states_;
  std::vector<int> actions_;
  std::vector<double> rewards_;
  std::vector<char> terminal_;
};

struct ExplorationChoice {
  int action = kCash;
  bool random = false;
};

/// With probability epsilon a fair coin, otherwise the greedy action (ties
/// to cash).
ExplorationChoice epsilon_greedy_choice(const QValues<double>& q, double epsilon, Rng& rng);

inline int epsilon_greedy(const QValues<double>& q, double epsilon, Rng& rng) {
  return epsilon_greedy_choice(q, epsilon, rng).action;
}

struct EvaluationPoint {
  std::size_t iteration = 0;
  double validation_return = 0.0;
};

struct TrainReport {
  std::size_t hidden_width = 0;
  std::uint64_t seed = 0;
  double best_validation_return = 0.0;  // CR_v*, starts at 0
  std::vector<EvaluationPoint> evaluation_curve;
  bool checkpoint_written = false;
  std::filesystem::path checkpoint_path;
  std::optional<QNet> best_network;
  std::size_t gradient_steps = 0;
  std::size_t random_actions = 0;
  std::size_t episodes = 0;
  std::string note;
};

struct TrainHooks {
  /// Replaces the validation backtest when set.
  std::function<double(const QNet&)> evaluator;
  std::function<void(std::size_t iteration, double loss)> on_gradient_step;
  /// Receives `iteration\tCR_v\tCR_v*\twall_seconds` per evaluation.
  std::ostream* progress = nullptr;
};

/// Stream ids for the independent random streams of one training run.
enum class RngStream : std::uint64_t { Init = 0, Asset = 1, Exploration = 2, Memory = 3 };

/// Deep Q-learning over randomly sampled single-asset episodes of the
/// training partition with validation checkpointing. Trains the first
/// entry of `config.hidden_widths`. When `checkpoint` is non-empty the best
/// parameters are written there each time CR_v* improves.
TrainReport train(const PreparedUniverse& data, const TrainConfig& config,
                  const std::filesystem::path& checkpoint = {}, const TrainHooks& hooks = {});

struct EnsembleMember {
  std::size_t index = 0;
  std::size_t hidden_width = 0;
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint;
};

std::vector<EnsembleMember> plan_ensemble(const TrainConfig& config,
                                          const std::filesystem::path& checkpoint_dir);

/// One independent train() per hidden width with seeds seed, seed+1, ...
/// Members run on up to `threads` threads. A member that fails or never
/// beats CR_v* = 0 fails the ensemble with a TrainingError naming it.
std::vector<TrainReport> train_ensemble(const PreparedUniverse& data, const TrainConfig& config,
                                        const std::filesystem::path& checkpoint_dir = {},
                                        std::size_t threads = 1,
                                        const std::function<TrainHooks(const EnsembleMember&)>&
                                            hooks_for = {});

class TrainingError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Collects the best networks of a trained ensemble.
Ensemble to_ensemble(const std::vector<TrainReport>& reports, const PreparedUniverse& data);

}  // namespace pdqn
