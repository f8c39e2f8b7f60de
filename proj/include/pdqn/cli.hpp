#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "pdqn/config.hpp"
#include "pdqn/trainer.hpp"

namespace pdqn {

inline constexpr std::string_view kToolVersion = "1.0.0";

/// Worker cap from PORTFOLIO_DQN_THREADS, else the hardware concurrency.
std::size_t worker_threads();

/// Loads the configured data files and returns the selected universe.
Universe load_universe(const RunConfig& config);

/// Trains the ensemble, writes one checkpoint per member, a progress log per
/// member and `manifest.txt` into `out_dir`.
std::vector<TrainReport> cmd_train(const RunConfig& config, const std::filesystem::path& out_dir,
                                   std::ostream& log);

/// Loads checkpoints from `checkpoint_dir`, backtests the agent and the
/// three benchmarks on the test partition for every cost level and writes
/// the report into `out_dir`.
std::vector<std::filesystem::path> cmd_backtest(const RunConfig& config,
                                                const std::filesystem::path& checkpoint_dir,
                                                const std::filesystem::path& out_dir,
                                                std::ostream& log);

/// Writes `prices.csv` and `fundamentals.csv` for the configured synthetic
/// panel.
std::vector<std::filesystem::path> cmd_synth(const RunConfig& config,
                                             const std::filesystem::path& out_dir);

/// Entry point behind the executable; returns the process exit code
/// (0 ok, 1 usage/config, 2 data, 3 numeric abort).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace pdqn
