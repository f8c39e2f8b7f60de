#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pdqn/env.hpp"
#include "pdqn/qnet.hpp"

namespace pdqn {

/// Proportional cost in return units (1 bp = 0.0001), charged on weight
/// increases only.
struct CostModel {
  double rate = 0.0;

  static CostModel from_bps(double bps) { return {bps * 1e-4}; }
};

struct LedgerRow {
  Date date;  // date the period's return is realized
  std::vector<std::string> active;
  std::vector<std::string> held;
  double weight = 0.0;  // 1/|held|, 0 when in cash
  double gross_return = 0.0;
  double cost_paid = 0.0;
  double net_return = 0.0;
};

struct BacktestLedger {
  std::string strategy;
  std::vector<LedgerRow> rows;
  std::vector<double> wealth;  // wealth after each row, starting from 1
};

/// Members applied jointly to scaled states of a given feature pipeline.
struct Ensemble {
  std::vector<QNet> members;
  Scaler scaler;
  std::uint32_t fingerprint = 0;
};

/// Mean Q-values across members; invest iff mean q1 > mean q0.
Action ensemble_decide(std::span<const QNet> members, const VectorXd& state);

/// Same rule for a batch of states stored as columns.
std::vector<int> ensemble_decide_batch(std::span<const QNet> members, const MatrixXd& states);

/// One rebalance: equal weights over tickers with action 1, cost
/// C * sum_i max(0, w_new - w_prev), gross return the mean held return.
LedgerRow portfolio_step(const std::vector<std::string>& prev_held,
                         const std::map<std::string, int>& decisions,
                         const std::map<std::string, double>& returns, const CostModel& cost);

/// Candidates of one period: assets with a state on `date` that trade on
/// the next calendar date.
struct DecisionContext {
  Date date;
  Date realized_on;
  std::vector<std::size_t> assets;  // indices into MarketPanel::assets
  std::vector<std::size_t> rows;    // state row per candidate
  std::vector<bool> held_before;    // membership in the previous portfolio
  MatrixXd states;                  // dim x candidates, dummy = held_before
};

using Policy = std::function<std::vector<int>(const MarketPanel&, const DecisionContext&)>;

/// Walks the panel's calendar, asks `policy` for per-asset actions each
/// period and books the resulting equal-weight portfolio.
BacktestLedger run_policy(const MarketPanel& panel, const CostModel& cost, const Policy& policy,
                          std::string strategy);

/// Throws CompatibilityError when the ensemble was fitted on a different
/// feature pipeline than the panel.
BacktestLedger run_backtest(const Ensemble& ensemble, const MarketPanel& panel,
                            const CostModel& cost);

/// Greedy single-network backtest (validation during training).
BacktestLedger run_backtest(const QNet& net, const MarketPanel& panel, const CostModel& cost);

enum class BenchmarkKind { BuyAndHold, Momentum, Reversion };

std::string_view to_string(BenchmarkKind kind);

struct BenchmarkSpec {
  BenchmarkKind kind = BenchmarkKind::BuyAndHold;
  std::size_t lookback = 5;
};

/// Mean close-to-close return of the `lookback` bars ending at `bar`
/// (NaN when the window reaches before the first return).
double trailing_mean_return(const AssetPanel& asset, std::size_t bar, std::size_t lookback);

BacktestLedger run_benchmark(const BenchmarkSpec& spec, const MarketPanel& panel,
                             const CostModel& cost);

/// prod(1 + net) - 1; throws ArgumentError on an empty ledger.
double cumulative_return(const BacktestLedger& ledger);

struct ReportEntry {
  double cost_bps = 0.0;
  std::size_t portfolio_size = 0;
  std::string portfolio_type;
  BacktestLedger ledger;
};

/// `date,netReturn,wealth`, one row per period.
void write_wealth_csv(const BacktestLedger& ledger, const std::filesystem::path& path);

/// Writes `bps_<cost>/wealth_<strategy>.csv` per entry and `summary.csv`
/// (`costBps,portfolioSize,portfolioType,strategy,cumulativeReturn`).
/// Returns the written paths.
std::vector<std::filesystem::path> report(const std::vector<ReportEntry>& entries,
                                          const std::filesystem::path& dir);

}  // namespace pdqn
