#include "pdqn/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

namespace pdqn {

Action ensemble_decide(std::span<const QNet> members, const VectorXd& state) {
  MatrixXd states = state;
  return static_cast<Action>(ensemble_decide_batch(members, states).front());
}

std::vector<int> ensemble_decide_batch(std::span<const QNet> members, const MatrixXd& states) {
  if (members.empty()) throw ArgumentError("ensemble has no members");
  MatrixXd sum = MatrixXd::Zero(2, states.cols());
  for (const auto& m : members) sum += forward_batch(m, states);
  const MatrixXd mean = sum / static_cast<double>(members.size());
  std::vector<int> actions(static_cast<std::size_t>(states.cols()));
  for (Eigen::Index j = 0; j < states.cols(); ++j) {
    actions[static_cast<std::size_t>(j)] = mean(1, j) > mean(0, j) ? kInvest : kCash;
  }
  return actions;
}

LedgerRow portfolio_step(const std::vector<std::string>& prev_held,
                         const std::map<std::string, int>& decisions,
                         const std::map<std::string, double>& returns, const CostModel& cost) {
  if (cost.rate < 0) throw ArgumentError("cost rate must be non-negative");
  LedgerRow row;
  for (const auto& [ticker, action] : decisions) {
    row.active.push_back(ticker);
    if (action == kInvest) row.held.push_back(ticker);
  }
  if (row.held.empty()) return row;

  const std::set<std::string> prev(prev_held.begin(), prev_held.end());
  const double w_prev = prev.empty() ? 0.0 : 1.0 / static_cast<double>(prev.size());
  row.weight = 1.0 / static_cast<double>(row.held.size());

  double sum = 0.0;
  double increase = 0.0;
  for (const auto& t : row.held) {
    const auto it = returns.find(t);
    if (it == returns.end()) throw DataError("missing return for held ticker " + t);
    sum += it->second;
    const double before = prev.count(t) ? w_prev : 0.0;
    increase += std::max(0.0, row.weight - before);
  }
  row.gross_return = sum / static_cast<double>(row.held.size());
  row.cost_paid = cost.rate * increase;
  row.net_return = row.gross_return - row.cost_paid;
  return row;
}

BacktestLedger run_policy(const MarketPanel& panel, const CostModel& cost, const Policy& policy,
                          std::string strategy) {
  BacktestLedger ledger;
  ledger.strategy = std::move(strategy);
  std::vector<std::size_t> cursor(panel.assets.size(), 0);
  std::vector<bool> held(panel.assets.size(), false);
  std::vector<std::string> prev_held;
  double wealth = 1.0;
  const auto dim = static_cast<Eigen::Index>(panel.dimension);

  for (std::size_t c = 0; c + 1 < panel.calendar.size(); ++c) {
    DecisionContext ctx;
    ctx.date = panel.calendar[c];
    ctx.realized_on = panel.calendar[c + 1];
    for (std::size_t i = 0; i < panel.assets.size(); ++i) {
      const auto& a = panel.assets[i];
      auto& k = cursor[i];
      while (k < a.state_dates.size() && a.state_dates[k] < ctx.date) ++k;
      if (k == a.state_dates.size() || a.state_dates[k] != ctx.date) continue;
      const auto next = a.state_bars[k] + 1;
      if (next >= a.bar_dates.size() || a.bar_dates[next] != ctx.realized_on ||
          !std::isfinite(a.realized[next])) {
        continue;
      }
      ctx.assets.push_back(i);
      ctx.rows.push_back(k);
      ctx.held_before.push_back(held[i]);
    }
    ctx.states.resize(dim, static_cast<Eigen::Index>(ctx.assets.size()));
    for (std::size_t j = 0; j < ctx.assets.size(); ++j) {
      const auto col = static_cast<Eigen::Index>(j);
      ctx.states.col(col) =
          panel.assets[ctx.assets[j]].states.row(static_cast<Eigen::Index>(ctx.rows[j])).transpose();
      ctx.states(dim - 1, col) = ctx.held_before[j] ? 1.0 : 0.0;
    }

    const auto actions = ctx.assets.empty() ? std::vector<int>{} : policy(panel, ctx);
    if (actions.size() != ctx.assets.size()) {
      throw StateError("policy returned " + std::to_string(actions.size()) + " actions for " +
                       std::to_string(ctx.assets.size()) + " assets");
    }
    std::map<std::string, int> decisions;
    std::map<std::string, double> returns;
    for (std::size_t j = 0; j < ctx.assets.size(); ++j) {
      const auto& a = panel.assets[ctx.assets[j]];
      decisions[a.ticker] = actions[j];
      returns[a.ticker] = a.realized[a.state_bars[ctx.rows[j]] + 1];
    }
    LedgerRow row = portfolio_step(prev_held, decisions, returns, cost);
    row.date = ctx.realized_on;

    std::fill(held.begin(), held.end(), false);
    for (std::size_t j = 0; j < ctx.assets.size(); ++j) {
      if (actions[j] == kInvest) held[ctx.assets[j]] = true;
    }
    prev_held = row.held;
    wealth *= 1.0 + row.net_return;
    ledger.wealth.push_back(wealth);
    ledger.rows.push_back(std::move(row));
  }
  return ledger;
}

namespace {

void check_compatible(std::span<const QNet> members, std::uint32_t fingerprint,
                      const MarketPanel& panel) {
  if (fingerprint != panel.fingerprint) {
    throw CompatibilityError("feature fingerprint mismatch: checkpoint " +
                             std::to_string(fingerprint) + " vs pipeline " +
                             std::to_string(panel.fingerprint));
  }
  for (const auto& m : members) {
    if (m.input_dim() != panel.dimension) {
      throw CompatibilityError("network input " + std::to_string(m.input_dim()) +
                               " does not match feature dimension " +
                               std::to_string(panel.dimension));
    }
  }
}

}  // namespace

BacktestLedger run_backtest(const Ensemble& ensemble, const MarketPanel& panel,
                            const CostModel& cost) {
  check_compatible(ensemble.members, ensemble.fingerprint, panel);
  std::span<const QNet> members(ensemble.members);
  return run_policy(
      panel, cost,
      [members](const MarketPanel&, const DecisionContext& ctx) {
        return ensemble_decide_batch(members, ctx.states);
      },
      "agent");
}

BacktestLedger run_backtest(const QNet& net, const MarketPanel& panel, const CostModel& cost) {
  std::span<const QNet> members(&net, 1);
  check_compatible(members, panel.fingerprint, panel);
  return run_policy(
      panel, cost,
      [members](const MarketPanel&, const DecisionContext& ctx) {
        return ensemble_decide_batch(members, ctx.states);
      },
      "agent");
}

std::string_view to_string(BenchmarkKind kind) {
  switch (kind) {
    case BenchmarkKind::BuyAndHold: return "buyAndHold";
    case BenchmarkKind::Momentum: return "momentum";
    case BenchmarkKind::Reversion: return "reversion";
  }
  return "?";
}

double trailing_mean_return(const AssetPanel& asset, std::size_t bar, std::size_t lookback) {
  if (lookback == 0 || bar < lookback || bar >= asset.close_returns.size()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  double sum = 0.0;
  for (std::size_t k = bar + 1 - lookback; k <= bar; ++k) sum += asset.close_returns[k];
  return sum / static_cast<double>(lookback);
}

BacktestLedger run_benchmark(const BenchmarkSpec& spec, const MarketPanel& panel,
                             const CostModel& cost) {
  if (spec.lookback < 1) throw ArgumentError("benchmark lookback must be at least 1");
  if (spec.kind != BenchmarkKind::BuyAndHold && panel.calendar.size() < spec.lookback + 1) {
    throw ArgumentError("partition has " + std::to_string(panel.calendar.size()) +
                        " dates, active benchmarks need at least " +
                        std::to_string(spec.lookback + 1));
  }
  const auto kind = spec.kind;
  const auto lookback = spec.lookback;
  return run_policy(
      panel, cost,
      [kind, lookback](const MarketPanel& p, const DecisionContext& ctx) {
        std::vector<int> actions(ctx.assets.size(), kCash);
        for (std::size_t j = 0; j < ctx.assets.size(); ++j) {
          if (kind == BenchmarkKind::BuyAndHold) {
            actions[j] = kInvest;
            continue;
          }
          const auto& a = p.assets[ctx.assets[j]];
          const double m = trailing_mean_return(a, a.state_bars[ctx.rows[j]], lookback);
          if (kind == BenchmarkKind::Momentum && m > 0) actions[j] = kInvest;
          if (kind == BenchmarkKind::Reversion && m < 0) actions[j] = kInvest;
        }
        return actions;
      },
      std::string(to_string(kind)));
}

double cumulative_return(const BacktestLedger& ledger) {
  if (ledger.rows.empty()) throw ArgumentError("cumulative return of an empty ledger");
  double w = 1.0;
  for (const auto& r : ledger.rows) w *= 1.0 + r.net_return;
  return w - 1.0;
}

void write_wealth_csv(const BacktestLedger& ledger, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "date,netReturn,wealth\n";
  for (std::size_t i = 0; i < ledger.rows.size(); ++i) {
    out << ledger.rows[i].date.iso() << ',' << format_double(ledger.rows[i].net_return) << ','
        << format_double(ledger.wealth[i]) << '\n';
  }
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::filesystem::path> report(const std::vector<ReportEntry>& entries,
                                          const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> written;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  const auto summary_path = dir / "summary.csv";
  std::ofstream summary(summary_path, std::ios::binary | std::ios::trunc);
  if (!summary) throw IoError("cannot write " + summary_path.string());
  summary << "costBps,portfolioSize,portfolioType,strategy,cumulativeReturn\n";
  for (const auto& e : entries) {
    const auto sub = dir / ("bps_" + format_double(e.cost_bps));
    std::filesystem::create_directories(sub, ec);
    if (ec) throw IoError("cannot create " + sub.string() + ": " + ec.message());
    const auto path = sub / ("wealth_" + e.ledger.strategy + ".csv");
    write_wealth_csv(e.ledger, path);
    written.push_back(path);
    summary << format_double(e.cost_bps) << ',' << e.portfolio_size << ',' << e.portfolio_type
            << ',' << e.ledger.strategy << ',' << format_double(cumulative_return(e.ledger))
            << '\n';
  }
  if (!summary) throw IoError("write failed for " + summary_path.string());
  written.push_back(summary_path);
  return written;
}

}  // namespace pdqn
