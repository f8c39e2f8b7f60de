#include "pdqn/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pdqn {

ReturnConvention parse_return_convention(std::string_view name) {
  if (name == "open-to-close" || name == "openToClose") return ReturnConvention::OpenToClose;
  if (name == "close-to-close" || name == "closeToClose") return ReturnConvention::CloseToClose;
  throw ArgumentError("unknown return convention '" + std::string(name) +
                      "' (expected open-to-close or close-to-close)");
}

std::string_view to_string(ReturnConvention convention) {
  return convention == ReturnConvention::OpenToClose ? "open-to-close" : "close-to-close";
}

std::vector<double> bar_returns(const std::vector<PriceBar>& bars, ReturnConvention convention) {
  std::vector<double> r(bars.size(), std::numeric_limits<double>::quiet_NaN());
  for (std::size_t k = 0; k < bars.size(); ++k) {
    if (convention == ReturnConvention::OpenToClose) {
      r[k] = bars[k].close / bars[k].open - 1.0;
    } else if (k > 0) {
      r[k] = bars[k].close / bars[k - 1].close - 1.0;
    }
  }
  return r;
}

namespace {

struct AssetWork {
  const AssetSeries* series = nullptr;
  std::vector<Date> bar_dates;
  std::vector<double> realized;
  std::vector<double> close_returns;
  std::vector<StateVector> states;
};

MarketPanel build_panel(Partition partition, const SplitSpec& split,
                        const std::vector<AssetWork>& work, const FeatureSpec& features,
                        const Scaler& scaler, ReturnConvention convention) {
  MarketPanel panel;
  panel.partition = partition;
  panel.convention = convention;
  panel.fingerprint = features.fingerprint();
  panel.dimension = features.dimension();

  auto inside = [&](Date d) { return partition_of(split, d) == partition; };

  std::map<Date, std::pair<double, std::size_t>> sums;
  for (const auto& w : work) {
    for (std::size_t b = 0; b < w.bar_dates.size(); ++b) {
      if (!inside(w.bar_dates[b])) continue;
      auto& [sum, count] = sums[w.bar_dates[b]];
      if (std::isfinite(w.realized[b])) {
        sum += w.realized[b];
        ++count;
      }
    }
  }
  for (const auto& [date, sc] : sums) {
    panel.calendar.push_back(date);
    if (sc.second > 0) panel.universe_mean[date] = sc.first / static_cast<double>(sc.second);
  }

  const auto dim = static_cast<Eigen::Index>(features.dimension());
  for (const auto& w : work) {
    AssetPanel a;
    std::vector<const StateVector*> rows;
    for (const auto& s : w.states) {
      if (inside(s.date)) rows.push_back(&s);
    }
    if (rows.empty()) continue;
    a.ticker = w.series->ticker;
    a.bar_dates = w.bar_dates;
    a.realized = w.realized;
    a.close_returns = w.close_returns;
    a.states.resize(static_cast<Eigen::Index>(rows.size()), dim);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto it = std::lower_bound(a.bar_dates.begin(), a.bar_dates.end(), rows[i]->date);
      const auto b = static_cast<std::size_t>(it - a.bar_dates.begin());
      a.state_dates.push_back(rows[i]->date);
      a.state_bars.push_back(b);
      a.states.row(static_cast<Eigen::Index>(i)) = rows[i]->values.transpose();
      a.states(static_cast<Eigen::Index>(i), dim - 1) = 0.0;

      const auto next = b + 1;
      if (next < a.bar_dates.size() && inside(a.bar_dates[next]) &&
          std::isfinite(a.realized[next])) {
        a.usable_rows.push_back(i);
        a.next_return.push_back(a.realized[next]);
        a.next_universe_mean.push_back(panel.universe_mean.at(a.bar_dates[next]));
      }
    }
    apply_scaler_rows(scaler, a.states);
    panel.assets.push_back(std::move(a));
  }
  return panel;
}

}  // namespace

PreparedUniverse prepare_universe(const Universe& universe, const SplitSpec& split,
                                  const FeatureSpec& features, ReturnConvention convention,
                                  const std::optional<Scaler>& scaler) {
  if (!features.position_dummy) {
    throw ArgumentError("the trading environment requires the position dummy feature");
  }
  split.validate();

  std::vector<AssetWork> work;
  for (const auto& asset : universe.assets) {
    AssetWork w;
    w.series = &asset;
    for (const auto& bar : asset.bars) w.bar_dates.push_back(bar.date);
    w.realized = bar_returns(asset.bars, convention);
    w.close_returns = bar_returns(asset.bars, ReturnConvention::CloseToClose);
    if (asset.bars.size() >= features.warmup() + 1) {
      w.states = assemble_states(asset, features);
    }
    work.push_back(std::move(w));
  }

  PreparedUniverse out;
  out.features = features;
  if (scaler) {
    if (scaler->means.size() != static_cast<Eigen::Index>(features.scaled_dimension()) ||
        scaler->stds.size() != scaler->means.size()) {
      throw CompatibilityError("scaler has " + std::to_string(scaler->means.size()) +
                               " features, feature spec expects " +
                               std::to_string(features.scaled_dimension()));
    }
    out.scaler = *scaler;
  } else {
    std::vector<StateVector> train_states;
    for (const auto& w : work) {
      for (const auto& s : w.states) {
        if (partition_of(split, s.date) == Partition::Train) train_states.push_back(s);
      }
    }
    out.scaler = fit_scaler(train_states, features);
  }

  out.train = build_panel(Partition::Train, split, work, features, out.scaler, convention);
  out.validation = build_panel(Partition::Validation, split, work, features, out.scaler, convention);
  out.test = build_panel(Partition::Test, split, work, features, out.scaler, convention);
  return out;
}

VectorXd Episode::state() const {
  VectorXd s = states.row(static_cast<Eigen::Index>(cursor)).transpose();
  s(s.size() - 1) = static_cast<double>(last_action);
  return s;
}

Episode make_episode(const MarketPanel& panel, std::size_t asset, double cost) {
  if (cost < 0) throw ArgumentError("transaction cost must be non-negative");
  const auto& a = panel.assets.at(asset);
  if (a.usable_rows.empty()) {
    throw ArgumentError("asset " + a.ticker + " has no usable state in this partition");
  }
  Episode e;
  e.asset = asset;
  e.ticker = a.ticker;
  e.cost = cost;
  e.states.resize(static_cast<Eigen::Index>(a.usable_rows.size()), a.states.cols());
  for (std::size_t i = 0; i < a.usable_rows.size(); ++i) {
    e.states.row(static_cast<Eigen::Index>(i)) =
        a.states.row(static_cast<Eigen::Index>(a.usable_rows[i]));
  }
  e.returns_next = a.next_return;
  e.universe_mean_returns = a.next_universe_mean;
  return e;
}

Episode reset(const MarketPanel& panel, double cost, Rng& rng) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < panel.assets.size(); ++i) {
    if (!panel.assets[i].usable_rows.empty()) eligible.push_back(i);
  }
  if (eligible.empty()) throw ArgumentError("cannot reset: no asset has a usable state");
  const auto pick = eligible[uniform_index(rng, eligible.size())];
  return make_episode(panel, pick, cost);
}

StepResult step(Episode& e, int action) {
  if (e.done) throw StateError("step on a terminal episode of " + e.ticker);
  if (action != kCash && action != kInvest) throw ArgumentError("action must be 0 or 1");
  StepResult r;
  r.reward = reward(action, e.last_action, e.returns_next[e.cursor],
                    e.universe_mean_returns[e.cursor], e.cost);
  e.last_action = action;
  if (e.cursor + 1 >= e.returns_next.size()) {
    e.done = true;
    r.terminal = true;
  } else {
    ++e.cursor;
    r.next_state = e.state();
  }
  return r;
}

}  // namespace pdqn
