#include "pdqn/features.hpp"

#include <algorithm>

namespace pdqn {

std::size_t FeatureSpec::dimension() const {
  return kFundamentalCount + ma_windows.size() * (include_exponential ? 2 : 1) +
         std_windows.size() + (position_dummy ? 1 : 0);
}

std::size_t FeatureSpec::warmup() const {
  std::size_t w = 1;
  for (auto m : ma_windows) w = std::max(w, m);
  for (auto s : std_windows) w = std::max(w, s);
  return w;
}

std::vector<std::string> FeatureSpec::feature_names() const {
  std::vector<std::string> names(kFundamentalNames.begin(), kFundamentalNames.end());
  for (auto w : ma_windows) names.push_back("ma" + std::to_string(w));
  if (include_exponential) {
    for (auto w : ma_windows) names.push_back("ema" + std::to_string(w));
  }
  for (auto w : std_windows) names.push_back("std" + std::to_string(w));
  if (position_dummy) names.push_back("position");
  return names;
}

std::uint32_t FeatureSpec::fingerprint() const {
  std::uint32_t h = 2166136261u;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 16777619u;
  };
  for (const auto& name : feature_names()) {
    for (char c : name) mix(static_cast<unsigned char>(c));
    mix('|');
  }
  return h;
}

VectorXd close_to_close_returns(const std::vector<PriceBar>& bars) {
  VectorXd r(bars.size() > 0 ? bars.size() - 1 : 0);
  for (std::size_t k = 1; k < bars.size(); ++k) {
    r(k - 1) = bars[k].close / bars[k - 1].close - 1.0;
  }
  return r;
}

std::vector<StateVector> assemble_states(const AssetSeries& series,
                                         const FeatureSpec& spec) {
  for (auto w : spec.std_windows) {
    if (w < 2) throw ArgumentError("rolling_std windows must be at least 2");
  }
  const std::size_t warm = spec.warmup();
  if (series.bars.size() < warm + 1) {
    throw ArgumentError("series " + series.ticker + " too short: " +
                        std::to_string(series.bars.size()) + " bars, need at least " +
                        std::to_string(warm + 1));
  }
  const VectorXd returns = close_to_close_returns(series.bars);
  const auto n_ret = returns.size();
  const auto first = static_cast<Eigen::Index>(warm) - 1;  // return index of bar `warm`

  // Each indicator is aligned so that column t refers to return index t
  // (bar t+1); entries before its window fills are never read.
  std::vector<VectorXd> indicators;
  auto aligned = [&](const VectorXd& v) {
    VectorXd full = VectorXd::Zero(n_ret);
    full.tail(v.size()) = v;
    return full;
  };
  for (auto w : spec.ma_windows) {
    indicators.push_back(aligned(arithmetic_ma(returns, w)));
  }
  if (spec.include_exponential) {
    for (auto w : spec.ma_windows) {
      indicators.push_back(aligned(exponential_ma(returns, w)));
    }
  }
  for (auto w : spec.std_windows) {
    indicators.push_back(aligned(rolling_std(returns, w)));
  }

  const std::size_t dim = spec.dimension();
  std::vector<StateVector> states;
  std::size_t snap = 0;
  bool have_snap = false;
  for (Eigen::Index t = first; t < n_ret; ++t) {
    const auto& bar = series.bars[static_cast<std::size_t>(t) + 1];
    while (snap < series.fundamentals.size() &&
           series.fundamentals[snap].date <= bar.date) {
      ++snap;
      have_snap = true;
    }
    if (!have_snap) continue;
    StateVector s;
    s.values = VectorXd::Zero(static_cast<Eigen::Index>(dim));
    s.date = bar.date;
    s.ticker = series.ticker;
    const auto f = series.fundamentals[snap - 1].values();
    Eigen::Index j = 0;
    for (double v : f) s.values(j++) = v;
    for (const auto& ind : indicators) s.values(j++) = ind(t);
    states.push_back(std::move(s));
  }
  return states;
}

Scaler fit_scaler(const std::vector<StateVector>& train_states,
                  const FeatureSpec& spec) {
  if (train_states.size() < 2) {
    throw ArgumentError("fit_scaler needs at least 2 training states, got " +
                        std::to_string(train_states.size()));
  }
  const auto n = static_cast<Eigen::Index>(spec.scaled_dimension());
  MatrixXd rows(static_cast<Eigen::Index>(train_states.size()), n);
  for (std::size_t i = 0; i < train_states.size(); ++i) {
    if (train_states[i].values.size() != static_cast<Eigen::Index>(spec.dimension())) {
      throw ArgumentError("state dimension does not match feature spec");
    }
    rows.row(static_cast<Eigen::Index>(i)) = train_states[i].values.head(n).transpose();
  }
  Scaler s;
  // Shifted by the first row so constant columns give their value exactly.
  const RowVector<double> ref = rows.row(0);
  s.means = (ref + (rows.rowwise() - ref).colwise().mean()).transpose();
  const MatrixXd centered = rows.rowwise() - s.means.transpose();
  s.stds = (centered.array().square().colwise().sum() / static_cast<double>(rows.rows() - 1))
               .sqrt()
               .max(kScalerStdFloor)
               .transpose();
  return s;
}

StateVector apply_scaler(const Scaler& scaler, StateVector state) {
  const auto n = scaler.means.size();
  if (state.values.size() < n) throw ArgumentError("state shorter than scaler");
  state.values.head(n) =
      ((state.values.head(n) - scaler.means).array() / scaler.stds.array()).matrix();
  return state;
}

void apply_scaler_rows(const Scaler& scaler, MatrixXd& rows) {
  const auto n = scaler.means.size();
  if (rows.cols() < n) throw ArgumentError("state rows narrower than scaler");
  rows.leftCols(n) = ((rows.leftCols(n).rowwise() - scaler.means.transpose()).array()
                          .rowwise() /
                      scaler.stds.transpose().array())
                         .matrix();
}

}  // namespace pdqn
