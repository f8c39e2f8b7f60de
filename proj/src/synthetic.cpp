#include "pdqn/market_data.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>

#include "pdqn/errors.hpp"
#include "pdqn/random.hpp"

namespace pdqn {

namespace {

constexpr std::size_t kSignalLookback = 5;
constexpr std::size_t kBarsPerQuarter = 63;

std::vector<Date> business_days(Date start, std::size_t n) {
  std::vector<Date> days;
  days.reserve(n);
  for (Date d = start; days.size() < n; d = d.plus_days(1)) {
    if (!d.is_weekend()) days.push_back(d);
  }
  return days;
}

}  // namespace

SeriesMap generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_days < 250) {
    throw ArgumentError("synthetic panel needs nDays >= 250, got " +
                        std::to_string(spec.n_days));
  }
  if (spec.n_assets == 0) throw ArgumentError("nAssets must be positive");
  if (spec.noise_std < 0) throw ArgumentError("noiseStd must be non-negative");

  const auto days = business_days(spec.start, spec.n_days);
  const int width = spec.n_assets < 10 ? 1 : static_cast<int>(std::log10(spec.n_assets - 1)) + 1;

  SeriesMap out;
  for (std::size_t i = 0; i < spec.n_assets; ++i) {
    std::string ticker = std::to_string(i);
    ticker = "SYN" + std::string(width - std::min<int>(width, ticker.size()), '0') + ticker;

    Rng rng = make_stream(spec.seed, i);
    const double beta = (i % 2 == 0) ? spec.signal_strength : -spec.signal_strength;

    AssetSeries s;
    s.ticker = ticker;
    s.bars.reserve(spec.n_days);

    // Per-asset fundamental levels, drifting slowly quarter to quarter.
    std::array<double, kFundamentalCount> level = {
        uniform(rng, 5.0, 50.0),  uniform(rng, 0.2, 0.7),  uniform(rng, 0.05, 0.3),
        uniform(rng, 0.02, 0.2),  uniform(rng, 0.05, 0.3), uniform(rng, 0.02, 0.15),
        uniform(rng, 0.8, 3.0),   uniform(rng, 0.2, 0.8),  0.0,
        uniform(rng, 0.1, 1.0),   0.0};
    double shares = uniform(rng, 1e7, 1e9);

    std::deque<double> recent;  // last kSignalLookback returns
    double close = uniform(rng, 20.0, 200.0);
    for (std::size_t t = 0; t < spec.n_days; ++t) {
      double open = close;
      if (t > 0) {
        double mean = 0.0;
        for (double r : recent) mean += r;
        mean /= static_cast<double>(kSignalLookback);
        double r = beta * mean + spec.noise_std * standard_normal(rng);
        r = std::max(r, -0.95);  // keeps prices positive under extreme noise
        recent.push_back(r);
        if (recent.size() > kSignalLookback) recent.pop_front();
        close = open * (1.0 + r);
      }
      const double up = 0.5 * spec.noise_std * std::abs(standard_normal(rng));
      const double down = 0.5 * spec.noise_std * std::abs(standard_normal(rng));
      PriceBar bar;
      bar.date = days[t];
      bar.open = open;
      bar.close = close;
      bar.high = std::max(open, close) * (1.0 + up);
      bar.low = std::min(open, close) * (1.0 - std::min(down, 0.5));
      bar.volume = std::round(uniform(rng, 5e5, 1.5e6));
      s.bars.push_back(bar);

      if (t % kBarsPerQuarter == 0) {
        if (t > 0) {
          for (std::size_t j = 0; j < kFundamentalCount; ++j) {
            level[j] *= std::exp(0.02 * standard_normal(rng));
          }
          shares *= std::exp(0.01 * standard_normal(rng));
        }
        auto v = level;
        v[8] = shares * close;
        v[10] = close;
        s.fundamentals.push_back(FundamentalSnapshot::from_values(days[t], v));
      }
    }
    out.emplace(ticker, std::move(s));
  }
  return out;
}

void write_prices_csv(const SeriesMap& series, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "date,ticker,open,high,low,close,volume\n";
  for (const auto& [ticker, s] : series) {
    for (const auto& b : s.bars) {
      out << b.date.iso() << ',' << ticker << ',' << format_double(b.open) << ','
          << format_double(b.high) << ',' << format_double(b.low) << ','
          << format_double(b.close) << ',' << format_double(b.volume) << '\n';
    }
  }
  if (!out) throw IoError("write failed for " + path.string());
}

void write_fundamentals_csv(const SeriesMap& series,
                            const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "date,ticker";
  for (auto name : kFundamentalNames) out << ',' << name;
  out << '\n';
  for (const auto& [ticker, s] : series) {
    for (const auto& f : s.fundamentals) {
      out << f.date.iso() << ',' << ticker;
      for (double v : f.values()) out << ',' << format_double(v);
      out << '\n';
    }
  }
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace pdqn
