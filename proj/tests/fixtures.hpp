#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "pdqn/env.hpp"
#include "pdqn/market_data.hpp"
#include "pdqn/random.hpp"

namespace pdqn::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("pdqn_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Consecutive business days starting at `start`.
inline std::vector<Date> business_days(Date start, std::size_t n) {
  std::vector<Date> d;
  for (Date x = start; d.size() < n; x = x.plus_days(1)) {
    if (!x.is_weekend()) d.push_back(x);
  }
  return d;
}

/// Asset whose open equals the previous close and whose closes follow
/// `closes`; one fundamental snapshot on the first day unless disabled.
inline AssetSeries series_from_closes(const std::string& ticker, const std::vector<Date>& dates,
                                      const std::vector<double>& closes, double market_cap = 1e9,
                                      bool with_fundamentals = true) {
  AssetSeries s;
  s.ticker = ticker;
  for (std::size_t k = 0; k < closes.size(); ++k) {
    PriceBar b;
    b.date = dates[k];
    b.open = k == 0 ? closes[0] : closes[k - 1];
    b.close = closes[k];
    b.high = std::max(b.open, b.close);
    b.low = std::min(b.open, b.close);
    b.volume = 1000;
    s.bars.push_back(b);
  }
  if (with_fundamentals) {
    FundamentalSnapshot f{};
    f.date = dates.front();
    f.salesPerShare = 10;
    f.grossMargin = 0.4;
    f.operatingMargin = 0.2;
    f.netProfitMargin = 0.1;
    f.returnOnEquity = 0.15;
    f.returnOnAssets = 0.05;
    f.currentRatio = 1.5;
    f.debtRatio = 0.5;
    f.marketCap = market_cap;
    f.bookToMarket = 0.5;
    f.latestClose = closes.front();
    s.fundamentals.push_back(f);
  }
  return s;
}

/// Random-walk closes with the given daily volatility.
inline std::vector<double> random_closes(Rng& rng, std::size_t n, double vol, double start = 100.0) {
  std::vector<double> c{start};
  while (c.size() < n) c.push_back(c.back() * (1.0 + vol * standard_normal(rng)));
  return c;
}

/// `n` random-walk assets over `len` business days with intraday noise.
/// After the warm-up each bar of asset i is dropped with probability
/// `gap_probability`, and when `gap_every` names a positive stride for asset
/// i every bar whose index is a multiple of it is dropped as well.
inline Universe random_universe(std::size_t n, std::size_t len, std::uint64_t seed,
                                const std::vector<std::size_t>& gap_every = {},
                                double gap_probability = 0.0) {
  Rng rng(seed);
  const auto days = business_days(Date(2012, 1, 2), len);
  Universe u;
  for (std::size_t i = 0; i < n; ++i) {
    auto s = series_from_closes("A" + std::to_string(i), days, random_closes(rng, len, 0.02));
    for (auto& b : s.bars) {
      b.open *= 1.0 + 0.005 * standard_normal(rng);
      b.high = std::max({b.high, b.open, b.close});
      b.low = std::min({b.low, b.open, b.close});
    }
    const std::size_t stride = i < gap_every.size() ? gap_every[i] : 0;
    std::vector<PriceBar> kept;
    for (std::size_t k = 0; k < s.bars.size(); ++k) {
      const bool stride_gap = stride > 0 && k % stride == 0;
      const bool random_gap = gap_probability > 0 && uniform01(rng) < gap_probability;
      if (k < 210 || !(stride_gap || random_gap)) kept.push_back(s.bars[k]);
    }
    s.bars = std::move(kept);
    u.assets.push_back(std::move(s));
  }
  return u;
}

inline SplitSpec split_at(const Universe& u, std::size_t validation, std::size_t test) {
  const auto& bars = u.assets.front().bars;
  return {bars[validation].date, bars[test].date, bars.back().date};
}

/// Synthetic universe split at bar indices `validation` and `test` (of the
/// first asset) with the last bar as the end date.
inline PreparedUniverse synthetic_universe(const SyntheticSpec& spec, std::size_t validation,
                                           std::size_t test) {
  const auto series = generate_synthetic(spec);
  const auto universe = select_universe(series, Selection::All, 0, 0);
  const auto& bars = universe.assets.front().bars;
  return prepare_universe(universe, {bars[validation].date, bars[test].date, bars.back().date});
}

}  // namespace pdqn::testing
