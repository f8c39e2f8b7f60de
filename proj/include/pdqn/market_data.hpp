#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "pdqn/date.hpp"

namespace pdqn {

struct PriceBar {
  Date date;
  double open = 0.0;
  double high = 0.0;
  double low = 0.0;
  double close = 0.0;
  double volume = 0.0;
};

inline constexpr std::size_t kFundamentalCount = 11;

/// Column names of the fundamentals CSV, in feature order.
inline constexpr std::array<std::string_view, kFundamentalCount>
    kFundamentalNames = {"salesPerShare",   "grossMargin",    "operatingMargin",
                         "netProfitMargin", "returnOnEquity", "returnOnAssets",
                         "currentRatio",    "debtRatio",      "marketCap",
                         "bookToMarket",    "latestClose"};

struct FundamentalSnapshot {
  Date date;
  double salesPerShare = 0.0;
  double grossMargin = 0.0;
  double operatingMargin = 0.0;
  double netProfitMargin = 0.0;
  double returnOnEquity = 0.0;
  double returnOnAssets = 0.0;
  double currentRatio = 0.0;
  double debtRatio = 0.0;
  double marketCap = 0.0;
  double bookToMarket = 0.0;
  double latestClose = 0.0;

  std::array<double, kFundamentalCount> values() const;
  static FundamentalSnapshot from_values(
      Date date, const std::array<double, kFundamentalCount>& v);
};

/// One asset's history after per-asset gap dropping.
struct AssetSeries {
  std::string ticker;
  std::vector<PriceBar> bars;
  std::vector<FundamentalSnapshot> fundamentals;
};

using PriceTable = std::map<std::string, std::vector<PriceBar>>;
using FundamentalTable = std::map<std::string, std::vector<FundamentalSnapshot>>;
using SeriesMap = std::map<std::string, AssetSeries>;

enum class Selection { Big, Small, Random, All };

Selection parse_selection(std::string_view name);
std::string_view to_string(Selection selection);

struct Universe {
  std::vector<AssetSeries> assets;
  Selection selection = Selection::All;
  std::size_t k = 0;
};

struct SplitSpec {
  Date validation_start;
  Date test_start;
  Date end;

  /// Throws ArgumentError unless validation_start <= test_start <= end.
  void validate() const;
};

struct SplitSeries {
  AssetSeries train;
  AssetSeries validation;
  AssetSeries test;
};

enum class Partition { Train, Validation, Test };

/// Partition a date belongs to, or nothing when it lies after `end`.
std::optional<Partition> partition_of(const SplitSpec& spec, Date date);

/// Reads `date,ticker,open,high,low,close,volume`. A row with an empty or
/// `NA`/`NaN` field is a gap and is dropped for that ticker only.
PriceTable load_prices(const std::filesystem::path& path);

/// Reads `date,ticker` plus the eleven fundamental columns (any order).
/// Rows with a missing field are dropped for that ticker only.
FundamentalTable load_fundamentals(const std::filesystem::path& path);

/// Joins price and fundamental tables into per-asset series. Tickers without
/// any price bar are ignored.
SeriesMap build_series(const PriceTable& prices,
                       const FundamentalTable& fundamentals);

/// Picks `k` assets by terminal market cap (the last snapshot's marketCap),
/// uniformly at random, or all of them.
Universe select_universe(const SeriesMap& all, Selection selection,
                         std::size_t k, std::uint64_t seed);

SplitSeries split(const AssetSeries& series, const SplitSpec& spec);

struct SyntheticSpec {
  std::size_t n_assets = 8;
  std::size_t n_days = 1500;
  double signal_strength = 0.3;
  double noise_std = 0.01;
  std::uint64_t seed = 0;
  Date start{2010, 1, 4};
};

/// Business-day panel whose returns follow
/// r[t+1] = beta_i * mean(r[t-4..t]) + eps, eps ~ N(0, noise_std),
/// with beta_i = +signal for even i and -signal for odd i.
SeriesMap generate_synthetic(const SyntheticSpec& spec);

/// Writes tables in the ingestion schema, values in shortest round-trip form.
void write_prices_csv(const SeriesMap& series, const std::filesystem::path& path);
void write_fundamentals_csv(const SeriesMap& series,
                            const std::filesystem::path& path);

/// Shortest decimal that parses back to the same double.
std::string format_double(double value);

}  // namespace pdqn
