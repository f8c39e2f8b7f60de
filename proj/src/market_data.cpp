#include "pdqn/market_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "pdqn/errors.hpp"
#include "pdqn/random.hpp"

namespace pdqn {

std::array<double, kFundamentalCount> FundamentalSnapshot::values() const {
  return {salesPerShare,  grossMargin,    operatingMargin, netProfitMargin,
          returnOnEquity, returnOnAssets, currentRatio,    debtRatio,
          marketCap,      bookToMarket,   latestClose};
}

FundamentalSnapshot FundamentalSnapshot::from_values(
    Date date, const std::array<double, kFundamentalCount>& v) {
  return {date, v[0], v[1], v[2], v[3], v[4], v[5],
          v[6], v[7], v[8], v[9], v[10]};
}

Selection parse_selection(std::string_view name) {
  if (name == "big") return Selection::Big;
  if (name == "small") return Selection::Small;
  if (name == "random") return Selection::Random;
  if (name == "all") return Selection::All;
  throw ArgumentError("unknown universe selection '" + std::string(name) +
                      "' (expected big, small, random or all)");
}

std::string_view to_string(Selection selection) {
  switch (selection) {
    case Selection::Big: return "big";
    case Selection::Small: return "small";
    case Selection::Random: return "random";
    case Selection::All: return "all";
  }
  return "?";
}

void SplitSpec::validate() const {
  if (!(validation_start <= test_start && test_start <= end)) {
    throw ArgumentError("split dates must satisfy validationStart <= testStart <= end");
  }
}

std::optional<Partition> partition_of(const SplitSpec& spec, Date date) {
  if (date < spec.validation_start) return Partition::Train;
  if (date < spec.test_start) return Partition::Validation;
  if (date <= spec.end) return Partition::Test;
  return std::nullopt;
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

namespace {

// Minimal comma-separated reader; the ingestion formats never quote fields.
class CsvReader {
 public:
  explicit CsvReader(const std::filesystem::path& path)
      : path_(path), in_(path) {
    if (!in_) throw IoError("cannot open " + path.string());
  }

  std::vector<std::string> header() {
    std::vector<std::string> fields;
    if (!next(fields)) {
      throw SchemaError(path_.string() + ": missing header line");
    }
    return fields;
  }

  bool next(std::vector<std::string>& fields) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      fields.clear();
      std::size_t start = 0;
      while (true) {
        const auto comma = line.find(',', start);
        fields.push_back(trim(line.substr(start, comma - start)));
        if (comma == std::string::npos) break;
        start = comma + 1;
      }
      return true;
    }
    return false;
  }

  std::size_t line() const { return line_; }
  std::string where() const {
    return path_.string() + " line " + std::to_string(line_);
  }

 private:
  static std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
  }

  std::filesystem::path path_;
  std::ifstream in_;
  std::size_t line_ = 0;
};

bool is_missing(const std::string& field) {
  return field.empty() || field == "NA" || field == "NaN" || field == "nan" ||
         field == "null";
}

double parse_number(const std::string& field, const CsvReader& reader,
                    std::string_view column) {
  double value = 0.0;
  auto [ptr, ec] =
      std::from_chars(field.data(), field.data() + field.size(), value);
  if (ec != std::errc{} || ptr != field.data() + field.size() ||
      !std::isfinite(value)) {
    throw ParseError(reader.where() + ": cannot parse " + std::string(column) +
                     " value '" + field + "'");
  }
  return value;
}

std::map<std::string, std::size_t> column_index(
    const std::vector<std::string>& header,
    const std::vector<std::string_view>& required, const std::string& file) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!index.emplace(header[i], i).second) {
      throw SchemaError(file + ": duplicate column '" + header[i] + "'");
    }
  }
  for (auto name : required) {
    if (!index.count(std::string(name))) {
      throw SchemaError(file + ": missing column '" + std::string(name) + "'");
    }
  }
  return index;
}

template <typename Row>
void sort_by_date(std::map<std::string, std::vector<Row>>& table) {
  for (auto& [ticker, rows] : table) {
    std::sort(rows.begin(), rows.end(),
              [](const Row& a, const Row& b) { return a.date < b.date; });
  }
}

}  // namespace

PriceTable load_prices(const std::filesystem::path& path) {
  static const std::vector<std::string_view> kColumns = {
      "date", "ticker", "open", "high", "low", "close", "volume"};
  CsvReader reader(path);
  const auto header = reader.header();
  const auto col = column_index(header, kColumns, path.string());

  PriceTable table;
  std::set<std::pair<std::string, long>> seen;
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (f.size() != header.size()) {
      throw ParseError(reader.where() + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(f.size()));
    }
    Date date;
    try {
      date = Date::parse(f[col.at("date")]);
    } catch (const ParseError& e) {
      throw ParseError(reader.where() + ": " + e.what());
    }
    const std::string& ticker = f[col.at("ticker")];
    if (ticker.empty()) throw ParseError(reader.where() + ": empty ticker");
    if (!seen.emplace(ticker, date.serial()).second) {
      throw ValidationError(reader.where() + ": duplicate row for (" +
                            date.iso() + ", " + ticker + ")");
    }

    std::array<double, 5> v{};
    bool gap = false;
    for (std::size_t j = 0; j < 5; ++j) {
      const auto name = kColumns[j + 2];
      const auto& field = f[col.at(std::string(name))];
      if (is_missing(field)) {
        gap = true;
        continue;
      }
      v[j] = parse_number(field, reader, name);
    }
    if (gap) continue;

    PriceBar bar{date, v[0], v[1], v[2], v[3], v[4]};
    if (!(bar.open > 0 && bar.high > 0 && bar.low > 0 && bar.close > 0)) {
      throw ValidationError(reader.where() + ": prices must be strictly positive");
    }
    if (bar.volume < 0) {
      throw ValidationError(reader.where() + ": negative volume");
    }
    if (bar.low > std::min(bar.open, bar.close) ||
        bar.high < std::max(bar.open, bar.close)) {
      throw ValidationError(reader.where() +
                            ": high/low do not bracket open and close");
    }
    table[ticker].push_back(bar);
  }
  sort_by_date(table);
  return table;
}

FundamentalTable load_fundamentals(const std::filesystem::path& path) {
  std::vector<std::string_view> required = {"date", "ticker"};
  required.insert(required.end(), kFundamentalNames.begin(),
                  kFundamentalNames.end());
  CsvReader reader(path);
  const auto header = reader.header();
  const auto col = column_index(header, required, path.string());

  FundamentalTable table;
  std::set<std::pair<std::string, long>> seen;
  std::vector<std::string> f;
  while (reader.next(f)) {
    if (f.size() != header.size()) {
      throw ParseError(reader.where() + ": expected " +
                       std::to_string(header.size()) + " fields, got " +
                       std::to_string(f.size()));
    }
    Date date;
    try {
      date = Date::parse(f[col.at("date")]);
    } catch (const ParseError& e) {
      throw ParseError(reader.where() + ": " + e.what());
    }
    const std::string& ticker = f[col.at("ticker")];
    if (ticker.empty()) throw ParseError(reader.where() + ": empty ticker");
    if (!seen.emplace(ticker, date.serial()).second) {
      throw ValidationError(reader.where() + ": duplicate row for (" +
                            date.iso() + ", " + ticker + ")");
    }

    std::array<double, kFundamentalCount> v{};
    bool gap = false;
    for (std::size_t j = 0; j < kFundamentalCount; ++j) {
      const auto& field = f[col.at(std::string(kFundamentalNames[j]))];
      if (is_missing(field)) {
        gap = true;
        continue;
      }
      v[j] = parse_number(field, reader, kFundamentalNames[j]);
    }
    if (gap) continue;
    auto snap = FundamentalSnapshot::from_values(date, v);
    if (!(snap.marketCap > 0)) {
      throw ValidationError(reader.where() + ": marketCap must be positive");
    }
    table[ticker].push_back(snap);
  }
  sort_by_date(table);
  return table;
}

SeriesMap build_series(const PriceTable& prices,
                       const FundamentalTable& fundamentals) {
  SeriesMap out;
  for (const auto& [ticker, bars] : prices) {
    if (bars.empty()) continue;
    AssetSeries s{ticker, bars, {}};
    if (auto it = fundamentals.find(ticker); it != fundamentals.end()) {
      s.fundamentals = it->second;
    }
    out.emplace(ticker, std::move(s));
  }
  return out;
}

Universe select_universe(const SeriesMap& all, Selection selection,
                         std::size_t k, std::uint64_t seed) {
  Universe u;
  u.selection = selection;
  if (selection == Selection::All) {
    for (const auto& [ticker, s] : all) u.assets.push_back(s);
    u.k = u.assets.size();
    return u;
  }
  if (k == 0) throw ArgumentError("universe size k must be positive");
  if (k > all.size()) {
    throw ArgumentError("requested k=" + std::to_string(k) + " assets but only " +
                        std::to_string(all.size()) + " are available");
  }
  u.k = k;

  std::vector<const AssetSeries*> pool;
  for (const auto& [ticker, s] : all) pool.push_back(&s);

  if (selection == Selection::Random) {
    Rng rng{splitmix64(seed)};
    for (std::size_t i = 0; i < k; ++i) {
      const auto j = i + uniform_index(rng, pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
  } else {
    for (const auto* s : pool) {
      if (s->fundamentals.empty()) {
        throw ArgumentError("asset " + s->ticker +
                            " has no fundamentals to rank by market cap");
      }
    }
    const bool big = selection == Selection::Big;
    std::stable_sort(pool.begin(), pool.end(),
                     [big](const AssetSeries* a, const AssetSeries* b) {
                       const double ca = a->fundamentals.back().marketCap;
                       const double cb = b->fundamentals.back().marketCap;
                       return big ? ca > cb : ca < cb;
                     });
    pool.resize(k);
  }
  for (const auto* s : pool) u.assets.push_back(*s);
  return u;
}

SplitSeries split(const AssetSeries& series, const SplitSpec& spec) {
  spec.validate();
  SplitSeries out;
  for (auto* part : {&out.train, &out.validation, &out.test}) {
    part->ticker = series.ticker;
  }
  auto target = [&](Date d) -> AssetSeries* {
    switch (partition_of(spec, d).value_or(Partition::Test)) {
      case Partition::Train: return &out.train;
      case Partition::Validation: return &out.validation;
      case Partition::Test: return &out.test;
    }
    return nullptr;
  };
  for (const auto& bar : series.bars) {
    if (bar.date > spec.end) continue;
    target(bar.date)->bars.push_back(bar);
  }
  for (const auto& snap : series.fundamentals) {
    if (snap.date > spec.end) continue;
    target(snap.date)->fundamentals.push_back(snap);
  }
  return out;
}

}  // namespace pdqn
