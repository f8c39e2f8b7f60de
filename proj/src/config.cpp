#include "pdqn/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace pdqn {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || p != v.data() + v.size()) {
    throw UsageError("invalid " + key + ": expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  std::string digits;
  for (char c : v) {
    if (c != '_' && c != '\'') digits.push_back(c);
  }
  auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), out);
  if (digits.empty() || ec != std::errc{} || p != digits.data() + digits.size()) {
    throw UsageError("invalid " + key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& key, const std::string& v, F convert) {
  std::vector<T> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw UsageError("invalid " + key + ": empty list element");
    out.push_back(convert(key, item));
  }
  if (out.empty()) throw UsageError("invalid " + key + ": empty list");
  return out;
}

Date to_date(const std::string& key, const std::string& v) {
  try {
    return Date::parse(v);
  } catch (const ParseError& e) {
    throw UsageError("invalid " + key + ": " + e.what());
  }
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(xs[i]);
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

}  // namespace

std::map<std::string, std::string> parse_key_values(std::istream& in, const std::string& source) {
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError(source + " line " + std::to_string(n) + ": expected 'key = value'");
    }
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw UsageError(source + " line " + std::to_string(n) + ": empty key");
    if (!out.emplace(key, value).second) {
      throw UsageError(source + " line " + std::to_string(n) + ": duplicate key '" + key + "'");
    }
  }
  return out;
}

RunConfig apply_config(RunConfig c, const std::map<std::string, std::string>& values,
                       const std::filesystem::path& base_dir) {
  auto path = [&](const std::string& v) {
    std::filesystem::path p(v);
    return p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  };
  std::optional<Date> vstart, tstart, end;
  if (c.split) {
    vstart = c.split->validation_start;
    tstart = c.split->test_start;
    end = c.split->end;
  }
  for (const auto& [key, v] : values) {
    auto& t = c.train;
    if (key == "prices") c.prices = path(v);
    else if (key == "fundamentals") c.fundamentals = path(v);
    else if (key == "selection") {
      try {
        c.selection = parse_selection(v);
      } catch (const ArgumentError& e) {
        throw UsageError(std::string("invalid selection: ") + e.what());
      }
    }
    else if (key == "k") c.k = to_uint(key, v);
    else if (key == "universeSeed") c.universe_seed = to_uint(key, v);
    else if (key == "validationStart") vstart = to_date(key, v);
    else if (key == "testStart") tstart = to_date(key, v);
    else if (key == "end") end = to_date(key, v);
    else if (key == "gamma") t.gamma = to_double(key, v);
    else if (key == "epsilon") t.epsilon = to_double(key, v);
    else if (key == "iterations") t.iterations = to_uint(key, v);
    else if (key == "memory") t.memory_capacity = to_uint(key, v);
    else if (key == "gradientInterval") t.gradient_interval = to_uint(key, v);
    else if (key == "evaluationInterval") t.evaluation_interval = to_uint(key, v);
    else if (key == "batchSize") t.batch_size = to_uint(key, v);
    else if (key == "hiddenWidths") t.hidden_widths = to_list<std::size_t>(key, v, to_uint);
    else if (key == "costBps") t.cost_bps = to_double(key, v);
    else if (key == "seed") t.seed = to_uint(key, v);
    else if (key == "learningRate") t.adam.learning_rate = to_double(key, v);
    else if (key == "beta1") t.adam.beta1 = to_double(key, v);
    else if (key == "beta2") t.adam.beta2 = to_double(key, v);
    else if (key == "epsilonHat") t.adam.epsilon_hat = to_double(key, v);
    else if (key == "costLevels") c.cost_levels = to_list<double>(key, v, to_double);
    else if (key == "out") c.output_dir = path(v);
    else if (key == "returnConvention") {
      try {
        c.convention = parse_return_convention(v);
      } catch (const ArgumentError& e) {
        throw UsageError(std::string("invalid returnConvention: ") + e.what());
      }
    }
    else if (key == "nAssets") c.synth.n_assets = to_uint(key, v);
    else if (key == "nDays") c.synth.n_days = to_uint(key, v);
    else if (key == "signalStrength") c.synth.signal_strength = to_double(key, v);
    else if (key == "noiseStd") c.synth.noise_std = to_double(key, v);
    else if (key == "startDate") c.synth.start = to_date(key, v);
    else throw UsageError("unknown configuration key '" + key + "'");
  }
  c.synth.seed = c.train.seed;
  if (vstart || tstart || end) {
    if (!vstart) throw UsageError("missing validationStart");
    if (!tstart) throw UsageError("missing testStart");
    if (!end) throw UsageError("missing end");
    c.split = SplitSpec{*vstart, *tstart, *end};
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path,
                          const std::map<std::string, std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw UsageError("config: cannot open " + path.string());
  auto values = parse_key_values(in, path.string());
  for (const auto& [k, v] : overrides) values[k] = v;
  return apply_config(RunConfig{}, values, path.parent_path());
}

const SplitSpec& RunConfig::require_split() const {
  if (!split) throw UsageError("missing validationStart/testStart/end");
  return *split;
}

void RunConfig::validate_for_run() const {
  if (prices.empty()) throw UsageError("missing prices");
  if (!std::filesystem::is_regular_file(prices)) {
    throw UsageError("prices: file not found: " + prices.string());
  }
  if (fundamentals.empty()) throw UsageError("missing fundamentals");
  if (!std::filesystem::is_regular_file(fundamentals)) {
    throw UsageError("fundamentals: file not found: " + fundamentals.string());
  }
  const auto& s = require_split();
  if (!(s.validation_start <= s.test_start && s.test_start <= s.end)) {
    throw UsageError("invalid split: need validationStart <= testStart <= end");
  }
  if (selection != Selection::All && k == 0) throw UsageError("invalid k: must be positive");
  for (double c : cost_levels) {
    if (!(c >= 0)) throw UsageError("invalid costLevels: must be non-negative");
  }
  train.validate();
}

std::string render_config(const RunConfig& c) {
  std::ostringstream o;
  const auto& t = c.train;
  o << "prices = " << c.prices.string() << '\n'
    << "fundamentals = " << c.fundamentals.string() << '\n'
    << "selection = " << to_string(c.selection) << '\n'
    << "k = " << c.k << '\n'
    << "universeSeed = " << c.universe_seed << '\n';
  if (c.split) {
    o << "validationStart = " << c.split->validation_start.iso() << '\n'
      << "testStart = " << c.split->test_start.iso() << '\n'
      << "end = " << c.split->end.iso() << '\n';
  }
  o << "gamma = " << format_double(t.gamma) << '\n'
    << "epsilon = " << format_double(t.epsilon) << '\n'
    << "iterations = " << t.iterations << '\n'
    << "memory = " << t.memory_capacity << '\n'
    << "gradientInterval = " << t.gradient_interval << '\n'
    << "evaluationInterval = " << t.evaluation_interval << '\n'
    << "batchSize = " << t.batch_size << '\n'
    << "hiddenWidths = " << join(t.hidden_widths) << '\n'
    << "costBps = " << format_double(t.cost_bps) << '\n'
    << "seed = " << t.seed << '\n'
    << "learningRate = " << format_double(t.adam.learning_rate) << '\n'
    << "beta1 = " << format_double(t.adam.beta1) << '\n'
    << "beta2 = " << format_double(t.adam.beta2) << '\n'
    << "epsilonHat = " << format_double(t.adam.epsilon_hat) << '\n'
    << "costLevels = " << join(c.cost_levels) << '\n'
    << "returnConvention = " << to_string(c.convention) << '\n'
    << "nAssets = " << c.synth.n_assets << '\n'
    << "nDays = " << c.synth.n_days << '\n'
    << "signalStrength = " << format_double(c.synth.signal_strength) << '\n'
    << "noiseStd = " << format_double(c.synth.noise_std) << '\n'
    << "startDate = " << c.synth.start.iso() << '\n';
  return o.str();
}

}  // namespace pdqn
