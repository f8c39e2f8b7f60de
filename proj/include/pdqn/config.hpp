#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "pdqn/env.hpp"
#include "pdqn/market_data.hpp"
#include "pdqn/trainer.hpp"

namespace pdqn {

/// Parses `key = value` lines; `#` starts a comment. Throws UsageError on a
/// line without `=` or a repeated key.
std::map<std::string, std::string> parse_key_values(std::istream& in, const std::string& source);

struct RunConfig {
  std::filesystem::path prices;
  std::filesystem::path fundamentals;
  Selection selection = Selection::All;
  std::size_t k = 0;
  std::uint64_t universe_seed = 0;
  std::optional<SplitSpec> split;
  TrainConfig train;
  std::vector<double> cost_levels{1.0, 5.0, 10.0};
  std::filesystem::path output_dir = "out";
  ReturnConvention convention = ReturnConvention::OpenToClose;
  SyntheticSpec synth;

  /// Checks cross-field invariants and that the data files exist.
  void validate_for_run() const;
  const SplitSpec& require_split() const;
};

/// Applies key/value pairs on top of `base`. Relative paths resolve against
/// `base_dir`. Unknown keys are rejected.
RunConfig apply_config(RunConfig base, const std::map<std::string, std::string>& values,
                       const std::filesystem::path& base_dir = {});

RunConfig load_run_config(const std::filesystem::path& path,
                          const std::map<std::string, std::string>& overrides = {});

/// Canonical `key = value` rendering of every field, in a fixed order.
std::string render_config(const RunConfig& config);

}  // namespace pdqn
