#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pdqn/features.hpp"
#include "pdqn/linalg.hpp"
#include "pdqn/market_data.hpp"
#include "pdqn/qnet.hpp"
#include "pdqn/random.hpp"

namespace pdqn {

/// How a period's realized asset return is measured.
enum class ReturnConvention { OpenToClose, CloseToClose };

ReturnConvention parse_return_convention(std::string_view name);
std::string_view to_string(ReturnConvention convention);

/// Realized return of every bar under `convention` (NaN where undefined,
/// i.e. the first bar for close-to-close).
std::vector<double> bar_returns(const std::vector<PriceBar>& bars, ReturnConvention convention);

/// One asset's data within a partition.
struct AssetPanel {
  std::string ticker;
  std::vector<Date> bar_dates;          // full history
  std::vector<double> realized;         // per bar, configured convention
  std::vector<double> close_returns;    // per bar close-to-close, NaN at bar 0
  std::vector<Date> state_dates;        // states dated inside the partition
  std::vector<std::size_t> state_bars;  // bar index of each state
  MatrixXd states;                      // one scaled state per row, dummy column 0

  // Rows whose next bar is also inside the partition: usable for training.
  std::vector<std::size_t> usable_rows;
  std::vector<double> next_return;          // realized return on the next bar
  std::vector<double> next_universe_mean;   // universe mean on that next bar's date
};

/// Scaled states and realized returns of a universe restricted to one
/// partition. Assets too short to carry any state are kept out of
/// `assets` but still count towards `universe_mean`.
struct MarketPanel {
  Partition partition = Partition::Train;
  ReturnConvention convention = ReturnConvention::OpenToClose;
  std::uint32_t fingerprint = 0;
  std::size_t dimension = 0;
  std::vector<AssetPanel> assets;
  std::vector<Date> calendar;            // union of bar dates inside the partition
  std::map<Date, double> universe_mean;  // mean realized return over assets trading that date
};

struct PreparedUniverse {
  FeatureSpec features;
  Scaler scaler;
  MarketPanel train;
  MarketPanel validation;
  MarketPanel test;
};

/// Builds states for every asset, fits the scaler on the pooled training
/// states (or uses `scaler` when given) and cuts the three partitions.
PreparedUniverse prepare_universe(const Universe& universe, const SplitSpec& split,
                                  const FeatureSpec& features = {},
                                  ReturnConvention convention = ReturnConvention::OpenToClose,
                                  const std::optional<Scaler>& scaler = std::nullopt);

/// Opportunity-cost reward: investing earns the asset's next return minus
/// the entry cost when coming from cash; holding cash earns the universe
/// mean next return.
inline double reward(int action, int last_action, double asset_next_return,
                     double universe_mean_next_return, double cost) {
  if (action == kInvest) return asset_next_return - (1 - last_action) * cost;
  return universe_mean_next_return;
}

struct Episode {
  std::size_t asset = 0;  // index into MarketPanel::assets
  std::string ticker;
  MatrixXd states;                            // usable states, one per row
  std::vector<double> returns_next;           // r_{t+1} of the asset
  std::vector<double> universe_mean_returns;  // universe mean at t+1
  std::size_t cursor = 0;
  int last_action = kCash;
  double cost = 0.0;
  bool done = false;

  /// State at the cursor with the dummy set to the last action.
  VectorXd state() const;
};

struct StepResult {
  double reward = 0.0;
  std::optional<VectorXd> next_state;  // empty when terminal
  bool terminal = false;
};

/// Draws an asset uniformly with replacement among those with at least one
/// usable state and positions the cursor at its first usable state.
Episode reset(const MarketPanel& panel, double cost, Rng& rng);

/// Builds the episode for a given asset index.
Episode make_episode(const MarketPanel& panel, std::size_t asset, double cost);

StepResult step(Episode& episode, int action);

}  // namespace pdqn
