#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pdqn/date.hpp"
#include "pdqn/errors.hpp"
#include "pdqn/linalg.hpp"
#include "pdqn/market_data.hpp"

namespace pdqn {

/// Layout of the state vector: fundamentals, arithmetic MAs, exponential
/// MAs, rolling standard deviations, position dummy. The order is part of
/// the checkpoint contract through `fingerprint()`.
struct FeatureSpec {
  std::vector<std::size_t> ma_windows{5, 10, 20, 50, 100, 200};
  std::vector<std::size_t> std_windows{5, 10, 20, 50, 100};
  bool include_exponential = true;
  bool position_dummy = true;

  std::size_t dimension() const;
  /// Entries subject to z-scaling (everything except the dummy).
  std::size_t scaled_dimension() const { return dimension() - (position_dummy ? 1 : 0); }
  /// Index of the first bar that can carry a state.
  std::size_t warmup() const;
  std::vector<std::string> feature_names() const;
  /// FNV-1a hash of the ordered feature names.
  std::uint32_t fingerprint() const;
};

struct StateVector {
  VectorXd values;
  Date date;
  std::string ticker;
};

struct Scaler {
  VectorXd means;
  VectorXd stds;
};

inline constexpr double kScalerStdFloor = 1e-8;

/// Trailing mean over `window` elements; element k of the result covers
/// x[k .. k+window-1], i.e. input index t = k + window - 1.
template <typename Derived>
Vector<typename Derived::Scalar> arithmetic_ma(const Eigen::MatrixBase<Derived>& x,
                                               Eigen::Index window) {
  using Scalar = typename Derived::Scalar;
  if (window <= 0) throw ArgumentError("moving-average window must be positive");
  const Eigen::Index n = x.size();
  if (n < window) throw ArgumentError("sequence shorter than moving-average window");
  Vector<Scalar> out(n - window + 1);
  for (Eigen::Index k = 0; k < out.size(); ++k) {
    // Mean relative to the first element of the window: exact on constants.
    const Scalar ref = x(k);
    out(k) = ref + (x.segment(k, window).array() - ref).sum() / static_cast<Scalar>(window);
  }
  return out;
}

/// y[t] = y[t-1] + alpha (x[t] - y[t-1]), alpha = 2/(window+1), y[0] = x[0];
/// emitted from index window-1 so it aligns with arithmetic_ma.
template <typename Derived>
Vector<typename Derived::Scalar> exponential_ma(const Eigen::MatrixBase<Derived>& x,
                                                Eigen::Index window) {
  using Scalar = typename Derived::Scalar;
  if (window <= 0) throw ArgumentError("moving-average window must be positive");
  const Eigen::Index n = x.size();
  if (n == 0) throw ArgumentError("exponential_ma of an empty sequence");
  if (n < window) throw ArgumentError("sequence shorter than moving-average window");
  const Scalar alpha = Scalar(2) / static_cast<Scalar>(window + 1);
  Vector<Scalar> out(n - window + 1);
  Scalar y = x(0);
  for (Eigen::Index t = 0; t < n; ++t) {
    if (t > 0) y += alpha * (x(t) - y);
    if (t >= window - 1) out(t - window + 1) = y;
  }
  return out;
}

/// Trailing sample standard deviation (divisor window-1).
template <typename Derived>
Vector<typename Derived::Scalar> rolling_std(const Eigen::MatrixBase<Derived>& x,
                                             Eigen::Index window) {
  using Scalar = typename Derived::Scalar;
  if (window < 2) throw ArgumentError("rolling_std window must be at least 2");
  const Eigen::Index n = x.size();
  if (n < window) throw ArgumentError("sequence shorter than rolling_std window");
  Vector<Scalar> out(n - window + 1);
  for (Eigen::Index k = 0; k < out.size(); ++k) {
    const auto w = x.segment(k, window).array();
    const Scalar ref = x(k);
    const Scalar mean = ref + (w - ref).sum() / static_cast<Scalar>(window);
    out(k) = std::sqrt((w - mean).square().sum() / static_cast<Scalar>(window - 1));
  }
  return out;
}

/// Close-to-close returns: element k is close[k+1]/close[k] - 1.
VectorXd close_to_close_returns(const std::vector<PriceBar>& bars);

/// One unscaled state per bar from `spec.warmup()` onward that has a
/// fundamental snapshot at or before its date. The dummy entry is left 0.
/// Throws ArgumentError ("too short") when the series has too few bars.
std::vector<StateVector> assemble_states(const AssetSeries& series,
                                         const FeatureSpec& spec = {});

/// Fits feature-wise means and sample stds (floored) on training states.
Scaler fit_scaler(const std::vector<StateVector>& train_states,
                  const FeatureSpec& spec = {});

StateVector apply_scaler(const Scaler& scaler, StateVector state);

/// Scales the leading `scaler.means.size()` columns of a row-per-state matrix.
void apply_scaler_rows(const Scaler& scaler, MatrixXd& rows);

}  // namespace pdqn
