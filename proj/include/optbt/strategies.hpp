#pragma once

#include <string>
#include <vector>

#include "optbt/indicators.hpp"

namespace optbt {

// Per-stock trading signal track, aligned one-to-one with the stock's
// tradable days. |x| <= 1 everywhere.
struct SignalSeries {
    std::string underlying;
    std::string strategy;
    std::vector<Date> dates;
    std::vector<double> x;
};

// Aligned with FeaturePanel::stocks.
using SignalPanel = std::vector<SignalSeries>;

// Registry of the rules-based benchmarks (CLI-facing names):
// long_only, short_only, tsmom, tsmr, macd, macdmr,
// tsheston_{mom,mr}_{1,3,6,12}, csheston_{mom,mr}_{1,3,6,12}.
const std::vector<std::string>& strategy_names();
bool is_strategy_name(const std::string& name);

// Runs one benchmark over the whole panel. Throws ConfigError for an
// unknown name.
SignalPanel run_strategy(const FeaturePanel& panel, const std::string& name);

// sgn with sgn(0) = 0.
double sign(double x);

// Sign of the 20-day trailing compounded return of the stock's rolled
// straddle series; 0 during the first 20 days (cold start).
double tsmom_signal(const StockSeries& stock, int day, bool mean_revert);

// Equally weighted phi-shaped combination of the three MACD signals; the Y
// values come from the feature panel, where degenerate/early entries are 0.
double macd_strategy_signal(const StockSeries& stock, int day, bool mean_revert);

// Option-momentum sign held fixed over the straddle's life; 0 when the
// lookback history is incomplete.
double ts_heston_signal(double momentum_feature, bool valid, bool mean_revert);

// Cross-sectional high-minus-low deciles over the valid momentum scores at
// one formation date: +1 for the top decile, -1 for the bottom, 0 otherwise.
// Decile size max(1, floor(n_valid/10)); score ties break by underlying id.
// Throws TooFewStocks when fewer than two valid scores are given.
std::vector<double> cs_heston_signal(const std::vector<std::string>& ids, const std::vector<double>& scores,
                                     const std::vector<bool>& valid, bool mean_revert);

}  // namespace optbt
