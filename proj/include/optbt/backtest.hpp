#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "optbt/indicators.hpp"
#include "optbt/strategies.hpp"

namespace optbt {

struct BacktestWindow {
    Date train_start, train_end;  // [train_start, train_end)
    Date test_start, test_end;    // [test_start, test_end)
};

// Expanding 5-year blocks: the first window trains on [start, start+5y) and
// tests on the next 5 years; each later window extends training by 5 years.
// The final test block truncates at `end` (exclusive bound end+1day).
// Throws SpanTooShort below 2 blocks.
std::vector<BacktestWindow> expanding_windows(Date panel_start, Date panel_end, int block_years = 5);

// Per-stock daily position track with everything turnover accounting needs.
struct PositionSeries {
    std::string underlying;
    std::vector<Date> dates;
    std::vector<double> x;
    std::vector<double> vol_factor;  // sigma_tgt / sigma_ann at t
    std::vector<double> ret_next;
    std::vector<int> month;             // straddle identity; changes mark roll boundaries
    std::vector<Date> expiry;           // live straddle's expiry, for exit-cost dates
    std::vector<bool> last_tradable;    // day is the straddle's final tradable day
};

struct PortfolioReturns {
    std::vector<Date> dates;
    std::vector<double> returns;
    std::vector<int> n_active;
    std::vector<PositionSeries> positions;
    double sigma_target = kDefaultSigmaTarget;
};

// Daily strategy return: r_t = (1/N_t) sum_i X (sigma_tgt / sigma_t)
// r_{t,t+1} over straddles active at t, over [start, end). Days with no
// active straddle contribute 0. Throws AlignmentError when the signal panel
// does not align with the feature panel.
PortfolioReturns portfolio_returns(const FeaturePanel& panel, const SignalPanel& signals, Date start, Date end,
                                   double sigma_target = kDefaultSigmaTarget);

// Ex-post scaling of the whole series by sigma_tgt / realized annualized
// vol. Throws ZeroVariance.
std::vector<double> rescale_to_target_vol(std::span<const double> returns, double sigma_target = kDefaultSigmaTarget);

// Turnover-cost adjustment at c basis points: subtracts
// c * sigma_tgt * |X_t/sigma_t - X_{t-1}/sigma_{t-1}| per straddle inside
// the day average. Entry from zero is charged on the first active day; the
// exit back to zero is charged on the expiry date of straddles that run to
// term (the output axis grows by that date when nothing else trades on it).
// Straddles cut mid-life by the evaluation span carry no exit charge.
// c = 0 returns the identical series.
struct CostAdjusted {
    std::vector<Date> dates;
    std::vector<double> returns;
};
CostAdjusted cost_adjusted_returns(const PortfolioReturns& portfolio, double cost_bps);

// Annualized metrics (252 days). Sortino, Calmar, avg P / avg L and the
// downside deviation are undefined (nullopt) when their denominators are
// empty. Throws ZeroVariance when the return variance is zero.
struct MetricsReport {
    double expected_return = 0.0;
    double volatility = 0.0;
    std::optional<double> downside_deviation;
    double mdd = 0.0;
    double sharpe = 0.0;
    std::optional<double> sortino;
    std::optional<double> calmar;
    double hit_rate = 0.0;
    std::optional<double> avg_profit_over_avg_loss;
};
MetricsReport compute_metrics(std::span<const double> returns);

// Sharpe after cost adjustment for each c in the grid, evaluated on the
// vol-rescaled series (the c = 0 row therefore equals compute_metrics'
// sharpe on the rescaled series exactly).
struct CostSweepRow {
    double cost_bps = 0.0;
    double sharpe = 0.0;
};
std::vector<CostSweepRow> cost_sweep(const PortfolioReturns& portfolio, std::span<const double> cost_grid_bps);

inline const std::vector<double>& default_cost_grid() {
    static const std::vector<double> grid = {0, 1, 2, 3, 5, 10, 20, 50};
    return grid;
}

}  // namespace optbt
