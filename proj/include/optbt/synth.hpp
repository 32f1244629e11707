#pragma once

#include <cstdint>
#include <string>

#include "optbt/market_data.hpp"

namespace optbt {

// Synthetic panel spec. Months are anchored to real third Fridays so that
// emitted CSVs survive the formation filters; trading days are the plain
// weekdays between consecutive third Fridays (nominally 21 per month, the
// value recorded here).
struct SynthSpec {
    int n_stocks = 20;
    int n_months = 120;
    int trading_days_per_month = 21;  // nominal; actual months span 20 or 25 weekdays
    double ar1_rho = 0.0;             // |rho| < 1
    double daily_vol = 0.02;          // unconditional daily return std
    std::uint64_t seed = 0;
    double strike = 100.0;
    double half_spread = 0.01;
    bool skewed_deltas = false;  // call delta 0.6 / put -0.4 instead of +-0.5
    int start_year = 2010;
    int start_month = 1;
};

// Straddle returns follow a per-stock AR(1), continuous across months:
//
//     r_t = rho * r_{t-1} + eps_t,   eps ~ N(0, daily_vol^2 (1 - rho^2))
//
// so the unconditional daily vol equals daily_vol for every rho. Prices
// compound from 1.0 at each formation. Deterministic under spec.seed.
StraddlePanel generate_straddle_panel(const SynthSpec& spec);

// Emits options.csv / stocks.csv in the ingest schema. Ingestion + formation
// of these files reproduces generate_straddle_panel's straddle prices to
// 1e-9: strikes sit exactly at-the-money (constant close = strike), both leg
// mids equal the straddle price, and bid/ask straddle the mid by
// half_spread.
void generate_option_chain_csv(const SynthSpec& spec, const std::string& options_path,
                               const std::string& stocks_path);

}  // namespace optbt
