#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "optbt/dates.hpp"

namespace optbt {

enum class OptionType { call, put };

// One end-of-day observation of one option contract.
struct OptionQuote {
    Date date;
    std::string underlying;
    OptionType type = OptionType::call;
    double strike = 0.0;
    Date expiry;
    double bid = 0.0;
    double ask = 0.0;
    double delta = 0.0;  // call in [0,1], put in [-1,0]
    long open_interest = 0;
    bool standard_settlement = true;

    double mid() const { return 0.5 * (bid + ask); }
};

struct StockPrice {
    Date date;
    std::string underlying;
    double close = 0.0;
};

// A formed 1-month ATM static delta-neutral straddle.
struct StraddleDefinition {
    std::string underlying;
    Date formation;
    Date expiry;  // third Friday of the month after formation
    double strike = 0.0;
    double w_call_norm = 0.0;  // sums to 1 with w_put_norm
    double w_put_norm = 0.0;
    double delta0_call = 0.0;
    double delta0_put = 0.0;
};

struct StraddleRecord {
    Date date;
    double call_mid = 0.0;
    double put_mid = 0.0;
    double price = 0.0;     // w_call_norm * call_mid + w_put_norm * put_mid
    double ret_next = 0.0;  // p_{t+1}/p_t - 1; NaN on the final (expiry) record
    double log_moneyness_call = 0.0;  // ln(S/K)
    double log_moneyness_put = 0.0;   // ln(K/S)
    double dte_years = 0.0;           // calendar days to expiry / 365
};

struct StraddleSeries {
    StraddleDefinition definition;
    std::vector<StraddleRecord> records;  // contiguous trading days, formation..expiry
};

// (underlying, date) -> close lookup plus per-underlying trading calendars.
// The trading calendar is defined by the stock price data: a trading day is
// a day with a close.
class StockIndex {
public:
    explicit StockIndex(const std::vector<StockPrice>& stocks);

    std::optional<double> close(const std::string& underlying, Date d) const;
    // Sorted trading days for `underlying` in [from, to] inclusive.
    std::vector<Date> trading_days(const std::string& underlying, Date from, Date to) const;
    const std::vector<std::string>& underlyings() const { return names_; }
    Date min_date() const { return min_date_; }
    Date max_date() const { return max_date_; }

private:
    struct Row {
        std::vector<Date> dates;  // sorted
        std::vector<double> closes;
        std::unordered_map<int, double> by_serial;
    };
    std::unordered_map<std::string, Row> rows_;
    std::vector<std::string> names_;
    Date min_date_{0}, max_date_{0};
};

// Retains quotes with bid > 0, ask > bid, standard settlement, a standard
// third-Friday expiry, and a midpoint inside American bounds against the
// same-day close (call mid in [max(0, S-K), S], put mid in [max(0, K-S), K]).
// Open interest is checked later, at formation-day selection.
// Throws MissingStockPrice when a quote has no same-day close.
std::vector<OptionQuote> apply_filters(const std::vector<OptionQuote>& quotes, const StockIndex& stocks);

struct StraddleWeights {
    double call_norm = 0.0;
    double put_norm = 0.0;
};

// w_call = -delta0_put, w_put = delta0_call, normalized to sum to one.
// Throws DegenerateDeltas when delta0_call - delta0_put <= 0.
StraddleWeights delta_neutral_weights(double delta0_call, double delta0_put);

struct AtmPair {
    OptionQuote call;
    OptionQuote put;
};

// From a formation-day chain (one underlying, already restricted to the
// next-month third-Friday expiry), picks the shared-strike call/put pair
// minimizing |S/K - 1| with both legs' moneyness (S/K and K/S) in
// [0.95, 1.05] and positive open interest. Ties break toward the lower
// strike. Throws NoEligibleStrike / MissingLeg.
AtmPair select_atm_pair(const std::vector<OptionQuote>& chain, double stock_close);

// Daily records from formation to expiry over the underlying's trading
// calendar. Throws GapInSeries when either leg lacks a quote on any trading
// day (or the calendar does not reach expiry), and DataError when a computed
// straddle price is not strictly positive.
StraddleSeries build_straddle_series(const StraddleDefinition& defn,
                                     const std::vector<OptionQuote>& quotes,
                                     const StockIndex& stocks);

struct MarketData {
    std::vector<OptionQuote> quotes;
    std::vector<StockPrice> stocks;
};

// Strict schema parse of the two CSV files; see README for the column
// contract. Validates types/ranges and rejects duplicate keys. Does not
// filter: rows that will fail apply_filters are still ingested.
MarketData ingest_csv(const std::string& options_path, const std::string& stocks_path);

struct FormationSkip {
    std::string underlying;
    Date formation;
    std::string reason;
};

struct StraddlePanel {
    std::map<std::string, std::vector<StraddleSeries>> by_underlying;
    std::vector<FormationSkip> skipped;
};

// Full formation pipeline: filter quotes, then for every third Friday on
// which an underlying trades, select the ATM pair expiring the following
// month, compute weights, and build the daily series. Failed formations are
// recorded in `skipped` rather than aborting the panel.
StraddlePanel form_straddle_panel(const MarketData& data);

}  // namespace optbt
