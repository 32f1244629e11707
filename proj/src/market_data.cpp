#include "optbt/market_data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "optbt/csv.hpp"
#include "optbt/errors.hpp"
#include "optbt/parallel.hpp"

namespace optbt {

namespace {

constexpr double kMoneynessLo = 0.95;
constexpr double kMoneynessHi = 1.05;

std::string quote_key(const OptionQuote& q) {
    std::ostringstream os;
    os << to_iso_string(q.date) << '|' << q.underlying << '|' << (q.type == OptionType::call ? 'C' : 'P') << '|'
       << format_double(q.strike) << '|' << to_iso_string(q.expiry);
    return os.str();
}

}  // namespace

StockIndex::StockIndex(const std::vector<StockPrice>& stocks) {
    if (stocks.empty()) {
        min_date_ = max_date_ = Date{0};
        return;
    }
    min_date_ = Date{std::numeric_limits<int>::max()};
    max_date_ = Date{std::numeric_limits<int>::min()};
    for (const auto& s : stocks) {
        Row& row = rows_[s.underlying];
        if (!row.by_serial.emplace(s.date.serial, s.close).second)
            throw DuplicateKey("stock price for " + s.underlying + " on " + to_iso_string(s.date));
        min_date_ = std::min(min_date_, s.date);
        max_date_ = std::max(max_date_, s.date);
    }
    for (auto& [name, row] : rows_) {
        names_.push_back(name);
        std::vector<std::pair<Date, double>> tmp;
        tmp.reserve(row.by_serial.size());
        for (const auto& [serial, close] : row.by_serial) tmp.emplace_back(Date{serial}, close);
        std::sort(tmp.begin(), tmp.end());
        row.dates.reserve(tmp.size());
        row.closes.reserve(tmp.size());
        for (const auto& [d, c] : tmp) {
            row.dates.push_back(d);
            row.closes.push_back(c);
        }
    }
    std::sort(names_.begin(), names_.end());
}

std::optional<double> StockIndex::close(const std::string& underlying, Date d) const {
    auto it = rows_.find(underlying);
    if (it == rows_.end()) return std::nullopt;
    auto jt = it->second.by_serial.find(d.serial);
    if (jt == it->second.by_serial.end()) return std::nullopt;
    return jt->second;
}

std::vector<Date> StockIndex::trading_days(const std::string& underlying, Date from, Date to) const {
    std::vector<Date> out;
    auto it = rows_.find(underlying);
    if (it == rows_.end()) return out;
    const auto& dates = it->second.dates;
    auto lo = std::lower_bound(dates.begin(), dates.end(), from);
    auto hi = std::upper_bound(dates.begin(), dates.end(), to);
    out.assign(lo, hi);
    return out;
}

std::vector<OptionQuote> apply_filters(const std::vector<OptionQuote>& quotes, const StockIndex& stocks) {
    std::vector<OptionQuote> kept;
    kept.reserve(quotes.size());
    for (const auto& q : quotes) {
        auto close = stocks.close(q.underlying, q.date);
        if (!close)
            throw MissingStockPrice("no stock close for " + q.underlying + " on " + to_iso_string(q.date));
        if (q.bid <= 0.0) continue;
        if (q.ask <= q.bid) continue;
        if (!q.standard_settlement) continue;
        if (!is_third_friday(q.expiry)) continue;
        const double s = *close;
        const double m = q.mid();
        if (q.type == OptionType::call) {
            if (m < std::max(0.0, s - q.strike) || m > s) continue;
        } else {
            if (m < std::max(0.0, q.strike - s) || m > q.strike) continue;
        }
        kept.push_back(q);
    }
    return kept;
}

StraddleWeights delta_neutral_weights(double delta0_call, double delta0_put) {
    if (!(delta0_call > 0.0) || !(delta0_put < 0.0))
        throw DegenerateDeltas("need call delta > 0 and put delta < 0, got (" + format_double(delta0_call) + ", " +
                               format_double(delta0_put) + ")");
    const double denom = delta0_call - delta0_put;
    if (denom <= 0.0)
        throw DegenerateDeltas("delta0_call - delta0_put must be positive, got " + format_double(denom));
    const double w_call = -delta0_put;
    const double w_put = delta0_call;
    StraddleWeights w;
    w.call_norm = w_call / (w_call + w_put);
    w.put_norm = 1.0 - w.call_norm;
    return w;
}

AtmPair select_atm_pair(const std::vector<OptionQuote>& chain, double stock_close) {
    struct Legs {
        const OptionQuote* call = nullptr;
        const OptionQuote* put = nullptr;
    };
    // Ordered by strike so tie-breaks and results are independent of the
    // chain's input ordering.
    std::map<double, Legs> by_strike;
    for (const auto& q : chain) {
        if (q.open_interest <= 0) continue;
        const double call_m = stock_close / q.strike;
        const double put_m = q.strike / stock_close;
        if (call_m < kMoneynessLo || call_m > kMoneynessHi) continue;
        if (put_m < kMoneynessLo || put_m > kMoneynessHi) continue;
        Legs& legs = by_strike[q.strike];
        if (q.type == OptionType::call)
            legs.call = &q;
        else
            legs.put = &q;
    }
    const Legs* best = nullptr;
    double best_dist = 0.0;
    bool saw_one_sided = false;
    for (const auto& [strike, legs] : by_strike) {
        if (!legs.call || !legs.put) {
            saw_one_sided = true;
            continue;
        }
        const double dist = std::abs(stock_close / strike - 1.0);
        if (!best || dist < best_dist) {  // equal dist keeps the lower strike
            best = &legs;
            best_dist = dist;
        }
    }
    if (best) return AtmPair{*best->call, *best->put};
    if (saw_one_sided)
        throw MissingLeg("only one option side available at eligible strikes (S=" + format_double(stock_close) + ")");
    throw NoEligibleStrike("no shared strike within moneyness [0.95, 1.05] with positive open interest (S=" +
                           format_double(stock_close) + ")");
}

StraddleSeries build_straddle_series(const StraddleDefinition& defn, const std::vector<OptionQuote>& quotes,
                                     const StockIndex& stocks) {
    // Per-date leg mids for this contract pair.
    std::unordered_map<int, double> call_mid, put_mid;
    for (const auto& q : quotes) {
        if (q.underlying != defn.underlying || q.expiry != defn.expiry || q.strike != defn.strike) continue;
        (q.type == OptionType::call ? call_mid : put_mid)[q.date.serial] = q.mid();
    }

    std::vector<Date> days = stocks.trading_days(defn.underlying, defn.formation, defn.expiry);
    if (days.empty() || days.front() != defn.formation || days.back() != defn.expiry)
        throw GapInSeries("trading calendar for " + defn.underlying + " does not span " +
                          to_iso_string(defn.formation) + " .. " + to_iso_string(defn.expiry));

    StraddleSeries series;
    series.definition = defn;
    series.records.reserve(days.size());
    for (Date d : days) {
        auto ci = call_mid.find(d.serial);
        auto pi = put_mid.find(d.serial);
        if (ci == call_mid.end() || pi == put_mid.end())
            throw GapInSeries(defn.underlying + " straddle " + to_iso_string(defn.formation) +
                              ": missing observation on " + to_iso_string(d));
        StraddleRecord rec;
        rec.date = d;
        rec.call_mid = ci->second;
        rec.put_mid = pi->second;
        rec.price = defn.w_call_norm * rec.call_mid + defn.w_put_norm * rec.put_mid;
        if (!(rec.price > 0.0))
            throw DataError(defn.underlying + " straddle " + to_iso_string(defn.formation) +
                            ": non-positive price on " + to_iso_string(d));
        const double s = *stocks.close(defn.underlying, d);
        rec.log_moneyness_call = std::log(s / defn.strike);
        rec.log_moneyness_put = std::log(defn.strike / s);
        rec.dte_years = static_cast<double>(days_between(d, defn.expiry)) / 365.0;
        series.records.push_back(rec);
    }
    for (std::size_t i = 0; i + 1 < series.records.size(); ++i)
        series.records[i].ret_next = series.records[i + 1].price / series.records[i].price - 1.0;
    series.records.back().ret_next = std::numeric_limits<double>::quiet_NaN();
    return series;
}

MarketData ingest_csv(const std::string& options_path, const std::string& stocks_path) {
    MarketData data;

    CsvReader opt(options_path, {"date", "underlying", "type", "strike", "expiry", "bid", "ask", "delta",
                                 "open_interest", "standard_settlement"});
    std::set<std::string> seen;
    while (opt.next_row()) {
        OptionQuote q;
        q.date = opt.field_date(0);
        q.underlying = opt.field(1);
        if (q.underlying.empty()) throw ParseError(opt.row_number(), "underlying", "empty identifier");
        const std::string& type = opt.field(2);
        if (type == "C")
            q.type = OptionType::call;
        else if (type == "P")
            q.type = OptionType::put;
        else
            throw ParseError(opt.row_number(), "type", "expected C or P, got '" + type + "'");
        q.strike = opt.field_double(3);
        if (!(q.strike > 0.0)) throw ParseError(opt.row_number(), "strike", "must be positive");
        q.expiry = opt.field_date(4);
        q.bid = opt.field_double(5);
        if (q.bid < 0.0) throw ParseError(opt.row_number(), "bid", "must be non-negative");
        q.ask = opt.field_double(6);
        if (q.ask < 0.0) throw ParseError(opt.row_number(), "ask", "must be non-negative");
        q.delta = opt.field_double(7);
        if (q.type == OptionType::call && (q.delta < 0.0 || q.delta > 1.0))
            throw ParseError(opt.row_number(), "delta", "call delta must lie in [0,1]");
        if (q.type == OptionType::put && (q.delta < -1.0 || q.delta > 0.0))
            throw ParseError(opt.row_number(), "delta", "put delta must lie in [-1,0]");
        q.open_interest = opt.field_long(8);
        if (q.open_interest < 0) throw ParseError(opt.row_number(), "open_interest", "must be non-negative");
        const std::string& settle = opt.field(9);
        if (settle == "1")
            q.standard_settlement = true;
        else if (settle == "0")
            q.standard_settlement = false;
        else
            throw ParseError(opt.row_number(), "standard_settlement", "expected 0 or 1, got '" + settle + "'");
        if (!seen.insert(quote_key(q)).second) throw DuplicateKey(quote_key(q));
        data.quotes.push_back(std::move(q));
    }

    CsvReader stk(stocks_path, {"date", "underlying", "close"});
    std::set<std::pair<int, std::string>> seen_stock;
    while (stk.next_row()) {
        StockPrice s;
        s.date = stk.field_date(0);
        s.underlying = stk.field(1);
        if (s.underlying.empty()) throw ParseError(stk.row_number(), "underlying", "empty identifier");
        s.close = stk.field_double(2);
        if (!(s.close > 0.0)) throw ParseError(stk.row_number(), "close", "must be positive");
        if (!seen_stock.emplace(s.date.serial, s.underlying).second)
            throw DuplicateKey("stock price for " + s.underlying + " on " + to_iso_string(s.date));
        data.stocks.push_back(std::move(s));
    }
    return data;
}

StraddlePanel form_straddle_panel(const MarketData& data) {
    StockIndex stocks(data.stocks);
    std::vector<OptionQuote> filtered = apply_filters(data.quotes, stocks);

    // Group once: underlying -> expiry serial -> quotes.
    std::unordered_map<std::string, std::unordered_map<int, std::vector<OptionQuote>>> grouped;
    for (auto& q : filtered) grouped[q.underlying][q.expiry.serial].push_back(q);

    const std::vector<std::string>& names = stocks.underlyings();
    std::vector<std::vector<StraddleSeries>> formed(names.size());
    std::vector<std::vector<FormationSkip>> skips(names.size());

    parallel_for(names.size(), [&](std::size_t ni) {
        const std::string& name = names[ni];
        auto git = grouped.find(name);
        if (git == grouped.end()) return;

        YearMonthDay first = to_ymd(stocks.min_date());
        YearMonthDay last = to_ymd(stocks.max_date());
        for (int y = first.year, m = first.month; y < last.year || (y == last.year && m <= last.month);
             m == 12 ? (m = 1, ++y) : ++m) {
            Date formation = third_friday(y, m);
            auto close = stocks.close(name, formation);
            if (!close) continue;  // not a trading day for this name
            Date expiry = next_month_expiry(formation);
            auto eit = git->second.find(expiry.serial);
            if (eit == git->second.end()) continue;  // no chain for the target expiry at all

            std::vector<OptionQuote> chain;
            for (const auto& q : eit->second)
                if (q.date == formation) chain.push_back(q);
            if (chain.empty()) continue;

            try {
                AtmPair pair = select_atm_pair(chain, *close);
                StraddleWeights w = delta_neutral_weights(pair.call.delta, pair.put.delta);
                StraddleDefinition defn;
                defn.underlying = name;
                defn.formation = formation;
                defn.expiry = expiry;
                defn.strike = pair.call.strike;
                defn.w_call_norm = w.call_norm;
                defn.w_put_norm = w.put_norm;
                defn.delta0_call = pair.call.delta;
                defn.delta0_put = pair.put.delta;
                formed[ni].push_back(build_straddle_series(defn, eit->second, stocks));
            } catch (const DataError& e) {
                skips[ni].push_back({name, formation, e.what()});
            }
        }
    });

    StraddlePanel panel;
    for (std::size_t ni = 0; ni < names.size(); ++ni) {
        if (!formed[ni].empty()) panel.by_underlying[names[ni]] = std::move(formed[ni]);
        for (auto& s : skips[ni]) panel.skipped.push_back(std::move(s));
    }
    return panel;
}

}  // namespace optbt
