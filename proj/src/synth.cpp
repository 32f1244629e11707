#include "optbt/synth.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <vector>

#include "optbt/csv.hpp"
#include "optbt/errors.hpp"
#include "optbt/parallel.hpp"
#include "optbt/rng.hpp"

namespace optbt {

namespace {

struct SynthCalendar {
    std::vector<Date> formations;          // third Fridays, one per month (+1 final expiry)
    std::vector<std::vector<Date>> days;   // per month: weekdays in [F_m, F_{m+1}] inclusive
};

SynthCalendar make_calendar(const SynthSpec& spec) {
    SynthCalendar cal;
    int y = spec.start_year, m = spec.start_month;
    for (int i = 0; i <= spec.n_months; ++i) {
        cal.formations.push_back(third_friday(y, m));
        if (++m > 12) {
            m = 1;
            ++y;
        }
    }
    cal.days.resize(spec.n_months);
    for (int i = 0; i < spec.n_months; ++i) {
        for (Date d = cal.formations[i]; d <= cal.formations[i + 1]; d = add_days(d, 1))
            if (is_weekday(d)) cal.days[i].push_back(d);
    }
    return cal;
}

std::string stock_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "S%03d", i);
    return buf;
}

void validate(const SynthSpec& spec) {
    if (spec.n_stocks < 1 || spec.n_months < 1) throw ConfigError("synth: need at least 1 stock and 1 month");
    if (!(std::abs(spec.ar1_rho) < 1.0)) throw ConfigError("synth: |ar1_rho| must be < 1");
    if (!(spec.daily_vol > 0.0)) throw ConfigError("synth: daily_vol must be positive");
    if (!(spec.half_spread > 0.0)) throw ConfigError("synth: half_spread must be positive (ask > bid)");
    if (spec.trading_days_per_month != 21)
        throw ConfigError("synth: trading_days_per_month is nominal and fixed at 21");
}

// AR(1) daily returns for one stock across the whole span; stationary start.
std::vector<double> ar1_returns(const SynthSpec& spec, std::size_t n, int stock) {
    Rng rng(Rng(spec.seed).derive(static_cast<std::uint64_t>(stock) + 1));
    const double rho = spec.ar1_rho;
    const double innov_std = spec.daily_vol * std::sqrt(1.0 - rho * rho);
    std::vector<double> r(n);
    double prev = spec.daily_vol * rng.normal();
    for (std::size_t t = 0; t < n; ++t) {
        r[t] = t == 0 ? prev : rho * prev + innov_std * rng.normal();
        prev = r[t];
    }
    return r;
}

}  // namespace

StraddlePanel generate_straddle_panel(const SynthSpec& spec) {
    validate(spec);
    const SynthCalendar cal = make_calendar(spec);
    std::size_t n_returns = 0;
    for (const auto& d : cal.days) n_returns += d.size() - 1;

    const double delta_call = spec.skewed_deltas ? 0.6 : 0.5;
    const double delta_put = spec.skewed_deltas ? -0.4 : -0.5;

    StraddlePanel panel;
    std::vector<std::vector<StraddleSeries>> per_stock(spec.n_stocks);
    parallel_for(static_cast<std::size_t>(spec.n_stocks), [&](std::size_t si) {
        const std::vector<double> rets = ar1_returns(spec, n_returns, static_cast<int>(si));
        std::vector<StraddleSeries> months;
        months.reserve(spec.n_months);
        std::size_t rpos = 0;
        for (int mi = 0; mi < spec.n_months; ++mi) {
            StraddleSeries series;
            StraddleDefinition& defn = series.definition;
            defn.underlying = stock_name(static_cast<int>(si));
            defn.formation = cal.formations[mi];
            defn.expiry = cal.formations[mi + 1];
            defn.strike = spec.strike;
            StraddleWeights w = delta_neutral_weights(delta_call, delta_put);
            defn.w_call_norm = w.call_norm;
            defn.w_put_norm = w.put_norm;
            defn.delta0_call = delta_call;
            defn.delta0_put = delta_put;

            const auto& days = cal.days[mi];
            series.records.resize(days.size());
            double price = 1.0;
            for (std::size_t k = 0; k < days.size(); ++k) {
                StraddleRecord& rec = series.records[k];
                rec.date = days[k];
                if (k > 0) price *= 1.0 + rets[rpos + k - 1];
                rec.price = price;
                rec.call_mid = price;
                rec.put_mid = price;
                rec.log_moneyness_call = 0.0;
                rec.log_moneyness_put = 0.0;
                rec.dte_years = static_cast<double>(days_between(days[k], defn.expiry)) / 365.0;
            }
            for (std::size_t k = 0; k + 1 < series.records.size(); ++k)
                series.records[k].ret_next = rets[rpos + k];
            series.records.back().ret_next = std::numeric_limits<double>::quiet_NaN();
            rpos += days.size() - 1;
            months.push_back(std::move(series));
        }
        per_stock[si] = std::move(months);
    });
    for (int si = 0; si < spec.n_stocks; ++si) panel.by_underlying[stock_name(si)] = std::move(per_stock[si]);
    return panel;
}

void generate_option_chain_csv(const SynthSpec& spec, const std::string& options_path,
                               const std::string& stocks_path) {
    StraddlePanel panel = generate_straddle_panel(spec);

    std::ostringstream opt, stk;
    opt << "date,underlying,type,strike,expiry,bid,ask,delta,open_interest,standard_settlement\n";
    stk << "date,underlying,close\n";
    const std::string strike = format_double(spec.strike);
    for (const auto& [name, months] : panel.by_underlying) {
        for (std::size_t mi = 0; mi < months.size(); ++mi) {
            const auto& series = months[mi];
            const std::string expiry = to_iso_string(series.definition.expiry);
            const std::string dc = format_double(series.definition.delta0_call);
            const std::string dp = format_double(series.definition.delta0_put);
            for (std::size_t k = 0; k < series.records.size(); ++k) {
                const auto& rec = series.records[k];
                const std::string date = to_iso_string(rec.date);
                const std::string bid = format_double(rec.price - spec.half_spread);
                const std::string ask = format_double(rec.price + spec.half_spread);
                opt << date << ',' << name << ",C," << strike << ',' << expiry << ',' << bid << ',' << ask << ','
                    << dc << ",100,1\n";
                opt << date << ',' << name << ",P," << strike << ',' << expiry << ',' << bid << ',' << ask << ','
                    << dp << ",100,1\n";
                // Stock rows only for the month's tradable days; the expiry
                // row comes from the next month's formation day (except the
                // final month, which owns its expiry day).
                if (k + 1 < series.records.size() || mi + 1 == months.size())
                    stk << date << ',' << name << ',' << format_double(spec.strike) << '\n';
            }
        }
    }
    write_file_atomic(options_path, opt.str());
    write_file_atomic(stocks_path, stk.str());
}

}  // namespace optbt
