#include "optbt/indicators.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "optbt/csv.hpp"
#include "optbt/errors.hpp"
#include "optbt/parallel.hpp"

namespace optbt {

namespace {

double population_std(std::span<const double> xs) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return std::sqrt(ss / static_cast<double>(xs.size()));
}

}  // namespace

std::vector<VolEstimate> ewm_volatility(std::span<const double> returns, int span) {
    if (returns.empty()) throw InsufficientHistory("ewm_volatility: empty return sequence");
    const double alpha = 2.0 / (span + 1.0);
    const double floor_daily = sigma_floor_daily();
    std::vector<VolEstimate> out(returns.size());
    double mu = returns[0];
    double s = returns[0] * returns[0];
    for (std::size_t i = 0; i < returns.size(); ++i) {
        if (i > 0) {
            mu = (1.0 - alpha) * mu + alpha * returns[i];
            s = (1.0 - alpha) * s + alpha * returns[i] * returns[i];
        }
        double var = s - mu * mu;
        double sigma = var > 0.0 ? std::sqrt(var) : 0.0;
        sigma = std::max(sigma, floor_daily);
        out[i] = {sigma, sigma * std::sqrt(kAnnualizationDays)};
    }
    return out;
}

double compound_return(std::span<const double> returns) {
    double level = 1.0;
    for (double r : returns) level *= 1.0 + r;
    return level - 1.0;
}

double normalized_return(std::span<const double> returns_up_to_t, int k, double sigma_daily) {
    if (static_cast<int>(returns_up_to_t.size()) < k)
        throw InsufficientHistory("normalized_return: need " + std::to_string(k) + " returns, have " +
                                  std::to_string(returns_up_to_t.size()));
    const double r = compound_return(returns_up_to_t.subspan(returns_up_to_t.size() - k));
    return r / (sigma_daily * std::sqrt(static_cast<double>(k)));
}

double phi(double y) { return y * std::exp(-y * y / 4.0) / 0.89; }

double macd_half_life(int j) { return std::log(0.5) / std::log(1.0 - 1.0 / j); }

namespace {

// Shared tail computation: given the full macd_norm history through t,
// produce the result at t.
MacdResult macd_result_at(double macd, std::span<const double> macd_norm_hist, bool price_std_zero) {
    MacdResult res;
    res.macd = macd;
    if (price_std_zero) {
        res.degenerate = true;
        return res;
    }
    res.macd_norm = macd_norm_hist.back();
    const std::size_t window = std::min<std::size_t>(macd_norm_hist.size(), 21);
    const double denom = population_std(macd_norm_hist.subspan(macd_norm_hist.size() - window));
    if (denom == 0.0) {
        res.degenerate = true;
        return res;
    }
    res.y = res.macd_norm / denom;
    return res;
}

}  // namespace

MacdResult macd_components(std::span<const double> prices, int S, int L) {
    if (prices.size() < 21)
        throw InsufficientHistory("macd_components: need >= 21 prices, have " + std::to_string(prices.size()));
    const double decay_s = 1.0 - 1.0 / S;
    const double decay_l = 1.0 - 1.0 / L;
    double ms = prices[0], ml = prices[0];
    // macd_norm exists from index 5 (six trailing prices inclusive).
    std::vector<double> norm_hist;
    norm_hist.reserve(prices.size());
    double macd = 0.0;
    bool last_price_std_zero = false;
    for (std::size_t t = 0; t < prices.size(); ++t) {
        if (t > 0) {
            ms = decay_s * ms + (1.0 - decay_s) * prices[t];
            ml = decay_l * ml + (1.0 - decay_l) * prices[t];
        }
        macd = ms - ml;
        if (t >= 5) {
            const double pstd = population_std(prices.subspan(t - 5, 6));
            last_price_std_zero = pstd == 0.0;
            norm_hist.push_back(last_price_std_zero ? 0.0 : macd / pstd);
        }
    }
    return macd_result_at(macd, norm_hist, last_price_std_zero);
}

std::vector<MacdResult> macd_series(std::span<const double> prices, int S, int L) {
    std::vector<MacdResult> out(prices.size());
    if (prices.empty()) return out;
    const double decay_s = 1.0 - 1.0 / S;
    const double decay_l = 1.0 - 1.0 / L;
    double ms = prices[0], ml = prices[0];
    std::vector<double> norm_hist;
    norm_hist.reserve(prices.size());
    for (std::size_t t = 0; t < prices.size(); ++t) {
        if (t > 0) {
            ms = decay_s * ms + (1.0 - decay_s) * prices[t];
            ml = decay_l * ml + (1.0 - decay_l) * prices[t];
        }
        const double macd = ms - ml;
        bool price_std_zero = false;
        if (t >= 5) {
            const double pstd = population_std(prices.subspan(t - 5, 6));
            price_std_zero = pstd == 0.0;
            norm_hist.push_back(price_std_zero ? 0.0 : macd / pstd);
        }
        if (t < 20) {
            out[t].macd = macd;
            out[t].degenerate = true;
            continue;
        }
        out[t] = macd_result_at(macd, norm_hist, price_std_zero);
    }
    return out;
}

MomentumFeature option_momentum_feature(std::span<const double> monthly_returns, int n) {
    if (static_cast<int>(monthly_returns.size()) < n) return {0.0, false};
    double sum = 0.0;
    for (std::size_t i = monthly_returns.size() - n; i < monthly_returns.size(); ++i) sum += monthly_returns[i];
    return {sum / n, true};
}

const std::array<std::string_view, kFeatureDim>& feature_names() {
    static const std::array<std::string_view, kFeatureDim> names = {
        "norm_ret_1",  "norm_ret_5",  "norm_ret_10",        "norm_ret_15",       "norm_ret_20",
        "macd_y_2_8",  "macd_y_4_16", "macd_y_8_32",        "mom_1m",            "mom_3m",
        "mom_6m",      "mom_12m",     "log_moneyness_call", "log_moneyness_put", "dte_years",
    };
    return names;
}

int StockSeries::day_index(Date d) const {
    auto it = std::lower_bound(dates.begin(), dates.end(), d);
    if (it == dates.end() || *it != d) return -1;
    return static_cast<int>(it - dates.begin());
}

const StockSeries* FeaturePanel::find(const std::string& underlying) const {
    for (const auto& s : stocks)
        if (s.underlying == underlying) return &s;
    return nullptr;
}

FeatureVector build_feature_vector(std::span<const double> returns_up_to_t, std::span<const double> index_up_to_t,
                                   std::span<const double> monthly_returns, double sigma_daily,
                                   const StraddleRecord& record) {
    FeatureVector fv;
    const int have = static_cast<int>(returns_up_to_t.size());
    for (std::size_t i = 0; i < kNormRetHorizons.size(); ++i) {
        const int k = kNormRetHorizons[i];
        fv.f[kNormRet1 + i] = have >= k ? normalized_return(returns_up_to_t, k, sigma_daily) : 0.0;
    }
    for (std::size_t i = 0; i < kMacdScales.size(); ++i) {
        if (index_up_to_t.size() >= 21) {
            MacdResult res = macd_components(index_up_to_t, kMacdScales[i].first, kMacdScales[i].second);
            fv.f[kMacdY_2_8 + i] = res.degenerate ? 0.0 : res.y;
        }
    }
    for (std::size_t i = 0; i < kMomentumLookbacks.size(); ++i) {
        MomentumFeature mom = option_momentum_feature(monthly_returns, kMomentumLookbacks[i]);
        fv.f[kMom1 + i] = mom.value;
        fv.mom_valid[i] = mom.valid;
    }
    fv.f[kLogMoneynessCall] = record.log_moneyness_call;
    fv.f[kLogMoneynessPut] = record.log_moneyness_put;
    fv.f[kDteYears] = record.dte_years;
    return fv;
}

namespace {

StockSeries build_stock_series(const std::string& name, const std::vector<StraddleSeries>& months,
                               double sigma_target) {
    StockSeries s;
    s.underlying = name;
    s.months = months;
    std::sort(s.months.begin(), s.months.end(),
              [](const StraddleSeries& a, const StraddleSeries& b) { return a.definition.formation < b.definition.formation; });

    s.monthly_returns.reserve(s.months.size());
    for (const auto& m : s.months)
        s.monthly_returns.push_back(m.records.back().price / m.records.front().price - 1.0);

    // Tradable days: every record except the expiry one. When the next month
    // forms on this month's expiry, that day re-enters as the next month's
    // formation record.
    for (std::size_t mi = 0; mi < s.months.size(); ++mi) {
        const auto& recs = s.months[mi].records;
        for (std::size_t k = 0; k + 1 < recs.size(); ++k) {
            s.dates.push_back(recs[k].date);
            s.ret_next.push_back(recs[k].ret_next);
            s.month_of_day.push_back(static_cast<int>(mi));
            s.day_offset.push_back(static_cast<int>(k));
        }
    }

    const std::size_t n = s.dates.size();
    s.index.resize(n);
    double level = 1.0;
    for (std::size_t j = 0; j < n; ++j) {
        if (j > 0) level *= 1.0 + s.ret_next[j - 1];
        s.index[j] = level;
    }

    s.sigma_daily.resize(n);
    s.sigma_ann.resize(n);
    s.vol_factor.resize(n);
    const double floor_daily = sigma_floor_daily();
    std::vector<VolEstimate> est;
    if (n > 1) {
        std::vector<double> realized(s.ret_next.begin(), s.ret_next.end() - 1);
        est = ewm_volatility(realized);
    }
    for (std::size_t j = 0; j < n; ++j) {
        VolEstimate v;
        if (j == 0)
            v = {floor_daily, floor_daily * std::sqrt(kAnnualizationDays)};
        else
            v = est[j - 1];
        s.sigma_daily[j] = v.sigma_daily;
        s.sigma_ann[j] = v.sigma_ann;
        s.vol_factor[j] = sigma_target / v.sigma_ann;
    }

    // MACD Y features via the incremental series over the rolled index.
    std::array<std::vector<MacdResult>, 3> macd;
    for (std::size_t i = 0; i < kMacdScales.size(); ++i)
        macd[i] = macd_series(s.index, kMacdScales[i].first, kMacdScales[i].second);

    // Momentum lookups keyed by live month: completed months are those whose
    // expiry is at or before the live month's formation.
    std::vector<std::array<MomentumFeature, 4>> month_mom(s.months.size());
    for (std::size_t mi = 0; mi < s.months.size(); ++mi) {
        std::size_t completed = 0;
        for (std::size_t pj = 0; pj < mi; ++pj)
            if (s.months[pj].definition.expiry <= s.months[mi].definition.formation) completed = pj + 1;
        std::span<const double> hist(s.monthly_returns.data(), completed);
        for (std::size_t i = 0; i < kMomentumLookbacks.size(); ++i)
            month_mom[mi][i] = option_momentum_feature(hist, kMomentumLookbacks[i]);
    }

    s.features.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
        FeatureVector fv;
        std::span<const double> realized(s.ret_next.data(), j);
        for (std::size_t i = 0; i < kNormRetHorizons.size(); ++i) {
            const int k = kNormRetHorizons[i];
            fv.f[kNormRet1 + i] =
                static_cast<int>(j) >= k ? normalized_return(realized, k, s.sigma_daily[j]) : 0.0;
        }
        for (std::size_t i = 0; i < kMacdScales.size(); ++i)
            fv.f[kMacdY_2_8 + i] = macd[i][j].degenerate ? 0.0 : macd[i][j].y;
        const int mi = s.month_of_day[j];
        for (std::size_t i = 0; i < kMomentumLookbacks.size(); ++i) {
            fv.f[kMom1 + i] = month_mom[mi][i].value;
            fv.mom_valid[i] = month_mom[mi][i].valid;
        }
        const StraddleRecord& rec = s.months[mi].records[s.day_offset[j]];
        fv.f[kLogMoneynessCall] = rec.log_moneyness_call;
        fv.f[kLogMoneynessPut] = rec.log_moneyness_put;
        fv.f[kDteYears] = rec.dte_years;
        s.features[j] = fv;
    }
    return s;
}

}  // namespace

FeaturePanel build_feature_panel(const StraddlePanel& panel, double sigma_target) {
    FeaturePanel fp;
    fp.sigma_target = sigma_target;
    std::vector<const std::pair<const std::string, std::vector<StraddleSeries>>*> entries;
    for (const auto& kv : panel.by_underlying) entries.push_back(&kv);
    fp.stocks.resize(entries.size());
    parallel_for(entries.size(), [&](std::size_t i) {
        fp.stocks[i] = build_stock_series(entries[i]->first, entries[i]->second, sigma_target);
    });

    std::vector<Date> dates;
    for (const auto& s : fp.stocks) dates.insert(dates.end(), s.dates.begin(), s.dates.end());
    std::sort(dates.begin(), dates.end());
    dates.erase(std::unique(dates.begin(), dates.end()), dates.end());
    fp.all_dates = std::move(dates);
    return fp;
}

void export_feature_panel_csv(const FeaturePanel& panel, const std::string& path) {
    std::ostringstream os;
    os << "underlying,formation_date,date";
    for (int i = 1; i <= kFeatureDim; ++i) os << ",f" << i;
    for (int i = 1; i <= 4; ++i) os << ",mask" << i;
    os << '\n';
    for (const auto& s : panel.stocks) {
        for (std::size_t j = 0; j < s.dates.size(); ++j) {
            const auto& defn = s.months[s.month_of_day[j]].definition;
            os << s.underlying << ',' << to_iso_string(defn.formation) << ',' << to_iso_string(s.dates[j]);
            for (double v : s.features[j].f) os << ',' << format_double(v);
            for (bool m : s.features[j].mom_valid) os << ',' << (m ? 1 : 0);
            os << '\n';
        }
    }
    write_file_atomic(path, os.str());
}

}  // namespace optbt
