#include "optbt/strategies.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "optbt/errors.hpp"

namespace optbt {

namespace {

const int kTsmomLookback = 20;

SignalPanel make_panel(const FeaturePanel& panel, const std::string& name) {
    SignalPanel out;
    out.reserve(panel.stocks.size());
    for (const auto& s : panel.stocks) {
        SignalSeries series;
        series.underlying = s.underlying;
        series.strategy = name;
        series.dates = s.dates;
        series.x.assign(s.dates.size(), 0.0);
        out.push_back(std::move(series));
    }
    return out;
}

int momentum_slot(int lookback_months) {
    for (std::size_t i = 0; i < kMomentumLookbacks.size(); ++i)
        if (kMomentumLookbacks[i] == lookback_months) return static_cast<int>(i);
    throw ConfigError("unsupported momentum lookback: " + std::to_string(lookback_months));
}

SignalPanel run_cs_heston(const FeaturePanel& panel, const std::string& name, int lookback, bool mean_revert) {
    SignalPanel out = make_panel(panel, name);
    const int slot = momentum_slot(lookback);

    // Group months by formation date across stocks; ranking is a
    // cross-sectional barrier per formation day.
    std::map<Date, std::vector<std::pair<int, int>>> by_formation;  // date -> (stock, month)
    for (std::size_t si = 0; si < panel.stocks.size(); ++si)
        for (std::size_t mi = 0; mi < panel.stocks[si].months.size(); ++mi)
            by_formation[panel.stocks[si].months[mi].definition.formation].emplace_back(static_cast<int>(si),
                                                                                        static_cast<int>(mi));

    for (const auto& [formation, members] : by_formation) {
        std::vector<std::string> ids;
        std::vector<double> scores;
        std::vector<bool> valid;
        for (auto [si, mi] : members) {
            const StockSeries& s = panel.stocks[si];
            const int day = s.day_index(formation);
            ids.push_back(s.underlying);
            scores.push_back(day >= 0 ? s.features[day].f[kMom1 + slot] : 0.0);
            valid.push_back(day >= 0 && s.features[day].mom_valid[slot]);
        }
        int n_valid = 0;
        for (bool v : valid) n_valid += v ? 1 : 0;
        // Formation days with fewer than two scored stocks (e.g. the cold
        // months before any lookback completes) are flat, not an error.
        std::vector<double> x(members.size(), 0.0);
        if (n_valid >= 2) x = cs_heston_signal(ids, scores, valid, mean_revert);
        for (std::size_t k = 0; k < members.size(); ++k) {
            auto [si, mi] = members[k];
            const StockSeries& s = panel.stocks[si];
            for (std::size_t j = 0; j < s.dates.size(); ++j)
                if (s.month_of_day[j] == mi) out[si].x[j] = x[k];
        }
    }
    return out;
}

}  // namespace

const std::vector<std::string>& strategy_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> v = {"long_only", "short_only", "tsmom", "tsmr", "macd", "macdmr"};
        for (const char* family : {"tsheston_mom_", "tsheston_mr_", "csheston_mom_", "csheston_mr_"})
            for (int n : kMomentumLookbacks) v.push_back(family + std::to_string(n));
        return v;
    }();
    return names;
}

bool is_strategy_name(const std::string& name) {
    const auto& names = strategy_names();
    return std::find(names.begin(), names.end(), name) != names.end();
}

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

double tsmom_signal(const StockSeries& stock, int day, bool mean_revert) {
    if (day < kTsmomLookback) return 0.0;
    const double r = stock.index[day] / stock.index[day - kTsmomLookback] - 1.0;
    const double x = sign(r);
    return mean_revert ? -x : x;
}

double macd_strategy_signal(const StockSeries& stock, int day, bool mean_revert) {
    const FeatureVector& fv = stock.features[day];
    const double x = (phi(fv.f[kMacdY_2_8]) + phi(fv.f[kMacdY_4_16]) + phi(fv.f[kMacdY_8_32])) / 3.0;
    return mean_revert ? -x : x;
}

double ts_heston_signal(double momentum_feature, bool valid, bool mean_revert) {
    if (!valid) return 0.0;
    const double x = sign(momentum_feature);
    return mean_revert ? -x : x;
}

std::vector<double> cs_heston_signal(const std::vector<std::string>& ids, const std::vector<double>& scores,
                                     const std::vector<bool>& valid, bool mean_revert) {
    const std::size_t n = ids.size();
    if (scores.size() != n || valid.size() != n)
        throw AlignmentError("cs_heston_signal: ids/scores/valid sizes differ");
    std::vector<int> ranked;
    for (std::size_t i = 0; i < n; ++i)
        if (valid[i]) ranked.push_back(static_cast<int>(i));
    if (ranked.size() < 2)
        throw TooFewStocks("cs_heston_signal: need >= 2 valid scores, have " + std::to_string(ranked.size()));
    std::sort(ranked.begin(), ranked.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return ids[a] < ids[b];
    });
    const std::size_t decile = std::max<std::size_t>(1, ranked.size() / 10);
    std::vector<double> x(n, 0.0);
    for (std::size_t k = 0; k < decile; ++k) {
        x[ranked[k]] = mean_revert ? -1.0 : 1.0;
        x[ranked[ranked.size() - 1 - k]] = mean_revert ? 1.0 : -1.0;
    }
    return x;
}

SignalPanel run_strategy(const FeaturePanel& panel, const std::string& name) {
    if (!is_strategy_name(name)) {
        std::string all;
        for (const auto& s : strategy_names()) all += (all.empty() ? "" : ", ") + s;
        throw ConfigError("unknown strategy '" + name + "'; valid names: " + all);
    }

    if (name == "long_only" || name == "short_only") {
        SignalPanel out = make_panel(panel, name);
        const double v = name == "long_only" ? 1.0 : -1.0;
        for (auto& s : out) std::fill(s.x.begin(), s.x.end(), v);
        return out;
    }
    if (name == "tsmom" || name == "tsmr") {
        SignalPanel out = make_panel(panel, name);
        const bool mr = name == "tsmr";
        for (std::size_t si = 0; si < panel.stocks.size(); ++si)
            for (std::size_t j = 0; j < panel.stocks[si].dates.size(); ++j)
                out[si].x[j] = tsmom_signal(panel.stocks[si], static_cast<int>(j), mr);
        return out;
    }
    if (name == "macd" || name == "macdmr") {
        SignalPanel out = make_panel(panel, name);
        const bool mr = name == "macdmr";
        for (std::size_t si = 0; si < panel.stocks.size(); ++si)
            for (std::size_t j = 0; j < panel.stocks[si].dates.size(); ++j)
                out[si].x[j] = macd_strategy_signal(panel.stocks[si], static_cast<int>(j), mr);
        return out;
    }
    // tsheston_{mom,mr}_n / csheston_{mom,mr}_n
    const bool cs = name.rfind("csheston_", 0) == 0;
    const bool mr = name.find("_mr_") != std::string::npos;
    const int lookback = std::stoi(name.substr(name.find_last_of('_') + 1));
    if (cs) return run_cs_heston(panel, name, lookback, mr);

    SignalPanel out = make_panel(panel, name);
    const int slot = momentum_slot(lookback);
    for (std::size_t si = 0; si < panel.stocks.size(); ++si) {
        const StockSeries& s = panel.stocks[si];
        for (std::size_t j = 0; j < s.dates.size(); ++j)
            out[si].x[j] = ts_heston_signal(s.features[j].f[kMom1 + slot], s.features[j].mom_valid[slot], mr);
    }
    return out;
}

}  // namespace optbt
