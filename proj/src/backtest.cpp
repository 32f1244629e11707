#include "optbt/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "optbt/errors.hpp"

namespace optbt {

std::vector<BacktestWindow> expanding_windows(Date panel_start, Date panel_end, int block_years) {
    if (block_years < 1) throw ConfigError("expanding_windows: block_years must be >= 1");
    const Date end_exclusive = add_days(panel_end, 1);
    if (add_years(panel_start, 2 * block_years) > end_exclusive)
        throw SpanTooShort("expanding_windows: span " + to_iso_string(panel_start) + " .. " +
                           to_iso_string(panel_end) + " is shorter than " + std::to_string(2 * block_years) +
                           " years");
    std::vector<BacktestWindow> out;
    for (int k = 1;; ++k) {
        BacktestWindow w;
        w.train_start = panel_start;
        w.train_end = add_years(panel_start, block_years * k);
        if (!(w.train_end < end_exclusive)) break;
        w.test_start = w.train_end;
        w.test_end = std::min(add_years(panel_start, block_years * (k + 1)), end_exclusive);
        out.push_back(w);
    }
    return out;
}

PortfolioReturns portfolio_returns(const FeaturePanel& panel, const SignalPanel& signals, Date start, Date end,
                                   double sigma_target) {
    if (signals.size() != panel.stocks.size())
        throw AlignmentError("portfolio_returns: signal panel has " + std::to_string(signals.size()) +
                             " stocks, feature panel " + std::to_string(panel.stocks.size()));
    PortfolioReturns out;
    out.sigma_target = sigma_target;

    std::map<Date, std::pair<double, int>> days;  // date -> (sum, count)
    for (std::size_t si = 0; si < panel.stocks.size(); ++si) {
        const StockSeries& s = panel.stocks[si];
        const SignalSeries& sig = signals[si];
        if (sig.dates.size() != s.dates.size() || sig.underlying != s.underlying)
            throw AlignmentError("portfolio_returns: misaligned signal series for " + s.underlying);

        PositionSeries pos;
        pos.underlying = s.underlying;
        for (std::size_t j = 0; j < s.dates.size(); ++j) {
            if (s.dates[j] < start || !(s.dates[j] < end)) continue;
            if (sig.dates[j] != s.dates[j])
                throw AlignmentError("portfolio_returns: date mismatch for " + s.underlying);
            const double factor = sigma_target / s.sigma_ann[j];
            const double contrib = sig.x[j] * factor * s.ret_next[j];
            auto& slot = days[s.dates[j]];
            slot.first += contrib;
            slot.second += 1;
            pos.dates.push_back(s.dates[j]);
            pos.x.push_back(sig.x[j]);
            pos.vol_factor.push_back(factor);
            pos.ret_next.push_back(s.ret_next[j]);
            pos.month.push_back(s.month_of_day[j]);
            const auto& month = s.months[s.month_of_day[j]];
            pos.expiry.push_back(month.definition.expiry);
            pos.last_tradable.push_back(s.day_offset[j] + 2 == static_cast<int>(month.records.size()));
        }
        if (!pos.dates.empty()) out.positions.push_back(std::move(pos));
    }

    out.dates.reserve(days.size());
    out.returns.reserve(days.size());
    out.n_active.reserve(days.size());
    for (const auto& [date, slot] : days) {
        out.dates.push_back(date);
        out.returns.push_back(slot.second > 0 ? slot.first / slot.second : 0.0);
        out.n_active.push_back(slot.second);
    }
    return out;
}

namespace {

bool all_equal(std::span<const double> xs) {
    for (double x : xs)
        if (x != xs.front()) return false;
    return true;
}

double rescale_factor(std::span<const double> returns, double sigma_target) {
    if (returns.size() < 2) throw ZeroVariance("rescale_to_target_vol: need >= 2 observations");
    // A constant series has zero variance by definition even when the
    // two-pass computation leaves rounding dust.
    if (all_equal(returns)) throw ZeroVariance("rescale_to_target_vol: zero realized volatility");
    double mean = 0.0;
    for (double r : returns) mean += r;
    mean /= static_cast<double>(returns.size());
    double ss = 0.0;
    for (double r : returns) ss += (r - mean) * (r - mean);
    const double realized = std::sqrt(ss / static_cast<double>(returns.size())) * std::sqrt(kAnnualizationDays);
    if (realized == 0.0) throw ZeroVariance("rescale_to_target_vol: zero realized volatility");
    return sigma_target / realized;
}

}  // namespace

std::vector<double> rescale_to_target_vol(std::span<const double> returns, double sigma_target) {
    const double scale = rescale_factor(returns, sigma_target);
    std::vector<double> out(returns.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = returns[i] * scale;
    return out;
}

CostAdjusted cost_adjusted_returns(const PortfolioReturns& portfolio, double cost_bps) {
    CostAdjusted out;
    if (cost_bps == 0.0) {
        out.dates = portfolio.dates;
        out.returns = portfolio.returns;
        return out;
    }
    const double c = cost_bps * 1e-4;

    // Rebuild per-day sums, then subtract cost terms. Position deltas are in
    // vol-target units q = X * sigma_tgt / sigma_ann, so the per-straddle
    // charge c * sigma_tgt * |X/sigma - Xprev/sigma_prev| equals c * |dq|.
    std::map<Date, std::pair<double, int>> days;  // (sum, active count)
    for (std::size_t i = 0; i < portfolio.dates.size(); ++i)
        days[portfolio.dates[i]] = {portfolio.returns[i] * portfolio.n_active[i], portfolio.n_active[i]};
    std::map<Date, double> cost_only;  // exit terms on otherwise inactive days

    for (const auto& pos : portfolio.positions) {
        for (std::size_t j = 0; j < pos.dates.size(); ++j) {
            const bool entry = j == 0 || pos.month[j] != pos.month[j - 1];
            const double q_prev = entry ? 0.0 : pos.x[j - 1] * pos.vol_factor[j - 1];
            const double q = pos.x[j] * pos.vol_factor[j];
            days[pos.dates[j]].first -= c * std::abs(q - q_prev);

            // The position closes at expiry; straddles cut mid-life by the
            // evaluation span stay open and carry no exit charge.
            const bool last_of_month = j + 1 == pos.dates.size() || pos.month[j + 1] != pos.month[j];
            if (last_of_month && pos.last_tradable[j] && q != 0.0) {
                const Date exit_date = pos.expiry[j];
                auto it = days.find(exit_date);
                if (it != days.end())
                    it->second.first -= c * std::abs(q);
                else
                    cost_only[exit_date] -= c * std::abs(q);
            }
        }
    }
    for (const auto& [date, sum] : cost_only) days[date] = {sum, 0};

    out.dates.reserve(days.size());
    out.returns.reserve(days.size());
    for (const auto& [date, slot] : days) {
        out.dates.push_back(date);
        const int denom = slot.second > 0 ? slot.second : 1;
        out.returns.push_back(slot.first / denom);
    }
    return out;
}

MetricsReport compute_metrics(std::span<const double> returns) {
    if (returns.size() < 2) throw ZeroVariance("compute_metrics: need >= 2 observations");
    if (all_equal(returns)) throw ZeroVariance("compute_metrics: zero return variance");
    const double n = static_cast<double>(returns.size());

    double mean = 0.0;
    for (double r : returns) mean += r;
    mean /= n;
    double ss = 0.0;
    for (double r : returns) ss += (r - mean) * (r - mean);
    const double stdev = std::sqrt(ss / n);
    if (stdev == 0.0) throw ZeroVariance("compute_metrics: zero return variance");

    MetricsReport m;
    m.expected_return = mean * kAnnualizationDays;
    m.volatility = stdev * std::sqrt(kAnnualizationDays);
    m.sharpe = mean / stdev * std::sqrt(kAnnualizationDays);

    double loss_sum = 0.0, win_sum = 0.0;
    std::size_t losses = 0, wins = 0;
    std::vector<double> neg;
    for (double r : returns) {
        if (r > 0.0) {
            win_sum += r;
            ++wins;
        } else if (r < 0.0) {
            loss_sum += r;
            ++losses;
            neg.push_back(r);
        }
    }
    m.hit_rate = static_cast<double>(wins) / n;
    if (losses > 0 && wins > 0) m.avg_profit_over_avg_loss = (win_sum / wins) / std::abs(loss_sum / losses);

    if (!neg.empty()) {
        double nmean = 0.0;
        for (double r : neg) nmean += r;
        nmean /= static_cast<double>(neg.size());
        double nss = 0.0;
        for (double r : neg) nss += (r - nmean) * (r - nmean);
        m.downside_deviation = std::sqrt(nss / static_cast<double>(neg.size())) * std::sqrt(kAnnualizationDays);
        if (*m.downside_deviation > 0.0) m.sortino = m.expected_return / *m.downside_deviation;
    }

    // Max drawdown on the compounded equity curve.
    double equity = 1.0, peak = 1.0, mdd = 0.0;
    for (double r : returns) {
        equity *= 1.0 + r;
        peak = std::max(peak, equity);
        mdd = std::max(mdd, (peak - equity) / peak);
    }
    m.mdd = mdd;
    if (mdd > 0.0) m.calmar = m.expected_return / mdd;
    return m;
}

std::vector<CostSweepRow> cost_sweep(const PortfolioReturns& portfolio, std::span<const double> cost_grid_bps) {
    const double factor = rescale_factor(portfolio.returns, portfolio.sigma_target);
    std::vector<CostSweepRow> rows;
    rows.reserve(cost_grid_bps.size());
    for (double c : cost_grid_bps) {
        CostAdjusted adj = cost_adjusted_returns(portfolio, c);
        std::vector<double> scaled(adj.returns.size());
        for (std::size_t i = 0; i < scaled.size(); ++i) scaled[i] = adj.returns[i] * factor;
        rows.push_back({c, compute_metrics(scaled).sharpe});
    }
    return rows;
}

}  // namespace optbt
