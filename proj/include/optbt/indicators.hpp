#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string_view>
#include <vector>

#include "optbt/market_data.hpp"

namespace optbt {

constexpr double kAnnualizationDays = 252.0;
constexpr double kDefaultSigmaTarget = 0.15;
// 5% annualized volatility floor; caps the vol-target leverage at
// sigma_tgt / floor = 3x.
inline double sigma_floor_daily() { return 0.05 / std::sqrt(kAnnualizationDays); }

struct VolEstimate {
    double sigma_daily = 0.0;
    double sigma_ann = 0.0;  // sigma_daily * sqrt(252)
};

// Exponentially weighted moving standard deviation with span 20
// (alpha = 2/(span+1)), via exponentially weighted first and second moments
// seeded from the first observation:
//
//     mu_t = (1-a) mu_{t-1} + a x_t          mu_0 = x_0
//     s_t  = (1-a) s_{t-1}  + a x_t^2        s_0  = x_0^2
//     sigma_t = sqrt(max(0, s_t - mu_t^2))   floored at sigma_floor_daily
//
// Causal: estimate i uses returns[0..i] only.
std::vector<VolEstimate> ewm_volatility(std::span<const double> returns, int span = 20);

// prod(1 + r) - 1
double compound_return(std::span<const double> returns);

// r_{t-k,t} / (sigma_daily * sqrt(k)) with r compounded over the last k
// returns. Throws InsufficientHistory when fewer than k returns are given.
double normalized_return(std::span<const double> returns_up_to_t, int k, double sigma_daily);

// Response shaping for MACD signals: y * exp(-y^2/4) / 0.89.
double phi(double y);

// Half-life of the price EWM with decay factor (1 - 1/j).
double macd_half_life(int j);

struct MacdResult {
    double macd = 0.0;
    double macd_norm = 0.0;
    double y = 0.0;
    bool degenerate = false;  // a trailing std was zero; y forced to 0
};

// Volatility-normalised MACD at the last index of `prices`:
//
//     macd      = m(S) - m(L)                 m(j): EWM, decay 1 - 1/j
//     macd_norm = macd / std(p_{t-5:t})       population std, 6 prices
//     y         = macd_norm / std(macd_norm_{t-20:t})   up to 21 values
//
// Requires >= 21 prices (throws InsufficientHistory); below 26 prices the
// trailing y-window holds fewer than 21 macd_norm values and uses what
// exists (macd_norm is defined from the 6th price onward).
MacdResult macd_components(std::span<const double> prices, int S, int L);

// Incremental equivalent of calling macd_components on every prefix;
// O(T) per (S, L) pair instead of O(T^2). Entries before index 20 are
// zeroed with degenerate = true.
std::vector<MacdResult> macd_series(std::span<const double> prices, int S, int L);

struct MomentumFeature {
    double value = 0.0;
    bool valid = false;
};

// Mean of the most recent n completed monthly straddle returns. Fewer than
// n in the history: value 0, valid false.
MomentumFeature option_momentum_feature(std::span<const double> monthly_returns, int n);

// Frozen feature ordering. Trained weights depend on it; checkpoints store
// the name list as a fingerprint and refuse to load on mismatch.
enum FeatureIndex : int {
    kNormRet1 = 0,
    kNormRet5,
    kNormRet10,
    kNormRet15,
    kNormRet20,
    kMacdY_2_8,
    kMacdY_4_16,
    kMacdY_8_32,
    kMom1,
    kMom3,
    kMom6,
    kMom12,
    kLogMoneynessCall,
    kLogMoneynessPut,
    kDteYears,
};
constexpr int kFeatureDim = 15;
constexpr std::array<int, 5> kNormRetHorizons = {1, 5, 10, 15, 20};
constexpr std::array<std::pair<int, int>, 3> kMacdScales = {{{2, 8}, {4, 16}, {8, 32}}};
constexpr std::array<int, 4> kMomentumLookbacks = {1, 3, 6, 12};

const std::array<std::string_view, kFeatureDim>& feature_names();

struct FeatureVector {
    std::array<double, kFeatureDim> f{};
    std::array<bool, 4> mom_valid{};  // per momentum lookback
};

// One underlying's straddle months stitched into a continuous daily series.
// Day t carries the straddle live over [t, t+1); its return ret_next[t] is
// realized at t+1. The rolled index compounds ret_next from 1.0 and is the
// "price" series behind trailing returns and MACD. Vol/feature entries at t
// use only data realized by t.
struct StockSeries {
    std::string underlying;
    std::vector<StraddleSeries> months;    // sorted by formation date
    std::vector<double> monthly_returns;   // hold-to-expiry compounded, per month
    std::vector<Date> dates;               // tradable days
    std::vector<double> ret_next;
    std::vector<double> index;             // rolled level at t (index[0] = 1)
    std::vector<double> sigma_daily;
    std::vector<double> sigma_ann;
    std::vector<double> vol_factor;        // sigma_target / sigma_ann
    std::vector<int> month_of_day;
    std::vector<int> day_offset;           // position within months[month].records
    std::vector<FeatureVector> features;

    int day_index(Date d) const;  // -1 when d is not a tradable day
};

struct FeaturePanel {
    std::vector<StockSeries> stocks;  // sorted by underlying
    std::vector<Date> all_dates;      // sorted union of tradable days
    double sigma_target = kDefaultSigmaTarget;

    const StockSeries* find(const std::string& underlying) const;
};

FeaturePanel build_feature_panel(const StraddlePanel& panel, double sigma_target = kDefaultSigmaTarget);

// Single-point assembly; the panel builder is the batch equivalent.
// `returns_up_to_t`/`index_up_to_t` are the stock's rolled history through
// day t (index has one more entry than returns), `monthly_returns` the
// completed months before the live straddle's formation.
FeatureVector build_feature_vector(std::span<const double> returns_up_to_t, std::span<const double> index_up_to_t,
                                   std::span<const double> monthly_returns, double sigma_daily,
                                   const StraddleRecord& record);

// Audit export: underlying,formation_date,date,f1..f15,mask1..mask4
void export_feature_panel_csv(const FeaturePanel& panel, const std::string& path);

}  // namespace optbt
