#include "optbt/cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "optbt/backtest.hpp"
#include "optbt/csv.hpp"
#include "optbt/errors.hpp"
#include "optbt/synth.hpp"
#include "optbt/training.hpp"

namespace optbt {

namespace {

using json = nlohmann::ordered_json;

json metrics_to_json(const MetricsReport& m) {
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    json j;
    j["expected_return"] = m.expected_return;
    j["volatility"] = m.volatility;
    j["downside_deviation"] = opt(m.downside_deviation);
    j["mdd"] = m.mdd;
    j["sharpe"] = m.sharpe;
    j["sortino"] = opt(m.sortino);
    j["calmar"] = opt(m.calmar);
    j["hit_rate"] = m.hit_rate;
    j["avg_profit_over_avg_loss"] = opt(m.avg_profit_over_avg_loss);
    return j;
}

FeaturePanel load_panel(const std::string& data_dir, double sigma_target, StraddlePanel* formed = nullptr,
                        MarketData* raw = nullptr) {
    MarketData data = ingest_csv(data_dir + "/options.csv", data_dir + "/stocks.csv");
    StraddlePanel panel = form_straddle_panel(data);
    if (panel.by_underlying.empty()) throw DataError("no straddles could be formed from " + data_dir);
    if (formed) *formed = panel;
    if (raw) *raw = std::move(data);
    return build_feature_panel(panel, sigma_target);
}

void write_returns_csv(const std::string& path, const std::vector<Date>& dates, std::span<const double> returns) {
    std::ostringstream os;
    os << "date,return\n";
    for (std::size_t i = 0; i < dates.size(); ++i)
        os << to_iso_string(dates[i]) << ',' << format_double(returns[i]) << '\n';
    write_file_atomic(path, os.str());
}

void write_equity_csv(const std::string& path, const std::vector<Date>& dates, std::span<const double> returns) {
    std::ostringstream os;
    os << "date,cumulative_return\n";
    double equity = 1.0;
    for (std::size_t i = 0; i < dates.size(); ++i) {
        equity *= 1.0 + returns[i];
        os << to_iso_string(dates[i]) << ',' << format_double(equity - 1.0) << '\n';
    }
    write_file_atomic(path, os.str());
}

void write_positions_csv(const std::string& path, const PortfolioReturns& portfolio) {
    std::ostringstream os;
    os << "underlying,date,month,x,vol_factor,ret_next,expiry,last_tradable\n";
    for (const auto& pos : portfolio.positions)
        for (std::size_t j = 0; j < pos.dates.size(); ++j)
            os << pos.underlying << ',' << to_iso_string(pos.dates[j]) << ',' << pos.month[j] << ','
               << format_double(pos.x[j]) << ',' << format_double(pos.vol_factor[j]) << ','
               << format_double(pos.ret_next[j]) << ',' << to_iso_string(pos.expiry[j]) << ','
               << (pos.last_tradable[j] ? 1 : 0) << '\n';
    write_file_atomic(path, os.str());
}

Date parse_bound(const std::string& s, const char* flag) {
    auto d = parse_iso_date(s);
    if (!d) throw ConfigError(std::string("invalid ") + flag + " date '" + s + "' (expected YYYY-MM-DD)");
    return *d;
}

json sweep_rows_to_json(const std::vector<CostSweepRow>& rows) {
    json arr = json::array();
    for (const auto& r : rows) arr.push_back({{"cost_bps", r.cost_bps}, {"sharpe", r.sharpe}});
    return arr;
}

void write_sweep_csv(const std::string& path, const std::vector<CostSweepRow>& rows) {
    std::ostringstream os;
    os << "cost_bps,sharpe\n";
    for (const auto& r : rows) os << format_double(r.cost_bps) << ',' << format_double(r.sharpe) << '\n';
    write_file_atomic(path, os.str());
}

}  // namespace

int run_ingest(const IngestOptions& opt) {
    if (opt.data_dir.empty()) throw ConfigError("--data-dir is required");
    MarketData raw;
    StraddlePanel formed;
    FeaturePanel panel = load_panel(opt.data_dir, kDefaultSigmaTarget, &formed, &raw);
    std::size_t straddles = 0, days = 0;
    for (const auto& s : panel.stocks) {
        straddles += s.months.size();
        days += s.dates.size();
    }
    std::cout << "quotes: " << raw.quotes.size() << "\nstock rows: " << raw.stocks.size()
              << "\nunderlyings: " << panel.stocks.size() << "\nstraddles formed: " << straddles
              << "\nstraddle-days: " << days << "\nformations skipped: " << formed.skipped.size() << '\n';
    for (const auto& skip : formed.skipped)
        std::cout << "  skipped " << skip.underlying << " " << to_iso_string(skip.formation) << ": " << skip.reason
                  << '\n';
    return 0;
}

int run_synth(const SynthOptions& opt) {
    SynthSpec spec;
    spec.n_stocks = opt.stocks;
    spec.n_months = opt.months;
    spec.ar1_rho = opt.rho;
    spec.daily_vol = opt.daily_vol;
    spec.seed = opt.seed;
    spec.skewed_deltas = opt.skewed_deltas;
    generate_option_chain_csv(spec, opt.out_dir + "/options.csv", opt.out_dir + "/stocks.csv");
    std::cout << "wrote " << opt.out_dir << "/options.csv and " << opt.out_dir << "/stocks.csv\n";
    return 0;
}

int run_backtest(const BacktestOptions& opt) {
    if (!is_strategy_name(opt.strategy)) {
        std::string all;
        for (const auto& s : strategy_names()) all += (all.empty() ? "" : ", ") + s;
        throw ConfigError("unknown strategy '" + opt.strategy + "'; valid names: " + all);
    }
    if (opt.data_dir.empty() || opt.out_dir.empty()) throw ConfigError("--data-dir and --out are required");

    FeaturePanel panel = load_panel(opt.data_dir, opt.sigma_target);
    const Date start = opt.start.empty() ? panel.all_dates.front() : parse_bound(opt.start, "--start");
    const Date end = opt.end.empty() ? add_days(panel.all_dates.back(), 1) : parse_bound(opt.end, "--end");

    SignalPanel signals = run_strategy(panel, opt.strategy);
    PortfolioReturns portfolio = portfolio_returns(panel, signals, start, end, opt.sigma_target);
    if (portfolio.returns.size() < 2) throw DataError("evaluated span holds fewer than 2 portfolio days");

    MetricsReport raw_metrics = compute_metrics(portfolio.returns);
    std::vector<double> rescaled = rescale_to_target_vol(portfolio.returns, opt.sigma_target);
    MetricsReport rescaled_metrics = compute_metrics(rescaled);

    json report;
    report["version"] = kVersion;
    report["command"] = "backtest";
    report["config"] = {{"strategy", opt.strategy},
                        {"data_dir", opt.data_dir},
                        {"sigma_target", opt.sigma_target},
                        {"start", to_iso_string(start)},
                        {"end", to_iso_string(end)}};
    report["n_days"] = portfolio.dates.size();
    report["metrics_raw"] = metrics_to_json(raw_metrics);
    report["metrics_rescaled"] = metrics_to_json(rescaled_metrics);
    write_file_atomic(opt.out_dir + "/report.json", report.dump(2) + "\n");

    write_returns_csv(opt.out_dir + "/returns_" + opt.strategy + ".csv", portfolio.dates, portfolio.returns);
    write_equity_csv(opt.out_dir + "/equity_" + opt.strategy + ".csv", portfolio.dates, rescaled);
    write_positions_csv(opt.out_dir + "/positions.csv", portfolio);
    std::cout << "backtest " << opt.strategy << ": sharpe " << raw_metrics.sharpe << " over "
              << portfolio.dates.size() << " days\n";
    return 0;
}

int run_train(const TrainOptions& opt) {
    const Architecture arch = parse_architecture(opt.model);
    if (opt.data_dir.empty() || opt.out_dir.empty()) throw ConfigError("--data-dir and --out are required");
    if (opt.seeds.empty()) throw ConfigError("--seeds must name at least one seed");
    if (opt.trials < 1) throw ConfigError("--trials must be >= 1");

    FeaturePanel panel = load_panel(opt.data_dir, opt.sigma_target);
    const Date panel_start = panel.all_dates.front();
    const Date panel_end = panel.all_dates.back();
    std::vector<BacktestWindow> windows = expanding_windows(panel_start, panel_end, opt.block_years);

    TrainConfig base;
    base.tc_reg_cost_bps = opt.tc_reg_cost_bps;
    base.max_epochs = opt.max_epochs;
    SearchSpace space;

    // Ensemble signal panel over the concatenated out-of-sample span:
    // mean position across seeds, zero where a model emits nothing.
    SignalPanel ensemble;
    std::vector<SignalPanel> per_seed(opt.seeds.size());
    for (const auto& s : panel.stocks) {
        SignalSeries series;
        series.underlying = s.underlying;
        series.strategy = opt.model;
        series.dates = s.dates;
        series.x.assign(s.dates.size(), 0.0);
        ensemble.push_back(series);
    }
    for (auto& sp : per_seed) sp = ensemble;

    json window_reports = json::array();
    for (std::size_t wi = 0; wi < windows.size(); ++wi) {
        const BacktestWindow& w = windows[wi];
        TrainingData train_data(panel, arch, w.train_start, w.train_end);
        TrainingData test_data(panel, arch, w.test_start, w.test_end);

        json seed_reports = json::array();
        for (std::size_t si = 0; si < opt.seeds.size(); ++si) {
            const std::uint64_t seed = opt.seeds[si];
            SearchResult sr = random_search(train_data, space, opt.trials, seed, base);

            const std::string tag = "w" + std::to_string(wi) + "_s" + std::to_string(seed);
            save_checkpoint(sr.best_result.params, opt.out_dir + "/checkpoint_" + tag + ".json");
            {
                std::ostringstream os;
                os << "epoch,train_loss,val_loss,elapsed_s\n";
                for (const auto& e : sr.best_result.log)
                    os << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.val_loss) << ','
                       << format_double(e.elapsed_s) << '\n';
                write_file_atomic(opt.out_dir + "/train_log_" + tag + ".csv", os.str());
            }

            json trials = json::array();
            for (const auto& t : sr.trials)
                trials.push_back({{"trial", t.trial},
                                  {"val_loss", t.val_loss},
                                  {"minibatch_size", t.config.minibatch_size},
                                  {"dropout", t.config.dropout},
                                  {"hidden", t.config.hidden},
                                  {"learning_rate", t.config.learning_rate},
                                  {"max_gradient_norm", t.config.max_gradient_norm},
                                  {"l1_coefficient", t.config.l1_coefficient},
                                  {"tc_reg_cost_bps", t.config.tc_reg_cost_bps},
                                  {"max_epochs", t.config.max_epochs},
                                  {"patience", t.config.patience},
                                  {"seed", t.config.seed}});
            json seed_report;
            seed_report["seed"] = seed;
            seed_report["best_val_loss"] = sr.best_result.best_val_loss;
            seed_report["best_epoch"] = sr.best_result.best_epoch;
            seed_report["best_config"] = trials[static_cast<std::size_t>(
                std::min_element(sr.trials.begin(), sr.trials.end(),
                                 [](const TrialRecord& a, const TrialRecord& b) { return a.val_loss < b.val_loss; }) -
                sr.trials.begin())];
            seed_report["trials"] = std::move(trials);
            seed_reports.push_back(std::move(seed_report));

            std::vector<double> x = model_positions(sr.best_result.params, test_data);
            const auto& samples = test_data.samples();
            for (std::size_t k = 0; k < samples.size(); ++k) {
                per_seed[si][samples[k].stock].x[samples[k].day] = x[k];
                ensemble[samples[k].stock].x[samples[k].day] += x[k] / static_cast<double>(opt.seeds.size());
            }
        }
        window_reports.push_back({{"train_start", to_iso_string(w.train_start)},
                                  {"train_end", to_iso_string(w.train_end)},
                                  {"test_start", to_iso_string(w.test_start)},
                                  {"test_end", to_iso_string(w.test_end)},
                                  {"seeds", std::move(seed_reports)}});
    }

    const Date oos_start = windows.front().test_start;
    const Date oos_end = windows.back().test_end;
    PortfolioReturns portfolio = portfolio_returns(panel, ensemble, oos_start, oos_end, opt.sigma_target);
    if (portfolio.returns.size() < 2) throw DataError("out-of-sample span holds fewer than 2 portfolio days");
    MetricsReport raw_metrics = compute_metrics(portfolio.returns);
    std::vector<double> rescaled = rescale_to_target_vol(portfolio.returns, opt.sigma_target);

    json report;
    report["version"] = kVersion;
    report["command"] = "train";
    json seeds = json::array();
    for (auto s : opt.seeds) seeds.push_back(s);
    report["config"] = {{"model", opt.model},
                        {"data_dir", opt.data_dir},
                        {"seeds", std::move(seeds)},
                        {"trials", opt.trials},
                        {"tc_reg_cost_bps", opt.tc_reg_cost_bps},
                        {"block_years", opt.block_years},
                        {"max_epochs", opt.max_epochs},
                        {"sigma_target", opt.sigma_target}};
    report["windows"] = std::move(window_reports);
    report["oos_start"] = to_iso_string(oos_start);
    report["oos_end"] = to_iso_string(oos_end);
    report["metrics_ensemble_raw"] = metrics_to_json(raw_metrics);
    report["metrics_ensemble_rescaled"] = metrics_to_json(compute_metrics(rescaled));
    json per_seed_metrics = json::array();
    for (std::size_t si = 0; si < opt.seeds.size(); ++si) {
        PortfolioReturns sp = portfolio_returns(panel, per_seed[si], oos_start, oos_end, opt.sigma_target);
        json entry;
        entry["seed"] = opt.seeds[si];
        entry["metrics_raw"] = metrics_to_json(compute_metrics(sp.returns));
        per_seed_metrics.push_back(std::move(entry));
    }
    report["metrics_per_seed"] = std::move(per_seed_metrics);
    write_file_atomic(opt.out_dir + "/report.json", report.dump(2) + "\n");

    write_returns_csv(opt.out_dir + "/returns_" + opt.model + ".csv", portfolio.dates, portfolio.returns);
    write_equity_csv(opt.out_dir + "/equity_" + opt.model + ".csv", portfolio.dates, rescaled);
    write_positions_csv(opt.out_dir + "/positions.csv", portfolio);
    std::cout << "train " << opt.model << ": oos sharpe " << raw_metrics.sharpe << " over "
              << portfolio.dates.size() << " days\n";
    return 0;
}

int run_sweep(const SweepOptions& opt) {
    if (opt.run_dir.empty()) throw ConfigError("--run is required");

    std::ifstream rep(opt.run_dir + "/report.json");
    if (!rep.is_open()) throw IOError("cannot open " + opt.run_dir + "/report.json");
    nlohmann::json report = nlohmann::json::parse(rep);
    const double sigma_target = report.at("config").at("sigma_target").get<double>();

    PortfolioReturns portfolio;
    portfolio.sigma_target = sigma_target;
    {
        CsvReader csv(opt.run_dir + "/positions.csv",
                      {"underlying", "date", "month", "x", "vol_factor", "ret_next", "expiry", "last_tradable"});
        std::map<std::string, PositionSeries> by_name;
        while (csv.next_row()) {
            PositionSeries& pos = by_name[csv.field(0)];
            pos.underlying = csv.field(0);
            pos.dates.push_back(csv.field_date(1));
            pos.month.push_back(static_cast<int>(csv.field_long(2)));
            pos.x.push_back(csv.field_double(3));
            pos.vol_factor.push_back(csv.field_double(4));
            pos.ret_next.push_back(csv.field_double(5));
            pos.expiry.push_back(csv.field_date(6));
            pos.last_tradable.push_back(csv.field_long(7) != 0);
        }
        std::map<Date, std::pair<double, int>> days;
        for (auto& [name, pos] : by_name) {
            for (std::size_t j = 0; j < pos.dates.size(); ++j) {
                auto& slot = days[pos.dates[j]];
                slot.first += pos.x[j] * pos.vol_factor[j] * pos.ret_next[j];
                slot.second += 1;
            }
            portfolio.positions.push_back(std::move(pos));
        }
        for (const auto& [date, slot] : days) {
            portfolio.dates.push_back(date);
            portfolio.returns.push_back(slot.first / slot.second);
            portfolio.n_active.push_back(slot.second);
        }
    }

    const std::vector<double>& grid = opt.costs_bps.empty() ? default_cost_grid() : opt.costs_bps;
    std::vector<CostSweepRow> rows = cost_sweep(portfolio, grid);
    write_sweep_csv(opt.run_dir + "/cost_sweep.csv", rows);
    std::cout << sweep_rows_to_json(rows).dump() << '\n';
    return 0;
}

int run_report(const ReportOptions& opt) {
    if (opt.data_dir.empty() || opt.out_dir.empty()) throw ConfigError("--data-dir and --out are required");
    FeaturePanel panel = load_panel(opt.data_dir, kDefaultSigmaTarget);
    export_feature_panel_csv(panel, opt.out_dir + "/features.csv");
    json summary;
    summary["version"] = kVersion;
    summary["underlyings"] = panel.stocks.size();
    std::size_t days = 0, straddles = 0;
    for (const auto& s : panel.stocks) {
        days += s.dates.size();
        straddles += s.months.size();
    }
    summary["straddles"] = straddles;
    summary["straddle_days"] = days;
    summary["first_date"] = panel.all_dates.empty() ? "" : to_iso_string(panel.all_dates.front());
    summary["last_date"] = panel.all_dates.empty() ? "" : to_iso_string(panel.all_dates.back());
    write_file_atomic(opt.out_dir + "/panel_summary.json", summary.dump(2) + "\n");
    std::cout << "wrote " << opt.out_dir << "/features.csv and panel_summary.json\n";
    return 0;
}

int run_guarded(const std::function<int()>& fn) {
    try {
        return fn();
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.kind() == ErrorKind::config ? 2 : 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}

}  // namespace optbt
