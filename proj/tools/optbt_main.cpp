#include <string>
#include <vector>

#include <CLI11.hpp>

#include "optbt/cli.hpp"
#include "optbt/errors.hpp"

int main(int argc, char** argv) {
    CLI::App app{"optbt - delta-neutral straddle research engine"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(optbt::kVersion));

    optbt::IngestOptions ingest;
    auto* cmd_ingest = app.add_subcommand("ingest", "Validate option/stock CSVs and summarize the formed panel");
    cmd_ingest->add_option("--data-dir", ingest.data_dir, "Directory holding options.csv and stocks.csv")
        ->required();

    optbt::SynthOptions synth;
    auto* cmd_synth = app.add_subcommand("synth", "Generate a synthetic AR(1) option-chain dataset");
    cmd_synth->add_option("--stocks", synth.stocks, "Number of underlyings");
    cmd_synth->add_option("--months", synth.months, "Number of monthly straddles per underlying");
    cmd_synth->add_option("--rho", synth.rho, "AR(1) coefficient of daily straddle returns");
    cmd_synth->add_option("--daily-vol", synth.daily_vol, "Unconditional daily return volatility");
    cmd_synth->add_option("--seed", synth.seed, "RNG seed");
    cmd_synth->add_flag("--skewed", synth.skewed_deltas, "Use 0.6/-0.4 deltas instead of +-0.5");
    cmd_synth->add_option("--out", synth.out_dir, "Output directory");

    optbt::BacktestOptions backtest;
    auto* cmd_backtest = app.add_subcommand("backtest", "Run a rules-based strategy backtest");
    cmd_backtest->add_option("--strategy", backtest.strategy, "Strategy name (see docs)")->required();
    cmd_backtest->add_option("--data-dir", backtest.data_dir, "Input data directory")->required();
    cmd_backtest->add_option("--out", backtest.out_dir, "Run output directory")->required();
    cmd_backtest->add_option("--sigma-target", backtest.sigma_target, "Annualized volatility target");
    cmd_backtest->add_option("--start", backtest.start, "Evaluation start date (YYYY-MM-DD)");
    cmd_backtest->add_option("--end", backtest.end, "Evaluation end date, exclusive (YYYY-MM-DD)");

    optbt::TrainOptions train;
    std::string seeds_arg = "1";
    auto* cmd_train = app.add_subcommand("train", "Train a model over expanding windows and evaluate out-of-sample");
    cmd_train->add_option("--model", train.model, "linear | mlp | cnn | lstm")->required();
    cmd_train->add_option("--data-dir", train.data_dir, "Input data directory")->required();
    cmd_train->add_option("--out", train.out_dir, "Run output directory")->required();
    cmd_train->add_option("--seeds", seeds_arg, "Comma-separated seed list");
    cmd_train->add_option("--trials", train.trials, "Random-search iterations per window/seed");
    cmd_train->add_option("--tc-reg", train.tc_reg_cost_bps, "Turnover regularization cost in bps (0 = off)");
    cmd_train->add_option("--block-years", train.block_years, "Expanding-window block length in years");
    cmd_train->add_option("--max-epochs", train.max_epochs, "Epoch cap per training run");
    cmd_train->add_option("--sigma-target", train.sigma_target, "Annualized volatility target");

    optbt::SweepOptions sweep;
    std::string costs_arg;
    auto* cmd_sweep = app.add_subcommand("sweep", "Transaction-cost sweep over an existing run directory");
    cmd_sweep->add_option("--run", sweep.run_dir, "Run directory with report.json and positions.csv")->required();
    cmd_sweep->add_option("--costs", costs_arg, "Comma-separated cost grid in bps (default 0,1,2,3,5,10,20,50)");

    optbt::ReportOptions report;
    auto* cmd_report = app.add_subcommand("report", "Export the audit feature panel and a summary");
    cmd_report->add_option("--data-dir", report.data_dir, "Input data directory")->required();
    cmd_report->add_option("--out", report.out_dir, "Output directory")->required();

    CLI11_PARSE(app, argc, argv);

    return optbt::run_guarded([&]() -> int {
        if (cmd_ingest->parsed()) return optbt::run_ingest(ingest);
        if (cmd_synth->parsed()) return optbt::run_synth(synth);
        if (cmd_backtest->parsed()) return optbt::run_backtest(backtest);
        if (cmd_train->parsed()) {
            train.seeds.clear();
            for (std::size_t pos = 0; pos < seeds_arg.size();) {
                std::size_t comma = seeds_arg.find(',', pos);
                if (comma == std::string::npos) comma = seeds_arg.size();
                const std::string tok = seeds_arg.substr(pos, comma - pos);
                try {
                    train.seeds.push_back(std::stoull(tok));
                } catch (const std::exception&) {
                    throw optbt::ConfigError("invalid seed '" + tok + "' in --seeds");
                }
                pos = comma + 1;
            }
            return optbt::run_train(train);
        }
        if (cmd_sweep->parsed()) {
            if (!costs_arg.empty()) {
                for (std::size_t pos = 0; pos < costs_arg.size();) {
                    std::size_t comma = costs_arg.find(',', pos);
                    if (comma == std::string::npos) comma = costs_arg.size();
                    const std::string tok = costs_arg.substr(pos, comma - pos);
                    try {
                        sweep.costs_bps.push_back(std::stod(tok));
                    } catch (const std::exception&) {
                        throw optbt::ConfigError("invalid cost '" + tok + "' in --costs");
                    }
                    pos = comma + 1;
                }
            }
            return optbt::run_sweep(sweep);
        }
        if (cmd_report->parsed()) return optbt::run_report(report);
        return 2;
    });
}
