#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace optbt {

inline constexpr const char* kVersion = "optbt 0.1.0";

struct IngestOptions {
    std::string data_dir;
};

struct SynthOptions {
    std::string out_dir = ".";
    int stocks = 20;
    int months = 120;
    double rho = 0.0;
    double daily_vol = 0.02;
    std::uint64_t seed = 0;
    bool skewed_deltas = false;
};

struct BacktestOptions {
    std::string data_dir;
    std::string out_dir;
    std::string strategy;
    double sigma_target = 0.15;
    std::string start;  // optional ISO date bounds on the evaluated span
    std::string end;
};

struct TrainOptions {
    std::string data_dir;
    std::string out_dir;
    std::string model;
    std::vector<std::uint64_t> seeds = {1};
    int trials = 100;
    double tc_reg_cost_bps = 0.0;
    int block_years = 5;
    int max_epochs = 300;
    double sigma_target = 0.15;
};

struct SweepOptions {
    std::string run_dir;
    std::vector<double> costs_bps;  // empty = Table-style default grid
};

struct ReportOptions {
    std::string data_dir;
    std::string out_dir;
};

int run_ingest(const IngestOptions&);
int run_synth(const SynthOptions&);
int run_backtest(const BacktestOptions&);
int run_train(const TrainOptions&);
int run_sweep(const SweepOptions&);
int run_report(const ReportOptions&);

// Executes fn, mapping thrown errors to the documented exit codes:
// 0 success, 2 config error, 3 data error.
int run_guarded(const std::function<int()>& fn);

}  // namespace optbt
