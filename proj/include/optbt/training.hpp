#pragma once

#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "optbt/models.hpp"

namespace optbt {

// Hyperparameters; grids follow the search space below. patience is fixed.
struct TrainConfig {
    int minibatch_size = 128;
    double dropout = 0.1;
    int hidden = 10;
    double learning_rate = 1e-3;
    double max_gradient_norm = 1.0;
    double l1_coefficient = 0.0;   // linear only, training loss only
    double tc_reg_cost_bps = 0.0;  // 0 disables turnover regularization
    int max_epochs = 300;
    int patience = 25;
    std::uint64_t seed = 0;
};

struct SearchSpace {
    std::vector<int> minibatch_size = {32, 64, 128, 256};
    std::vector<double> dropout = {0.1, 0.2, 0.3, 0.4, 0.5};
    std::vector<int> hidden = {5, 10, 20, 40, 80, 160};
    std::vector<double> learning_rate = {1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0};
    std::vector<double> max_gradient_norm = {1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0};
    std::vector<double> l1_coefficient = {1e-5, 1e-4, 1e-3, 1e-2, 1e-1};
};

// One (straddle, day) observation: the model input joins the realized
// next-day return and the vol-target factor, plus the previous-day linkage
// for turnover accounting. Entry days (first tradable day of a straddle)
// have has_prev = false and an implicit previous position of zero.
struct DaySample {
    int stock = 0;
    int month = 0;
    int day = 0;   // index into the StockSeries arrays
    int step = 0;  // offset within the straddle-month's tradable days
    int traj = 0;  // trajectory (straddle-month) id
    Date date;
    double vol_factor = 0.0;  // sigma_tgt / sigma_ann at t
    double ret_next = 0.0;
    double prev_vol_factor = 0.0;
    bool has_prev = false;
};

struct Trajectory {
    int stock = 0;
    int month = 0;
    int first_day = 0;      // panel day index of the month's first tradable day
    int n_steps = 0;        // steps to run so every sampled step is covered
    int sample_begin = 0;   // contiguous range in TrainingData::samples
    int sample_end = 0;
};

// Model-ready view of a feature panel restricted to [start, end): flattened
// input windows per sample (linear/mlp/cnn) or per-trajectory step rows
// (lstm). Windows reach backward across month boundaries through the
// stock's continuous feature series; rows before the series start are zero.
class TrainingData {
public:
    TrainingData(const FeaturePanel& panel, Architecture arch, Date start, Date end);

    Architecture arch() const { return arch_; }
    const FeaturePanel& panel() const { return *panel_; }
    const std::vector<DaySample>& samples() const { return samples_; }
    const std::vector<Trajectory>& trajectories() const { return trajectories_; }

    std::span<const double> window(int sample) const;
    // lstm per-trajectory step rows (n_steps x feature_dim).
    std::span<const double> trajectory_steps(const Trajectory& t) const;

    // Builds the flattened window ending at an arbitrary panel day (used for
    // previous-day position context at range boundaries).
    void build_window(int stock, int day, std::span<double> out) const;

    int window_size() const { return window_w_; }

private:
    const FeaturePanel* panel_;
    Architecture arch_;
    std::vector<DaySample> samples_;
    std::vector<Trajectory> trajectories_;
    std::vector<double> windows_;     // samples x window_w_ (empty for lstm)
    std::vector<double> traj_steps_;  // concatenated step rows (lstm)
    std::vector<std::size_t> traj_offsets_;
    int window_w_ = 0;
};

// Batch training objective. `factors` are sigma_tgt / sigma_t.
// R_i = X_i * factor_i * ret_i; loss is the negative annualized Sharpe of R
// with a 1e-12 variance guard. Throws BatchTooSmall below 2 elements.
double sharpe_loss(std::span<const double> positions, std::span<const double> factors,
                   std::span<const double> returns);

// Same, with R_i replaced by R_i - c |X_i f_i - Xprev_i fprev_i| where
// c = c_bps * 1e-4. (The cost term c * sigma_tgt * |X/sigma - Xprev/
// sigma_prev| reduces to this: the sigma_tgt factor cancels against the
// vol-target units of X/sigma.) Throws MissingLinkage on length mismatch.
double turnover_adjusted_loss(std::span<const double> positions, std::span<const double> factors,
                              std::span<const double> returns, std::span<const double> prev_positions,
                              std::span<const double> prev_factors, double c_bps);

// Negative annualized Sharpe of an R vector and its analytic gradient.
double sharpe_of_batch(std::span<const double> R);
void sharpe_of_batch_grad(std::span<const double> R, std::span<double> dldr);

struct LossOptions {
    bool training = false;        // dropout on, L1 active
    double tc_cost_bps = 0.0;
    double l1 = 0.0;
    // Previous-day positions per panel sample id; required when
    // tc_cost_bps > 0 (computed in inference mode at epoch start).
    const std::vector<double>* prev_x = nullptr;
};

// Recorded forward pass over a batch of sample ids: positions, per-sample
// caches, and the scalar loss. gradient() consumes it.
class LossGraph {
public:
    double value() const { return loss_; }
    bool recorded() const { return recorded_; }
    std::span<const double> positions() const { return x_; }

private:
    friend double loss_forward(LossGraph&, const ModelParams&, const TrainingData&, std::span<const int>,
                               const LossOptions&, Rng*);
    friend void loss_gradient(const LossGraph&, const ModelParams&, std::span<double>);

    bool recorded_ = false;
    double loss_ = 0.0;
    const TrainingData* data_ = nullptr;
    LossOptions opts_;
    std::vector<int> ids_;
    std::vector<double> x_;       // per batch element
    std::vector<double> r_;       // adjusted R per element
    std::vector<double> drdx_;    // dR_i/dX_i
    std::vector<ForwardCache> caches_;           // per element (non-lstm)
    std::vector<int> traj_ids_;                  // lstm: unique trajectories in the batch
    std::vector<ForwardCache> traj_caches_;      // lstm: per unique trajectory
    std::vector<std::vector<int>> traj_members_; // lstm: batch positions per trajectory
};

// Throws BatchTooSmall (< 2 ids) and MissingLinkage (tc > 0 without prev_x).
// `rng` drives dropout and is required in training mode.
double loss_forward(LossGraph& graph, const ModelParams& params, const TrainingData& data,
                    std::span<const int> sample_ids, const LossOptions& opts, Rng* rng);

// Exact reverse-mode d(loss)/d(params), accumulated into grad (zeroed here).
// Throws GraphNotRecorded when the graph holds no recorded forward pass.
void loss_gradient(const LossGraph& graph, const ModelParams& params, std::span<double> grad);

struct AdamState {
    std::vector<double> m, v;
    long step = 0;
};

// Global-norm clipping to max_grad_norm (grads modified in place), then Adam
// with beta1 = 0.9, beta2 = 0.999, eps = 1e-8 and bias correction.
void adam_step(std::span<double> params, std::span<double> grads, AdamState& state, double lr,
               double max_grad_norm);

struct EpochStat {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double elapsed_s = 0.0;
};

struct TrainResult {
    ModelParams params;
    std::vector<EpochStat> log;
    double best_val_loss = std::numeric_limits<double>::infinity();
    int best_epoch = -1;
};

// Chronological 90/10 train/validation split, shuffled minibatches, Adam,
// early stopping with the configured patience on the validation loss
// (inference mode); returns the parameters of the best validation epoch.
// Fully deterministic under cfg.seed.
TrainResult train_with_early_stopping(const TrainingData& data, const TrainConfig& cfg);

struct TrialRecord {
    int trial = 0;
    TrainConfig config;
    double val_loss = std::numeric_limits<double>::infinity();
};

struct SearchResult {
    TrainConfig best_config;
    TrainResult best_result;
    std::vector<TrialRecord> trials;
};

// Uniform seeded sampling over the grid, one training run per trial,
// minimal validation loss wins (ties to the earlier trial). base.l1/tc/
// max_epochs fields carry fixed settings into every trial.
SearchResult random_search(const TrainingData& data, const SearchSpace& space, int n_trials,
                           std::uint64_t seed, const TrainConfig& base);

// Inference-mode positions for every sample of `data` (frozen parameters).
std::vector<double> model_positions(const ModelParams& params, const TrainingData& data);

}  // namespace optbt
