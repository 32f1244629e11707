#include "optbt/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <map>

#include "optbt/errors.hpp"
#include "optbt/parallel.hpp"

namespace optbt {

namespace {

constexpr double kSharpeEps = 1e-12;

double compute_r(double x, double factor, double ret) { return x * factor * ret; }

}  // namespace

TrainingData::TrainingData(const FeaturePanel& panel, Architecture arch, Date start, Date end)
    : panel_(&panel), arch_(arch) {
    const int d = kFeatureDim;
    const int tau = window_length(arch);
    window_w_ = tau * d;

    int traj_id = -1;
    for (std::size_t si = 0; si < panel.stocks.size(); ++si) {
        const StockSeries& s = panel.stocks[si];
        int last_month = -1;
        for (std::size_t j = 0; j < s.dates.size(); ++j) {
            if (s.dates[j] < start || !(s.dates[j] < end)) continue;
            DaySample smp;
            smp.stock = static_cast<int>(si);
            smp.month = s.month_of_day[j];
            smp.day = static_cast<int>(j);
            smp.step = s.day_offset[j];
            smp.date = s.dates[j];
            smp.vol_factor = s.vol_factor[j];
            smp.ret_next = s.ret_next[j];
            smp.has_prev = j > 0 && s.month_of_day[j - 1] == s.month_of_day[j];
            smp.prev_vol_factor = smp.has_prev ? s.vol_factor[j - 1] : 0.0;
            if (smp.month != last_month || trajectories_.empty() ||
                trajectories_.back().stock != smp.stock) {
                Trajectory t;
                t.stock = smp.stock;
                t.month = smp.month;
                t.first_day = static_cast<int>(j) - s.day_offset[j];
                t.sample_begin = static_cast<int>(samples_.size());
                trajectories_.push_back(t);
                ++traj_id;
                last_month = smp.month;
            }
            smp.traj = traj_id;
            Trajectory& t = trajectories_.back();
            t.n_steps = std::max(t.n_steps, smp.step + 1);
            t.sample_end = static_cast<int>(samples_.size()) + 1;
            samples_.push_back(smp);
        }
    }

    if (arch == Architecture::lstm) {
        traj_offsets_.resize(trajectories_.size());
        std::size_t total = 0;
        for (std::size_t t = 0; t < trajectories_.size(); ++t) {
            traj_offsets_[t] = total;
            total += static_cast<std::size_t>(trajectories_[t].n_steps) * d;
        }
        traj_steps_.resize(total);
        for (std::size_t t = 0; t < trajectories_.size(); ++t) {
            const Trajectory& tr = trajectories_[t];
            const StockSeries& s = panel.stocks[tr.stock];
            for (int k = 0; k < tr.n_steps; ++k)
                std::memcpy(traj_steps_.data() + traj_offsets_[t] + static_cast<std::size_t>(k) * d,
                            s.features[tr.first_day + k].f.data(), sizeof(double) * d);
        }
    } else {
        windows_.resize(samples_.size() * static_cast<std::size_t>(window_w_));
        parallel_for(samples_.size(), [&](std::size_t i) {
            build_window(samples_[i].stock, samples_[i].day,
                         std::span<double>(windows_.data() + i * window_w_, window_w_));
        });
    }
}

void TrainingData::build_window(int stock, int day, std::span<double> out) const {
    const int d = kFeatureDim;
    const int tau = window_length(arch_);
    const StockSeries& s = panel_->stocks[stock];
    for (int k = 0; k < tau; ++k) {
        const int src = day - (tau - 1) + k;
        double* row = out.data() + static_cast<std::size_t>(k) * d;
        if (src < 0)
            std::memset(row, 0, sizeof(double) * d);
        else
            std::memcpy(row, s.features[src].f.data(), sizeof(double) * d);
    }
}

std::span<const double> TrainingData::window(int sample) const {
    return {windows_.data() + static_cast<std::size_t>(sample) * window_w_, static_cast<std::size_t>(window_w_)};
}

std::span<const double> TrainingData::trajectory_steps(const Trajectory& t) const {
    const std::size_t idx = static_cast<std::size_t>(&t - trajectories_.data());
    return {traj_steps_.data() + traj_offsets_[idx], static_cast<std::size_t>(t.n_steps) * kFeatureDim};
}

double sharpe_of_batch(std::span<const double> R) {
    if (R.size() < 2) throw BatchTooSmall("sharpe loss needs >= 2 elements, got " + std::to_string(R.size()));
    const double n = static_cast<double>(R.size());
    double m1 = 0.0, m2 = 0.0;
    for (double r : R) {
        m1 += r;
        m2 += r * r;
    }
    m1 /= n;
    m2 /= n;
    return -(m1 * std::sqrt(kAnnualizationDays)) / std::sqrt(m2 - m1 * m1 + kSharpeEps);
}

void sharpe_of_batch_grad(std::span<const double> R, std::span<double> dldr) {
    const double n = static_cast<double>(R.size());
    double m1 = 0.0, m2 = 0.0;
    for (double r : R) {
        m1 += r;
        m2 += r * r;
    }
    m1 /= n;
    m2 /= n;
    const double v = m2 - m1 * m1 + kSharpeEps;
    const double s = std::sqrt(v);
    const double root = std::sqrt(kAnnualizationDays);
    for (std::size_t i = 0; i < R.size(); ++i)
        dldr[i] = -root / (n * s) + root * m1 * (R[i] - m1) / (n * v * s);
}

double sharpe_loss(std::span<const double> positions, std::span<const double> factors,
                   std::span<const double> returns) {
    if (positions.size() != factors.size() || positions.size() != returns.size())
        throw AlignmentError("sharpe_loss: input lengths differ");
    std::vector<double> R(positions.size());
    for (std::size_t i = 0; i < R.size(); ++i) R[i] = compute_r(positions[i], factors[i], returns[i]);
    return sharpe_of_batch(R);
}

double turnover_adjusted_loss(std::span<const double> positions, std::span<const double> factors,
                              std::span<const double> returns, std::span<const double> prev_positions,
                              std::span<const double> prev_factors, double c_bps) {
    if (positions.size() != factors.size() || positions.size() != returns.size())
        throw AlignmentError("turnover_adjusted_loss: input lengths differ");
    if (prev_positions.size() != positions.size() || prev_factors.size() != positions.size())
        throw MissingLinkage("turnover_adjusted_loss: previous-position linkage missing or misaligned");
    const double c = c_bps * 1e-4;
    std::vector<double> R(positions.size());
    for (std::size_t i = 0; i < R.size(); ++i)
        R[i] = compute_r(positions[i], factors[i], returns[i]) -
               c * std::abs(positions[i] * factors[i] - prev_positions[i] * prev_factors[i]);
    return sharpe_of_batch(R);
}

double loss_forward(LossGraph& graph, const ModelParams& params, const TrainingData& data,
                    std::span<const int> sample_ids, const LossOptions& opts, Rng* rng) {
    if (sample_ids.size() < 2)
        throw BatchTooSmall("loss batch needs >= 2 samples, got " + std::to_string(sample_ids.size()));
    if (opts.tc_cost_bps > 0.0 && opts.prev_x == nullptr)
        throw MissingLinkage("tc regularization requires previous-position context");
    if (opts.training && rng == nullptr) throw ContractError("training-mode forward needs an rng");

    graph.recorded_ = false;
    graph.data_ = &data;
    graph.opts_ = opts;
    graph.ids_.assign(sample_ids.begin(), sample_ids.end());
    const std::size_t n = sample_ids.size();
    graph.x_.assign(n, 0.0);
    graph.r_.assign(n, 0.0);
    graph.drdx_.assign(n, 0.0);
    graph.traj_ids_.clear();
    graph.traj_members_.clear();

    const auto& samples = data.samples();
    Rng dummy(0);
    Rng& r = rng ? *rng : dummy;

    // Caches are recorded in both modes so the graph always supports
    // gradient(); outside training the dropout rate is forced to zero
    // (identity masks, no rng draws).
    const ModelParams* eval = &params;
    ModelParams inference_params;
    if (!opts.training && params.cfg.dropout > 0.0) {
        inference_params = params;
        inference_params.cfg.dropout = 0.0;
        eval = &inference_params;
    }

    if (data.arch() == Architecture::lstm) {
        // Group batch members by trajectory and run each recurrence once.
        std::map<int, std::vector<int>> groups;
        for (std::size_t b = 0; b < n; ++b) groups[samples[sample_ids[b]].traj].push_back(static_cast<int>(b));
        graph.traj_caches_.assign(groups.size(), ForwardCache{});
        std::size_t gi = 0;
        for (const auto& [traj, members] : groups) {
            const Trajectory& tr = data.trajectories()[traj];
            std::vector<double> outs =
                lstm_forward_train(*eval, data.trajectory_steps(tr), tr.n_steps, r, graph.traj_caches_[gi]);
            for (int b : members) graph.x_[b] = outs[samples[sample_ids[b]].step];
            graph.traj_ids_.push_back(traj);
            graph.traj_members_.push_back(members);
            ++gi;
        }
    } else {
        graph.caches_.resize(n);
        for (std::size_t b = 0; b < n; ++b)
            graph.x_[b] = forward_train(*eval, data.window(sample_ids[b]), r, graph.caches_[b]);
    }

    const double c = opts.tc_cost_bps * 1e-4;
    for (std::size_t b = 0; b < n; ++b) {
        const DaySample& smp = samples[sample_ids[b]];
        double rv = compute_r(graph.x_[b], smp.vol_factor, smp.ret_next);
        double drdx = smp.vol_factor * smp.ret_next;
        if (c > 0.0) {
            const double prev = smp.has_prev ? (*opts.prev_x)[sample_ids[b]] * smp.prev_vol_factor : 0.0;
            const double delta = graph.x_[b] * smp.vol_factor - prev;
            rv -= c * std::abs(delta);
            drdx -= c * (delta > 0.0 ? 1.0 : (delta < 0.0 ? -1.0 : 0.0)) * smp.vol_factor;
        }
        graph.r_[b] = rv;
        graph.drdx_[b] = drdx;
    }

    double loss = sharpe_of_batch(graph.r_);
    if (opts.training && opts.l1 > 0.0 && params.cfg.arch == Architecture::linear) {
        const std::size_t m = params.w.size() - 1;  // weights only, not the bias
        double l1sum = 0.0;
        for (std::size_t i = 0; i < m; ++i) l1sum += std::abs(params.w[i]);
        loss += opts.l1 * l1sum;
    }
    graph.loss_ = loss;
    graph.recorded_ = true;
    return loss;
}

void loss_gradient(const LossGraph& graph, const ModelParams& params, std::span<double> grad) {
    if (!graph.recorded()) throw GraphNotRecorded("loss_gradient called without a recorded forward pass");
    if (grad.size() != params.w.size()) throw ShapeMismatch("gradient buffer size mismatch");
    std::fill(grad.begin(), grad.end(), 0.0);

    const TrainingData& data = *graph.data_;
    const auto& samples = data.samples();
    const std::size_t n = graph.ids_.size();
    std::vector<double> dldr(n);
    sharpe_of_batch_grad(graph.r_, dldr);

    if (data.arch() == Architecture::lstm) {
        for (std::size_t gi = 0; gi < graph.traj_ids_.size(); ++gi) {
            const Trajectory& tr = data.trajectories()[graph.traj_ids_[gi]];
            std::vector<double> dldx(tr.n_steps, 0.0);
            for (int b : graph.traj_members_[gi])
                dldx[samples[graph.ids_[b]].step] += dldr[b] * graph.drdx_[b];
            lstm_backward(params, data.trajectory_steps(tr), tr.n_steps, graph.traj_caches_[gi], dldx, grad);
        }
    } else {
        for (std::size_t b = 0; b < n; ++b)
            backward(params, data.window(graph.ids_[b]), graph.caches_[b], dldr[b] * graph.drdx_[b], grad);
    }

    if (graph.opts_.training && graph.opts_.l1 > 0.0 && params.cfg.arch == Architecture::linear) {
        const std::size_t m = params.w.size() - 1;
        for (std::size_t i = 0; i < m; ++i) {
            const double w = params.w[i];
            grad[i] += graph.opts_.l1 * (w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0));
        }
    }
}

void adam_step(std::span<double> params, std::span<double> grads, AdamState& state, double lr,
               double max_grad_norm) {
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    if (state.m.size() != params.size()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
        state.step = 0;
    }
    double norm_sq = 0.0;
    for (double g : grads) norm_sq += g * g;
    const double norm = std::sqrt(norm_sq);
    if (max_grad_norm > 0.0 && norm > max_grad_norm) {
        const double scale = max_grad_norm / norm;
        for (double& g : grads) g *= scale;
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grads[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grads[i] * grads[i];
        const double mh = state.m[i] / bc1;
        const double vh = state.v[i] / bc2;
        params[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
}

std::vector<double> model_positions(const ModelParams& params, const TrainingData& data) {
    const auto& samples = data.samples();
    std::vector<double> x(samples.size(), 0.0);
    if (data.arch() == Architecture::lstm) {
        for (const Trajectory& tr : data.trajectories()) {
            std::vector<double> outs = lstm_forward(params, data.trajectory_steps(tr), tr.n_steps);
            for (int i = tr.sample_begin; i < tr.sample_end; ++i) x[i] = outs[samples[i].step];
        }
    } else {
        for (std::size_t i = 0; i < samples.size(); ++i) x[i] = forward(params, data.window(static_cast<int>(i)));
    }
    return x;
}

namespace {

// Previous-day position per sample: the previous sample's position when the
// previous tradable day sits inside the range, otherwise a fresh forward on
// the previous day's window (month crossing the range start).
std::vector<double> previous_positions(const ModelParams& params, const TrainingData& data,
                                       const std::vector<double>& x) {
    const auto& samples = data.samples();
    std::vector<double> prev(samples.size(), 0.0);
    std::vector<double> scratch(static_cast<std::size_t>(data.window_size()));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const DaySample& smp = samples[i];
        if (!smp.has_prev) continue;
        if (i > 0 && samples[i - 1].stock == smp.stock && samples[i - 1].day == smp.day - 1) {
            prev[i] = x[i - 1];
            continue;
        }
        if (data.arch() == Architecture::lstm) {
            const Trajectory& tr = data.trajectories()[smp.traj];
            std::vector<double> outs = lstm_forward(params, data.trajectory_steps(tr), tr.n_steps);
            prev[i] = outs[smp.step - 1];
        } else {
            data.build_window(smp.stock, smp.day - 1, scratch);
            prev[i] = forward(params, scratch);
        }
    }
    return prev;
}

}  // namespace

TrainResult train_with_early_stopping(const TrainingData& data, const TrainConfig& cfg) {
    const auto& samples = data.samples();

    // Chronological split: earlier 90% of straddle-day observations train,
    // the most recent 10% validate.
    std::vector<Date> dates;
    dates.reserve(samples.size());
    for (const auto& s : samples) dates.push_back(s.date);
    std::sort(dates.begin(), dates.end());
    std::vector<int> train_ids, val_ids;
    if (!samples.empty()) {
        const Date cutoff = dates[static_cast<std::size_t>(0.9 * static_cast<double>(dates.size() - 1))];
        for (std::size_t i = 0; i < samples.size(); ++i)
            (samples[i].date <= cutoff ? train_ids : val_ids).push_back(static_cast<int>(i));
    }
    if (train_ids.size() < 2 || val_ids.size() < 2)
        throw EmptySplit("train/validation split needs >= 2 observations per slice (train " +
                         std::to_string(train_ids.size()) + ", val " + std::to_string(val_ids.size()) + ")");

    ModelConfig mc;
    mc.arch = data.arch();
    mc.hidden = cfg.hidden;
    mc.dropout = cfg.dropout;
    Rng init_rng(cfg.seed);
    ModelParams params = ModelParams::init(mc, init_rng);

    TrainResult result;
    result.params = params;

    AdamState adam;
    std::vector<double> grad(params.w.size());
    LossGraph graph;
    LossOptions train_opts;
    train_opts.training = true;
    train_opts.tc_cost_bps = cfg.tc_reg_cost_bps;
    train_opts.l1 = cfg.l1_coefficient;
    LossOptions val_opts;
    val_opts.tc_cost_bps = cfg.tc_reg_cost_bps;

    const auto t0 = std::chrono::steady_clock::now();
    int bad_epochs = 0;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::vector<double> prev_x;
        if (cfg.tc_reg_cost_bps > 0.0) {
            prev_x = previous_positions(params, data, model_positions(params, data));
            train_opts.prev_x = &prev_x;
        }

        Rng shuffle_rng(Rng(cfg.seed).derive(1000 + static_cast<std::uint64_t>(epoch)));
        Rng dropout_rng(Rng(cfg.seed).derive(2000 + static_cast<std::uint64_t>(epoch)));
        std::vector<int> order = train_ids;
        shuffle_rng.shuffle(order);

        double train_loss_sum = 0.0;
        int batches = 0;
        for (std::size_t pos = 0; pos < order.size(); pos += cfg.minibatch_size) {
            const std::size_t count = std::min<std::size_t>(cfg.minibatch_size, order.size() - pos);
            if (count < 2) break;  // a 1-element remainder has no Sharpe
            const double loss =
                loss_forward(graph, params, data, {order.data() + pos, count}, train_opts, &dropout_rng);
            if (!std::isfinite(loss)) continue;  // skip diverged batches, keep going
            loss_gradient(graph, params, grad);
            adam_step(params.w, grad, adam, cfg.learning_rate, cfg.max_gradient_norm);
            train_loss_sum += loss;
            ++batches;
        }

        std::vector<double> val_prev;
        if (cfg.tc_reg_cost_bps > 0.0) {
            val_prev = previous_positions(params, data, model_positions(params, data));
            val_opts.prev_x = &val_prev;
        }
        double val_loss;
        try {
            val_loss = loss_forward(graph, params, data, val_ids, val_opts, nullptr);
        } catch (const BatchTooSmall&) {
            val_loss = std::numeric_limits<double>::infinity();
        }

        EpochStat stat;
        stat.epoch = epoch;
        stat.train_loss = batches > 0 ? train_loss_sum / batches : std::numeric_limits<double>::quiet_NaN();
        stat.val_loss = val_loss;
        stat.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.log.push_back(stat);

        if (std::isfinite(val_loss) && val_loss < result.best_val_loss) {
            result.best_val_loss = val_loss;
            result.best_epoch = epoch;
            result.params = params;
            bad_epochs = 0;
        } else {
            ++bad_epochs;
            if (bad_epochs >= cfg.patience) break;
        }
    }
    return result;
}

SearchResult random_search(const TrainingData& data, const SearchSpace& space, int n_trials,
                           std::uint64_t seed, const TrainConfig& base) {
    if (n_trials < 1) throw ConfigError("random_search: need at least one trial");
    std::vector<TrialRecord> trials(n_trials);
    std::vector<TrainResult> results(n_trials);

    parallel_for(static_cast<std::size_t>(n_trials), [&](std::size_t t) {
        Rng rng(Rng(seed).derive(7000 + t));
        TrainConfig cfg = base;
        cfg.minibatch_size = space.minibatch_size[rng.uniform_index(space.minibatch_size.size())];
        cfg.dropout = space.dropout[rng.uniform_index(space.dropout.size())];
        cfg.hidden = space.hidden[rng.uniform_index(space.hidden.size())];
        cfg.learning_rate = space.learning_rate[rng.uniform_index(space.learning_rate.size())];
        cfg.max_gradient_norm = space.max_gradient_norm[rng.uniform_index(space.max_gradient_norm.size())];
        if (data.arch() == Architecture::linear)
            cfg.l1_coefficient = space.l1_coefficient[rng.uniform_index(space.l1_coefficient.size())];
        cfg.seed = Rng(seed).derive(9000 + t);
        results[t] = train_with_early_stopping(data, cfg);
        trials[t] = {static_cast<int>(t), cfg, results[t].best_val_loss};
    });

    int best = 0;
    for (int t = 1; t < n_trials; ++t)
        if (trials[t].val_loss < trials[best].val_loss) best = t;

    SearchResult out;
    out.best_config = trials[best].config;
    out.best_result = std::move(results[best]);
    out.trials = std::move(trials);
    return out;
}

}  // namespace optbt
