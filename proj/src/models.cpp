#include "optbt/models.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "optbt/csv.hpp"
#include "optbt/errors.hpp"

namespace optbt {

namespace {

constexpr int kCnnWindow = 20;
constexpr int kKernel = 3;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Offsets into the flat parameter vector, in layout (= initialization) order.

struct LinearLayout {
    int m;  // flattened input size
    int w() const { return 0; }
    int b() const { return m; }
    int total() const { return m + 1; }
};

struct MlpLayout {
    int m, h;
    int w1() const { return 0; }           // h x m, row-major
    int b1() const { return h * m; }       // h
    int w2() const { return h * m + h; }   // h
    int b2() const { return h * m + 2 * h; }
    int total() const { return h * m + 2 * h + 1; }
};

struct CnnLayout {
    int d, h;
    int k1() const { return 0; }                        // h x d x 3
    int b1() const { return h * d * kKernel; }          // h
    int k2() const { return b1() + h; }                 // h x h x 3
    int b2() const { return k2() + h * h * kKernel; }   // h
    int w1() const { return b2() + h; }                 // h x h head
    int bh1() const { return w1() + h * h; }            // h
    int w2() const { return bh1() + h; }                // h
    int bh2() const { return w2() + h; }
    int total() const { return bh2() + 1; }
};

struct LstmLayout {
    int d, h;
    // gate order: input, forget, candidate, output
    int wx(int g) const { return g * h * d; }                       // h x d
    int wh(int g) const { return 4 * h * d + g * h * h; }           // h x h
    int b(int g) const { return 4 * h * (d + h) + g * h; }          // h
    int wout() const { return 4 * h * (d + h + 1); }                // h
    int bout() const { return wout() + h; }
    int total() const { return bout() + 1; }
};

LinearLayout linear_layout(const ModelConfig& c) { return {5 * c.feature_dim}; }
MlpLayout mlp_layout(const ModelConfig& c) { return {5 * c.feature_dim, c.hidden}; }
CnnLayout cnn_layout(const ModelConfig& c) { return {c.feature_dim, c.hidden}; }
LstmLayout lstm_layout(const ModelConfig& c) { return {c.feature_dim, c.hidden}; }

void check_window(const ModelParams& p, std::size_t got) {
    const std::size_t want = static_cast<std::size_t>(window_length(p.cfg.arch)) * p.cfg.feature_dim;
    if (got != want)
        throw ShapeMismatch(architecture_name(p.cfg.arch) + ": window size " + std::to_string(got) + ", expected " +
                            std::to_string(want));
}

void fill_uniform(std::span<double> out, double bound, Rng& rng) {
    for (double& v : out) v = rng.uniform(-bound, bound);
}

// Inverted dropout: multiplier 1/(1-p) with probability 1-p, else 0.
// Inference skips masking entirely, so keep-rate scaling happens here.
void sample_mask(std::span<double> mask, double rate, Rng& rng) {
    if (rate <= 0.0) {
        std::fill(mask.begin(), mask.end(), 1.0);
        return;
    }
    const double keep = 1.0 - rate;
    for (double& m : mask) m = rng.uniform() < keep ? 1.0 / keep : 0.0;
}

}  // namespace

Architecture parse_architecture(const std::string& name) {
    if (name == "linear") return Architecture::linear;
    if (name == "mlp") return Architecture::mlp;
    if (name == "cnn") return Architecture::cnn;
    if (name == "lstm") return Architecture::lstm;
    throw ConfigError("unknown model '" + name + "'; valid names: linear, mlp, cnn, lstm");
}

std::string architecture_name(Architecture arch) {
    switch (arch) {
        case Architecture::linear: return "linear";
        case Architecture::mlp: return "mlp";
        case Architecture::cnn: return "cnn";
        case Architecture::lstm: return "lstm";
    }
    return "?";
}

int window_length(Architecture arch) {
    switch (arch) {
        case Architecture::linear:
        case Architecture::mlp: return 5;
        case Architecture::cnn:
        case Architecture::lstm: return kCnnWindow;
    }
    return 0;
}

std::size_t param_count(const ModelConfig& cfg) {
    switch (cfg.arch) {
        case Architecture::linear: return linear_layout(cfg).total();
        case Architecture::mlp: return mlp_layout(cfg).total();
        case Architecture::cnn: return cnn_layout(cfg).total();
        case Architecture::lstm: return lstm_layout(cfg).total();
    }
    return 0;
}

ModelParams ModelParams::init(const ModelConfig& cfg, Rng& rng) {
    ModelParams p;
    p.cfg = cfg;
    p.w.assign(param_count(cfg), 0.0);
    std::span<double> w(p.w);
    switch (cfg.arch) {
        case Architecture::linear: {
            auto L = linear_layout(cfg);
            fill_uniform(w.subspan(0, L.total()), 1.0 / std::sqrt(static_cast<double>(L.m)), rng);
            break;
        }
        case Architecture::mlp: {
            auto L = mlp_layout(cfg);
            fill_uniform(w.subspan(L.w1(), L.h * L.m + L.h), 1.0 / std::sqrt(static_cast<double>(L.m)), rng);
            fill_uniform(w.subspan(L.w2(), L.h + 1), 1.0 / std::sqrt(static_cast<double>(L.h)), rng);
            break;
        }
        case Architecture::cnn: {
            auto L = cnn_layout(cfg);
            fill_uniform(w.subspan(L.k1(), L.h * L.d * kKernel + L.h),
                         1.0 / std::sqrt(static_cast<double>(L.d * kKernel)), rng);
            fill_uniform(w.subspan(L.k2(), L.h * L.h * kKernel + L.h),
                         1.0 / std::sqrt(static_cast<double>(L.h * kKernel)), rng);
            fill_uniform(w.subspan(L.w1(), L.h * L.h + L.h), 1.0 / std::sqrt(static_cast<double>(L.h)), rng);
            fill_uniform(w.subspan(L.w2(), L.h + 1), 1.0 / std::sqrt(static_cast<double>(L.h)), rng);
            break;
        }
        case Architecture::lstm: {
            auto L = lstm_layout(cfg);
            const double bound = 1.0 / std::sqrt(static_cast<double>(L.d + L.h));
            fill_uniform(w.subspan(0, 4 * L.h * (L.d + L.h + 1)), bound, rng);
            fill_uniform(w.subspan(L.wout(), L.h + 1), 1.0 / std::sqrt(static_cast<double>(L.h)), rng);
            break;
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// linear / mlp

namespace {

double linear_eval(const ModelParams& p, std::span<const double> u, const double* mask) {
    auto L = linear_layout(p.cfg);
    const double* w = p.w.data();
    double z = w[L.b()];
    for (int i = 0; i < L.m; ++i) z += w[L.w() + i] * (mask ? u[i] * mask[i] : u[i]);
    return std::tanh(z);
}

double mlp_eval(const ModelParams& p, std::span<const double> u, const double* mask, double* a1_out) {
    auto L = mlp_layout(p.cfg);
    const double* w = p.w.data();
    double z2 = w[L.b2()];
    for (int h = 0; h < L.h; ++h) {
        double z1 = w[L.b1() + h];
        const double* row = w + L.w1() + h * L.m;
        for (int i = 0; i < L.m; ++i) z1 += row[i] * u[i];
        const double a = std::tanh(z1);
        if (a1_out) a1_out[h] = a;
        z2 += w[L.w2() + h] * (mask ? a * mask[h] : a);
    }
    return std::tanh(z2);
}

// CNN forward; writes a1, a2 (time x hidden), pooled, hh into cache.a when
// caching. u rows before the window start are zero (left causal padding).
double cnn_eval(const ModelParams& p, std::span<const double> u, const double* mask, ForwardCache* cache) {
    auto L = cnn_layout(p.cfg);
    const double* w = p.w.data();
    const int T = kCnnWindow, H = L.h, D = L.d;
    std::vector<double> local;
    double* a1;
    double* a2;
    double* pooled;
    double* hh;
    if (cache) {
        cache->a.assign(2 * T * H + 2 * H, 0.0);
        a1 = cache->a.data();
        a2 = a1 + T * H;
        pooled = a2 + T * H;
        hh = pooled + H;
    } else {
        local.assign(2 * T * H + 2 * H, 0.0);
        a1 = local.data();
        a2 = a1 + T * H;
        pooled = a2 + T * H;
        hh = pooled + H;
    }

    for (int t = 0; t < T; ++t)
        for (int h = 0; h < H; ++h) {
            double z = w[L.b1() + h];
            for (int k = 0; k < kKernel; ++k) {
                const int s = t - (kKernel - 1) + k;
                if (s < 0) continue;
                const double* kw = w + L.k1() + (h * D) * kKernel;
                for (int c = 0; c < D; ++c) z += kw[c * kKernel + k] * u[s * D + c];
            }
            a1[t * H + h] = std::tanh(z);
        }
    for (int t = 0; t < T; ++t)
        for (int o = 0; o < H; ++o) {
            double z = w[L.b2() + o];
            for (int k = 0; k < kKernel; ++k) {
                const int s = t - (kKernel - 1) + k;
                if (s < 0) continue;
                const double* kw = w + L.k2() + (o * H) * kKernel;
                for (int c = 0; c < H; ++c) z += kw[c * kKernel + k] * a1[s * H + c];
            }
            a2[t * H + o] = std::tanh(z);
        }
    for (int h = 0; h < H; ++h) {
        double sum = 0.0;
        for (int t = 0; t < T; ++t) sum += a2[t * H + h];
        pooled[h] = sum / T;
    }
    double z_out = w[L.bh2()];
    for (int o = 0; o < H; ++o) {
        double z = w[L.bh1() + o];
        const double* row = w + L.w1() + o * H;
        for (int h = 0; h < H; ++h) z += row[h] * (mask ? pooled[h] * mask[h] : pooled[h]);
        hh[o] = std::tanh(z);
        z_out += w[L.w2() + o] * hh[o];
    }
    return std::tanh(z_out);
}

}  // namespace

double forward(const ModelParams& p, std::span<const double> window) {
    check_window(p, window.size());
    switch (p.cfg.arch) {
        case Architecture::linear: return linear_eval(p, window, nullptr);
        case Architecture::mlp: return mlp_eval(p, window, nullptr, nullptr);
        case Architecture::cnn: return cnn_eval(p, window, nullptr, nullptr);
        case Architecture::lstm: throw ShapeMismatch("lstm consumes trajectories; use lstm_forward");
    }
    return 0.0;
}

double forward_train(const ModelParams& p, std::span<const double> window, Rng& rng, ForwardCache& cache) {
    check_window(p, window.size());
    switch (p.cfg.arch) {
        case Architecture::linear: {
            auto L = linear_layout(p.cfg);
            cache.mask.resize(L.m);
            sample_mask(cache.mask, p.cfg.dropout, rng);
            cache.x = linear_eval(p, window, cache.mask.data());
            return cache.x;
        }
        case Architecture::mlp: {
            auto L = mlp_layout(p.cfg);
            cache.mask.resize(L.h);
            cache.a.resize(L.h);
            sample_mask(cache.mask, p.cfg.dropout, rng);
            cache.x = mlp_eval(p, window, cache.mask.data(), cache.a.data());
            return cache.x;
        }
        case Architecture::cnn: {
            auto L = cnn_layout(p.cfg);
            cache.mask.resize(L.h);
            sample_mask(cache.mask, p.cfg.dropout, rng);
            cache.x = cnn_eval(p, window, cache.mask.data(), &cache);
            return cache.x;
        }
        case Architecture::lstm: throw ShapeMismatch("lstm consumes trajectories; use lstm_forward_train");
    }
    return 0.0;
}

void backward(const ModelParams& p, std::span<const double> window, const ForwardCache& cache, double dldx,
              std::span<double> grad) {
    check_window(p, window.size());
    if (grad.size() != p.w.size()) throw ShapeMismatch("gradient buffer size mismatch");
    const double* w = p.w.data();
    double* g = grad.data();
    switch (p.cfg.arch) {
        case Architecture::linear: {
            auto L = linear_layout(p.cfg);
            const double dz = dldx * (1.0 - cache.x * cache.x);
            for (int i = 0; i < L.m; ++i) g[L.w() + i] += dz * window[i] * cache.mask[i];
            g[L.b()] += dz;
            return;
        }
        case Architecture::mlp: {
            auto L = mlp_layout(p.cfg);
            const double dz2 = dldx * (1.0 - cache.x * cache.x);
            g[L.b2()] += dz2;
            for (int h = 0; h < L.h; ++h) {
                const double a = cache.a[h];
                g[L.w2() + h] += dz2 * a * cache.mask[h];
                const double dz1 = dz2 * w[L.w2() + h] * cache.mask[h] * (1.0 - a * a);
                g[L.b1() + h] += dz1;
                double* row = g + L.w1() + h * L.m;
                for (int i = 0; i < L.m; ++i) row[i] += dz1 * window[i];
            }
            return;
        }
        case Architecture::cnn: {
            auto L = cnn_layout(p.cfg);
            const int T = kCnnWindow, H = L.h, D = L.d;
            const double* a1 = cache.a.data();
            const double* a2 = a1 + T * H;
            const double* pooled = a2 + T * H;
            const double* hh = pooled + H;

            const double dzx = dldx * (1.0 - cache.x * cache.x);
            g[L.bh2()] += dzx;
            std::vector<double> dpooled(H, 0.0);
            for (int o = 0; o < H; ++o) {
                g[L.w2() + o] += dzx * hh[o];
                const double dzh1 = dzx * w[L.w2() + o] * (1.0 - hh[o] * hh[o]);
                g[L.bh1() + o] += dzh1;
                for (int h = 0; h < H; ++h) {
                    g[L.w1() + o * H + h] += dzh1 * pooled[h] * cache.mask[h];
                    dpooled[h] += dzh1 * w[L.w1() + o * H + h] * cache.mask[h];
                }
            }
            std::vector<double> da1(T * H, 0.0);
            for (int t = 0; t < T; ++t)
                for (int o = 0; o < H; ++o) {
                    const double a = a2[t * H + o];
                    const double dz2 = (dpooled[o] / T) * (1.0 - a * a);
                    g[L.b2() + o] += dz2;
                    for (int k = 0; k < kKernel; ++k) {
                        const int s = t - (kKernel - 1) + k;
                        if (s < 0) continue;
                        for (int c = 0; c < H; ++c) {
                            g[L.k2() + (o * H + c) * kKernel + k] += dz2 * a1[s * H + c];
                            da1[s * H + c] += dz2 * w[L.k2() + (o * H + c) * kKernel + k];
                        }
                    }
                }
            for (int t = 0; t < T; ++t)
                for (int h = 0; h < H; ++h) {
                    const double a = a1[t * H + h];
                    const double dz1 = da1[t * H + h] * (1.0 - a * a);
                    g[L.b1() + h] += dz1;
                    for (int k = 0; k < kKernel; ++k) {
                        const int s = t - (kKernel - 1) + k;
                        if (s < 0) continue;
                        for (int c = 0; c < D; ++c) g[L.k1() + (h * D + c) * kKernel + k] += dz1 * window[s * D + c];
                    }
                }
            return;
        }
        case Architecture::lstm: throw ShapeMismatch("lstm consumes trajectories; use lstm_backward");
    }
}

// ---------------------------------------------------------------------------
// lstm

namespace {

constexpr int kSlots = 7;  // i, f, g, o, c, tanh_c, h per step

void lstm_check(const ModelParams& p, std::size_t steps_len, int n_steps) {
    if (p.cfg.arch != Architecture::lstm) throw ShapeMismatch("lstm_* called on " + architecture_name(p.cfg.arch));
    if (n_steps <= 0 || steps_len != static_cast<std::size_t>(n_steps) * p.cfg.feature_dim)
        throw ShapeMismatch("lstm trajectory buffer size mismatch");
}

std::vector<double> lstm_run(const ModelParams& p, std::span<const double> steps, int n_steps, Rng* rng,
                             ForwardCache* cache) {
    auto L = lstm_layout(p.cfg);
    const int H = L.h, D = L.d;
    const double* w = p.w.data();
    std::vector<double> out(n_steps);
    std::vector<double> h_prev(H, 0.0), c_prev(H, 0.0), zg(4 * H);
    if (cache) {
        cache->steps.assign(static_cast<std::size_t>(n_steps) * kSlots * H, 0.0);
        cache->mask.resize(static_cast<std::size_t>(n_steps) * H);
        sample_mask(cache->mask, p.cfg.dropout, *rng);
        cache->x_out.resize(n_steps);
    }
    for (int t = 0; t < n_steps; ++t) {
        const double* x = steps.data() + static_cast<std::size_t>(t) * D;
        for (int gate = 0; gate < 4; ++gate)
            for (int h = 0; h < H; ++h) {
                double z = w[L.b(gate) + h];
                const double* wx = w + L.wx(gate) + h * D;
                for (int i = 0; i < D; ++i) z += wx[i] * x[i];
                const double* wh = w + L.wh(gate) + h * H;
                for (int j = 0; j < H; ++j) z += wh[j] * h_prev[j];
                zg[gate * H + h] = z;
            }
        double* slot = cache ? cache->steps.data() + static_cast<std::size_t>(t) * kSlots * H : nullptr;
        double z_out = w[L.bout()];
        for (int h = 0; h < H; ++h) {
            const double ig = sigmoid(zg[h]);
            const double fg = sigmoid(zg[H + h]);
            const double gg = std::tanh(zg[2 * H + h]);
            const double og = sigmoid(zg[3 * H + h]);
            const double c = ig * gg + fg * c_prev[h];
            const double tc = std::tanh(c);
            const double hv = og * tc;
            const double m = cache ? cache->mask[static_cast<std::size_t>(t) * H + h] : 1.0;
            if (slot) {
                slot[h] = ig;
                slot[H + h] = fg;
                slot[2 * H + h] = gg;
                slot[3 * H + h] = og;
                slot[4 * H + h] = c;
                slot[5 * H + h] = tc;
                slot[6 * H + h] = hv;
            }
            c_prev[h] = c;
            h_prev[h] = hv;
            z_out += w[L.wout() + h] * hv * m;
        }
        out[t] = std::tanh(z_out);
        if (cache) cache->x_out[t] = out[t];
    }
    return out;
}

}  // namespace

std::vector<double> lstm_forward(const ModelParams& p, std::span<const double> steps, int n_steps) {
    lstm_check(p, steps.size(), n_steps);
    return lstm_run(p, steps, n_steps, nullptr, nullptr);
}

std::vector<double> lstm_forward_train(const ModelParams& p, std::span<const double> steps, int n_steps, Rng& rng,
                                       ForwardCache& cache) {
    lstm_check(p, steps.size(), n_steps);
    return lstm_run(p, steps, n_steps, &rng, &cache);
}

void lstm_backward(const ModelParams& p, std::span<const double> steps, int n_steps, const ForwardCache& cache,
                   std::span<const double> dldx, std::span<double> grad) {
    lstm_check(p, steps.size(), n_steps);
    if (dldx.size() != static_cast<std::size_t>(n_steps)) throw ShapeMismatch("lstm dL/dX length mismatch");
    if (grad.size() != p.w.size()) throw ShapeMismatch("gradient buffer size mismatch");
    auto L = lstm_layout(p.cfg);
    const int H = L.h, D = L.d;
    const double* w = p.w.data();
    double* g = grad.data();

    std::vector<double> dh_next(H, 0.0), dc_next(H, 0.0), dz(4 * H);
    for (int t = n_steps - 1; t >= 0; --t) {
        const double* slot = cache.steps.data() + static_cast<std::size_t>(t) * kSlots * H;
        const double* prev_slot = t > 0 ? cache.steps.data() + static_cast<std::size_t>(t - 1) * kSlots * H : nullptr;
        const double* x = steps.data() + static_cast<std::size_t>(t) * D;
        const double xt = cache.x_out[t];
        const double dzx = dldx[t] * (1.0 - xt * xt);
        g[L.bout()] += dzx;
        for (int h = 0; h < H; ++h) {
            const double m = cache.mask[static_cast<std::size_t>(t) * H + h];
            const double hv = slot[6 * H + h];
            g[L.wout() + h] += dzx * hv * m;
            const double dh = dzx * w[L.wout() + h] * m + dh_next[h];
            const double ig = slot[h], fg = slot[H + h], gg = slot[2 * H + h], og = slot[3 * H + h];
            const double tc = slot[5 * H + h];
            const double dog = dh * tc;
            const double dc = dh * og * (1.0 - tc * tc) + dc_next[h];
            const double dig = dc * gg;
            const double dgg = dc * ig;
            const double c_prev = prev_slot ? prev_slot[4 * H + h] : 0.0;
            const double dfg = dc * c_prev;
            dc_next[h] = dc * fg;
            dz[h] = dig * ig * (1.0 - ig);
            dz[H + h] = dfg * fg * (1.0 - fg);
            dz[2 * H + h] = dgg * (1.0 - gg * gg);
            dz[3 * H + h] = dog * og * (1.0 - og);
        }
        std::fill(dh_next.begin(), dh_next.end(), 0.0);
        for (int gate = 0; gate < 4; ++gate)
            for (int h = 0; h < H; ++h) {
                const double d = dz[gate * H + h];
                g[L.b(gate) + h] += d;
                double* gx = g + L.wx(gate) + h * D;
                for (int i = 0; i < D; ++i) gx[i] += d * x[i];
                if (prev_slot) {
                    double* gh = g + L.wh(gate) + h * H;
                    const double* wh = w + L.wh(gate) + h * H;
                    for (int j = 0; j < H; ++j) {
                        gh[j] += d * prev_slot[6 * H + j];
                        dh_next[j] += d * wh[j];
                    }
                } else {
                    const double* wh = w + L.wh(gate) + h * H;
                    for (int j = 0; j < H; ++j) dh_next[j] += d * wh[j];
                }
            }
    }
}

// ---------------------------------------------------------------------------
// checkpoints

std::string checkpoint_to_json(const ModelParams& p) {
    nlohmann::ordered_json j;
    j["architecture"] = architecture_name(p.cfg.arch);
    j["hidden"] = p.cfg.hidden;
    j["dropout"] = p.cfg.dropout;
    j["window"] = window_length(p.cfg.arch);
    j["feature_dim"] = p.cfg.feature_dim;
    nlohmann::ordered_json names = nlohmann::ordered_json::array();
    for (auto n : feature_names()) names.push_back(std::string(n));
    j["feature_order"] = std::move(names);
    j["params"] = p.w;
    return j.dump(2) + "\n";
}

ModelParams checkpoint_from_json(const std::string& json_text) {
    nlohmann::json j = nlohmann::json::parse(json_text);
    ModelParams p;
    p.cfg.arch = parse_architecture(j.at("architecture").get<std::string>());
    p.cfg.hidden = j.at("hidden").get<int>();
    p.cfg.dropout = j.at("dropout").get<double>();
    p.cfg.feature_dim = j.at("feature_dim").get<int>();
    const auto& order = j.at("feature_order");
    const auto& names = feature_names();
    if (order.size() != names.size())
        throw ShapeMismatch("checkpoint feature order has " + std::to_string(order.size()) + " entries, expected " +
                            std::to_string(names.size()));
    for (std::size_t i = 0; i < names.size(); ++i)
        if (order[i].get<std::string>() != names[i])
            throw ShapeMismatch("checkpoint feature fingerprint mismatch at slot " + std::to_string(i) + ": '" +
                                order[i].get<std::string>() + "' vs '" + std::string(names[i]) + "'");
    p.w = j.at("params").get<std::vector<double>>();
    if (p.w.size() != param_count(p.cfg))
        throw ShapeMismatch("checkpoint parameter count " + std::to_string(p.w.size()) + ", expected " +
                            std::to_string(param_count(p.cfg)));
    return p;
}

void save_checkpoint(const ModelParams& p, const std::string& path) {
    write_file_atomic(path, checkpoint_to_json(p));
}

ModelParams load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in.is_open()) throw IOError("cannot open checkpoint " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return checkpoint_from_json(ss.str());
}

}  // namespace optbt
