#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "optbt/indicators.hpp"
#include "optbt/rng.hpp"

namespace optbt {

enum class Architecture { linear, mlp, cnn, lstm };

Architecture parse_architecture(const std::string& name);  // throws ConfigError
std::string architecture_name(Architecture arch);

// Feature window length: 5 trailing days for linear/mlp (flattened to 75),
// 20 for cnn; the lstm consumes one straddle-month trajectory step by step.
int window_length(Architecture arch);

struct ModelConfig {
    Architecture arch = Architecture::linear;
    int hidden = 10;       // unused by linear
    double dropout = 0.0;  // active in training mode only
    int feature_dim = kFeatureDim;
};

// Trainable parameters as one flat vector; per-tensor offsets are derived
// from the config. Flat storage keeps the optimizer, clipping, checkpoints
// and finite-difference probes trivial.
struct ModelParams {
    ModelConfig cfg;
    std::vector<double> w;

    // Uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] per tensor, in layout order.
    static ModelParams init(const ModelConfig& cfg, Rng& rng);
};

std::size_t param_count(const ModelConfig& cfg);

// Scratch space recorded by a training-mode forward pass and consumed by the
// matching backward pass. Reusable across calls; contents are opaque.
struct ForwardCache {
    std::vector<double> a;      // activations (layout depends on arch)
    std::vector<double> mask;   // inverted-dropout multipliers
    std::vector<double> steps;  // lstm per-step state [i,f,g,o,c,tanh_c,h,hd] x hidden
    std::vector<double> x_out;  // lstm per-step outputs
    double x = 0.0;
};

// Inference forward (dropout inactive, deterministic). `window` is
// oldest-to-newest:
//   linear/mlp: 5*15 flattened rows; cnn: 20*15 row-major (time x feature).
// Throws ShapeMismatch on a wrong window size.
double forward(const ModelParams& p, std::span<const double> window);

// Training-mode forward: samples dropout masks from `rng` and records
// everything backward() needs.
double forward_train(const ModelParams& p, std::span<const double> window, Rng& rng, ForwardCache& cache);

// Accumulates d(loss)/d(params) into `grad` given the upstream d(loss)/dX.
void backward(const ModelParams& p, std::span<const double> window, const ForwardCache& cache, double dldx,
              std::span<double> grad);

// LSTM over one trajectory: `steps` holds n_steps rows of 15 features;
// hidden/cell state start at zero (trajectories are independent). Returns
// the per-step signal X_t.
std::vector<double> lstm_forward(const ModelParams& p, std::span<const double> steps, int n_steps);
std::vector<double> lstm_forward_train(const ModelParams& p, std::span<const double> steps, int n_steps, Rng& rng,
                                       ForwardCache& cache);
void lstm_backward(const ModelParams& p, std::span<const double> steps, int n_steps, const ForwardCache& cache,
                   std::span<const double> dldx, std::span<double> grad);

// Checkpoint I/O: self-describing JSON with the architecture, hyperparams,
// feature-order fingerprint and the flat parameter array. Loading validates
// the fingerprint and shapes.
std::string checkpoint_to_json(const ModelParams& p);
ModelParams checkpoint_from_json(const std::string& json_text);
void save_checkpoint(const ModelParams& p, const std::string& path);
ModelParams load_checkpoint(const std::string& path);

}  // namespace optbt
