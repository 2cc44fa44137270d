#pragma once

// Spatial-temporal localized convolution over the diffusion signal.
//
// Sequences are time-major matrices: a T-step, N-node, d-channel signal is a
// (T * N) x d matrix whose row t * N + i belongs to node i at step t.

#include "dstf/autodiff.hpp"
#include "dstf/parameters.hpp"

#include <span>
#include <vector>

namespace dstf {

using ad::Var;

// For one transition matrix P: orders[k-1] = k_t horizontal copies of
// P^k with its diagonal zeroed (N x k_t N), k = 1..k_s.
struct LocalizedTransition {
    std::vector<Var> orders;
    int temporal_kernel = 1;
};

LocalizedTransition build_localized_transition(Var transition, int spatial_kernel, int temporal_kernel);

// vconcat(relu(X_{t-k_t+1} W_{k_t-1}), ..., relu(X_t W_0)). `steps` holds the
// k_t most recent N x d inputs oldest first; `lag_weights[j]` is W_j.
Var build_localized_features(std::span<const Var> steps, std::span<const Var> lag_weights);

// Sum over orders k and transitions m of (P_lc_m)^k X_lc W_{k,m}.
// `weights[k * transitions.size() + m]` pairs with order k+1 of transitions[m].
Var st_localized_conv(std::span<const LocalizedTransition> transitions, Var localized_features,
                      std::span<const Var> weights);

// All orders of all transitions stacked vertically, (K N) x (k_t N) with
// K = k_s * transitions; built once per window and shared by every step.
struct LocalizedOperator {
    Var stacked;
    int terms = 0;
    int nodes = 0;
    int temporal_kernel = 1;
};

LocalizedOperator make_localized_operator(std::span<const LocalizedTransition> transitions);

// Same sum as st_localized_conv with the weights stacked vertically (K d x d).
Var apply_localized(const LocalizedOperator& op, Var localized_features, Var weight_stack);

struct DiffusionParams {
    std::vector<ParamId> lag_proj;  // k_t matrices, d x d
    std::vector<ParamId> conv;      // k_s * (number of transitions) matrices, d x d
    ParamId ar_w, ar_b;             // forecast pseudo-input map
    ParamId direct_w, direct_b;     // multi-step head when auto-regression is off
    ParamId back_w, back_b;
};

struct DiffusionWeights {
    std::vector<Var> lag_proj;
    std::vector<Var> conv;
    Var conv_stack;
    Var ar_w, ar_b, direct_w, direct_b, back_w, back_b;

    static DiffusionWeights bind(Binder& binder, const DiffusionParams& p);
};

struct DiffusionOutput {
    Var hidden;    // T_h N x d, zero rows for warm-up steps
    Var forecast;  // T_f N x d
    Var backcast;  // T_h N x d
};

std::vector<Var> split_steps(Var sequence, int steps);

// Hidden state at every step t >= k_t - 1 from the trailing k_t inputs;
// earlier steps are zero.
Var diffusion_forward(const DiffusionWeights& w, const LocalizedOperator& op, Var x_dif, int steps);

// Auto-regressive continuation: project the newest hidden state to a pseudo
// input, append it to the input window and convolve again, `horizon` times.
Var diffusion_forecast(const DiffusionWeights& w, const LocalizedOperator& op, std::vector<Var> inputs, Var newest_hidden, int horizon);

// Multi-step regression of the newest hidden state, reshaped to horizon N x d.
Var direct_forecast(Var newest_hidden, Var weight, Var bias, int horizon);

// relu(H W_b + b).
Var backcast(Var hidden, Var weight, Var bias);

DiffusionOutput run_diffusion_block(const DiffusionWeights& w, const LocalizedOperator& op, Var x_dif, int steps, int horizon, bool autoregressive);

}  // namespace dstf
