#pragma once

// Per-node temporal model of the inherent signal: GRU, positional encoding
// and multi-head self-attention over time, with forecast/backcast branches.
// Sequences use the same time-major layout as the diffusion block.

#include "dstf/autodiff.hpp"
#include "dstf/parameters.hpp"

#include <vector>

namespace dstf {

using ad::Var;

enum class GruUpdate {
    Standard,  // h' = (1 - z) h + z c
    Literal,   // h' = (1 - z) c_prev + z c, as printed in the source formulation
};

struct GruParams {
    ParamId w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h;
};

struct GruWeights {
    Var w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h;
    static GruWeights bind(Binder& binder, const GruParams& p);
};

struct GruState {
    Var hidden;     // N x d
    Var candidate;  // previous candidate state, used by the literal update
};

// Row-vector convention: z = sigmoid(x W_z + h U_z + b_z), etc.
GruState gru_step(Var x, const GruState& prev, const GruWeights& w, GruUpdate update);

// e[t, i] = sin(t / 10000^(2i/d)) for even i, cos(...) for odd i.
Matrix positional_encoding(int steps, int dim);

struct AttentionParams {
    std::vector<ParamId> query, key, value;  // one d x d matrix per head
    ParamId output;                          // (S d) x d
};

struct AttentionWeights {
    std::vector<Var> query, key, value;
    Var output;
    static AttentionWeights bind(Binder& binder, const AttentionParams& p);
};

// Self-attention over `seq_len` contiguous rows per node (node-major input).
// With `last_only` only the final position of each node is queried and the
// result has one row per node. Attention matrices are appended to `weights_out`.
Var multi_head_self_attention(Var node_major, int seq_len, const AttentionWeights& w, bool last_only = false,
                              std::vector<Matrix>* weights_out = nullptr);

// Row permutations between time-major (t N + i) and node-major (i T + t) layouts.
Var to_node_major(Var time_major, int steps);
Var to_time_major(Var node_major, int steps);

struct InherentParams {
    GruParams gru;
    AttentionParams attention;
    ParamId ar_w, ar_b;
    ParamId direct_w, direct_b;
    ParamId back_w, back_b;
};

struct InherentOptions {
    bool use_gru = true;
    bool use_attention = true;
    bool autoregressive = true;
    GruUpdate update = GruUpdate::Standard;
};

struct InherentWeights {
    GruWeights gru;
    AttentionWeights attention;
    Var ar_w, ar_b, direct_w, direct_b, back_w, back_b;
    static InherentWeights bind(Binder& binder, const InherentParams& p, const InherentOptions& options);
};

struct InherentOutput {
    Var hidden;    // T_h N x d
    Var forecast;  // T_f N x d
    Var backcast;  // T_h N x d
};

struct InherentState {
    std::vector<Var> recurrent;  // GRU outputs (or raw inputs without GRU), one N x d per step
    GruState last;
};

// GRU from a zero state -> + positional encoding -> per-node attention.
Var inherent_forward(const InherentWeights& w, const InherentOptions& options, Var x_inh, int steps,
                     InherentState* state = nullptr, std::vector<Matrix>* attention_out = nullptr);

// Sliding auto-regression over a window of fixed length.
Var inherent_forecast(const InherentWeights& w, const InherentOptions& options, InherentState state,
                      Var newest_hidden, int horizon, std::vector<Matrix>* attention_out = nullptr);

InherentOutput run_inherent_block(const InherentWeights& w, const InherentOptions& options, Var x_inh, int steps,
                                  int horizon, std::vector<Matrix>* attention_out = nullptr);

}  // namespace dstf
