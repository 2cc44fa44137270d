#pragma once

// Learned transition matrices: the self-adaptive matrix built from node
// embeddings and the per-window dynamic masks over the static transitions.

#include "dstf/autodiff.hpp"
#include "dstf/graph.hpp"

namespace dstf {

using ad::Var;

// Embedding tables bound on a tape. Rows: node_src/node_dst N x d_e,
// time_of_day N_D x d_e, day_of_week 7 x d_e.
struct Embeddings {
    Var node_src;
    Var node_dst;
    Var time_of_day;
    Var day_of_week;
};

struct DynamicFeatureWeights {
    Var fc1_w;  // (T_h * d) x d
    Var fc1_b;  // 1 x d
    Var fc2_w;  // d x d_e
    Var fc2_b;  // 1 x d_e
};

struct DynamicFeatures {
    Var source;  // DF_u: N x 4 d_e
    Var target;  // DF_d: N x 4 d_e
};

struct AttentionMaskWeights {
    Var query;  // 4 d_e x d
    Var key;    // 4 d_e x d
};

// row-softmax(ReLU(E_d E_u^T)).
Var self_adaptive_transition(Var node_src, Var node_dst);

// Per-node history matrix: row i holds every channel's series of node i,
// channel-major, i.e. out[i, c * T + t] = x[t * N + i, c].
Var node_history(Var x_time_major, int steps);

// [FC(history) || T_D[tod] || T_W[dow] || E_u] and the same with E_d, where
// FC is Linear -> ReLU -> Linear and the time embeddings are broadcast to all rows.
DynamicFeatures build_dynamic_features(Var x_latent, int steps, int tod, int dow, const Embeddings& emb,
                                       const DynamicFeatureWeights& fc);

// row-softmax((DF W_Q)(DF W_K)^T / sqrt(width(W_Q))).
Var attention_mask(Var features, const AttentionMaskWeights& w);

struct DynamicTransitions {
    Var forward;
    Var backward;
};

// P_f .* mask(DF_u) and P_b .* mask(DF_d).
DynamicTransitions dynamic_transitions(const DynamicFeatures& df, const TransitionSet& base,
                                       const AttentionMaskWeights& forward_weights,
                                       const AttentionMaskWeights& backward_weights);

}  // namespace dstf
