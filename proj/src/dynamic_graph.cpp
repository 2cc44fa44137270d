#include "dstf/dynamic_graph.hpp"

#include <array>
#include <cmath>
#include <stdexcept>

namespace dstf {

Var self_adaptive_transition(Var node_src, Var node_dst) {
    if (node_src.rows() != node_dst.rows() || node_src.cols() != node_dst.cols()) {
        throw std::invalid_argument("self_adaptive_transition: embedding shapes differ");
    }
    return ad::softmax_rows(ad::relu(ad::matmul(node_dst, ad::transpose(node_src))));
}

Var node_history(Var x_time_major, int steps) {
    const ad::Index channels = x_time_major.cols();
    if (steps <= 0 || x_time_major.rows() % steps != 0) throw std::invalid_argument("node_history: row count not divisible by steps");
    const ad::Index nodes = x_time_major.rows() / steps;
    const ad::Index width = channels * steps;
    std::vector<ad::Index> index(static_cast<std::size_t>(nodes * width));
    for (ad::Index i = 0; i < nodes; ++i) {
        for (ad::Index c = 0; c < channels; ++c) {
            for (ad::Index t = 0; t < steps; ++t) {
                index[static_cast<std::size_t>(i * width + c * steps + t)] = (t * nodes + i) * channels + c;
            }
        }
    }
    return ad::gather_elements(x_time_major, nodes, width, std::move(index));
}

DynamicFeatures build_dynamic_features(Var x_latent, int steps, int tod, int dow, const Embeddings& emb,
                                       const DynamicFeatureWeights& fc) {
    const Var history = node_history(x_latent, steps);
    if (history.cols() != fc.fc1_w.rows()) throw std::invalid_argument("build_dynamic_features: FC input width mismatch");
    const Var hidden = ad::relu(ad::affine(history, fc.fc1_w, fc.fc1_b));
    const Var reduced = ad::affine(hidden, fc.fc2_w, fc.fc2_b);
    const ad::Index nodes = history.rows();
    if (emb.node_src.rows() != nodes) throw std::invalid_argument("build_dynamic_features: node count mismatch");
    const Var tod_rows = ad::gather_rows(emb.time_of_day, std::vector<ad::Index>(static_cast<std::size_t>(nodes), tod));
    const Var dow_rows = ad::gather_rows(emb.day_of_week, std::vector<ad::Index>(static_cast<std::size_t>(nodes), dow));
    const std::array<Var, 4> src{reduced, tod_rows, dow_rows, emb.node_src};
    const std::array<Var, 4> dst{reduced, tod_rows, dow_rows, emb.node_dst};
    return DynamicFeatures{ad::hconcat(src), ad::hconcat(dst)};
}

Var attention_mask(Var features, const AttentionMaskWeights& w) {
    const Var q = ad::matmul(features, w.query);
    const Var k = ad::matmul(features, w.key);
    const double s = 1.0 / std::sqrt(static_cast<double>(w.query.cols()));
    return ad::softmax_rows(ad::scale(ad::matmul(q, ad::transpose(k)), s));
}

DynamicTransitions dynamic_transitions(const DynamicFeatures& df, const TransitionSet& base,
                                       const AttentionMaskWeights& forward_weights,
                                       const AttentionMaskWeights& backward_weights) {
    ad::Tape& tape = *df.source.tape();
    const Var pf = tape.constant(base.forward);
    const Var pb = tape.constant(base.backward);
    return DynamicTransitions{ad::hadamard(pf, attention_mask(df.source, forward_weights)),
                              ad::hadamard(pb, attention_mask(df.target, backward_weights))};
}

}  // namespace dstf
