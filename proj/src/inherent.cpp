#include "dstf/inherent.hpp"

#include "dstf/diffusion.hpp"

#include <cmath>
#include <stdexcept>

namespace dstf {

GruWeights GruWeights::bind(Binder& binder, const GruParams& p) {
    return GruWeights{binder(p.w_z), binder(p.w_r), binder(p.w_h), binder(p.u_z), binder(p.u_r),
                      binder(p.u_h), binder(p.b_z), binder(p.b_r), binder(p.b_h)};
}

GruState gru_step(Var x, const GruState& prev, const GruWeights& w, GruUpdate update) {
    const Var h = prev.hidden;
    const Var z = ad::sigmoid(ad::add_row(ad::matmul(x, w.w_z) + ad::matmul(h, w.u_z), w.b_z));
    const Var r = ad::sigmoid(ad::add_row(ad::matmul(x, w.w_r) + ad::matmul(h, w.u_r), w.b_r));
    const Var recurrent = ad::add_row(ad::matmul(h, w.u_h), w.b_h);
    const Var candidate = ad::tanh(ad::matmul(x, w.w_h) + ad::hadamard(r, recurrent));
    const Var base = (update == GruUpdate::Standard) ? h : prev.candidate;
    // (1 - z) * base + z * candidate
    const Var next = base + ad::hadamard(z, candidate - base);
    return GruState{next, candidate};
}

Matrix positional_encoding(int steps, int dim) {
    Matrix e(steps, dim);
    for (int t = 0; t < steps; ++t) {
        for (int i = 0; i < dim; ++i) {
            const double angle = t / std::pow(10000.0, 2.0 * i / dim);
            e(t, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return e;
}

AttentionWeights AttentionWeights::bind(Binder& binder, const AttentionParams& p) {
    AttentionWeights w;
    for (auto id : p.query) w.query.push_back(binder(id));
    for (auto id : p.key) w.key.push_back(binder(id));
    for (auto id : p.value) w.value.push_back(binder(id));
    w.output = binder(p.output);
    return w;
}

Var multi_head_self_attention(Var node_major, int seq_len, const AttentionWeights& w, bool last_only,
                              std::vector<Matrix>* weights_out) {
    if (seq_len < 1 || node_major.rows() % seq_len != 0) throw std::invalid_argument("attention: bad sequence length");
    if (w.query.empty()) throw std::invalid_argument("attention: no heads");
    const ad::Index groups = node_major.rows() / seq_len;
    Var queries_src = node_major;
    if (last_only) {
        std::vector<ad::Index> last(static_cast<std::size_t>(groups));
        for (ad::Index g = 0; g < groups; ++g) last[static_cast<std::size_t>(g)] = g * seq_len + seq_len - 1;
        queries_src = ad::gather_rows(node_major, std::move(last));
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(w.query.front().cols()));
    std::vector<Var> heads;
    heads.reserve(w.query.size());
    for (std::size_t s = 0; s < w.query.size(); ++s) {
        const Var q = ad::matmul(queries_src, w.query[s]);
        const Var k = ad::matmul(node_major, w.key[s]);
        const Var v = ad::matmul(node_major, w.value[s]);
        heads.push_back(ad::grouped_attention(q, k, v, last_only ? 1 : seq_len, seq_len, scale, weights_out));
    }
    const Var concat = heads.size() == 1 ? heads.front() : ad::hconcat(heads);
    return ad::matmul(concat, w.output);
}

Var to_node_major(Var time_major, int steps) {
    const ad::Index n = time_major.rows() / steps;
    std::vector<ad::Index> index(static_cast<std::size_t>(time_major.rows()));
    for (ad::Index i = 0; i < n; ++i) {
        for (ad::Index t = 0; t < steps; ++t) index[static_cast<std::size_t>(i * steps + t)] = t * n + i;
    }
    return ad::gather_rows(time_major, std::move(index));
}

Var to_time_major(Var node_major, int steps) {
    const ad::Index n = node_major.rows() / steps;
    std::vector<ad::Index> index(static_cast<std::size_t>(node_major.rows()));
    for (ad::Index t = 0; t < steps; ++t) {
        for (ad::Index i = 0; i < n; ++i) index[static_cast<std::size_t>(t * n + i)] = i * steps + t;
    }
    return ad::gather_rows(node_major, std::move(index));
}

InherentWeights InherentWeights::bind(Binder& binder, const InherentParams& p, const InherentOptions& options) {
    InherentWeights w;
    if (options.use_gru) w.gru = GruWeights::bind(binder, p.gru);
    if (options.use_attention) w.attention = AttentionWeights::bind(binder, p.attention);
    if (options.autoregressive) {
        w.ar_w = binder(p.ar_w);
        w.ar_b = binder(p.ar_b);
    } else {
        w.direct_w = binder(p.direct_w);
        w.direct_b = binder(p.direct_b);
    }
    w.back_w = binder(p.back_w);
    w.back_b = binder(p.back_b);
    return w;
}

namespace {

// Time-major sequence plus the positional encoding of each row's step.
Var encode_positions(const std::vector<Var>& steps) {
    const Var seq = ad::vconcat(steps);
    const auto t_len = static_cast<int>(steps.size());
    const ad::Index n = steps.front().rows();
    const ad::Index d = steps.front().cols();
    const Matrix pe = positional_encoding(t_len, static_cast<int>(d));
    Matrix tiled(t_len * n, d);
    for (int t = 0; t < t_len; ++t) tiled.middleRows(t * n, n) = pe.row(t).replicate(n, 1);
    return seq + seq.tape()->constant(std::move(tiled));
}

}  // namespace

Var inherent_forward(const InherentWeights& w, const InherentOptions& options, Var x_inh, int steps,
                     InherentState* state, std::vector<Matrix>* attention_out) {
    const auto inputs = split_steps(x_inh, steps);
    InherentState local;
    if (options.use_gru) {
        const Var zero = x_inh.tape()->constant(Matrix::Zero(inputs.front().rows(), inputs.front().cols()));
        GruState st{zero, zero};
        for (const auto& x : inputs) {
            st = gru_step(x, st, w.gru, options.update);
            local.recurrent.push_back(st.hidden);
        }
        local.last = st;
    } else {
        local.recurrent = inputs;
    }
    Var hidden;
    if (options.use_attention) {
        const Var nm = to_node_major(encode_positions(local.recurrent), steps);
        hidden = to_time_major(multi_head_self_attention(nm, steps, w.attention, false, attention_out), steps);
    } else {
        hidden = ad::vconcat(local.recurrent);
    }
    if (state != nullptr) *state = std::move(local);
    return hidden;
}

Var inherent_forecast(const InherentWeights& w, const InherentOptions& options, InherentState state,
                      Var newest_hidden, int horizon, std::vector<Matrix>* attention_out) {
    if (horizon < 1) throw std::invalid_argument("forecast horizon must be >= 1");
    if (!options.autoregressive) return direct_forecast(newest_hidden, w.direct_w, w.direct_b, horizon);
    auto window = std::move(state.recurrent);
    const int steps = static_cast<int>(window.size());
    std::vector<Var> out;
    out.reserve(static_cast<std::size_t>(horizon));
    for (int s = 0; s < horizon; ++s) {
        const Var pseudo = ad::affine(newest_hidden, w.ar_w, w.ar_b);
        Var fresh = pseudo;
        if (options.use_gru) {
            state.last = gru_step(pseudo, state.last, w.gru, options.update);
            fresh = state.last.hidden;
        }
        window.erase(window.begin());
        window.push_back(fresh);
        if (options.use_attention) {
            const Var nm = to_node_major(encode_positions(window), steps);
            newest_hidden = multi_head_self_attention(nm, steps, w.attention, true, attention_out);
        } else {
            newest_hidden = fresh;
        }
        out.push_back(newest_hidden);
    }
    return out.size() == 1 ? out.front() : ad::vconcat(out);
}

InherentOutput run_inherent_block(const InherentWeights& w, const InherentOptions& options, Var x_inh, int steps,
                                  int horizon, std::vector<Matrix>* attention_out) {
    InherentOutput out;
    InherentState state;
    out.hidden = inherent_forward(w, options, x_inh, steps, &state, attention_out);
    const ad::Index n = x_inh.rows() / steps;
    const Var newest = ad::slice_rows(out.hidden, (steps - 1) * n, n);
    out.forecast = inherent_forecast(w, options, std::move(state), newest, horizon, attention_out);
    out.backcast = backcast(out.hidden, w.back_w, w.back_b);
    return out;
}

}  // namespace dstf
