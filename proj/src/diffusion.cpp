#include "dstf/diffusion.hpp"

#include <stdexcept>

namespace dstf {

LocalizedTransition build_localized_transition(Var transition, int spatial_kernel, int temporal_kernel) {
    if (spatial_kernel < 1 || temporal_kernel < 1) throw std::invalid_argument("kernel sizes must be >= 1");
    if (transition.rows() != transition.cols()) throw std::invalid_argument("transition matrix must be square");
    const ad::Index n = transition.rows();
    const Matrix off_diagonal = Matrix::Ones(n, n) - Matrix::Identity(n, n);
    LocalizedTransition out;
    out.temporal_kernel = temporal_kernel;
    Var power = transition;
    for (int k = 1; k <= spatial_kernel; ++k) {
        if (k > 1) power = ad::matmul(power, transition);
        const Var block = ad::mask(power, off_diagonal);
        const std::vector<Var> copies(static_cast<std::size_t>(temporal_kernel), block);
        out.orders.push_back(temporal_kernel == 1 ? block : ad::hconcat(copies));
    }
    return out;
}

Var build_localized_features(std::span<const Var> steps, std::span<const Var> lag_weights) {
    if (steps.size() != lag_weights.size() || steps.empty()) {
        throw std::invalid_argument("build_localized_features: need exactly k_t steps and k_t lag weights");
    }
    const std::size_t kt = steps.size();
    std::vector<Var> blocks;
    blocks.reserve(kt);
    for (std::size_t b = 0; b < kt; ++b) {
        // block b (oldest first) sits at lag k_t - 1 - b
        blocks.push_back(ad::relu(ad::matmul(steps[b], lag_weights[kt - 1 - b])));
    }
    return kt == 1 ? blocks.front() : ad::vconcat(blocks);
}

LocalizedOperator make_localized_operator(std::span<const LocalizedTransition> transitions) {
    if (transitions.empty()) throw std::invalid_argument("localized operator needs at least one transition");
    const std::size_t orders = transitions.front().orders.size();
    std::vector<Var> blocks;
    for (std::size_t k = 0; k < orders; ++k) {
        for (const auto& tr : transitions) {
            if (tr.orders.size() != orders) throw std::invalid_argument("transitions disagree on spatial kernel size");
            blocks.push_back(tr.orders[k]);
        }
    }
    LocalizedOperator op;
    op.terms = static_cast<int>(blocks.size());
    op.nodes = static_cast<int>(blocks.front().rows());
    op.temporal_kernel = transitions.front().temporal_kernel;
    op.stacked = blocks.size() == 1 ? blocks.front() : ad::vconcat(blocks);
    return op;
}

Var apply_localized(const LocalizedOperator& op, Var localized_features, Var weight_stack) {
    const ad::Index n = op.nodes;
    const ad::Index d = localized_features.cols();
    const ad::Index terms = op.terms;
    if (weight_stack.rows() != terms * d) throw std::invalid_argument("apply_localized: weight stack height mismatch");
    const Var propagated = ad::matmul(op.stacked, localized_features);  // (K N) x d
    // Z[i, q d + c] = propagated[q N + i, c]
    std::vector<ad::Index> index(static_cast<std::size_t>(n * terms * d));
    for (ad::Index i = 0; i < n; ++i) {
        for (ad::Index q = 0; q < terms; ++q) {
            for (ad::Index c = 0; c < d; ++c) {
                index[static_cast<std::size_t>(i * terms * d + q * d + c)] = (q * n + i) * d + c;
            }
        }
    }
    const Var side_by_side = ad::gather_elements(propagated, n, terms * d, std::move(index));
    return ad::matmul(side_by_side, weight_stack);
}

Var st_localized_conv(std::span<const LocalizedTransition> transitions, Var localized_features,
                      std::span<const Var> weights) {
    const auto op = make_localized_operator(transitions);
    if (weights.size() != static_cast<std::size_t>(op.terms)) {
        throw std::invalid_argument("st_localized_conv: expected one weight per (order, transition)");
    }
    return apply_localized(op, localized_features, weights.size() == 1 ? weights.front() : ad::vconcat(weights));
}

DiffusionWeights DiffusionWeights::bind(Binder& binder, const DiffusionParams& p) {
    DiffusionWeights w;
    for (auto id : p.lag_proj) w.lag_proj.push_back(binder(id));
    for (auto id : p.conv) w.conv.push_back(binder(id));
    w.conv_stack = w.conv.size() == 1 ? w.conv.front() : ad::vconcat(w.conv);
    if (p.ar_w.valid()) {
        w.ar_w = binder(p.ar_w);
        w.ar_b = binder(p.ar_b);
    }
    if (p.direct_w.valid()) {
        w.direct_w = binder(p.direct_w);
        w.direct_b = binder(p.direct_b);
    }
    w.back_w = binder(p.back_w);
    w.back_b = binder(p.back_b);
    return w;
}

std::vector<Var> split_steps(Var sequence, int steps) {
    if (steps <= 0 || sequence.rows() % steps != 0) throw std::invalid_argument("split_steps: rows not divisible by steps");
    const ad::Index n = sequence.rows() / steps;
    std::vector<Var> out;
    out.reserve(static_cast<std::size_t>(steps));
    for (int t = 0; t < steps; ++t) out.push_back(ad::slice_rows(sequence, t * n, n));
    return out;
}

namespace {

Var convolve_tail(const DiffusionWeights& w, const LocalizedOperator& op, const std::vector<Var>& inputs,
                  std::size_t last) {
    const auto kt = static_cast<std::size_t>(op.temporal_kernel);
    const std::span<const Var> window(inputs.data() + (last + 1 - kt), kt);
    const Var x_lc = build_localized_features(window, w.lag_proj);
    return apply_localized(op, x_lc, w.conv_stack);
}

}  // namespace

Var diffusion_forward(const DiffusionWeights& w, const LocalizedOperator& op, Var x_dif, int steps) {
    if (steps < op.temporal_kernel) {
        throw std::invalid_argument("diffusion_forward: input length " + std::to_string(steps) +
                                    " shorter than temporal kernel " + std::to_string(op.temporal_kernel));
    }
    const auto inputs = split_steps(x_dif, steps);
    const Var zero = x_dif.tape()->constant(Matrix::Zero(op.nodes, x_dif.cols()));
    std::vector<Var> hidden;
    hidden.reserve(inputs.size());
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        if (t + 1 < static_cast<std::size_t>(op.temporal_kernel)) {
            hidden.push_back(zero);
        } else {
            hidden.push_back(convolve_tail(w, op, inputs, t));
        }
    }
    return ad::vconcat(hidden);
}

Var diffusion_forecast(const DiffusionWeights& w, const LocalizedOperator& op, std::vector<Var> inputs,
                       Var newest_hidden, int horizon) {
    if (horizon < 1) throw std::invalid_argument("forecast horizon must be >= 1");
    std::vector<Var> out;
    out.reserve(static_cast<std::size_t>(horizon));
    for (int s = 0; s < horizon; ++s) {
        inputs.push_back(ad::affine(newest_hidden, w.ar_w, w.ar_b));
        if (inputs.size() < static_cast<std::size_t>(op.temporal_kernel)) {
            throw std::invalid_argument("diffusion_forecast: fewer inputs than the temporal kernel");
        }
        newest_hidden = convolve_tail(w, op, inputs, inputs.size() - 1);
        out.push_back(newest_hidden);
    }
    return out.size() == 1 ? out.front() : ad::vconcat(out);
}

Var direct_forecast(Var newest_hidden, Var weight, Var bias, int horizon) {
    const ad::Index n = newest_hidden.rows();
    const ad::Index d = weight.cols() / horizon;
    if (weight.cols() != d * horizon) throw std::invalid_argument("direct_forecast: weight width not a multiple of horizon");
    const Var z = ad::affine(newest_hidden, weight, bias);  // N x (H d)
    std::vector<ad::Index> index(static_cast<std::size_t>(horizon * n * d));
    for (ad::Index s = 0; s < horizon; ++s) {
        for (ad::Index i = 0; i < n; ++i) {
            for (ad::Index c = 0; c < d; ++c) {
                index[static_cast<std::size_t>((s * n + i) * d + c)] = i * horizon * d + s * d + c;
            }
        }
    }
    return ad::gather_elements(z, horizon * n, d, std::move(index));
}

Var backcast(Var hidden, Var weight, Var bias) { return ad::relu(ad::affine(hidden, weight, bias)); }

DiffusionOutput run_diffusion_block(const DiffusionWeights& w, const LocalizedOperator& op, Var x_dif, int steps,
                                    int horizon, bool autoregressive) {
    DiffusionOutput out;
    out.hidden = diffusion_forward(w, op, x_dif, steps);
    const ad::Index n = op.nodes;
    const Var newest = ad::slice_rows(out.hidden, (steps - 1) * n, n);
    out.forecast = autoregressive ? diffusion_forecast(w, op, split_steps(x_dif, steps), newest, horizon)
                                  : direct_forecast(newest, w.direct_w, w.direct_b, horizon);
    out.backcast = backcast(out.hidden, w.back_w, w.back_b);
    return out;
}

}  // namespace dstf
