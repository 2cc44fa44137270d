#include "dstf/model.hpp"

#include "dstf/errors.hpp"

#include <array>
#include <cmath>
#include <random>

namespace dstf {

std::string to_string(BlockOrder order) {
    return order == BlockOrder::DiffusionFirst ? "diffusion-first" : "inherent-first";
}

BlockOrder parse_block_order(const std::string& name) {
    if (name == "diffusion-first") return BlockOrder::DiffusionFirst;
    if (name == "inherent-first") return BlockOrder::InherentFirst;
    throw ConfigError("unknown block_order '" + name + "' (expected diffusion-first or inherent-first)");
}

std::string to_string(GruUpdate update) { return update == GruUpdate::Standard ? "standard" : "literal"; }

GruUpdate parse_gru_update(const std::string& name) {
    if (name == "standard") return GruUpdate::Standard;
    if (name == "literal") return GruUpdate::Literal;
    throw ConfigError("unknown gru_update '" + name + "' (expected standard or literal)");
}

void ModelConfig::validate() const {
    const std::array<std::pair<const char*, int>, 10> positive{{{"layers", layers},
                                                                {"hidden_dim", hidden_dim},
                                                                {"embed_dim", embed_dim},
                                                                {"k_s", spatial_kernel},
                                                                {"k_t", temporal_kernel},
                                                                {"num_heads", num_heads},
                                                                {"input_len", input_len},
                                                                {"output_len", output_len},
                                                                {"in_channels", in_channels},
                                                                {"steps_per_day", steps_per_day}}};
    for (const auto& [name, value] : positive) {
        if (value < 1) throw ConfigError(std::string(name) + " must be >= 1, got " + std::to_string(value));
    }
    if (out_channels != 1) throw ConfigError("out_channels must be 1");
    if (input_len < temporal_kernel) {
        throw ConfigError("input_len (" + std::to_string(input_len) + ") must be >= k_t (" +
                          std::to_string(temporal_kernel) + ")");
    }
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"layers", c.layers},
                       {"hidden_dim", c.hidden_dim},
                       {"embed_dim", c.embed_dim},
                       {"k_s", c.spatial_kernel},
                       {"k_t", c.temporal_kernel},
                       {"num_heads", c.num_heads},
                       {"input_len", c.input_len},
                       {"output_len", c.output_len},
                       {"in_channels", c.in_channels},
                       {"out_channels", c.out_channels},
                       {"steps_per_day", c.steps_per_day},
                       {"use_gate", c.use_gate},
                       {"use_residual", c.use_residual},
                       {"use_dynamic_graph", c.use_dynamic_graph},
                       {"use_adaptive", c.use_adaptive},
                       {"use_gru", c.use_gru},
                       {"use_attention", c.use_attention},
                       {"use_autoregressive", c.use_autoregressive},
                       {"block_order", to_string(c.block_order)},
                       {"gru_update", to_string(c.gru_update)}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
    if (!j.is_object()) throw ConfigError("model config must be an object");
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "layers") c.layers = value.get<int>();
            else if (key == "hidden_dim") c.hidden_dim = value.get<int>();
            else if (key == "embed_dim") c.embed_dim = value.get<int>();
            else if (key == "k_s") c.spatial_kernel = value.get<int>();
            else if (key == "k_t") c.temporal_kernel = value.get<int>();
            else if (key == "num_heads") c.num_heads = value.get<int>();
            else if (key == "input_len") c.input_len = value.get<int>();
            else if (key == "output_len") c.output_len = value.get<int>();
            else if (key == "in_channels") c.in_channels = value.get<int>();
            else if (key == "out_channels") c.out_channels = value.get<int>();
            else if (key == "steps_per_day") c.steps_per_day = value.get<int>();
            else if (key == "use_gate") c.use_gate = value.get<bool>();
            else if (key == "use_residual") c.use_residual = value.get<bool>();
            else if (key == "use_dynamic_graph") c.use_dynamic_graph = value.get<bool>();
            else if (key == "use_adaptive") c.use_adaptive = value.get<bool>();
            else if (key == "use_gru") c.use_gru = value.get<bool>();
            else if (key == "use_attention") c.use_attention = value.get<bool>();
            else if (key == "use_autoregressive") c.use_autoregressive = value.get<bool>();
            else if (key == "block_order") c.block_order = parse_block_order(value.get<std::string>());
            else if (key == "gru_update") c.gru_update = parse_gru_update(value.get<std::string>());
            else throw ConfigError("unknown model config key '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("model config key '" + key + "': " + e.what());
        }
    }
}

ModelInput make_input(const SampleWindow& window, const Scaler& scaler) {
    return ModelInput{scaler.apply(window.x()), window.x_tod(), window.x_dow(), static_cast<int>(window.nodes())};
}

Var estimation_gate(Var features, Var w1, Var w2) {
    return ad::sigmoid(ad::matmul(ad::relu(ad::matmul(features, w1)), w2));
}

Var gate_features(const Embeddings& emb, const std::vector<int>& tod, const std::vector<int>& dow, int nodes) {
    const std::size_t steps = tod.size();
    const auto rows = steps * static_cast<std::size_t>(nodes);
    std::vector<ad::Index> tod_idx(rows), dow_idx(rows), node_idx(rows);
    for (std::size_t t = 0; t < steps; ++t) {
        for (int i = 0; i < nodes; ++i) {
            const std::size_t r = t * static_cast<std::size_t>(nodes) + static_cast<std::size_t>(i);
            tod_idx[r] = tod[t];
            dow_idx[r] = dow[t];
            node_idx[r] = i;
        }
    }
    const std::array<Var, 4> parts{ad::gather_rows(emb.time_of_day, std::move(tod_idx)),
                                   ad::gather_rows(emb.day_of_week, std::move(dow_idx)),
                                   ad::gather_rows(emb.node_src, node_idx),
                                   ad::gather_rows(emb.node_dst, node_idx)};
    return ad::hconcat(parts);
}

Model::Model(ModelConfig config, Matrix adjacency, std::uint64_t seed)
    : config_(config), adjacency_(std::move(adjacency)) {
    config_.validate();
    if (adjacency_.rows() != adjacency_.cols() || adjacency_.rows() < 1) {
        throw ConfigError("adjacency must be a non-empty square matrix");
    }
    transitions_ = transition_matrices(adjacency_);
    init_parameters(seed);
}

void Model::init_parameters(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto& c = config_;
    const ad::Index n = nodes();
    const ad::Index d = c.hidden_dim;
    const ad::Index de = c.embed_dim;
    const ad::Index tf = c.output_len;
    auto& s = store_;
    auto& p = params_;
    auto uni = [&](const std::string& name, ad::Index rows, ad::Index cols, ad::Index fan_in) {
        return s.add_uniform(name, rows, cols, static_cast<double>(fan_in), rng);
    };

    p.input_w = uni("input.w", c.in_channels, d, c.in_channels);
    p.input_b = uni("input.b", 1, d, c.in_channels);
    p.node_src = uni("embedding.node_src", n, de, de);
    p.node_dst = uni("embedding.node_dst", n, de, de);
    p.time_of_day = uni("embedding.time_of_day", c.steps_per_day, de, de);
    p.day_of_week = uni("embedding.day_of_week", TimeFeatures::kDaysPerWeek, de, de);
    if (c.use_dynamic_graph) {
        p.dyn_fc1_w = uni("dynamic.fc1.w", c.input_len * d, d, c.input_len * d);
        p.dyn_fc1_b = uni("dynamic.fc1.b", 1, d, c.input_len * d);
        p.dyn_fc2_w = uni("dynamic.fc2.w", d, de, d);
        p.dyn_fc2_b = uni("dynamic.fc2.b", 1, de, d);
        p.dyn_fwd_query = uni("dynamic.forward.query", 4 * de, d, 4 * de);
        p.dyn_fwd_key = uni("dynamic.forward.key", 4 * de, d, 4 * de);
        p.dyn_bwd_query = uni("dynamic.backward.query", 4 * de, d, 4 * de);
        p.dyn_bwd_key = uni("dynamic.backward.key", 4 * de, d, 4 * de);
    }

    const int transitions = 2 + (c.use_adaptive ? 1 : 0);
    for (int l = 0; l < c.layers; ++l) {
        const std::string prefix = "layer" + std::to_string(l) + ".";
        LayerParams lp;
        if (c.use_gate) {
            lp.gate_w1 = uni(prefix + "gate.w1", 4 * de, de, 4 * de);
            lp.gate_w2 = uni(prefix + "gate.w2", de, 1, de);
        }

        auto& dp = lp.diffusion;
        for (int j = 0; j < c.temporal_kernel; ++j) {
            dp.lag_proj.push_back(uni(prefix + "diffusion.lag" + std::to_string(j), d, d, d));
        }
        for (int k = 1; k <= c.spatial_kernel; ++k) {
            for (int m = 0; m < transitions; ++m) {
                dp.conv.push_back(
                    uni(prefix + "diffusion.conv.k" + std::to_string(k) + ".m" + std::to_string(m), d, d, d));
            }
        }
        if (c.use_autoregressive) {
            dp.ar_w = uni(prefix + "diffusion.ar.w", d, d, d);
            dp.ar_b = uni(prefix + "diffusion.ar.b", 1, d, d);
        } else {
            dp.direct_w = uni(prefix + "diffusion.direct.w", d, tf * d, d);
            dp.direct_b = uni(prefix + "diffusion.direct.b", 1, tf * d, d);
        }
        dp.back_w = uni(prefix + "diffusion.backcast.w", d, d, d);
        dp.back_b = uni(prefix + "diffusion.backcast.b", 1, d, d);

        auto& ip = lp.inherent;
        if (c.use_gru) {
            auto& g = ip.gru;
            g.w_z = uni(prefix + "inherent.gru.w_z", d, d, d);
            g.w_r = uni(prefix + "inherent.gru.w_r", d, d, d);
            g.w_h = uni(prefix + "inherent.gru.w_h", d, d, d);
            g.u_z = uni(prefix + "inherent.gru.u_z", d, d, d);
            g.u_r = uni(prefix + "inherent.gru.u_r", d, d, d);
            g.u_h = uni(prefix + "inherent.gru.u_h", d, d, d);
            g.b_z = uni(prefix + "inherent.gru.b_z", 1, d, d);
            g.b_r = uni(prefix + "inherent.gru.b_r", 1, d, d);
            g.b_h = uni(prefix + "inherent.gru.b_h", 1, d, d);
        }
        if (c.use_attention) {
            for (int h = 0; h < c.num_heads; ++h) {
                const std::string head = prefix + "inherent.attention.head" + std::to_string(h) + ".";
                ip.attention.query.push_back(uni(head + "query", d, d, d));
                ip.attention.key.push_back(uni(head + "key", d, d, d));
                ip.attention.value.push_back(uni(head + "value", d, d, d));
            }
            ip.attention.output = uni(prefix + "inherent.attention.output", c.num_heads * d, d, c.num_heads * d);
        }
        if (c.use_autoregressive) {
            ip.ar_w = uni(prefix + "inherent.ar.w", d, d, d);
            ip.ar_b = uni(prefix + "inherent.ar.b", 1, d, d);
        } else {
            ip.direct_w = uni(prefix + "inherent.direct.w", d, tf * d, d);
            ip.direct_b = uni(prefix + "inherent.direct.b", 1, tf * d, d);
        }
        ip.back_w = uni(prefix + "inherent.backcast.w", d, d, d);
        ip.back_b = uni(prefix + "inherent.backcast.b", 1, d, d);
        p.layers.push_back(std::move(lp));
    }

    p.reg_w1 = uni("regression.w1", d, d, d);
    p.reg_b1 = uni("regression.b1", 1, d, d);
    p.reg_w2 = uni("regression.w2", d, c.out_channels, d);
    p.reg_b2 = uni("regression.b2", 1, c.out_channels, d);
}

namespace {

void require_finite(Var v, int layer, const char* block, const char* what) {
    if (!v.value().allFinite()) {
        throw NumericError("non-finite " + std::string(what) + " in layer " + std::to_string(layer) + " " + block +
                           " block");
    }
}

}  // namespace

Var Model::forward(Binder& b, const ModelInput& in, const Scaler& scaler, ForwardTrace* trace) const {
    const auto& c = config_;
    const int n = nodes();
    const int steps = c.input_len;
    const int horizon = c.output_len;
    if (in.nodes != n || in.x.rows() != static_cast<ad::Index>(steps) * n || in.x.cols() != c.in_channels) {
        throw ConfigError("model input shape (" + std::to_string(in.x.rows()) + "x" + std::to_string(in.x.cols()) +
                          ") does not match the model (" + std::to_string(steps * n) + "x" +
                          std::to_string(c.in_channels) + ")");
    }
    if (in.tod.size() != static_cast<std::size_t>(steps) || in.dow.size() != static_cast<std::size_t>(steps)) {
        throw ConfigError("model input needs one time-of-day and day-of-week index per input step");
    }
    for (std::size_t t = 0; t < in.tod.size(); ++t) {
        if (in.tod[t] < 0 || in.tod[t] >= c.steps_per_day || in.dow[t] < 0 || in.dow[t] >= TimeFeatures::kDaysPerWeek) {
            throw ConfigError("time index out of range at input step " + std::to_string(t));
        }
    }
    if (scaler.mean.empty() || scaler.std.empty()) throw ConfigError("scaler is not fitted");

    const auto& p = params_;
    const Var x = b.constant(in.x);
    const Var latent = ad::affine(x, b(p.input_w), b(p.input_b));
    const Embeddings emb{b(p.node_src), b(p.node_dst), b(p.time_of_day), b(p.day_of_week)};

    Var forward_tr;
    Var backward_tr;
    if (c.use_dynamic_graph) {
        const DynamicFeatureWeights fc{b(p.dyn_fc1_w), b(p.dyn_fc1_b), b(p.dyn_fc2_w), b(p.dyn_fc2_b)};
        const auto df = build_dynamic_features(latent, steps, in.tod.back(), in.dow.back(), emb, fc);
        const auto dt = dynamic_transitions(df, transitions_, {b(p.dyn_fwd_query), b(p.dyn_fwd_key)},
                                            {b(p.dyn_bwd_query), b(p.dyn_bwd_key)});
        forward_tr = dt.forward;
        backward_tr = dt.backward;
    } else {
        forward_tr = b.constant(transitions_.forward);
        backward_tr = b.constant(transitions_.backward);
    }
    std::vector<LocalizedTransition> localized;
    localized.push_back(build_localized_transition(forward_tr, c.spatial_kernel, c.temporal_kernel));
    localized.push_back(build_localized_transition(backward_tr, c.spatial_kernel, c.temporal_kernel));
    Var adaptive;
    if (c.use_adaptive) {
        adaptive = self_adaptive_transition(emb.node_src, emb.node_dst);
        localized.push_back(build_localized_transition(adaptive, c.spatial_kernel, c.temporal_kernel));
    }
    const LocalizedOperator op = make_localized_operator(localized);

    if (trace != nullptr) {
        *trace = ForwardTrace{};
        trace->latent = latent.value();
        if (adaptive.valid()) trace->adaptive = adaptive.value();
        if (c.use_dynamic_graph) {
            trace->dynamic_forward = forward_tr.value();
            trace->dynamic_backward = backward_tr.value();
        }
    }
    std::vector<Matrix>* attention_out = trace != nullptr ? &trace->attention : nullptr;

    Var features;
    if (c.use_gate) features = gate_features(emb, in.tod, in.dow, n);
    const InherentOptions inherent_opts{c.use_gru, c.use_attention, c.use_autoregressive, c.gru_update};

    Var x_l = latent;
    Var aggregated;
    for (int l = 0; l < c.layers; ++l) {
        const auto& lp = p.layers[static_cast<std::size_t>(l)];
        Var gate;
        Var first_input = x_l;
        if (c.use_gate) {
            gate = estimation_gate(features, b(lp.gate_w1), b(lp.gate_w2));
            first_input = ad::mul_col(x_l, gate);
        }
        const auto dw = DiffusionWeights::bind(b, lp.diffusion);
        const auto iw = InherentWeights::bind(b, lp.inherent, inherent_opts);

        DiffusionOutput dif;
        InherentOutput inh;
        Var dif_input;
        Var inh_input;
        Var next;
        if (c.block_order == BlockOrder::DiffusionFirst) {
            dif_input = first_input;
            dif = run_diffusion_block(dw, op, dif_input, steps, horizon, c.use_autoregressive);
            require_finite(dif.hidden, l, "diffusion", "hidden state");
            require_finite(dif.forecast, l, "diffusion", "forecast");
            inh_input = c.use_residual ? x_l - dif.backcast : x_l;
            inh = run_inherent_block(iw, inherent_opts, inh_input, steps, horizon, attention_out);
            require_finite(inh.hidden, l, "inherent", "hidden state");
            require_finite(inh.forecast, l, "inherent", "forecast");
            next = c.use_residual ? inh_input - inh.backcast : x_l;
        } else {
            inh_input = first_input;
            inh = run_inherent_block(iw, inherent_opts, inh_input, steps, horizon, attention_out);
            require_finite(inh.hidden, l, "inherent", "hidden state");
            require_finite(inh.forecast, l, "inherent", "forecast");
            dif_input = c.use_residual ? x_l - inh.backcast : x_l;
            dif = run_diffusion_block(dw, op, dif_input, steps, horizon, c.use_autoregressive);
            require_finite(dif.hidden, l, "diffusion", "hidden state");
            require_finite(dif.forecast, l, "diffusion", "forecast");
            next = c.use_residual ? dif_input - dif.backcast : x_l;
        }
        const Var layer_sum = dif.forecast + inh.forecast;
        aggregated = aggregated.valid() ? aggregated + layer_sum : layer_sum;

        if (trace != nullptr) {
            LayerTrace lt;
            lt.input = x_l.value();
            if (gate.valid()) lt.gate = gate.value();
            lt.diffusion_input = dif_input.value();
            lt.diffusion_hidden = dif.hidden.value();
            lt.diffusion_backcast = dif.backcast.value();
            lt.diffusion_forecast = dif.forecast.value();
            lt.inherent_input = inh_input.value();
            lt.inherent_hidden = inh.hidden.value();
            lt.inherent_backcast = inh.backcast.value();
            lt.inherent_forecast = inh.forecast.value();
            lt.output = next.value();
            trace->layers.push_back(std::move(lt));
        }
        x_l = next;
    }

    const Var hidden = ad::relu(ad::affine(aggregated, b(p.reg_w1), b(p.reg_b1)));
    const Var scaled = ad::affine(hidden, b(p.reg_w2), b(p.reg_b2));
    const Var out = ad::add_scalar(ad::scale(scaled, scaler.std[0]), scaler.mean[0]);
    if (trace != nullptr) trace->aggregated = aggregated.value();
    if (!out.value().allFinite()) throw NumericError("non-finite prediction from the regression head");
    return out;
}

Matrix Model::predict(const ModelInput& input, const Scaler& scaler, ForwardTrace* trace) const {
    ad::Tape tape;
    Binder binder(tape, store_, false);
    return forward(binder, input, scaler, trace).value();
}

}  // namespace dstf
