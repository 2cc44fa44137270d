#pragma once

// The decoupled spatial-temporal model: input projection, per-layer
// estimation gate, diffusion and inherent blocks with residual
// decomposition, forecast aggregation and the regression head.

#include "dstf/autodiff.hpp"
#include "dstf/data.hpp"
#include "dstf/diffusion.hpp"
#include "dstf/dynamic_graph.hpp"
#include "dstf/graph.hpp"
#include "dstf/inherent.hpp"
#include "dstf/parameters.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace dstf {

enum class BlockOrder { DiffusionFirst, InherentFirst };

std::string to_string(BlockOrder order);
BlockOrder parse_block_order(const std::string& name);
std::string to_string(GruUpdate update);
GruUpdate parse_gru_update(const std::string& name);

struct ModelConfig {
    int layers = 4;
    int hidden_dim = 32;
    int embed_dim = 12;
    int spatial_kernel = 2;
    int temporal_kernel = 3;
    int num_heads = 4;
    int input_len = 12;
    int output_len = 12;
    int in_channels = 1;
    int out_channels = 1;
    int steps_per_day = 288;

    bool use_gate = true;
    bool use_residual = true;
    bool use_dynamic_graph = true;
    bool use_adaptive = true;
    bool use_gru = true;
    bool use_attention = true;
    bool use_autoregressive = true;
    BlockOrder block_order = BlockOrder::DiffusionFirst;
    GruUpdate gru_update = GruUpdate::Standard;

    // Throws ConfigError.
    void validate() const;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, ModelConfig& c);

// One window prepared for the model: scaled inputs plus calendar indices.
struct ModelInput {
    Matrix x;              // (T_h N) x C, scaled
    std::vector<int> tod;  // T_h
    std::vector<int> dow;  // T_h
    int nodes = 0;
};

ModelInput make_input(const SampleWindow& window, const Scaler& scaler);

struct LayerTrace {
    Matrix input;               // X_l
    Matrix gate;                // (T_h N) x 1, empty without the gate
    Matrix diffusion_input;     // X_dif
    Matrix diffusion_hidden;    // H_dif
    Matrix diffusion_backcast;  // X_b_dif
    Matrix diffusion_forecast;  // T_f N x d
    Matrix inherent_input;      // X_inh
    Matrix inherent_hidden;     // H_inh
    Matrix inherent_backcast;   // X_b_inh
    Matrix inherent_forecast;   // T_f N x d
    Matrix output;              // X_{l+1}
};

struct ForwardTrace {
    Matrix latent;  // X^0
    std::vector<LayerTrace> layers;
    Matrix adaptive;          // P_apt (empty when disabled)
    Matrix dynamic_forward;   // P_dy forward (empty when disabled)
    Matrix dynamic_backward;  // P_dy backward
    std::vector<Matrix> attention;  // every inherent attention matrix, in creation order
    Matrix aggregated;              // summed forecast hidden states, T_f N x d
};

struct LayerParams {
    ParamId gate_w1, gate_w2;
    DiffusionParams diffusion;
    InherentParams inherent;
};

struct ModelParams {
    ParamId input_w, input_b;
    ParamId node_src, node_dst, time_of_day, day_of_week;
    ParamId dyn_fc1_w, dyn_fc1_b, dyn_fc2_w, dyn_fc2_b;
    ParamId dyn_fwd_query, dyn_fwd_key, dyn_bwd_query, dyn_bwd_key;
    std::vector<LayerParams> layers;
    ParamId reg_w1, reg_b1, reg_w2, reg_b2;
};

class Model {
public:
    // `adjacency` is the static N x N road graph.
    Model(ModelConfig config, Matrix adjacency, std::uint64_t seed);

    [[nodiscard]] const ModelConfig& config() const { return config_; }
    [[nodiscard]] const Matrix& adjacency() const { return adjacency_; }
    [[nodiscard]] const TransitionSet& transitions() const { return transitions_; }
    [[nodiscard]] int nodes() const { return static_cast<int>(adjacency_.rows()); }
    [[nodiscard]] ParameterStore& parameters() { return store_; }
    [[nodiscard]] const ParameterStore& parameters() const { return store_; }
    [[nodiscard]] const ModelParams& handles() const { return params_; }

    // Prediction in original units, (T_f N) x C_out, as a tape variable.
    // Throws NumericError naming the layer and block on non-finite values.
    Var forward(Binder& binder, const ModelInput& input, const Scaler& scaler, ForwardTrace* trace = nullptr) const;

    [[nodiscard]] Matrix predict(const ModelInput& input, const Scaler& scaler, ForwardTrace* trace = nullptr) const;

private:
    void init_parameters(std::uint64_t seed);

    ModelConfig config_;
    Matrix adjacency_;
    TransitionSet transitions_;
    ParameterStore store_;
    ModelParams params_;
};

// Estimation gate: sigmoid(relu(F W1) W2) over per-(t, i) features F.
// `features` is (T_h N) x 4 d_e; returns (T_h N) x 1.
Var estimation_gate(Var features, Var w1, Var w2);

// [T_D[tod_t] || T_W[dow_t] || E_u[i] || E_d[i]] for every row t N + i.
Var gate_features(const Embeddings& emb, const std::vector<int>& tod, const std::vector<int>& dow, int nodes);

}  // namespace dstf
