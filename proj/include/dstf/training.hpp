#pragma once

// Masked MAE training with a horizon curriculum, Adam, gradient clipping
// and early stopping on the validation MAE.

#include "dstf/data.hpp"
#include "dstf/evaluation.hpp"
#include "dstf/model.hpp"
#include "dstf/parameters.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace dstf {

struct TrainConfig {
    double learning_rate = 0.001;
    int batch_size = 32;
    int max_epochs = 150;
    int patience = 15;
    int cl_growth_steps = 2000;
    bool use_curriculum = true;
    double grad_clip = 5.0;  // max global norm; <= 0 disables clipping
    bool mask_zeros = true;
    std::uint64_t seed = 1;
    int threads = 1;
    long max_steps = 0;  // stop after this many optimizer steps; 0 = unlimited

    void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

// Sum of |y_hat - y| and the number of cells counted, over the first
// `horizon_level` steps of (T_f N) x C time-major matrices.
struct LossTerms {
    double sum = 0.0;
    std::size_t count = 0;
};

// 0/1 weights selecting the cells that enter the loss.
Matrix loss_weights(const Matrix& y, int horizon_level, int nodes, bool mask_zeros);

// Mean absolute error over the selected cells; 0 when every cell is masked
// (counted in `all_masked_events` when non-null).
double mae_loss(const Matrix& y_hat, const Matrix& y, int horizon_level, int nodes, bool mask_zeros,
                std::size_t* all_masked_events = nullptr);

// min(horizon, 1 + floor(step / growth_steps)).
int curriculum_level(long step, int growth_steps, int horizon);

class Adam {
public:
    explicit Adam(const ParameterStore& store, double lr = 0.001, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);
    void step(ParameterStore& store, const Gradients& grads);
    [[nodiscard]] long steps() const { return t_; }

private:
    double lr_, beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<Matrix> m_, v_;
};

// Rescales to `max_norm` when the global norm exceeds it; returns the norm before clipping.
double clip_gradients(Gradients& grads, double max_norm);

struct BatchResult {
    LossTerms loss;
    Gradients grads;  // gradient of loss.sum / loss.count
    [[nodiscard]] double mean_loss() const {
        return loss.count > 0 ? loss.sum / static_cast<double>(loss.count) : 0.0;
    }
};

// Forward and backward over a batch. Per-sample gradients are reduced in a
// fixed order so results are reproducible for a given thread count.
BatchResult compute_batch(const Model& model, std::span<const SampleWindow> batch, const Scaler& scaler,
                          int horizon_level, bool mask_zeros, int threads = 1);

class EarlyStopping {
public:
    explicit EarlyStopping(int patience) : patience_(patience) {}
    // Returns true when training should stop. `improved()` reports whether
    // the last value set a new best.
    bool update(double val_mae);
    [[nodiscard]] bool improved() const { return improved_; }
    [[nodiscard]] double best() const { return best_; }
    [[nodiscard]] int since_improvement() const { return since_; }

private:
    int patience_;
    double best_ = std::numeric_limits<double>::infinity();
    int since_ = 0;
    bool improved_ = false;
};

struct TrainState {
    int epoch = 0;
    long global_step = 0;
    int horizon_level = 1;
    double best_val_mae = std::numeric_limits<double>::infinity();
    int epochs_since_improvement = 0;
    std::vector<double> batch_losses;
    std::size_t all_masked_batches = 0;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0.0;
    MetricReport val;
    double wall_clock_s = 0.0;
    long global_step = 0;
    int horizon_level = 1;
};

class Trainer {
public:
    Trainer(Model& model, Scaler scaler, TrainConfig config);

    // One optimizer step on `batch`; returns the batch mean loss.
    double train_step(std::span<const SampleWindow> batch);
    // One shuffled pass over `train`; stops early when max_steps is reached.
    double train_epoch(std::span<const SampleWindow> train);

    // Full loop with early stopping; restores the best validation parameters
    // at the end. `on_epoch` receives per-epoch statistics.
    TrainState fit(std::span<const SampleWindow> train, std::span<const SampleWindow> val,
                   const std::function<void(const EpochStats&)>& on_epoch = {});

    [[nodiscard]] const TrainState& state() const { return state_; }
    [[nodiscard]] const Scaler& scaler() const { return scaler_; }
    [[nodiscard]] bool step_budget_exhausted() const {
        return config_.max_steps > 0 && state_.global_step >= config_.max_steps;
    }

private:
    Model* model_;
    Scaler scaler_;
    TrainConfig config_;
    Adam adam_;
    std::mt19937_64 rng_;
    TrainState state_;
};

}  // namespace dstf
