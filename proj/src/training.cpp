#include "dstf/training.hpp"

#include "dstf/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <thread>

namespace dstf {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (patience < 1 || patience > max_epochs) throw ConfigError("patience must lie in [1, max_epochs]");
    if (cl_growth_steps < 1) throw ConfigError("cl_growth_steps must be >= 1");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (max_steps < 0) throw ConfigError("max_steps must be >= 0");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"learning_rate", c.learning_rate}, {"batch_size", c.batch_size},
                       {"max_epochs", c.max_epochs},       {"patience", c.patience},
                       {"cl_growth_steps", c.cl_growth_steps}, {"use_curriculum", c.use_curriculum},
                       {"grad_clip", c.grad_clip},         {"mask_zeros", c.mask_zeros},
                       {"seed", c.seed},                   {"threads", c.threads},
                       {"max_steps", c.max_steps}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
    if (!j.is_object()) throw ConfigError("train config must be an object");
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "learning_rate") c.learning_rate = value.get<double>();
            else if (key == "batch_size") c.batch_size = value.get<int>();
            else if (key == "max_epochs") c.max_epochs = value.get<int>();
            else if (key == "patience") c.patience = value.get<int>();
            else if (key == "cl_growth_steps") c.cl_growth_steps = value.get<int>();
            else if (key == "use_curriculum") c.use_curriculum = value.get<bool>();
            else if (key == "grad_clip") c.grad_clip = value.get<double>();
            else if (key == "mask_zeros") c.mask_zeros = value.get<bool>();
            else if (key == "seed") c.seed = value.get<std::uint64_t>();
            else if (key == "threads") c.threads = value.get<int>();
            else if (key == "max_steps") c.max_steps = value.get<long>();
            else throw ConfigError("unknown train config key '" + key + "'");
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError("train config key '" + key + "': " + e.what());
        }
    }
}

Matrix loss_weights(const Matrix& y, int horizon_level, int nodes, bool mask_zeros) {
    if (nodes < 1 || y.rows() % nodes != 0) throw std::invalid_argument("loss_weights: rows not divisible by nodes");
    const ad::Index steps = y.rows() / nodes;
    const ad::Index level = std::clamp<ad::Index>(horizon_level, 0, steps);
    Matrix w = Matrix::Zero(y.rows(), y.cols());
    w.topRows(level * nodes).setOnes();
    if (mask_zeros) w = (y.array() == 0.0).select(0.0, w);
    return w;
}

double mae_loss(const Matrix& y_hat, const Matrix& y, int horizon_level, int nodes, bool mask_zeros,
                std::size_t* all_masked_events) {
    if (y_hat.rows() != y.rows() || y_hat.cols() != y.cols()) throw std::invalid_argument("mae_loss: shape mismatch");
    const Matrix w = loss_weights(y, horizon_level, nodes, mask_zeros);
    const double count = w.sum();
    if (count == 0.0) {
        if (all_masked_events != nullptr) ++*all_masked_events;
        return 0.0;
    }
    return ((y_hat - y).array().abs() * w.array()).sum() / count;
}

int curriculum_level(long step, int growth_steps, int horizon) {
    if (growth_steps < 1) throw std::invalid_argument("curriculum growth steps must be >= 1");
    const long level = 1 + std::max(0L, step) / growth_steps;
    return static_cast<int>(std::min<long>(horizon, level));
}

Adam::Adam(const ParameterStore& store, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (std::size_t i = 0; i < store.size(); ++i) {
        m_.push_back(Matrix::Zero(store.value(i).rows(), store.value(i).cols()));
        v_.push_back(Matrix::Zero(store.value(i).rows(), store.value(i).cols()));
    }
}

void Adam::step(ParameterStore& store, const Gradients& grads) {
    if (grads.grads.size() != store.size()) throw std::invalid_argument("Adam: gradient count mismatch");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto& g = grads.grads[i];
        m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g;
        v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g.cwiseProduct(g);
        store.value(i).array() -= lr_ * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps_);
    }
}

double clip_gradients(Gradients& grads, double max_norm) {
    const double norm = grads.norm();
    if (max_norm > 0.0 && norm > max_norm) grads.scale(max_norm / norm);
    return norm;
}

BatchResult compute_batch(const Model& model, std::span<const SampleWindow> batch, const Scaler& scaler,
                          int horizon_level, bool mask_zeros, int threads) {
    const auto& store = model.parameters();
    const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1,
                                                        std::max<std::size_t>(batch.size(), 1));
    struct Partial {
        LossTerms loss;
        Gradients grads;
    };
    std::vector<Partial> partials(workers);
    auto run = [&](std::size_t w, std::size_t begin, std::size_t end) {
        auto& part = partials[w];
        part.grads = Gradients::zeros_like(store);
        for (std::size_t s = begin; s < end; ++s) {
            const auto& window = batch[s];
            ad::Tape tape;
            Binder binder(tape, store);
            const Var pred = model.forward(binder, make_input(window, scaler), scaler);
            const Matrix y = window.y();
            const Matrix weights = loss_weights(y, horizon_level, model.nodes(), mask_zeros);
            const auto cells = static_cast<std::size_t>(weights.sum());
            if (cells == 0) continue;
            const Var loss = ad::masked_abs_sum(pred, y, weights);
            part.loss.sum += loss.value()(0, 0);
            part.loss.count += cells;
            tape.backward(loss);
            binder.collect(part.grads);
        }
    };
    const std::size_t chunk = (batch.size() + workers - 1) / workers;
    if (workers == 1) {
        run(0, 0, batch.size());
    } else {
        std::vector<std::exception_ptr> errors(workers);
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            const std::size_t begin = std::min(batch.size(), w * chunk);
            const std::size_t end = std::min(batch.size(), begin + chunk);
            pool.emplace_back([&, w, begin, end] {
                try {
                    run(w, begin, end);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }
    BatchResult result;
    result.grads = Gradients::zeros_like(store);
    for (auto& part : partials) {
        result.loss.sum += part.loss.sum;
        result.loss.count += part.loss.count;
        result.grads.add(part.grads);
    }
    if (result.loss.count > 0) result.grads.scale(1.0 / static_cast<double>(result.loss.count));
    return result;
}

bool EarlyStopping::update(double val_mae) {
    improved_ = val_mae < best_;
    if (improved_) {
        best_ = val_mae;
        since_ = 0;
    } else {
        ++since_;
    }
    return since_ >= patience_;
}

Trainer::Trainer(Model& model, Scaler scaler, TrainConfig config)
    : model_(&model),
      scaler_(std::move(scaler)),
      config_(config),
      adam_(model.parameters(), config.learning_rate),
      rng_(config.seed) {
    config_.validate();
}

double Trainer::train_step(std::span<const SampleWindow> batch) {
    const int horizon = model_->config().output_len;
    state_.horizon_level = config_.use_curriculum
                               ? std::max(state_.horizon_level,
                                          curriculum_level(state_.global_step, config_.cl_growth_steps, horizon))
                               : horizon;
    auto result = compute_batch(*model_, batch, scaler_, state_.horizon_level, config_.mask_zeros, config_.threads);
    const double loss = result.mean_loss();
    if (!std::isfinite(loss)) {
        throw NumericError("non-finite loss at step " + std::to_string(state_.global_step));
    }
    if (result.loss.count == 0) ++state_.all_masked_batches;
    clip_gradients(result.grads, config_.grad_clip);
    adam_.step(model_->parameters(), result.grads);
    ++state_.global_step;
    state_.batch_losses.push_back(loss);
    return loss;
}

double Trainer::train_epoch(std::span<const SampleWindow> train) {
    if (train.empty()) throw DataError("training split is empty");
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng_);
    double total = 0.0;
    std::size_t batches = 0;
    std::vector<SampleWindow> batch;
    const auto bs = static_cast<std::size_t>(config_.batch_size);
    for (std::size_t begin = 0; begin < order.size() && !step_budget_exhausted(); begin += bs) {
        batch.clear();
        for (std::size_t k = begin; k < std::min(order.size(), begin + bs); ++k) batch.push_back(train[order[k]]);
        try {
            total += train_step(batch);
        } catch (const NumericError& e) {
            throw NumericError("epoch " + std::to_string(state_.epoch + 1) + ", batch " + std::to_string(batches) +
                               ": " + e.what());
        }
        ++batches;
    }
    ++state_.epoch;
    return batches > 0 ? total / static_cast<double>(batches) : 0.0;
}

TrainState Trainer::fit(std::span<const SampleWindow> train, std::span<const SampleWindow> val,
                        const std::function<void(const EpochStats&)>& on_epoch) {
    if (val.empty()) throw DataError("validation split is empty");
    EarlyStopping stopper(config_.patience);
    std::vector<Matrix> best;
    const ModelPredictor predictor(*model_, scaler_);
    for (int e = 0; e < config_.max_epochs && !step_budget_exhausted(); ++e) {
        const auto started = std::chrono::steady_clock::now();
        EpochStats stats;
        stats.train_loss = train_epoch(train);
        stats.val = evaluate(predictor, val, config_.mask_zeros, config_.threads).report;
        stats.epoch = state_.epoch;
        stats.global_step = state_.global_step;
        stats.horizon_level = state_.horizon_level;
        const bool stop = stopper.update(stats.val.overall.mae);
        state_.best_val_mae = stopper.best();
        state_.epochs_since_improvement = stopper.since_improvement();
        if (stopper.improved()) {
            best.clear();
            for (std::size_t i = 0; i < model_->parameters().size(); ++i) best.push_back(model_->parameters().value(i));
        }
        stats.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        if (on_epoch) on_epoch(stats);
        if (stop) break;
    }
    for (std::size_t i = 0; i < best.size(); ++i) model_->parameters().value(i) = best[i];
    return state_;
}

}  // namespace dstf
