#pragma once

// Per-horizon masked metrics, the Historical Average baseline and report output.

#include "dstf/data.hpp"
#include "dstf/model.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dstf {

struct HorizonMetrics {
    int horizon = 0;  // 1-based
    double mae = 0.0;
    double rmse = 0.0;
    double mape = 0.0;  // percent
    std::size_t count = 0;
};

struct MetricReport {
    std::vector<HorizonMetrics> horizons;

    [[nodiscard]] const HorizonMetrics& at(int horizon) const;
    // Pooled over every horizon (each cell weighted equally).
    HorizonMetrics overall;
};

// Streams (prediction, truth) pairs of (T_f N) x 1 time-major matrices.
class MetricAccumulator {
public:
    MetricAccumulator(int horizon, int nodes, bool mask_zeros);

    void add(const Matrix& prediction, const Matrix& truth);
    // Throws DataError when unmasked targets contain zeros (MAPE undefined).
    [[nodiscard]] MetricReport report() const;

private:
    struct Sums {
        double abs = 0.0;
        double sq = 0.0;
        double pct = 0.0;
        std::size_t count = 0;
        std::size_t zero_targets = 0;
    };
    int horizon_;
    int nodes_;
    bool mask_zeros_;
    std::vector<Sums> sums_;
};

MetricReport compute_metrics(std::span<const Matrix> predictions, std::span<const Matrix> truths, int horizon,
                             int nodes, bool mask_zeros);

// Produces a (T_f N) x 1 forecast in original units for one window.
class Predictor {
public:
    virtual ~Predictor() = default;
    [[nodiscard]] virtual Matrix predict(const SampleWindow& window) const = 0;
    [[nodiscard]] virtual std::string name() const = 0;
};

class ModelPredictor : public Predictor {
public:
    ModelPredictor(const Model& model, Scaler scaler) : model_(&model), scaler_(std::move(scaler)) {}
    [[nodiscard]] Matrix predict(const SampleWindow& window) const override;
    [[nodiscard]] std::string name() const override { return "model"; }

private:
    const Model* model_;
    Scaler scaler_;
};

// Mean of historical channel-0 readings per (node, day-of-week, time-of-day)
// slot over steps [0, history_end). Zeros are skipped when `skip_zeros`.
// Empty slots fall back to the node's mean, then to the global mean.
class HistoricalAverage : public Predictor {
public:
    HistoricalAverage(const TrafficDataset& ds, const TimeFeatures& time, std::size_t history_end, bool skip_zeros);

    [[nodiscard]] Matrix predict(const SampleWindow& window) const override;
    [[nodiscard]] std::string name() const override { return "HA"; }
    [[nodiscard]] double slot_value(std::size_t node, int dow, int tod) const;

private:
    std::size_t nodes_;
    int steps_per_day_;
    std::vector<double> table_;  // node-major: (node * 7 + dow) * steps_per_day + tod
};

struct Evaluation {
    MetricReport report;
    std::vector<Matrix> predictions;
};

// Predictions are computed with up to `threads` workers; the report does not
// depend on the thread count.
Evaluation evaluate(const Predictor& predictor, std::span<const SampleWindow> windows, bool mask_zeros,
                    int threads = 1);

// Table laid out like the benchmark tables: one row per method, MAE / RMSE /
// MAPE at horizons 3, 6 and 12 (those present), followed by every horizon.
std::string format_report(const std::vector<std::pair<std::string, MetricReport>>& rows);

// CSV columns: horizon, mae, rmse, mape_pct, n_samples.
void write_report_csv(const std::filesystem::path& path, const MetricReport& report);
MetricReport read_report_csv(const std::filesystem::path& path);

}  // namespace dstf
