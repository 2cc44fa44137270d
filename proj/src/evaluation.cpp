#include "dstf/evaluation.hpp"

#include "dstf/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

namespace dstf {

const HorizonMetrics& MetricReport::at(int horizon) const {
    for (const auto& h : horizons) {
        if (h.horizon == horizon) return h;
    }
    throw std::out_of_range("report has no horizon " + std::to_string(horizon));
}

MetricAccumulator::MetricAccumulator(int horizon, int nodes, bool mask_zeros)
    : horizon_(horizon), nodes_(nodes), mask_zeros_(mask_zeros), sums_(static_cast<std::size_t>(horizon)) {
    if (horizon < 1 || nodes < 1) throw std::invalid_argument("MetricAccumulator: horizon and nodes must be positive");
}

void MetricAccumulator::add(const Matrix& prediction, const Matrix& truth) {
    const ad::Index rows = static_cast<ad::Index>(horizon_) * nodes_;
    if (prediction.rows() != rows || truth.rows() != rows || prediction.cols() != truth.cols()) {
        throw std::invalid_argument("MetricAccumulator: prediction/truth shape mismatch");
    }
    for (int h = 0; h < horizon_; ++h) {
        const auto p = prediction.middleRows(static_cast<ad::Index>(h) * nodes_, nodes_).array();
        const auto y = truth.middleRows(static_cast<ad::Index>(h) * nodes_, nodes_).array();
        const auto err = (p - y).abs();
        auto& s = sums_[static_cast<std::size_t>(h)];
        const auto nonzero = (y != 0.0);
        if (mask_zeros_) {
            const auto w = nonzero.cast<double>();
            s.abs += (err * w).sum();
            s.sq += (err.square() * w).sum();
            s.pct += (nonzero).select(err / y.abs(), 0.0).sum();
            s.count += static_cast<std::size_t>(nonzero.count());
        } else {
            s.abs += err.sum();
            s.sq += err.square().sum();
            s.pct += (nonzero).select(err / y.abs(), 0.0).sum();
            s.count += static_cast<std::size_t>(y.size());
            s.zero_targets += static_cast<std::size_t>(y.size() - nonzero.count());
        }
    }
}

MetricReport MetricAccumulator::report() const {
    MetricReport r;
    Sums total;
    auto finish = [](const Sums& s, int horizon) {
        HorizonMetrics m;
        m.horizon = horizon;
        m.count = s.count;
        if (s.count > 0) {
            const auto n = static_cast<double>(s.count);
            m.mae = s.abs / n;
            m.rmse = std::sqrt(s.sq / n);
            m.mape = 100.0 * s.pct / n;
        }
        return m;
    };
    for (int h = 0; h < horizon_; ++h) {
        const auto& s = sums_[static_cast<std::size_t>(h)];
        if (s.zero_targets > 0) {
            throw DataError("MAPE is undefined: " + std::to_string(s.zero_targets) + " zero targets at horizon " +
                            std::to_string(h + 1) + "; enable zero masking");
        }
        r.horizons.push_back(finish(s, h + 1));
        total.abs += s.abs;
        total.sq += s.sq;
        total.pct += s.pct;
        total.count += s.count;
    }
    r.overall = finish(total, 0);
    return r;
}

MetricReport compute_metrics(std::span<const Matrix> predictions, std::span<const Matrix> truths, int horizon,
                             int nodes, bool mask_zeros) {
    if (predictions.size() != truths.size()) throw std::invalid_argument("compute_metrics: count mismatch");
    MetricAccumulator acc(horizon, nodes, mask_zeros);
    for (std::size_t i = 0; i < predictions.size(); ++i) acc.add(predictions[i], truths[i]);
    return acc.report();
}

Matrix ModelPredictor::predict(const SampleWindow& window) const {
    return model_->predict(make_input(window, scaler_), scaler_);
}

HistoricalAverage::HistoricalAverage(const TrafficDataset& ds, const TimeFeatures& time, std::size_t history_end,
                                     bool skip_zeros)
    : nodes_(ds.nodes()), steps_per_day_(time.steps_per_day) {
    history_end = std::min(history_end, ds.steps());
    if (history_end == 0) throw DataError("historical average needs at least one history step");
    const std::size_t slots = static_cast<std::size_t>(TimeFeatures::kDaysPerWeek) * static_cast<std::size_t>(steps_per_day_);
    std::vector<double> sum(nodes_ * slots, 0.0);
    std::vector<std::size_t> count(nodes_ * slots, 0);
    std::vector<double> node_sum(nodes_, 0.0);
    std::vector<std::size_t> node_count(nodes_, 0);
    double all_sum = 0.0;
    std::size_t all_count = 0;
    for (std::size_t t = 0; t < history_end; ++t) {
        const auto slot = static_cast<std::size_t>(time.dow[t]) * static_cast<std::size_t>(steps_per_day_) +
                          static_cast<std::size_t>(time.tod[t]);
        for (std::size_t n = 0; n < nodes_; ++n) {
            const double v = ds.readings.at(t, n, 0);
            if (skip_zeros && v == 0.0) continue;
            sum[n * slots + slot] += v;
            ++count[n * slots + slot];
            node_sum[n] += v;
            ++node_count[n];
            all_sum += v;
            ++all_count;
        }
    }
    const double global = all_count > 0 ? all_sum / static_cast<double>(all_count) : 0.0;
    table_.resize(nodes_ * slots);
    for (std::size_t n = 0; n < nodes_; ++n) {
        const double fallback = node_count[n] > 0 ? node_sum[n] / static_cast<double>(node_count[n]) : global;
        for (std::size_t s = 0; s < slots; ++s) {
            const std::size_t k = n * slots + s;
            table_[k] = count[k] > 0 ? sum[k] / static_cast<double>(count[k]) : fallback;
        }
    }
}

double HistoricalAverage::slot_value(std::size_t node, int dow, int tod) const {
    const std::size_t slots = static_cast<std::size_t>(TimeFeatures::kDaysPerWeek) * static_cast<std::size_t>(steps_per_day_);
    return table_.at(node * slots + static_cast<std::size_t>(dow) * static_cast<std::size_t>(steps_per_day_) +
                     static_cast<std::size_t>(tod));
}

Matrix HistoricalAverage::predict(const SampleWindow& window) const {
    if (window.nodes() != nodes_) throw ConfigError("historical average built for a different node count");
    const auto& time = window.time();
    Matrix out(static_cast<ad::Index>(window.output_len()) * static_cast<ad::Index>(nodes_), 1);
    for (int h = 0; h < window.output_len(); ++h) {
        const std::size_t step = window.anchor() + 1 + static_cast<std::size_t>(h);
        for (std::size_t n = 0; n < nodes_; ++n) {
            out(static_cast<ad::Index>(static_cast<std::size_t>(h) * nodes_ + n), 0) =
                slot_value(n, time.dow[step], time.tod[step]);
        }
    }
    return out;
}

Evaluation evaluate(const Predictor& predictor, std::span<const SampleWindow> windows, bool mask_zeros, int threads) {
    if (windows.empty()) throw DataError("no windows to evaluate");
    Evaluation result;
    result.predictions.resize(windows.size());
    const auto workers = static_cast<std::size_t>(std::clamp<int>(threads, 1, static_cast<int>(windows.size())));
    if (workers == 1) {
        for (std::size_t i = 0; i < windows.size(); ++i) result.predictions[i] = predictor.predict(windows[i]);
    } else {
        std::vector<std::exception_ptr> errors(workers);
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t i = w; i < windows.size(); i += workers) {
                        result.predictions[i] = predictor.predict(windows[i]);
                    }
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
    MetricAccumulator acc(windows.front().output_len(), static_cast<int>(windows.front().nodes()), mask_zeros);
    for (std::size_t i = 0; i < windows.size(); ++i) acc.add(result.predictions[i], windows[i].y());
    result.report = acc.report();
    return result;
}

std::string format_report(const std::vector<std::pair<std::string, MetricReport>>& rows) {
    std::ostringstream os;
    os << std::fixed;
    if (rows.empty()) return {};
    std::vector<int> highlighted;
    for (int h : {3, 6, 12}) {
        if (static_cast<std::size_t>(h) <= rows.front().second.horizons.size()) highlighted.push_back(h);
    }
    std::size_t name_width = 6;
    for (const auto& [name, _] : rows) name_width = std::max(name_width, name.size());
    const auto w = static_cast<int>(name_width);

    os << std::left << std::setw(w) << "Method";
    for (int h : highlighted) os << " | " << std::setw(24) << ("Horizon " + std::to_string(h));
    os << "\n" << std::setw(w) << "";
    for (std::size_t i = 0; i < highlighted.size(); ++i) os << " | " << std::setw(8) << "MAE" << std::setw(8) << "RMSE" << std::setw(8) << "MAPE";
    os << "\n";
    for (const auto& [name, report] : rows) {
        os << std::left << std::setw(w) << name;
        for (int h : highlighted) {
            const auto& m = report.at(h);
            std::ostringstream mape;
            mape << std::fixed << std::setprecision(2) << m.mape << "%";
            os << " | " << std::setprecision(2) << std::setw(8) << m.mae << std::setw(8) << m.rmse << std::setw(8)
               << mape.str();
        }
        os << "\n";
    }
    for (const auto& [name, report] : rows) {
        os << "\n" << name << " per horizon\n";
        os << std::right << std::setw(8) << "horizon" << std::setw(10) << "MAE" << std::setw(10) << "RMSE"
           << std::setw(10) << "MAPE%" << std::setw(12) << "samples" << "\n";
        for (const auto& m : report.horizons) {
            os << std::setw(8) << m.horizon << std::setprecision(4) << std::setw(10) << m.mae << std::setw(10) << m.rmse
               << std::setw(10) << m.mape << std::setw(12) << m.count << "\n";
        }
    }
    return os.str();
}

void write_report_csv(const std::filesystem::path& path, const MetricReport& report) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write report '" + path.string() + "'");
    out << "horizon,mae,rmse,mape_pct,n_samples\n" << std::setprecision(17);
    for (const auto& m : report.horizons) {
        out << m.horizon << ',' << m.mae << ',' << m.rmse << ',' << m.mape << ',' << m.count << '\n';
    }
}

MetricReport read_report_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read report '" + path.string() + "'");
    std::string line;
    std::getline(in, line);
    if (line.rfind("horizon,", 0) != 0) throw DataError("'" + path.string() + "' is not a metric report");
    MetricReport r;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        HorizonMetrics m;
        char comma = 0;
        ls >> m.horizon >> comma >> m.mae >> comma >> m.rmse >> comma >> m.mape >> comma >> m.count;
        if (!ls) throw DataError("malformed report line '" + line + "'");
        r.horizons.push_back(m);
    }
    // Count-weighted pooling recovers the overall row.
    double abs = 0, sq = 0, pct = 0;
    std::size_t count = 0;
    for (const auto& m : r.horizons) {
        const auto n = static_cast<double>(m.count);
        abs += m.mae * n;
        sq += m.rmse * m.rmse * n;
        pct += m.mape * n;
        count += m.count;
    }
    r.overall.count = count;
    if (count > 0) {
        const auto n = static_cast<double>(count);
        r.overall.mae = abs / n;
        r.overall.rmse = std::sqrt(sq / n);
        r.overall.mape = pct / n;
    }
    return r;
}

}  // namespace dstf
