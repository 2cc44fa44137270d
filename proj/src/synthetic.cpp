#include "dstf/synthetic.hpp"

#include "dstf/errors.hpp"
#include "dstf/graph.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace dstf {

SyntheticData make_synthetic(const SyntheticSpec& spec) {
    if (spec.nodes < 1 || spec.steps < 1) throw ConfigError("synthetic data needs at least one node and step");
    if (spec.interval_minutes < 1 || 1440 % spec.interval_minutes != 0) {
        throw ConfigError("synthetic interval must divide a day");
    }
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const std::size_t n = spec.nodes;

    Matrix adjacency = Matrix::Zero(static_cast<ad::Index>(n), static_cast<ad::Index>(n));
    if (n > 1) {
        for (std::size_t i = 0; i < n; ++i) {
            const auto a = static_cast<ad::Index>(i);
            const auto b = static_cast<ad::Index>((i + 1) % n);
            adjacency(a, b) = 0.5 + 0.5 * unit(rng);
            adjacency(b, a) = 0.5 + 0.5 * unit(rng);
        }
        for (std::size_t e = 0; e < spec.extra_edges; ++e) {
            const auto a = static_cast<ad::Index>(rng() % n);
            const auto b = static_cast<ad::Index>(rng() % n);
            if (a != b) adjacency(a, b) = 0.2 + 0.8 * unit(rng);
        }
    }
    const Matrix transition = row_normalize(adjacency);

    SyntheticData out;
    auto& ds = out.dataset;
    ds.interval_minutes = spec.interval_minutes;
    ds.channel_names = {"value"};
    ds.readings = Readings(spec.steps, n, 1);
    const Timestamp start = parse_timestamp(spec.start);
    for (std::size_t t = 0; t < spec.steps; ++t) {
        ds.timestamps.push_back(start + std::chrono::minutes(static_cast<long>(t) * spec.interval_minutes));
    }
    for (std::size_t i = 0; i < n; ++i) ds.node_ids.push_back(std::to_string(i));

    Eigen::VectorXd level(static_cast<Eigen::Index>(n));
    Eigen::VectorXd phase(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        level(static_cast<Eigen::Index>(i)) = spec.base * (0.8 + 0.4 * unit(rng));
        phase(static_cast<Eigen::Index>(i)) = 2.0 * std::numbers::pi * unit(rng);
    }
    const double steps_per_day = 1440.0 / spec.interval_minutes;
    Eigen::VectorXd state = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    for (std::size_t t = 0; t < spec.steps; ++t) {
        Eigen::VectorXd eps(static_cast<Eigen::Index>(n));
        for (auto& v : eps) v = gauss(rng) * spec.noise;
        state = spec.persistence * state + spec.diffusion * (transition * state) + eps;
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(t) / steps_per_day;
        for (std::size_t i = 0; i < n; ++i) {
            const auto k = static_cast<Eigen::Index>(i);
            const double v = level(k) + spec.daily_amplitude * std::sin(angle + phase(k)) + state(k);
            ds.readings.at(t, i, 0) = static_cast<float>(std::max(v, 0.1));
        }
    }
    out.adjacency = adjacency;
    return out;
}

}  // namespace dstf
