#pragma once

// Synthetic traffic-like data: per-node levels, a daily cycle and an AR(1)
// disturbance that also diffuses along a random road graph.

#include "dstf/data.hpp"

#include <cstdint>

namespace dstf {

struct SyntheticSpec {
    std::size_t nodes = 8;
    std::size_t steps = 2016;  // one week at 5 minutes
    int interval_minutes = 5;
    std::uint64_t seed = 7;
    double base = 50.0;
    double daily_amplitude = 10.0;
    double persistence = 0.6;  // AR(1) coefficient of a node's own disturbance
    double diffusion = 0.3;    // weight of the neighbours' disturbance
    double noise = 1.0;        // innovation standard deviation
    // Extra random directed edges on top of the bidirectional ring.
    std::size_t extra_edges = 4;
    std::string start = "2018-01-01T00:00:00";  // a Monday
};

struct SyntheticData {
    TrafficDataset dataset;
    Matrix adjacency;
};

SyntheticData make_synthetic(const SyntheticSpec& spec);

}  // namespace dstf
