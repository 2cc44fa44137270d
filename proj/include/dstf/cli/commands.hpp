#pragma once

// Subcommand implementations behind the `dstf` executable. Each throws
// ConfigError (usage), DataError (data) or NumericError (numerics).

#include "dstf/cli/experiment.hpp"
#include "dstf/evaluation.hpp"
#include "dstf/synthetic.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dstf::cli {

namespace fs = std::filesystem;

struct ConvertOptions {
    fs::path input;
    std::string layout;  // metr-la | pems
    fs::path out;
    std::string start = "2018-01-01T00:00:00";
    int interval_minutes = 5;
    std::vector<std::size_t> channels{0};
};
void run_convert(const ConvertOptions& o);

struct BuildGraphOptions {
    fs::path distances;
    std::string kind = "gaussian";  // gaussian | connectivity
    double kappa = 0.1;
    std::size_t nodes = 0;  // required unless `data` is given
    fs::path data;          // dataset dir whose node ids map the CSV ids
    fs::path out;           // .npy (float64 N x N)
};
void run_build_graph(const BuildGraphOptions& o);

struct SynthOptions {
    fs::path out;
    SyntheticSpec spec;
};
void run_synth(const SynthOptions& o);

struct TrainOptions {
    fs::path config;  // optional
    fs::path data;
    fs::path graph;  // defaults to <data>/adjacency.npy
    fs::path out;
    std::vector<std::string> overrides;
    std::string command_line;
    bool quiet = false;
};

struct TrainSummary {
    double val_mae = 0.0;
    double test_mae = 0.0;
    MetricReport test;
    long steps = 0;
    int epochs = 0;
};
TrainSummary run_train(const TrainOptions& o);

struct EvalOptions {
    fs::path checkpoint;
    fs::path data;
    fs::path report;  // CSV
    std::string split = "test";  // train | val | test
    bool with_baseline = true;
    std::optional<bool> mask_zeros;
    int threads = 1;
};
// Returns the rendered text table.
std::string run_eval(const EvalOptions& o);

struct PredictOptions {
    fs::path checkpoint;
    fs::path data;
    fs::path out;
    std::optional<std::size_t> anchor;  // step index of the last input step
    std::string from, to;               // ISO timestamps bounding the anchors
    int threads = 1;
};
// CSV columns: timestamp, node, horizon, y_true, y_pred. Returns rows written.
std::size_t run_predict(const PredictOptions& o);

struct PlotOptions {
    fs::path predictions;
    std::vector<std::size_t> nodes;
    std::string from, to;  // optional bounds on target timestamps
    int horizon = 1;
    fs::path out;  // directory
};
// Returns the image files written.
std::vector<fs::path> run_plot(const PlotOptions& o);

struct AblateOptions {
    fs::path config;  // optional base; defaults when empty
    std::string variant;
    fs::path out;  // empty: print
};
std::string run_ablate(const AblateOptions& o);

struct SweepOptions {
    fs::path config;
    fs::path data;
    fs::path graph;
    std::vector<std::string> grid;  // axes "model.k_s=1,2,3"
    std::vector<std::string> overrides;
    fs::path out;
    int parallel = 1;
    fs::path executable;  // used for --parallel > 1
};
// Returns the number of runs; writes <out>/summary.csv.
std::size_t run_sweep(const SweepOptions& o);

}  // namespace dstf::cli
