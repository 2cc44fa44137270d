#pragma once

// Run configuration shared by the train/ablate/sweep commands.

#include "dstf/data.hpp"
#include "dstf/model.hpp"
#include "dstf/training.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace dstf::cli {

struct ExperimentConfig {
    ModelConfig model;
    TrainConfig train;
    SplitSpec split;

    void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
ExperimentConfig experiment_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);
void save_experiment(const std::filesystem::path& path, const ExperimentConfig& c);

// "section.key=value", e.g. "model.k_s=3" or "train.use_curriculum=false".
// The value is parsed as JSON, falling back to a plain string.
void apply_override(ExperimentConfig& c, const std::string& assignment);

const std::vector<std::string>& ablation_variants();
// Returns a copy with exactly the variant's flags changed.
ExperimentConfig apply_ablation(const ExperimentConfig& base, const std::string& variant);

// One axis of a parameter grid: "model.k_s=1,2,3".
struct GridAxis {
    std::string key;
    std::vector<std::string> values;
};

GridAxis parse_grid_axis(const std::string& spec);
// Cartesian product in row-major order (last axis varies fastest); each point
// is a list of "key=value" assignments.
std::vector<std::vector<std::string>> expand_grid(const std::vector<GridAxis>& axes);

}  // namespace dstf::cli
