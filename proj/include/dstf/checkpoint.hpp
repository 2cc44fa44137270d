#pragma once

// Model checkpoints: config echo, static graph, scaler, seed and every
// named parameter tensor in one JSON document.

#include "dstf/data.hpp"
#include "dstf/model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <memory>

namespace dstf {

struct LoadedCheckpoint {
    std::unique_ptr<Model> model;
    Scaler scaler;
    std::uint64_t seed = 0;
    nlohmann::json extra;  // caller-defined metadata (e.g. split sizes)
};

// Written to a temporary file and renamed into place.
void save_checkpoint(const std::filesystem::path& path, const Model& model, const Scaler& scaler, std::uint64_t seed,
                     const nlohmann::json& extra = nlohmann::json::object());

// Throws ConfigError when parameters do not match the stored config.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

// Writes `text` to `path` atomically (temporary file + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace dstf
