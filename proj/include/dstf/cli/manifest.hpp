#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>

namespace dstf::cli {

// Hex SHA-256 of a byte string / of a file.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);
// Digest over the canonical dataset files (readings, timestamps, meta) in
// name order, so identical data gives identical checksums.
std::string dataset_checksum(const std::filesystem::path& dir);

std::string code_version();
std::string utc_now();

struct RunManifest {
    std::string command;
    nlohmann::json config;
    std::string dataset_checksum;
    std::uint64_t seed = 0;
    std::string code_version;
    std::string started;
    std::string finished;     // empty while running
    nlohmann::json results;   // filled at the end

    // Atomic rewrite of `path`.
    void write(const std::filesystem::path& path) const;
    static RunManifest read(const std::filesystem::path& path);
};

}  // namespace dstf::cli
