#pragma once

// Minimal NumPy .npy / .npz support (little-endian, C order).

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dstf::npy {

struct Array {
    std::vector<std::size_t> shape;
    std::vector<double> data;  // converted from the stored dtype

    [[nodiscard]] std::size_t size() const;
};

// Supported dtypes: <f4, <f8, <i4, <i8, <u1, |u1.
Array parse(const std::string& bytes);
Array read(const std::filesystem::path& path);
// Returns the member "<name>.npy" of an .npz archive (stored or deflated, zip64 aware).
Array read_npz_member(const std::filesystem::path& path, const std::string& name);
std::vector<std::string> npz_members(const std::filesystem::path& path);

void write_f32(const std::filesystem::path& path, std::span<const std::size_t> shape, std::span<const float> data);
void write_f64(const std::filesystem::path& path, std::span<const std::size_t> shape, std::span<const double> data);

}  // namespace dstf::npy
