#pragma once

// Sensor readings, calendar features, sliding windows, splits and scaling.

#include "dstf/autodiff.hpp"

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dstf {

using ad::Matrix;
using Timestamp = std::chrono::sys_seconds;

// "YYYY-MM-DDTHH:MM:SS" (a space separator and fractional seconds are accepted).
Timestamp parse_timestamp(std::string_view text);
std::string format_timestamp(Timestamp ts);

// Dense steps x nodes x channels tensor, row-major.
struct Readings {
    std::size_t steps = 0;
    std::size_t nodes = 0;
    std::size_t channels = 0;
    std::vector<float> values;

    Readings() = default;
    Readings(std::size_t t, std::size_t n, std::size_t c) : steps(t), nodes(n), channels(c), values(t * n * c, 0.0F) {}

    [[nodiscard]] float at(std::size_t t, std::size_t n, std::size_t c) const {
        return values[(t * nodes + n) * channels + c];
    }
    float& at(std::size_t t, std::size_t n, std::size_t c) { return values[(t * nodes + n) * channels + c]; }
};

struct TrafficDataset {
    Readings readings;
    std::vector<Timestamp> timestamps;
    int interval_minutes = 5;
    std::vector<std::string> channel_names;
    std::vector<std::string> node_ids;  // optional external sensor ids

    [[nodiscard]] std::size_t steps() const { return readings.steps; }
    [[nodiscard]] std::size_t nodes() const { return readings.nodes; }
    [[nodiscard]] std::size_t channels() const { return readings.channels; }

    // Throws DataError naming the first violated invariant.
    void validate() const;
};

// Keeps only the listed nodes (in the given order) and the step range [first, first+count).
TrafficDataset subset(const TrafficDataset& ds, std::span<const std::size_t> nodes, std::size_t first_step,
                      std::size_t step_count);

enum class ArchiveLayout { MetrLa, Pems };
ArchiveLayout parse_layout(std::string_view name);

struct ArchiveOptions {
    // PEMS archives carry no timestamps: the first reading is stamped with `start`.
    Timestamp start = parse_timestamp("2018-01-01T00:00:00");
    int interval_minutes = 5;
    // Channels to keep for PEMS archives (flow is channel 0).
    std::vector<std::size_t> channels{0};
};

// Reads a public archive.
//   MetrLa: pandas HDF5 (.h5, fixed format) or CSV "timestamp,<sensor>,..."
//   Pems:   .npz with a "data" array (T x N x F) or a bare .npy
TrafficDataset load_readings(const std::filesystem::path& path, ArchiveLayout layout, const ArchiveOptions& options = {});

// Canonical on-disk layout: readings.npy (float32 T x N x C),
// timestamps.txt (ISO-8601 per line) and meta.json.
void save_dataset(const TrafficDataset& ds, const std::filesystem::path& dir);
TrafficDataset load_dataset(const std::filesystem::path& dir);

struct TimeFeatures {
    std::vector<int> tod;  // [0, steps_per_day)
    std::vector<int> dow;  // [0, 7), Monday = 0
    int steps_per_day = 288;
    static constexpr int kDaysPerWeek = 7;
};

TimeFeatures compute_time_features(const TrafficDataset& ds);

// A view of T_h input steps followed by T_f target steps of one dataset.
class SampleWindow {
public:
    SampleWindow(std::shared_ptr<const TrafficDataset> source, std::shared_ptr<const TimeFeatures> time,
                 std::size_t start, int input_len, int output_len);

    [[nodiscard]] std::size_t start() const { return start_; }
    // Index of the last input step.
    [[nodiscard]] std::size_t anchor() const { return start_ + static_cast<std::size_t>(input_len_) - 1; }
    [[nodiscard]] int input_len() const { return input_len_; }
    [[nodiscard]] int output_len() const { return output_len_; }
    [[nodiscard]] std::size_t nodes() const { return source_->nodes(); }

    // (T_h * N) x C, time-major rows (row t * N + i).
    [[nodiscard]] Matrix x() const;
    // (T_f * N) x 1, channel 0 of the steps after the anchor.
    [[nodiscard]] Matrix y() const;
    [[nodiscard]] std::vector<int> x_tod() const;
    [[nodiscard]] std::vector<int> x_dow() const;
    [[nodiscard]] const TrafficDataset& source() const { return *source_; }
    [[nodiscard]] const TimeFeatures& time() const { return *time_; }

private:
    std::shared_ptr<const TrafficDataset> source_;
    std::shared_ptr<const TimeFeatures> time_;
    std::size_t start_;
    int input_len_;
    int output_len_;
};

std::size_t window_count(std::size_t total_steps, int input_len, int output_len);
std::vector<SampleWindow> make_windows(std::shared_ptr<const TrafficDataset> ds, int input_len, int output_len);

struct SplitSpec {
    double train = 0.7;
    double val = 0.1;
    double test = 0.2;
    void validate() const;
};

struct SplitSizes {
    std::size_t train = 0;
    std::size_t val = 0;
    std::size_t test = 0;
};

SplitSizes split_sizes(std::size_t count, const SplitSpec& spec);

struct WindowSplits {
    std::vector<SampleWindow> train;
    std::vector<SampleWindow> val;
    std::vector<SampleWindow> test;
};

WindowSplits split_windows(const std::vector<SampleWindow>& windows, const SplitSpec& spec);

// Per-channel z-score standardization.
struct Scaler {
    std::vector<double> mean;
    std::vector<double> std;

    // Columns of `x` are channels.
    [[nodiscard]] Matrix apply(const Matrix& x) const;
    [[nodiscard]] Matrix invert(const Matrix& x) const;
};

// Population statistics of every input step covered by the training windows.
Scaler fit_scaler(std::span<const SampleWindow> train);
// Population statistics of raw values, one vector per channel.
Scaler fit_scaler(const std::vector<std::vector<double>>& per_channel);

}  // namespace dstf
