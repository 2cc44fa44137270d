#include "dstf/data.hpp"

#include "dstf/errors.hpp"
#include "dstf/npy.hpp"

#include <hdf5.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace dstf {
namespace {

using namespace std::chrono;

int parse_int(std::string_view s, std::string_view what) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw DataError("invalid " + std::string(what) + " in timestamp: '" + std::string(s) + "'");
    }
    return v;
}

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string describe_cell(std::size_t t, std::size_t n, std::size_t c) {
    return "step " + std::to_string(t) + ", node " + std::to_string(n) + ", channel " + std::to_string(c);
}

// ---- pandas HDF5 ("fixed" format) ----------------------------------------

class H5Handle {
public:
    H5Handle(hid_t id, herr_t (*closer)(hid_t)) : id_(id), closer_(closer) {}
    H5Handle(const H5Handle&) = delete;
    H5Handle& operator=(const H5Handle&) = delete;
    ~H5Handle() {
        if (id_ >= 0) closer_(id_);
    }
    [[nodiscard]] hid_t get() const { return id_; }
    [[nodiscard]] bool ok() const { return id_ >= 0; }

private:
    hid_t id_;
    herr_t (*closer_)(hid_t);
};

std::vector<hsize_t> dataset_dims(hid_t dset) {
    H5Handle space(H5Dget_space(dset), H5Sclose);
    const int rank = H5Sget_simple_extent_ndims(space.get());
    std::vector<hsize_t> dims(static_cast<std::size_t>(std::max(rank, 0)));
    H5Sget_simple_extent_dims(space.get(), dims.data(), nullptr);
    return dims;
}

std::vector<std::string> read_h5_strings(hid_t group, const char* name) {
    H5Handle dset(H5Dopen2(group, name, H5P_DEFAULT), H5Dclose);
    if (!dset.ok()) return {};
    H5Handle type(H5Dget_type(dset.get()), H5Tclose);
    const auto dims = dataset_dims(dset.get());
    const std::size_t n = dims.empty() ? 0 : dims[0];
    std::vector<std::string> out;
    if (H5Tget_class(type.get()) == H5T_STRING && H5Tis_variable_str(type.get()) <= 0) {
        const std::size_t width = H5Tget_size(type.get());
        std::string buf(n * width, '\0');
        H5Dread(dset.get(), type.get(), H5S_ALL, H5S_ALL, H5P_DEFAULT, buf.data());
        for (std::size_t i = 0; i < n; ++i) {
            std::string s = buf.substr(i * width, width);
            s.erase(std::find(s.begin(), s.end(), '\0'), s.end());
            out.push_back(s);
        }
    } else if (H5Tget_class(type.get()) == H5T_INTEGER) {
        std::vector<long long> ids(n);
        H5Dread(dset.get(), H5T_NATIVE_LLONG, H5S_ALL, H5S_ALL, H5P_DEFAULT, ids.data());
        for (auto v : ids) out.push_back(std::to_string(v));
    }
    return out;
}

TrafficDataset load_pandas_h5(const std::filesystem::path& path) {
    H5Eset_auto2(H5E_DEFAULT, nullptr, nullptr);
    H5Handle file(H5Fopen(path.c_str(), H5F_ACC_RDONLY, H5P_DEFAULT), H5Fclose);
    if (!file.ok()) throw DataError("cannot open HDF5 file " + path.string());
    std::string key = "df";
    if (H5Lexists(file.get(), key.c_str(), H5P_DEFAULT) <= 0) {
        H5G_info_t info{};
        H5Gget_info(file.get(), &info);
        if (info.nlinks == 0) throw DataError(path.string() + ": no groups in HDF5 file");
        char name[256] = {};
        H5Lget_name_by_idx(file.get(), ".", H5_INDEX_NAME, H5_ITER_INC, 0, name, sizeof(name), H5P_DEFAULT);
        key = name;
    }
    H5Handle group(H5Gopen2(file.get(), key.c_str(), H5P_DEFAULT), H5Gclose);
    if (!group.ok()) throw DataError(path.string() + ": cannot open group " + key);

    H5Handle values(H5Dopen2(group.get(), "block0_values", H5P_DEFAULT), H5Dclose);
    if (!values.ok()) throw DataError(path.string() + ": missing block0_values (pandas fixed format expected)");
    const auto dims = dataset_dims(values.get());
    if (dims.size() != 2) throw DataError(path.string() + ": block0_values must be 2-D");
    const std::size_t steps = dims[0];
    const std::size_t nodes = dims[1];
    std::vector<double> raw(steps * nodes);
    if (H5Dread(values.get(), H5T_NATIVE_DOUBLE, H5S_ALL, H5S_ALL, H5P_DEFAULT, raw.data()) < 0) {
        throw DataError(path.string() + ": failed to read block0_values");
    }

    H5Handle index(H5Dopen2(group.get(), "axis1", H5P_DEFAULT), H5Dclose);
    if (!index.ok()) throw DataError(path.string() + ": missing axis1 (timestamp index)");
    std::vector<long long> ns(steps);
    if (dataset_dims(index.get()).at(0) != steps ||
        H5Dread(index.get(), H5T_NATIVE_LLONG, H5S_ALL, H5S_ALL, H5P_DEFAULT, ns.data()) < 0) {
        throw DataError(path.string() + ": axis1 does not match the number of rows");
    }

    TrafficDataset ds;
    ds.readings = Readings(steps, nodes, 1);
    for (std::size_t i = 0; i < raw.size(); ++i) {
        if (!std::isfinite(raw[i])) throw DataError(path.string() + ": non-finite value at " + describe_cell(i / nodes, i % nodes, 0));
        ds.readings.values[i] = static_cast<float>(raw[i]);
    }
    ds.timestamps.reserve(steps);
    for (auto v : ns) ds.timestamps.push_back(Timestamp(seconds(v / 1'000'000'000LL)));
    ds.node_ids = read_h5_strings(group.get(), "block0_items");
    if (ds.node_ids.size() != nodes) ds.node_ids = read_h5_strings(group.get(), "axis0");
    if (ds.node_ids.size() != nodes) ds.node_ids.clear();
    ds.channel_names = {"speed"};
    if (steps >= 2) ds.interval_minutes = static_cast<int>(duration_cast<minutes>(ds.timestamps[1] - ds.timestamps[0]).count());
    return ds;
}

TrafficDataset load_metr_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
    const auto header = split_csv_line(line);
    if (header.size() < 2) throw DataError(path.string() + ": need a timestamp column and at least one sensor");
    const std::size_t nodes = header.size() - 1;
    std::vector<float> vals;
    TrafficDataset ds;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != header.size()) {
            throw DataError(path.string() + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                            " cells, expected " + std::to_string(header.size()));
        }
        ds.timestamps.push_back(parse_timestamp(cells[0]));
        for (std::size_t n = 0; n < nodes; ++n) {
            double v = 0.0;
            try {
                std::size_t used = 0;
                v = std::stod(cells[n + 1], &used);
            } catch (const std::exception&) {
                v = std::nan("");
            }
            if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite value at " + describe_cell(row, n, 0));
            vals.push_back(static_cast<float>(v));
        }
        ++row;
    }
    ds.readings.steps = row;
    ds.readings.nodes = nodes;
    ds.readings.channels = 1;
    ds.readings.values = std::move(vals);
    ds.node_ids.assign(header.begin() + 1, header.end());
    ds.channel_names = {"speed"};
    if (row >= 2) ds.interval_minutes = static_cast<int>(duration_cast<minutes>(ds.timestamps[1] - ds.timestamps[0]).count());
    return ds;
}

TrafficDataset load_pems(const std::filesystem::path& path, const ArchiveOptions& options) {
    npy::Array arr;
    if (path.extension() == ".npz") {
        const auto members = npy::npz_members(path);
        const bool has_data = std::any_of(members.begin(), members.end(), [](const std::string& m) { return m == "data.npy"; });
        arr = npy::read_npz_member(path, has_data ? "data" : members.at(0));
    } else {
        arr = npy::read(path);
    }
    if (arr.shape.size() == 2) arr.shape.push_back(1);
    if (arr.shape.size() != 3) throw DataError(path.string() + ": expected a T x N x F array");
    const std::size_t steps = arr.shape[0];
    const std::size_t nodes = arr.shape[1];
    const std::size_t feats = arr.shape[2];
    for (auto c : options.channels) {
        if (c >= feats) throw DataError(path.string() + ": channel " + std::to_string(c) + " not present");
    }
    TrafficDataset ds;
    ds.readings = Readings(steps, nodes, options.channels.size());
    for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t n = 0; n < nodes; ++n) {
            for (std::size_t k = 0; k < options.channels.size(); ++k) {
                const double v = arr.data[(t * nodes + n) * feats + options.channels[k]];
                if (!std::isfinite(v)) throw DataError(path.string() + ": non-finite value at " + describe_cell(t, n, k));
                ds.readings.at(t, n, k) = static_cast<float>(v);
            }
        }
    }
    static const char* kPemsChannels[] = {"flow", "occupancy", "speed"};
    for (auto c : options.channels) ds.channel_names.emplace_back(c < 3 ? kPemsChannels[c] : "channel" + std::to_string(c));
    ds.interval_minutes = options.interval_minutes;
    ds.timestamps.reserve(steps);
    for (std::size_t t = 0; t < steps; ++t) {
        ds.timestamps.push_back(options.start + minutes(static_cast<long long>(t) * options.interval_minutes));
    }
    return ds;
}

}  // namespace

Timestamp parse_timestamp(std::string_view text) {
    std::string s = trim(std::string(text));
    if (s.size() < 19 || s[4] != '-' || s[7] != '-' || (s[10] != 'T' && s[10] != ' ') || s[13] != ':' || s[16] != ':') {
        throw DataError("timestamp not in YYYY-MM-DDTHH:MM:SS form: '" + s + "'");
    }
    const int y = parse_int(std::string_view(s).substr(0, 4), "year");
    const int mo = parse_int(std::string_view(s).substr(5, 2), "month");
    const int d = parse_int(std::string_view(s).substr(8, 2), "day");
    const int h = parse_int(std::string_view(s).substr(11, 2), "hour");
    const int mi = parse_int(std::string_view(s).substr(14, 2), "minute");
    const int se = parse_int(std::string_view(s).substr(17, 2), "second");
    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
    if (!ymd.ok() || h > 23 || mi > 59 || se > 60) throw DataError("invalid calendar value in '" + s + "'");
    return sys_days(ymd) + hours(h) + minutes(mi) + seconds(se);
}

std::string format_timestamp(Timestamp ts) {
    const auto day_point = floor<days>(ts);
    const year_month_day ymd{day_point};
    const hh_mm_ss hms{ts - day_point};
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%04d-%02u-%02uT%02ld:%02ld:%02ld", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<long>(hms.hours().count()), static_cast<long>(hms.minutes().count()),
                  static_cast<long>(hms.seconds().count()));
    return buf;
}

void TrafficDataset::validate() const {
    if (readings.steps == 0 || readings.nodes == 0 || readings.channels == 0) {
        throw DataError("dataset must have at least one step, node and channel");
    }
    if (readings.values.size() != readings.steps * readings.nodes * readings.channels) {
        throw DataError("readings buffer does not match its shape");
    }
    if (timestamps.size() != readings.steps) {
        throw DataError("timestamp count " + std::to_string(timestamps.size()) + " differs from step count " +
                        std::to_string(readings.steps));
    }
    if (interval_minutes <= 0) throw DataError("interval_minutes must be positive");
    const seconds spacing = minutes(interval_minutes);
    for (std::size_t t = 1; t < timestamps.size(); ++t) {
        if (timestamps[t] - timestamps[t - 1] != spacing) {
            throw DataError("non-constant timestamp spacing at step " + std::to_string(t) + " (" +
                            format_timestamp(timestamps[t - 1]) + " -> " + format_timestamp(timestamps[t]) + ")");
        }
    }
    for (std::size_t i = 0; i < readings.values.size(); ++i) {
        if (!std::isfinite(readings.values[i])) {
            const std::size_t c = i % readings.channels;
            const std::size_t n = (i / readings.channels) % readings.nodes;
            const std::size_t t = i / (readings.channels * readings.nodes);
            throw DataError("non-finite reading at " + describe_cell(t, n, c));
        }
    }
    if (!node_ids.empty() && node_ids.size() != readings.nodes) throw DataError("node id list does not match node count");
}

TrafficDataset subset(const TrafficDataset& ds, std::span<const std::size_t> nodes, std::size_t first_step,
                      std::size_t step_count) {
    if (first_step + step_count > ds.steps()) throw DataError("subset step range exceeds dataset");
    TrafficDataset out;
    out.interval_minutes = ds.interval_minutes;
    out.channel_names = ds.channel_names;
    out.readings = Readings(step_count, nodes.size(), ds.channels());
    for (std::size_t t = 0; t < step_count; ++t) {
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            if (nodes[k] >= ds.nodes()) throw DataError("subset node index out of range");
            for (std::size_t c = 0; c < ds.channels(); ++c) out.readings.at(t, k, c) = ds.readings.at(first_step + t, nodes[k], c);
        }
    }
    out.timestamps.assign(ds.timestamps.begin() + static_cast<std::ptrdiff_t>(first_step),
                          ds.timestamps.begin() + static_cast<std::ptrdiff_t>(first_step + step_count));
    if (!ds.node_ids.empty()) {
        for (auto n : nodes) out.node_ids.push_back(ds.node_ids[n]);
    }
    return out;
}

ArchiveLayout parse_layout(std::string_view name) {
    if (name == "metr-la" || name == "metr-la-style" || name == "speed") return ArchiveLayout::MetrLa;
    if (name == "pems" || name == "pems-flow-style" || name == "flow") return ArchiveLayout::Pems;
    throw ConfigError("unknown archive layout '" + std::string(name) + "' (expected metr-la or pems)");
}

TrafficDataset load_readings(const std::filesystem::path& path, ArchiveLayout layout, const ArchiveOptions& options) {
    if (!std::filesystem::exists(path)) throw DataError("no such file: " + path.string());
    TrafficDataset ds;
    if (layout == ArchiveLayout::MetrLa) {
        ds = (path.extension() == ".csv") ? load_metr_csv(path) : load_pandas_h5(path);
    } else {
        ds = load_pems(path, options);
    }
    ds.validate();
    return ds;
}

void save_dataset(const TrafficDataset& ds, const std::filesystem::path& dir) {
    ds.validate();
    std::filesystem::create_directories(dir);
    const std::size_t shape[] = {ds.steps(), ds.nodes(), ds.channels()};
    npy::write_f32(dir / "readings.npy", shape, ds.readings.values);
    {
        std::ofstream ts(dir / "timestamps.txt");
        for (const auto& t : ds.timestamps) ts << format_timestamp(t) << '\n';
        if (!ts) throw DataError("cannot write timestamps to " + dir.string());
    }
    nlohmann::json meta;
    meta["interval_minutes"] = ds.interval_minutes;
    meta["channel_names"] = ds.channel_names;
    meta["node_ids"] = ds.node_ids;
    meta["num_nodes"] = ds.nodes();
    meta["num_steps"] = ds.steps();
    std::ofstream m(dir / "meta.json");
    m << meta.dump(2) << '\n';
    if (!m) throw DataError("cannot write meta.json to " + dir.string());
}

TrafficDataset load_dataset(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw DataError("dataset directory not found: " + dir.string());
    TrafficDataset ds;
    const auto arr = npy::read(dir / "readings.npy");
    if (arr.shape.size() != 3) throw DataError("readings.npy must be T x N x C");
    ds.readings = Readings(arr.shape[0], arr.shape[1], arr.shape[2]);
    for (std::size_t i = 0; i < arr.data.size(); ++i) ds.readings.values[i] = static_cast<float>(arr.data[i]);

    std::ifstream ts(dir / "timestamps.txt");
    if (!ts) throw DataError("missing timestamps.txt in " + dir.string());
    std::string line;
    while (std::getline(ts, line)) {
        if (!trim(line).empty()) ds.timestamps.push_back(parse_timestamp(line));
    }

    std::ifstream m(dir / "meta.json");
    if (!m) throw DataError("missing meta.json in " + dir.string());
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(m);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("meta.json: " + std::string(e.what()));
    }
    ds.interval_minutes = meta.value("interval_minutes", 5);
    ds.channel_names = meta.value("channel_names", std::vector<std::string>{});
    ds.node_ids = meta.value("node_ids", std::vector<std::string>{});
    ds.validate();
    return ds;
}

TimeFeatures compute_time_features(const TrafficDataset& ds) {
    if (ds.interval_minutes <= 0 || 1440 % ds.interval_minutes != 0) {
        throw DataError("interval of " + std::to_string(ds.interval_minutes) + " minutes does not divide a day");
    }
    TimeFeatures tf;
    tf.steps_per_day = 1440 / ds.interval_minutes;
    tf.tod.reserve(ds.timestamps.size());
    tf.dow.reserve(ds.timestamps.size());
    for (const auto& ts : ds.timestamps) {
        const auto day_point = floor<days>(ts);
        const auto since_midnight = duration_cast<minutes>(ts - day_point).count();
        tf.tod.push_back(static_cast<int>(since_midnight / ds.interval_minutes));
        const weekday wd{day_point};
        tf.dow.push_back(static_cast<int>((wd.c_encoding() + 6) % 7));
    }
    return tf;
}

SampleWindow::SampleWindow(std::shared_ptr<const TrafficDataset> source, std::shared_ptr<const TimeFeatures> time,
                           std::size_t start, int input_len, int output_len)
    : source_(std::move(source)), time_(std::move(time)), start_(start), input_len_(input_len), output_len_(output_len) {}

Matrix SampleWindow::x() const {
    const auto& r = source_->readings;
    Matrix out(static_cast<ad::Index>(input_len_) * static_cast<ad::Index>(r.nodes), static_cast<ad::Index>(r.channels));
    for (int t = 0; t < input_len_; ++t) {
        for (std::size_t n = 0; n < r.nodes; ++n) {
            for (std::size_t c = 0; c < r.channels; ++c) {
                out(static_cast<ad::Index>(static_cast<std::size_t>(t) * r.nodes + n), static_cast<ad::Index>(c)) =
                    r.at(start_ + static_cast<std::size_t>(t), n, c);
            }
        }
    }
    return out;
}

Matrix SampleWindow::y() const {
    const auto& r = source_->readings;
    Matrix out(static_cast<ad::Index>(output_len_) * static_cast<ad::Index>(r.nodes), 1);
    const std::size_t first = anchor() + 1;
    for (int t = 0; t < output_len_; ++t) {
        for (std::size_t n = 0; n < r.nodes; ++n) {
            out(static_cast<ad::Index>(static_cast<std::size_t>(t) * r.nodes + n), 0) = r.at(first + static_cast<std::size_t>(t), n, 0);
        }
    }
    return out;
}

std::vector<int> SampleWindow::x_tod() const {
    return {time_->tod.begin() + static_cast<std::ptrdiff_t>(start_),
            time_->tod.begin() + static_cast<std::ptrdiff_t>(start_ + static_cast<std::size_t>(input_len_))};
}

std::vector<int> SampleWindow::x_dow() const {
    return {time_->dow.begin() + static_cast<std::ptrdiff_t>(start_),
            time_->dow.begin() + static_cast<std::ptrdiff_t>(start_ + static_cast<std::size_t>(input_len_))};
}

std::size_t window_count(std::size_t total_steps, int input_len, int output_len) {
    if (input_len < 1 || output_len < 1) throw ConfigError("window lengths must be positive");
    const auto width = static_cast<std::size_t>(input_len + output_len);
    if (total_steps < width) {
        throw DataError("dataset has " + std::to_string(total_steps) + " steps, fewer than the window width " +
                        std::to_string(width));
    }
    return total_steps - width + 1;
}

std::vector<SampleWindow> make_windows(std::shared_ptr<const TrafficDataset> ds, int input_len, int output_len) {
    const std::size_t count = window_count(ds->steps(), input_len, output_len);
    auto time = std::make_shared<const TimeFeatures>(compute_time_features(*ds));
    std::vector<SampleWindow> out;
    out.reserve(count);
    for (std::size_t s = 0; s < count; ++s) out.emplace_back(ds, time, s, input_len, output_len);
    return out;
}

void SplitSpec::validate() const {
    for (double f : {train, val, test}) {
        if (!(f > 0.0 && f < 1.0)) throw ConfigError("split fractions must lie in (0, 1)");
    }
    if (std::abs(train + val + test - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
}

SplitSizes split_sizes(std::size_t count, const SplitSpec& spec) {
    spec.validate();
    SplitSizes s;
    // The epsilon keeps exact products such as 0.7 * 100 from rounding down.
    s.train = static_cast<std::size_t>(std::floor(spec.train * static_cast<double>(count) + 1e-9));
    s.val = static_cast<std::size_t>(std::floor(spec.val * static_cast<double>(count) + 1e-9));
    if (s.train + s.val > count) throw DataError("split fractions exceed the window count");
    s.test = count - s.train - s.val;
    if (s.train == 0 || s.val == 0 || s.test == 0) {
        throw DataError("split of " + std::to_string(count) + " windows leaves an empty partition");
    }
    return s;
}

WindowSplits split_windows(const std::vector<SampleWindow>& windows, const SplitSpec& spec) {
    const auto sizes = split_sizes(windows.size(), spec);
    WindowSplits out;
    const auto b = windows.begin();
    const auto tr = static_cast<std::ptrdiff_t>(sizes.train);
    const auto va = static_cast<std::ptrdiff_t>(sizes.val);
    out.train.assign(b, b + tr);
    out.val.assign(b + tr, b + tr + va);
    out.test.assign(b + tr + va, windows.end());
    return out;
}

Matrix Scaler::apply(const Matrix& x) const {
    if (static_cast<std::size_t>(x.cols()) > mean.size()) throw std::invalid_argument("scaler has fewer channels than input");
    Matrix out(x.rows(), x.cols());
    for (ad::Index c = 0; c < x.cols(); ++c) {
        out.col(c) = (x.col(c).array() - mean[static_cast<std::size_t>(c)]) / std[static_cast<std::size_t>(c)];
    }
    return out;
}

Matrix Scaler::invert(const Matrix& x) const {
    if (static_cast<std::size_t>(x.cols()) > mean.size()) throw std::invalid_argument("scaler has fewer channels than input");
    Matrix out(x.rows(), x.cols());
    for (ad::Index c = 0; c < x.cols(); ++c) {
        out.col(c) = x.col(c).array() * std[static_cast<std::size_t>(c)] + mean[static_cast<std::size_t>(c)];
    }
    return out;
}

Scaler fit_scaler(const std::vector<std::vector<double>>& per_channel) {
    Scaler s;
    for (std::size_t c = 0; c < per_channel.size(); ++c) {
        const auto& v = per_channel[c];
        if (v.empty()) throw DataError("cannot fit scaler: channel " + std::to_string(c) + " has no values");
        double mean = 0.0;
        for (double x : v) mean += x;
        mean /= static_cast<double>(v.size());
        double var = 0.0;
        for (double x : v) var += (x - mean) * (x - mean);
        var /= static_cast<double>(v.size());
        const double sd = std::sqrt(var);
        if (!(sd > 0.0)) throw DataError("cannot fit scaler: channel " + std::to_string(c) + " has zero standard deviation");
        s.mean.push_back(mean);
        s.std.push_back(sd);
    }
    return s;
}

Scaler fit_scaler(std::span<const SampleWindow> train) {
    if (train.empty()) throw DataError("cannot fit scaler on an empty training split");
    const auto& ds = train.front().source();
    std::size_t first = train.front().start();
    std::size_t last = 0;
    for (const auto& w : train) {
        first = std::min(first, w.start());
        last = std::max(last, w.anchor());
    }
    std::vector<std::vector<double>> per_channel(ds.channels());
    for (std::size_t t = first; t <= last; ++t) {
        for (std::size_t n = 0; n < ds.nodes(); ++n) {
            for (std::size_t c = 0; c < ds.channels(); ++c) per_channel[c].push_back(ds.readings.at(t, n, c));
        }
    }
    return fit_scaler(per_channel);
}

}  // namespace dstf
