#include "dstf/checkpoint.hpp"

#include "dstf/errors.hpp"

#include <fstream>
#include <sstream>

namespace dstf {

namespace {
constexpr const char* kFormat = "dstf-checkpoint";
constexpr int kVersion = 1;
}  // namespace

nlohmann::json matrix_to_json(const Matrix& m) {
    return nlohmann::json{{"rows", m.rows()},
                          {"cols", m.cols()},
                          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
    const auto rows = j.at("rows").get<ad::Index>();
    const auto cols = j.at("cols").get<ad::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != data.size()) {
        throw DataError("matrix payload size does not match its shape");
    }
    Matrix m(rows, cols);
    std::copy(data.begin(), data.end(), m.data());
    return m;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot write '" + tmp.string() + "'");
        out << text;
        if (!out) throw DataError("failed writing '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, const Model& model, const Scaler& scaler, std::uint64_t seed,
                     const nlohmann::json& extra) {
    nlohmann::json params = nlohmann::json::object();
    const auto& store = model.parameters();
    for (std::size_t i = 0; i < store.size(); ++i) params[store.name(i)] = matrix_to_json(store.value(i));
    const nlohmann::json doc{{"format", kFormat},
                             {"version", kVersion},
                             {"config", model.config()},
                             {"seed", seed},
                             {"scaler", {{"mean", scaler.mean}, {"std", scaler.std}}},
                             {"adjacency", matrix_to_json(model.adjacency())},
                             {"parameters", params},
                             {"extra", extra}};
    write_file_atomic(path, doc.dump());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw DataError("checkpoint '" + path.string() + "' is not valid JSON: " + e.what());
    }
    if (doc.value("format", "") != kFormat) throw DataError("'" + path.string() + "' is not a model checkpoint");
    if (doc.value("version", 0) != kVersion) throw DataError("unsupported checkpoint version");

    LoadedCheckpoint out;
    ModelConfig config;
    from_json(doc.at("config"), config);
    out.seed = doc.at("seed").get<std::uint64_t>();
    out.scaler.mean = doc.at("scaler").at("mean").get<std::vector<double>>();
    out.scaler.std = doc.at("scaler").at("std").get<std::vector<double>>();
    out.extra = doc.value("extra", nlohmann::json::object());
    out.model = std::make_unique<Model>(config, matrix_from_json(doc.at("adjacency")), out.seed);

    auto& store = out.model->parameters();
    const auto& params = doc.at("parameters");
    if (params.size() != store.size()) {
        throw ConfigError("checkpoint holds " + std::to_string(params.size()) + " parameters but its config implies " +
                          std::to_string(store.size()));
    }
    for (std::size_t i = 0; i < store.size(); ++i) {
        const auto& name = store.name(i);
        if (!params.contains(name)) throw ConfigError("checkpoint is missing parameter '" + name + "'");
        Matrix value = matrix_from_json(params.at(name));
        if (value.rows() != store.value(i).rows() || value.cols() != store.value(i).cols()) {
            throw ConfigError("parameter '" + name + "' has shape " + std::to_string(value.rows()) + "x" +
                              std::to_string(value.cols()) + ", config expects " +
                              std::to_string(store.value(i).rows()) + "x" + std::to_string(store.value(i).cols()));
        }
        store.value(i) = std::move(value);
    }
    return out;
}

}  // namespace dstf
