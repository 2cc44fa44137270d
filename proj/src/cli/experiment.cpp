#include "dstf/cli/experiment.hpp"

#include "dstf/errors.hpp"

#include <fstream>

namespace dstf::cli {

void ExperimentConfig::validate() const {
    model.validate();
    train.validate();
    split.validate();
}

nlohmann::json to_json(const ExperimentConfig& c) {
    return nlohmann::json{{"model", c.model},
                          {"train", c.train},
                          {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}}};
}

ExperimentConfig experiment_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    ExperimentConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "model") {
            from_json(value, c.model);
        } else if (key == "train") {
            from_json(value, c.train);
        } else if (key == "split") {
            if (!value.is_object()) throw ConfigError("split must be an object");
            for (const auto& [k, v] : value.items()) {
                if (!v.is_number()) throw ConfigError("split." + k + " must be a number");
                if (k == "train") c.split.train = v.get<double>();
                else if (k == "val") c.split.val = v.get<double>();
                else if (k == "test") c.split.test = v.get<double>();
                else throw ConfigError("unknown split key '" + k + "'");
            }
        } else {
            throw ConfigError("unknown config section '" + key + "'");
        }
    }
    return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    try {
        return experiment_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
}

void save_experiment(const std::filesystem::path& path, const ExperimentConfig& c) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config '" + path.string() + "'");
    out << to_json(c).dump(2) << "\n";
}

void apply_override(ExperimentConfig& c, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
        throw ConfigError("override '" + assignment + "' must look like section.key=value");
    }
    const std::string section = assignment.substr(0, dot);
    const std::string key = assignment.substr(dot + 1, eq - dot - 1);
    const std::string text = assignment.substr(eq + 1);
    nlohmann::json value;
    try {
        value = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error&) {
        value = text;
    }
    nlohmann::json doc = to_json(c);
    if (!doc.contains(section)) throw ConfigError("unknown config section '" + section + "'");
    doc[section][key] = value;
    c = experiment_from_json(doc);
}

const std::vector<std::string>& ablation_variants() {
    static const std::vector<std::string> names{"switch", "w/o-gate", "w/o-res", "w/o-decouple", "w/o-dg",
                                                "w/o-apt", "w/o-gru",  "w/o-msa", "w/o-ar",       "w/o-cl"};
    return names;
}

ExperimentConfig apply_ablation(const ExperimentConfig& base, const std::string& variant) {
    ExperimentConfig c = base;
    if (variant == "switch") c.model.block_order = BlockOrder::InherentFirst;
    else if (variant == "w/o-gate") c.model.use_gate = false;
    else if (variant == "w/o-res") c.model.use_residual = false;
    else if (variant == "w/o-decouple") c.model.use_gate = c.model.use_residual = false;
    else if (variant == "w/o-dg") c.model.use_dynamic_graph = false;
    else if (variant == "w/o-apt") c.model.use_adaptive = false;
    else if (variant == "w/o-gru") c.model.use_gru = false;
    else if (variant == "w/o-msa") c.model.use_attention = false;
    else if (variant == "w/o-ar") c.model.use_autoregressive = false;
    else if (variant == "w/o-cl") c.train.use_curriculum = false;
    else {
        std::string known;
        for (const auto& n : ablation_variants()) known += (known.empty() ? "" : ", ") + n;
        throw ConfigError("unknown ablation variant '" + variant + "' (known: " + known + ")");
    }
    return c;
}

GridAxis parse_grid_axis(const std::string& spec) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("grid axis '" + spec + "' must look like key=v1,v2");
    GridAxis axis;
    axis.key = spec.substr(0, eq);
    std::string rest = spec.substr(eq + 1);
    std::size_t pos = 0;
    while (pos <= rest.size()) {
        const auto comma = rest.find(',', pos);
        const std::string item = rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (item.empty()) throw ConfigError("grid axis '" + spec + "' has an empty value");
        axis.values.push_back(item);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return axis;
}

std::vector<std::vector<std::string>> expand_grid(const std::vector<GridAxis>& axes) {
    if (axes.empty()) throw ConfigError("parameter grid is empty");
    std::vector<std::vector<std::string>> points{{}};
    for (const auto& axis : axes) {
        if (axis.values.empty()) throw ConfigError("grid axis '" + axis.key + "' has no values");
        std::vector<std::vector<std::string>> next;
        for (const auto& p : points) {
            for (const auto& v : axis.values) {
                auto q = p;
                q.push_back(axis.key + "=" + v);
                next.push_back(std::move(q));
            }
        }
        points = std::move(next);
    }
    return points;
}

}  // namespace dstf::cli
