#include "dstf/cli/commands.hpp"

#include "dstf/checkpoint.hpp"
#include "dstf/cli/manifest.hpp"
#include "dstf/cli/plot.hpp"
#include "dstf/errors.hpp"
#include "dstf/graph.hpp"
#include "dstf/npy.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <set>
#include <unordered_map>
#include <sstream>

namespace dstf::cli {

namespace {

struct PreparedData {
    std::shared_ptr<TrafficDataset> dataset;
    std::vector<SampleWindow> windows;
    WindowSplits splits;
};

PreparedData prepare(const fs::path& dir, int input_len, int output_len, const SplitSpec& split) {
    PreparedData p;
    p.dataset = std::make_shared<TrafficDataset>(load_dataset(dir));
    p.windows = make_windows(p.dataset, input_len, output_len);
    p.splits = split_windows(p.windows, split);
    return p;
}

Matrix load_graph(const fs::path& path, std::size_t nodes) {
    if (!fs::exists(path)) throw DataError("graph file not found: " + path.string() + " (run build-graph first)");
    const auto arr = npy::read(path);
    if (arr.shape.size() != 2 || arr.shape[0] != nodes || arr.shape[1] != nodes) {
        throw DataError("graph '" + path.string() + "' is not " + std::to_string(nodes) + "x" + std::to_string(nodes));
    }
    Matrix a(static_cast<ad::Index>(nodes), static_cast<ad::Index>(nodes));
    std::copy(arr.data.begin(), arr.data.end(), a.data());
    return a;
}

void save_graph(const fs::path& path, const Matrix& a) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const std::vector<std::size_t> shape{static_cast<std::size_t>(a.rows()), static_cast<std::size_t>(a.cols())};
    npy::write_f64(path, shape, std::span<const double>(a.data(), static_cast<std::size_t>(a.size())));
}

std::span<const SampleWindow> pick_split(const WindowSplits& s, const std::string& name) {
    if (name == "train") return s.train;
    if (name == "val") return s.val;
    if (name == "test") return s.test;
    throw ConfigError("unknown split '" + name + "' (expected train, val or test)");
}

SplitSpec split_from_extra(const nlohmann::json& extra) {
    SplitSpec s;
    if (extra.contains("split")) {
        s.train = extra["split"].value("train", s.train);
        s.val = extra["split"].value("val", s.val);
        s.test = extra["split"].value("test", s.test);
    }
    return s;
}

std::ofstream open_out(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    return out;
}

}  // namespace

void run_convert(const ConvertOptions& o) {
    ArchiveOptions opts;
    opts.start = parse_timestamp(o.start);
    opts.interval_minutes = o.interval_minutes;
    opts.channels = o.channels;
    const auto ds = load_readings(o.input, parse_layout(o.layout), opts);
    save_dataset(ds, o.out);
    std::cout << "wrote " << ds.steps() << " steps x " << ds.nodes() << " nodes x " << ds.channels()
              << " channels to " << o.out.string() << "\n";
}

void run_build_graph(const BuildGraphOptions& o) {
    std::size_t nodes = o.nodes;
    DistanceList list;
    if (!o.data.empty()) {
        const auto ds = load_dataset(o.data);
        nodes = ds.nodes();
        if (ds.node_ids.empty()) throw DataError("dataset has no node ids to map the distance list");
        std::unordered_map<std::string, std::size_t> ids;
        for (std::size_t i = 0; i < ds.node_ids.size(); ++i) ids[ds.node_ids[i]] = i;
        list = read_distance_csv(o.distances, &ids);
    } else {
        if (nodes == 0) throw ConfigError("build-graph needs --nodes or --data");
        list = read_distance_csv(o.distances);
    }
    Matrix a;
    if (o.kind == "gaussian") {
        a = gaussian_kernel_adjacency(list, nodes, o.kappa);
    } else if (o.kind == "connectivity") {
        a = connectivity_adjacency(list, nodes);
    } else {
        throw ConfigError("unknown graph kind '" + o.kind + "' (expected gaussian or connectivity)");
    }
    save_graph(o.out, a);
    std::cout << "wrote " << nodes << "x" << nodes << " adjacency with " << count_nonzero(a) << " nonzero entries to "
              << o.out.string() << "\n";
}

void run_synth(const SynthOptions& o) {
    const auto data = make_synthetic(o.spec);
    save_dataset(data.dataset, o.out);
    save_graph(o.out / "adjacency.npy", data.adjacency);
    std::cout << "wrote synthetic dataset (" << data.dataset.steps() << " steps, " << data.dataset.nodes()
              << " nodes) to " << o.out.string() << "\n";
}

TrainSummary run_train(const TrainOptions& o) {
    ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_experiment(o.config);
    for (const auto& ov : o.overrides) apply_override(cfg, ov);

    auto data = prepare(o.data, cfg.model.input_len, cfg.model.output_len, cfg.split);
    const auto& ds = *data.dataset;
    cfg.model.in_channels = static_cast<int>(ds.channels());
    cfg.model.steps_per_day = 1440 / ds.interval_minutes;
    cfg.validate();
    const Matrix adjacency = load_graph(o.graph.empty() ? o.data / "adjacency.npy" : o.graph, ds.nodes());

    fs::create_directories(o.out);
    save_experiment(o.out / "config.json", cfg);
    RunManifest manifest;
    manifest.command = o.command_line.empty() ? "train" : o.command_line;
    manifest.config = to_json(cfg);
    manifest.dataset_checksum = dataset_checksum(o.data);
    manifest.seed = cfg.train.seed;
    manifest.code_version = code_version();
    manifest.started = utc_now();
    manifest.write(o.out / "manifest.json");

    const Scaler scaler = fit_scaler(std::span<const SampleWindow>(data.splits.train));
    Model model(cfg.model, adjacency, cfg.train.seed);
    Trainer trainer(model, scaler, cfg.train);

    auto metrics = open_out(o.out / "metrics.csv");
    metrics << "epoch,train_loss,val_mae";
    for (int h = 1; h <= cfg.model.output_len; ++h) metrics << ",val_mae_h" << h;
    metrics << ",wall_clock_s,global_step,horizon_level\n" << std::setprecision(10);
    const auto state = trainer.fit(data.splits.train, data.splits.val, [&](const EpochStats& s) {
        metrics << s.epoch << ',' << s.train_loss << ',' << s.val.overall.mae;
        for (const auto& h : s.val.horizons) metrics << ',' << h.mae;
        metrics << ',' << s.wall_clock_s << ',' << s.global_step << ',' << s.horizon_level << '\n';
        metrics.flush();
        if (!o.quiet) {
            std::cerr << "epoch " << s.epoch << "  train_loss " << s.train_loss << "  val_mae " << s.val.overall.mae
                      << "  level " << s.horizon_level << "  " << std::fixed << std::setprecision(1) << s.wall_clock_s
                      << "s\n"
                      << std::defaultfloat << std::setprecision(6);
        }
    });
    {
        auto log = open_out(o.out / "batch_log.csv");
        log << "step,loss\n" << std::setprecision(10);
        for (std::size_t i = 0; i < state.batch_losses.size(); ++i) log << i << ',' << state.batch_losses[i] << '\n';
    }

    const nlohmann::json extra{
        {"split", {{"train", cfg.split.train}, {"val", cfg.split.val}, {"test", cfg.split.test}}},
        {"mask_zeros", cfg.train.mask_zeros},
        {"dataset_checksum", manifest.dataset_checksum}};
    save_checkpoint(o.out / "checkpoint.json", model, scaler, cfg.train.seed, extra);

    const ModelPredictor predictor(model, scaler);
    const auto val = evaluate(predictor, data.splits.val, cfg.train.mask_zeros, cfg.train.threads).report;
    const auto test = evaluate(predictor, data.splits.test, cfg.train.mask_zeros, cfg.train.threads).report;
    write_report_csv(o.out / "test_report.csv", test);
    const std::string table = format_report({{"model", test}});
    open_out(o.out / "report.txt") << table;
    if (!o.quiet) std::cout << table;

    TrainSummary summary;
    summary.val_mae = val.overall.mae;
    summary.test_mae = test.overall.mae;
    summary.test = test;
    summary.steps = state.global_step;
    summary.epochs = state.epoch;
    const nlohmann::json results{{"val_mae", summary.val_mae},     {"test_mae", summary.test_mae},
                                 {"steps", summary.steps},         {"epochs", summary.epochs},
                                 {"best_val_mae", state.best_val_mae}};
    write_file_atomic(o.out / "summary.json", results.dump(2) + "\n");
    manifest.results = results;
    manifest.finished = utc_now();
    manifest.write(o.out / "manifest.json");
    return summary;
}

std::string run_eval(const EvalOptions& o) {
    const auto ckpt = load_checkpoint(o.checkpoint);
    const auto& mc = ckpt.model->config();
    auto data = prepare(o.data, mc.input_len, mc.output_len, split_from_extra(ckpt.extra));
    const auto& ds = *data.dataset;
    if (static_cast<int>(ds.nodes()) != ckpt.model->nodes() || static_cast<int>(ds.channels()) != mc.in_channels) {
        throw ConfigError("checkpoint expects " + std::to_string(ckpt.model->nodes()) + " nodes and " +
                          std::to_string(mc.in_channels) + " channels; dataset has " + std::to_string(ds.nodes()) +
                          " and " + std::to_string(ds.channels()));
    }
    const bool mask = o.mask_zeros.value_or(ckpt.extra.value("mask_zeros", true));
    const auto windows = pick_split(data.splits, o.split);
    if (windows.empty()) throw DataError("split '" + o.split + "' has no windows");

    std::vector<std::pair<std::string, MetricReport>> rows;
    const ModelPredictor model(*ckpt.model, ckpt.scaler);
    const auto result = evaluate(model, windows, mask, o.threads);
    rows.emplace_back("model", result.report);
    if (o.with_baseline) {
        const HistoricalAverage ha(ds, windows.front().time(), windows.front().anchor() + 1, mask);
        rows.emplace_back("HA", evaluate(ha, windows, mask, o.threads).report);
    }
    if (!o.report.empty()) write_report_csv(o.report, result.report);
    return format_report(rows);
}

std::size_t run_predict(const PredictOptions& o) {
    const auto ckpt = load_checkpoint(o.checkpoint);
    const auto& mc = ckpt.model->config();
    auto data = prepare(o.data, mc.input_len, mc.output_len, split_from_extra(ckpt.extra));
    const auto& ds = *data.dataset;
    if (static_cast<int>(ds.nodes()) != ckpt.model->nodes()) throw ConfigError("checkpoint/dataset node count mismatch");
    const auto& test = data.splits.test;
    std::vector<SampleWindow> chosen;
    if (o.anchor) {
        const auto first = test.front().anchor();
        const auto last = test.back().anchor();
        if (*o.anchor < first || *o.anchor > last) {
            throw ConfigError("anchor " + std::to_string(*o.anchor) + " is outside the test range [" +
                              std::to_string(first) + ", " + std::to_string(last) + "]");
        }
        chosen.push_back(test[*o.anchor - first]);
    } else {
        const auto lo = o.from.empty() ? Timestamp::min() : parse_timestamp(o.from);
        const auto hi = o.to.empty() ? Timestamp::max() : parse_timestamp(o.to);
        if (lo > hi) throw ConfigError("empty time range");
        for (const auto& w : test) {
            const auto ts = ds.timestamps[w.anchor()];
            if (ts >= lo && ts <= hi) chosen.push_back(w);
        }
        if (chosen.empty()) throw ConfigError("no test windows have anchors in the requested range");
    }
    const ModelPredictor predictor(*ckpt.model, ckpt.scaler);
    const auto result = evaluate(predictor, chosen, ckpt.extra.value("mask_zeros", true), o.threads);
    auto out = open_out(o.out);
    out << "timestamp,node,horizon,y_true,y_pred\n" << std::setprecision(17);
    std::size_t rows = 0;
    const auto n = ds.nodes();
    for (std::size_t k = 0; k < chosen.size(); ++k) {
        const auto& w = chosen[k];
        const Matrix y = w.y();
        for (int h = 0; h < w.output_len(); ++h) {
            const auto step = w.anchor() + 1 + static_cast<std::size_t>(h);
            for (std::size_t i = 0; i < n; ++i) {
                const auto r = static_cast<ad::Index>(static_cast<std::size_t>(h) * n + i);
                out << format_timestamp(ds.timestamps[step]) << ',' << i << ',' << h + 1 << ',' << y(r, 0) << ','
                    << result.predictions[k](r, 0) << '\n';
                ++rows;
            }
        }
    }
    return rows;
}

std::vector<fs::path> run_plot(const PlotOptions& o) {
    if (o.nodes.empty()) throw ConfigError("plot needs at least one node");
    const auto lo = o.from.empty() ? Timestamp::min() : parse_timestamp(o.from);
    const auto hi = o.to.empty() ? Timestamp::max() : parse_timestamp(o.to);
    if (lo >= hi) throw ConfigError("empty date range");
    std::ifstream in(o.predictions);
    if (!in) throw DataError("cannot read predictions '" + o.predictions.string() + "'");
    std::string line;
    std::getline(in, line);
    if (line.rfind("timestamp,node,horizon,y_true,y_pred", 0) != 0) {
        throw DataError("'" + o.predictions.string() + "' is not a prediction file");
    }
    struct Point {
        double truth, pred;
    };
    std::map<std::size_t, std::map<Timestamp, Point>> by_node;
    std::set<std::size_t> known;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ls(line);
        std::string ts, node, horizon, truth, pred;
        if (!std::getline(ls, ts, ',') || !std::getline(ls, node, ',') || !std::getline(ls, horizon, ',') ||
            !std::getline(ls, truth, ',') || !std::getline(ls, pred, ',')) {
            throw DataError("malformed prediction line '" + line + "'");
        }
        const auto id = static_cast<std::size_t>(std::stoul(node));
        known.insert(id);
        if (std::stoi(horizon) != o.horizon) continue;
        const auto t = parse_timestamp(ts);
        if (t < lo || t > hi) continue;
        by_node[id][t] = Point{std::stod(truth), std::stod(pred)};
    }
    std::vector<fs::path> written;
    fs::create_directories(o.out);
    for (auto node : o.nodes) {
        if (!known.count(node)) throw ConfigError("unknown node id " + std::to_string(node));
    }
    for (auto node : o.nodes) {
        const auto it = by_node.find(node);
        if (it == by_node.end() || it->second.empty()) {
            throw ConfigError("no horizon-" + std::to_string(o.horizon) + " predictions for node " +
                              std::to_string(node) + " in the date range");
        }
        std::vector<std::string> labels;
        Series truth{"ground truth", "#222222", {}};
        Series pred{"prediction (horizon " + std::to_string(o.horizon) + ")", "#d62728", {}};
        for (const auto& [t, p] : it->second) {
            labels.push_back(format_timestamp(t));
            truth.values.push_back(p.truth);
            pred.values.push_back(p.pred);
        }
        const auto path = o.out / ("node_" + std::to_string(node) + ".svg");
        open_out(path) << render_svg("node " + std::to_string(node), labels, {truth, pred});
        written.push_back(path);
    }
    return written;
}

std::string run_ablate(const AblateOptions& o) {
    const ExperimentConfig base = o.config.empty() ? ExperimentConfig{} : load_experiment(o.config);
    const ExperimentConfig derived = apply_ablation(base, o.variant);
    const std::string text = to_json(derived).dump(2) + "\n";
    if (!o.out.empty()) {
        if (!o.config.empty() && fs::exists(o.out) && fs::equivalent(o.out, o.config)) {
            throw ConfigError("refusing to overwrite the base config");
        }
        write_file_atomic(o.out, text);
    }
    return text;
}

std::size_t run_sweep(const SweepOptions& o) {
    std::vector<GridAxis> axes;
    for (const auto& g : o.grid) axes.push_back(parse_grid_axis(g));
    const auto points = expand_grid(axes);
    if (o.parallel < 1) throw ConfigError("--parallel must be >= 1");
    ExperimentConfig base = o.config.empty() ? ExperimentConfig{} : load_experiment(o.config);
    for (const auto& ov : o.overrides) apply_override(base, ov);

    fs::create_directories(o.out / "configs");
    std::vector<fs::path> run_dirs;
    std::vector<fs::path> config_files;
    for (std::size_t k = 0; k < points.size(); ++k) {
        ExperimentConfig cfg = base;
        for (const auto& a : points[k]) apply_override(cfg, a);
        std::ostringstream name;
        name << "run_" << std::setw(3) << std::setfill('0') << k;
        config_files.push_back(o.out / "configs" / (name.str() + ".json"));
        run_dirs.push_back(o.out / name.str());
        save_experiment(config_files.back(), cfg);
    }

    std::vector<std::string> status(points.size(), "ok");
    if (o.parallel == 1) {
        for (std::size_t k = 0; k < points.size(); ++k) {
            TrainOptions t{config_files[k], o.data, o.graph, run_dirs[k], {}, "sweep", true};
            try {
                run_train(t);
            } catch (const std::exception& e) {
                status[k] = std::string("failed: ") + e.what();
            }
        }
    } else {
        if (o.executable.empty()) throw ConfigError("parallel sweeps need the dstf executable path");
        std::map<pid_t, std::size_t> running;
        std::size_t next = 0;
        auto reap_one = [&] {
            int wstatus = 0;
            const pid_t pid = ::wait(&wstatus);
            if (pid < 0) throw std::runtime_error("wait failed during sweep");
            const auto k = running.at(pid);
            running.erase(pid);
            if (!WIFEXITED(wstatus) || WEXITSTATUS(wstatus) != 0) {
                status[k] = "failed: exit status " + std::to_string(WIFEXITED(wstatus) ? WEXITSTATUS(wstatus) : -1);
            }
        };
        while (next < points.size() || !running.empty()) {
            while (next < points.size() && running.size() < static_cast<std::size_t>(o.parallel)) {
                std::vector<std::string> args{o.executable.string(), "train",  "--config", config_files[next].string(),
                                              "--data",             o.data.string(), "--out", run_dirs[next].string(),
                                              "--quiet"};
                if (!o.graph.empty()) {
                    args.push_back("--graph");
                    args.push_back(o.graph.string());
                }
                const pid_t pid = ::fork();
                if (pid < 0) throw std::runtime_error("fork failed during sweep");
                if (pid == 0) {
                    std::vector<char*> argv;
                    for (auto& a : args) argv.push_back(a.data());
                    argv.push_back(nullptr);
                    ::execv(argv[0], argv.data());
                    ::_exit(127);
                }
                running[pid] = next++;
            }
            reap_one();
        }
    }

    auto summary = open_out(o.out / "summary.csv");
    summary << "run";
    for (const auto& a : axes) summary << ',' << a.key;
    summary << ",val_mae,test_mae,status\n" << std::setprecision(10);
    for (std::size_t k = 0; k < points.size(); ++k) {
        summary << run_dirs[k].filename().string();
        for (const auto& a : points[k]) summary << ',' << a.substr(a.find('=') + 1);
        double val = std::numeric_limits<double>::quiet_NaN();
        double test = val;
        if (status[k] == "ok") {
            std::ifstream in(run_dirs[k] / "summary.json");
            if (in) {
                const auto j = nlohmann::json::parse(in);
                val = j.at("val_mae").get<double>();
                test = j.at("test_mae").get<double>();
            } else {
                status[k] = "failed: no summary";
            }
        }
        std::string st = status[k];
        std::replace(st.begin(), st.end(), ',', ';');
        std::replace(st.begin(), st.end(), '\n', ' ');
        summary << ',' << val << ',' << test << ',' << st << '\n';
    }
    return points.size();
}

}  // namespace dstf::cli
