#include "dstf/cli/commands.hpp"
#include "dstf/cli/experiment.hpp"
#include "dstf/cli/manifest.hpp"
#include "dstf/cli/plot.hpp"
#include "dstf/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <sys/wait.h>

using namespace dstf;
using namespace dstf::cli;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("dstf_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const std::vector<std::string> tiny_overrides{
    "model.layers=1",         "model.hidden_dim=4",     "model.embed_dim=4",    "model.num_heads=1",
    "model.input_len=6",      "model.output_len=3",     "model.k_t=2", "train.batch_size=8",
    "train.max_steps=4",      "train.max_epochs=1", "train.patience=1"};

struct TrainedRun {
    fs::path data;
    fs::path run;
    TrainSummary summary;
};

// Synthetic dataset plus one short training run, shared by the end-to-end tests.
const TrainedRun& trained() {
    static const TrainedRun run = [] {
        TrainedRun r;
        const auto root = scratch("e2e");
        r.data = root / "data";
        r.run = root / "run";
        SynthOptions s;
        s.out = r.data;
        s.spec.nodes = 4;
        s.spec.steps = 600;
        run_synth(s);
        r.summary = run_train(TrainOptions{{}, r.data, {}, r.run, tiny_overrides, "test", true});
        return r;
    }();
    return run;
}

struct PredictionRow {
    std::string timestamp;
    std::size_t node;
    int horizon;
    double truth, pred;
};

std::vector<PredictionRow> read_predictions(const fs::path& path) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    REQUIRE(line == "timestamp,node,horizon,y_true,y_pred");
    std::vector<PredictionRow> rows;
    while (std::getline(in, line)) {
        std::stringstream ls(line);
        std::string f[5];
        for (auto& x : f) std::getline(ls, x, ',');
        rows.push_back({f[0], std::stoul(f[1]), std::stoi(f[2]), std::stod(f[3]), std::stod(f[4])});
    }
    return rows;
}

int exit_code(const std::string& args) {
    const std::string cmd = std::string(DSTF_EXECUTABLE) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("ablation variants change exactly their flags") {
    const ExperimentConfig base;
    const auto json_base = to_json(base);
    CHECK(ablation_variants().size() == 10);
    for (const auto& v : ablation_variants()) {
        const auto derived = apply_ablation(base, v);
        CHECK(to_json(derived) != json_base);
    }
    auto g = apply_ablation(base, "w/o-gate");
    CHECK_FALSE(g.model.use_gate);
    g.model.use_gate = true;
    CHECK(to_json(g) == json_base);

    const auto d = apply_ablation(base, "w/o-decouple");
    CHECK_FALSE(d.model.use_gate);
    CHECK_FALSE(d.model.use_residual);
    CHECK(apply_ablation(base, "switch").model.block_order == BlockOrder::InherentFirst);
    CHECK_FALSE(apply_ablation(base, "w/o-cl").train.use_curriculum);
    CHECK(apply_ablation(base, "w/o-cl").model.use_gate);
    CHECK_THROWS_AS((void)apply_ablation(base, "w/o-everything"), ConfigError);
}

TEST_CASE("parameter grids") {
    const auto full = expand_grid({parse_grid_axis("model.k_s=1,2,3,4,5"),
                                   parse_grid_axis("model.k_t=1,2,3,4,5")});
    CHECK(full.size() == 25);
    CHECK(full.front() == std::vector<std::string>{"model.k_s=1", "model.k_t=1"});
    CHECK(full[1] == std::vector<std::string>{"model.k_s=1", "model.k_t=2"});
    CHECK(expand_grid({parse_grid_axis("model.hidden_dim=32")}).size() == 1);
    CHECK_THROWS_AS((void)expand_grid({}), ConfigError);
    CHECK_THROWS_AS((void)parse_grid_axis("model.hidden_dim"), ConfigError);
    CHECK_THROWS_AS((void)parse_grid_axis("model.hidden_dim=1,,2"), ConfigError);
}

TEST_CASE("config overrides") {
    ExperimentConfig c;
    apply_override(c, "model.k_s=3");
    apply_override(c, "train.use_curriculum=false");
    apply_override(c, "train.learning_rate=0.01");
    apply_override(c, "split.val=0.15");
    CHECK(c.model.spatial_kernel == 3);
    CHECK_FALSE(c.train.use_curriculum);
    CHECK(c.train.learning_rate == 0.01);
    CHECK(c.split.val == 0.15);
    CHECK_THROWS_AS(apply_override(c, "model.no_such_key=1"), ConfigError);
    CHECK_THROWS_AS(apply_override(c, "nonsense"), ConfigError);

    const auto back = experiment_from_json(to_json(c));
    CHECK(to_json(back) == to_json(c));
}

TEST_CASE("hashing and manifests") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");

    const auto dir = scratch("manifest");
    RunManifest m;
    m.command = "dstf train --data x";
    m.config = to_json(ExperimentConfig{});
    m.dataset_checksum = sha256_hex("data");
    m.seed = 99;
    m.code_version = code_version();
    m.started = utc_now();
    m.results = {{"test_mae", 3.25}};
    m.write(dir / "manifest.json");
    const auto r = RunManifest::read(dir / "manifest.json");
    CHECK(r.command == m.command);
    CHECK(r.config == m.config);
    CHECK(r.dataset_checksum == m.dataset_checksum);
    CHECK(r.seed == 99);
    CHECK(r.started == m.started);
    CHECK(r.finished.empty());
    CHECK(r.results == m.results);
    CHECK(m.started.size() == 20);
    CHECK(m.started.back() == 'Z');
}

TEST_CASE("training writes a complete run directory") {
    const auto& t = trained();
    for (const char* f : {"config.json", "manifest.json", "metrics.csv", "batch_log.csv", "checkpoint.json",
                          "test_report.csv", "report.txt", "summary.json"}) {
        CHECK_MESSAGE(fs::exists(t.run / f), f);
    }
    CHECK(t.summary.steps == 4);
    CHECK(std::isfinite(t.summary.test_mae));
    const auto m = RunManifest::read(t.run / "manifest.json");
    CHECK(m.dataset_checksum == dataset_checksum(t.data));
    CHECK_FALSE(m.finished.empty());
    CHECK(m.results.at("test_mae").get<double>() == doctest::Approx(t.summary.test_mae));
    CHECK(m.config.at("model").at("steps_per_day").get<int>() == 288);

    const auto table = run_eval(EvalOptions{t.run / "checkpoint.json", t.data, {}, "test", true, std::nullopt});
    CHECK(table.find("HA") != std::string::npos);
    CHECK(table.find("Horizon 3") != std::string::npos);
}

TEST_CASE("evaluation agrees with metrics recomputed from predictions") {
    const auto& t = trained();
    const auto dir = scratch("predict");
    const auto report_path = dir / "report.csv";
    (void)run_eval(EvalOptions{t.run / "checkpoint.json", t.data, report_path, "test", false, std::nullopt});
    const auto report = read_report_csv(report_path);

    const auto rows = run_predict(PredictOptions{t.run / "checkpoint.json", t.data, dir / "all.csv", std::nullopt, "", ""});
    const auto preds = read_predictions(dir / "all.csv");
    CHECK(preds.size() == rows);
    std::map<int, std::pair<double, std::size_t>> abs_sum;
    for (const auto& p : preds) {
        if (p.truth == 0.0) continue;
        abs_sum[p.horizon].first += std::abs(p.pred - p.truth);
        ++abs_sum[p.horizon].second;
    }
    REQUIRE(abs_sum.size() == 3);
    for (const auto& [h, acc] : abs_sum) {
        CHECK(acc.second == report.at(h).count);
        CHECK(std::abs(acc.first / static_cast<double>(acc.second) - report.at(h).mae) <= 1e-9);
    }
    for (int h = 1; h <= 3; ++h) CHECK(std::abs(t.summary.test.at(h).mae - report.at(h).mae) <= 1e-9);
    CHECK(std::abs(t.summary.test.overall.mae - report.overall.mae) <= 1e-9);
    CHECK(std::abs(t.summary.test.overall.rmse - report.overall.rmse) <= 1e-9);
}

TEST_CASE("prediction at a single anchor") {
    const auto& t = trained();
    const auto dir = scratch("anchor");
    const auto ds = load_dataset(t.data);
    const auto sizes = split_sizes(window_count(ds.steps(), 6, 3), SplitSpec{});
    const std::size_t first_test_anchor = sizes.train + sizes.val + 5;  // window k ends at step k + T_h - 1

    const auto rows = run_predict(PredictOptions{t.run / "checkpoint.json", t.data, dir / "one.csv", first_test_anchor, "", ""});
    CHECK(rows == 3 * 4);
    const auto preds = read_predictions(dir / "one.csv");
    REQUIRE(preds.size() == 12);
    for (const auto& p : preds) {
        const auto step = first_test_anchor + static_cast<std::size_t>(p.horizon);
        CHECK(p.truth == static_cast<double>(ds.readings.at(step, p.node, 0)));
        CHECK(p.timestamp == format_timestamp(ds.timestamps[step]));
    }
    CHECK_THROWS_AS((void)run_predict(PredictOptions{t.run / "checkpoint.json", t.data, dir / "x.csv", first_test_anchor - 1, "", ""}),
                    ConfigError);
    CHECK_THROWS_AS((void)run_predict(PredictOptions{t.run / "missing.json", t.data, dir / "x.csv", std::nullopt, "", ""}), DataError);
}

TEST_CASE("plots") {
    const auto dir = scratch("plot");
    const auto csv = dir / "predictions.csv";
    {
        std::ofstream out(csv);
        out << "timestamp,node,horizon,y_true,y_pred\n";
        const auto t0 = parse_timestamp("2012-03-01T00:00:00");
        for (int k = 0; k < 12; ++k) {
            const auto ts = format_timestamp(t0 + std::chrono::minutes(5 * k));
            for (int n = 0; n < 120; ++n) out << ts << ',' << n << ",1," << 50 + n + k << ',' << 51 + n << '\n';
        }
    }
    PlotOptions o{csv, {2, 111}, "", "", 1, dir / "svg"};
    const auto files = run_plot(o);
    REQUIRE(files.size() == 2);
    for (const auto& f : files) {
        std::ifstream in(f);
        std::string head;
        std::getline(in, head);
        CHECK(head.find("<svg") != std::string::npos);
    }

    PlotOptions empty = o;
    empty.from = "2012-03-02T00:00:00";
    empty.to = "2012-03-01T00:00:00";
    CHECK_THROWS_AS((void)run_plot(empty), ConfigError);
    PlotOptions unknown = o;
    unknown.nodes = {500};
    CHECK_THROWS_AS((void)run_plot(unknown), ConfigError);

    const auto svg = render_svg("flat", {"a", "b", "c"}, {Series{"truth", "#000000", {7, 7, 7}}});
    CHECK(svg.find("nan") == std::string::npos);
    CHECK(svg.find("<polyline") != std::string::npos);
}

TEST_CASE("ablate leaves the base config untouched") {
    const auto dir = scratch("ablate");
    ExperimentConfig base;
    base.model.hidden_dim = 16;
    save_experiment(dir / "base.json", base);
    const auto before = sha256_file(dir / "base.json");
    for (const auto& v : ablation_variants()) {
        const auto out = dir / "variant.json";
        (void)run_ablate(AblateOptions{dir / "base.json", v, out});
        const auto derived = load_experiment(out);
        CHECK(to_json(derived) == to_json(apply_ablation(base, v)));
        CHECK(derived.model.hidden_dim == 16);
    }
    CHECK(sha256_file(dir / "base.json") == before);
    CHECK_THROWS_AS((void)run_ablate(AblateOptions{dir / "base.json", "w/o-gate", dir / "base.json"}), ConfigError);
    CHECK(sha256_file(dir / "base.json") == before);
}

TEST_CASE("sweep writes one summary row per grid point") {
    const auto& t = trained();
    const auto dir = scratch("sweep");
    auto overrides = tiny_overrides;
    overrides.push_back("train.max_steps=1");
    const auto runs = run_sweep(SweepOptions{{}, t.data, {}, {"model.k_s=1,2", "model.k_t=1,2"},
                                             overrides, dir, 1, {}});
    CHECK(runs == 4);
    std::ifstream in(dir / "summary.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == "run,model.k_s,model.k_t,val_mae,test_mae,status");
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        CHECK(line.substr(line.rfind(',') + 1) == "ok");
    }
    CHECK(n == 4);
    for (int k = 0; k < 4; ++k) CHECK(fs::exists(dir / ("run_00" + std::to_string(k)) / "summary.json"));
}

TEST_CASE("executable exit codes") {
    const auto& t = trained();
    const auto dir = scratch("exit");
    CHECK(exit_code("--help") == 0);
    CHECK(exit_code("no-such-command") == 1);
    CHECK(exit_code("ablate --variant w/o-nothing") == 1);
    CHECK(exit_code("eval --checkpoint " + (dir / "missing.json").string() + " --data " + t.data.string()) == 2);
    CHECK(exit_code("train --data " + (dir / "nowhere").string() + " --out " + (dir / "run").string()) == 2);
    CHECK(exit_code("ablate --variant w/o-gate --out " + (dir / "a.json").string()) == 0);
    CHECK(fs::exists(dir / "a.json"));
    CHECK(exit_code("predict --checkpoint " + (t.run / "checkpoint.json").string() + " --data " + t.data.string() +
                    " --out " + (dir / "p.csv").string() + " --from 2030-01-01T00:00:00") == 1);
}
