#include "dstf/cli/commands.hpp"
#include "dstf/errors.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

std::string join_args(int argc, char** argv) {
    std::string out;
    for (int i = 0; i < argc; ++i) out += (i ? " " : "") + std::string(argv[i]);
    return out;
}

std::string self_executable(const char* argv0) {
    std::error_code ec;
    const auto p = std::filesystem::read_symlink("/proc/self/exe", ec);
    return ec ? std::string(argv0) : p.string();
}

}  // namespace

int main(int argc, char** argv) {
    using namespace dstf::cli;
    CLI::App app{"Decoupled spatial-temporal traffic forecasting"};
    app.require_subcommand(1);

    ConvertOptions convert;
    auto* c = app.add_subcommand("convert", "Convert a public archive to the canonical dataset layout");
    c->add_option("--input", convert.input, "METR-LA .h5/.csv or PEMS .npz/.npy")->required();
    c->add_option("--layout", convert.layout, "metr-la | pems")->required();
    c->add_option("--out", convert.out, "Output dataset directory")->required();
    c->add_option("--start", convert.start, "Timestamp of the first PEMS reading");
    c->add_option("--interval", convert.interval_minutes, "Sampling interval in minutes (PEMS)");
    c->add_option("--channels", convert.channels, "PEMS feature channels to keep");

    BuildGraphOptions graph;
    auto* g = app.add_subcommand("build-graph", "Build an adjacency matrix from a distance list");
    g->add_option("--distances", graph.distances, "CSV with header from,to,cost")->required();
    g->add_option("--kind", graph.kind, "gaussian | connectivity");
    g->add_option("--kappa", graph.kappa, "Threshold for the Gaussian kernel");
    g->add_option("--nodes", graph.nodes, "Node count when ids are indices");
    g->add_option("--data", graph.data, "Dataset directory whose node ids map the CSV ids");
    g->add_option("--out", graph.out, "Output .npy file")->required();

    SynthOptions synth;
    auto* sy = app.add_subcommand("synth", "Write a synthetic dataset with its graph");
    sy->add_option("--out", synth.out, "Output dataset directory")->required();
    sy->add_option("--nodes", synth.spec.nodes);
    sy->add_option("--steps", synth.spec.steps);
    sy->add_option("--interval", synth.spec.interval_minutes);
    sy->add_option("--seed", synth.spec.seed);
    sy->add_option("--noise", synth.spec.noise);

    TrainOptions train;
    std::optional<int> epochs, batch, threads;
    std::optional<long> max_steps;
    std::optional<double> lr;
    std::optional<std::uint64_t> seed;
    auto* t = app.add_subcommand("train", "Train a model");
    t->add_option("--config", train.config, "JSON config file");
    t->add_option("--data", train.data, "Dataset directory")->required();
    t->add_option("--graph", train.graph, "Adjacency .npy (default <data>/adjacency.npy)");
    t->add_option("--out", train.out, "Run directory")->required();
    t->add_option("--set", train.overrides, "Config override section.key=value (repeatable)");
    t->add_option("--epochs", epochs);
    t->add_option("--batch-size", batch);
    t->add_option("--lr", lr);
    t->add_option("--seed", seed);
    t->add_option("--threads", threads);
    t->add_option("--max-steps", max_steps);
    t->add_flag("--quiet", train.quiet);

    EvalOptions eval;
    auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
    e->add_option("--checkpoint", eval.checkpoint)->required();
    e->add_option("--data", eval.data)->required();
    e->add_option("--report", eval.report, "CSV report path");
    e->add_option("--split", eval.split, "train | val | test");
    e->add_option("--threads", eval.threads);
    bool no_baseline = false, no_mask = false;
    e->add_flag("--no-baseline", no_baseline, "Skip the Historical Average row");
    e->add_flag("--no-mask", no_mask, "Count zero targets (literal unmasked metrics)");

    PredictOptions predict;
    auto* p = app.add_subcommand("predict", "Write predictions for test windows");
    p->add_option("--checkpoint", predict.checkpoint)->required();
    p->add_option("--data", predict.data)->required();
    p->add_option("--out", predict.out, "Output CSV")->required();
    p->add_option("--anchor", predict.anchor, "Step index of the last input step");
    p->add_option("--from", predict.from, "Earliest anchor timestamp");
    p->add_option("--to", predict.to, "Latest anchor timestamp");
    p->add_option("--threads", predict.threads);

    PlotOptions plot;
    auto* pl = app.add_subcommand("plot", "Plot ground truth against predictions");
    pl->add_option("--predictions", plot.predictions)->required();
    pl->add_option("--nodes", plot.nodes)->required()->delimiter(',');
    pl->add_option("--from", plot.from);
    pl->add_option("--to", plot.to);
    pl->add_option("--horizon", plot.horizon);
    pl->add_option("--out", plot.out, "Output directory")->required();

    AblateOptions ablate;
    auto* a = app.add_subcommand("ablate", "Derive an ablation config");
    a->add_option("--config", ablate.config, "Base config (defaults if omitted)");
    a->add_option("--variant", ablate.variant)->required();
    a->add_option("--out", ablate.out, "Derived config path (stdout if omitted)");

    SweepOptions sweep;
    auto* sw = app.add_subcommand("sweep", "Train one run per grid point");
    sw->add_option("--config", sweep.config);
    sw->add_option("--data", sweep.data)->required();
    sw->add_option("--graph", sweep.graph);
    sw->add_option("--grid", sweep.grid, "Axis key=v1,v2 (repeatable)")->required();
    sw->add_option("--set", sweep.overrides, "Override applied to every run");
    sw->add_option("--out", sweep.out)->required();
    sw->add_option("--parallel", sweep.parallel);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*c) {
            run_convert(convert);
        } else if (*g) {
            run_build_graph(graph);
        } else if (*sy) {
            run_synth(synth);
        } else if (*t) {
            if (epochs) train.overrides.push_back("train.max_epochs=" + std::to_string(*epochs));
            if (batch) train.overrides.push_back("train.batch_size=" + std::to_string(*batch));
            if (lr) train.overrides.push_back("train.learning_rate=" + std::to_string(*lr));
            if (seed) train.overrides.push_back("train.seed=" + std::to_string(*seed));
            if (threads) train.overrides.push_back("train.threads=" + std::to_string(*threads));
            if (max_steps) train.overrides.push_back("train.max_steps=" + std::to_string(*max_steps));
            train.command_line = join_args(argc, argv);
            run_train(train);
        } else if (*e) {
            eval.with_baseline = !no_baseline;
            if (no_mask) eval.mask_zeros = false;
            std::cout << run_eval(eval);
        } else if (*p) {
            const auto rows = run_predict(predict);
            std::cout << "wrote " << rows << " rows to " << predict.out.string() << "\n";
        } else if (*pl) {
            for (const auto& f : run_plot(plot)) std::cout << f.string() << "\n";
        } else if (*a) {
            const auto text = run_ablate(ablate);
            if (ablate.out.empty()) std::cout << text;
        } else if (*sw) {
            sweep.executable = self_executable(argv[0]);
            const auto runs = run_sweep(sweep);
            std::cout << runs << " runs, summary in " << (sweep.out / "summary.csv").string() << "\n";
        }
    } catch (const dstf::ConfigError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    } catch (const dstf::DataError& err) {
        std::cerr << "data error: " << err.what() << "\n";
        return 2;
    } catch (const dstf::NumericError& err) {
        std::cerr << "numeric error: " << err.what() << "\n";
        return 3;
    } catch (const std::filesystem::filesystem_error& err) {
        std::cerr << "data error: " << err.what() << "\n";
        return 2;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 2;
    }
    return 0;
}
