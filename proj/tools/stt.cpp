#include <CLI11.hpp>

#include <iostream>

#include "stt/commands.hpp"
#include "stt/nn/graph.hpp"

namespace {

stt::cli::ExperimentConfig load_config(const std::string& config_path,
                                       const std::vector<std::string>& overrides) {
    stt::cli::ExperimentConfig cfg;
    if (!config_path.empty()) cfg = stt::cli::parse_config_file(config_path);
    for (const auto& kv : overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw stt::cli::ConfigError("--set expects key=value, got '" + kv + "'");
        stt::cli::apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-task gridworld sequence-model pipeline: collect datasets, train "
                 "action/dynamics/return transformers (dense or switch FFN), evaluate planners, "
                 "benchmark, and plot."};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "experiment config file (key = value lines)");
    app.add_option("--set", overrides, "override a config key, e.g. --set train.epochs=5")
        ->take_all();

    std::string out, dataset, run_dir, run_dir_switch, eval_csv;
    std::vector<std::string> metrics;

    CLI::App* collect = app.add_subcommand("collect", "collect a multi-task dataset");
    collect->add_option("--out", out, "output dataset file")->required();

    CLI::App* train = app.add_subcommand("train", "train the configured models on a dataset");
    train->add_option("--dataset", dataset, "dataset file from collect")->required();
    train->add_option("--out-dir", run_dir, "run directory for checkpoints and metrics")->required();

    CLI::App* eval = app.add_subcommand("eval", "evaluate the configured method grid");
    eval->add_option("--run", run_dir, "run directory with dense-trunk checkpoints");
    eval->add_option("--run-switch", run_dir_switch, "run directory with switch-trunk checkpoints");
    eval->add_option("--out", out, "results CSV path")->required();

    CLI::App* bench = app.add_subcommand("bench", "dense vs switch computation cost report");
    bench->add_option("--dataset", dataset, "dataset file from collect")->required();
    bench->add_option("--out", out, "report CSV path")->required();

    CLI::App* plot = app.add_subcommand("plot", "render loss curves and reward bar charts");
    plot->add_option("--metrics", metrics, "metrics CSV files")->take_all();
    plot->add_option("--eval", eval_csv, "eval results CSV");
    plot->add_option("--out-dir", out, "output directory for SVG files")->required();

    stt::nn::init_blas_single_thread();
    CLI11_PARSE(app, argc, argv);

    try {
        if (collect->parsed()) {
            stt::cli::cmd_collect(load_config(config_path, overrides), out, std::cout);
        } else if (train->parsed()) {
            stt::cli::cmd_train(load_config(config_path, overrides), dataset, run_dir, std::cout);
        } else if (eval->parsed()) {
            stt::cli::cmd_eval(load_config(config_path, overrides), run_dir, run_dir_switch, out,
                               std::cout);
        } else if (bench->parsed()) {
            stt::cli::cmd_bench(load_config(config_path, overrides), dataset, out, std::cout);
        } else if (plot->parsed()) {
            stt::cli::cmd_plot(metrics, eval_csv, out, std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
