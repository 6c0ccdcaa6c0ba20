#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "stt/config.hpp"

namespace stt::cli {

// Collect the multi-task dataset and write it to `out_path`; prints
// per-task episode and return statistics.
void cmd_collect(const ExperimentConfig& cfg, const std::string& out_path, std::ostream& log);

// Train the requested models on a dataset; writes checkpoints, a metrics
// CSV, a config snapshot and a manifest into `out_dir`.
void cmd_train(const ExperimentConfig& cfg, const std::string& dataset_path,
               const std::string& out_dir, std::ostream& log);

// Evaluate the configured method grid. `run_dir` holds dense-trunk
// checkpoints, `run_dir_switch` switch-trunk ones; methods fall back to
// whichever directory is present. Writes a results CSV plus a per-episode
// returns CSV alongside it.
void cmd_eval(const ExperimentConfig& cfg, const std::string& run_dir,
              const std::string& run_dir_switch, const std::string& out_path, std::ostream& log);

// Dense-vs-switch computation cost report on one dataset: parameters,
// wall-clock per step and steps to reach the configured train loss.
void cmd_bench(const ExperimentConfig& cfg, const std::string& dataset_path,
               const std::string& out_path, std::ostream& log);

// Render loss curves from metrics CSVs and a per-task reward bar chart
// from an eval results CSV (either list may be empty, not both).
void cmd_plot(const std::vector<std::string>& metrics_csvs, const std::string& eval_csv,
              const std::string& out_dir, std::ostream& log);

} // namespace stt::cli
