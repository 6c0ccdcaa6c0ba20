#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "stt/gridworld.hpp"

namespace stt::cli {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Flat key = value experiment configuration. Unknown keys are errors so a
// typo cannot silently corrupt an ablation. See config_keys() for the full
// documented key list.
struct ExperimentConfig {
    // task suite: comma list of layout:WxH:sSEED[:shaped][:binary][:mSTEPS],
    // or one of the aliases @one_task, @three_task, @ten_task
    std::string suite_tasks = "@three_task";

    // collect
    int collect_episodes_per_task = 0;        // used when timesteps budget is 0
    int64_t collect_timesteps_per_task = 50000;
    std::string collect_epsilons = "0,0.3,1.0";
    uint64_t collect_seed = 0;
    double gamma = 1.0;

    // model
    std::string model_preset = "small"; // small | medium | large
    int model_context = 30;
    std::string model_ffn = "switch"; // dense | switch
    int model_experts = 4;
    int model_top_k = 1;
    double model_aux_coef = 0.01;
    int model_atoms = 101;
    double model_vmin = 0.0;
    double model_vmax = -1.0; // auto: 1 for sparse suites, 25 for shaped
    int model_rtg_window = 3;

    // train
    std::string train_models = "action,dynamics,rtg_dist,rtg_mean,action_bc";
    int train_epochs = 10;
    int train_batch = 32;
    double train_lr = 1e-4;
    double train_beta1 = 0.9, train_beta2 = 0.999, train_eps = 1e-8;
    uint64_t train_seed = 0;
    double train_split = 0.8;
    int train_threads = 2;
    int train_max_steps_per_epoch = 0;
    int train_max_val_samples = 2000;

    // plan
    int plan_candidates = 4;
    int plan_horizon = 3;
    std::string plan_mode = "switch_plan"; // switch_plan | dt_direct | bc
    double plan_target_return = -1.0;      // auto: 1 sparse, 25 shaped
    std::string plan_imagined_rtg = "phi"; // phi | hold

    // eval
    int eval_episodes = 100;
    std::string eval_seeds = "0,1,2,3,4,5,6,7,8,9";
    std::string eval_methods = "SwitchTT,TT,TT-DV,BC,DT,DT-Switch";
    bool eval_rollout_dump = false;

    // bench
    double bench_loss_threshold = 1.0;
    int bench_max_steps = 200;
    std::string bench_presets = "small";

    // ---- derived views ----
    std::vector<grid::TaskSpec> suite() const;
    std::vector<double> epsilon_schedule() const;
    std::vector<uint64_t> seeds() const; // eval seeds; never empty
    std::vector<std::string> method_list() const;
    double resolved_vmax() const;
    double resolved_target_return() const;
    bool suite_is_shaped() const;

    void validate() const;
};

// every known key with its documentation line (for --help and the README)
std::vector<std::pair<std::string, std::string>> config_keys();

ExperimentConfig parse_config_file(const std::string& path);
void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value);
void write_config_snapshot(const ExperimentConfig& cfg, const std::string& path);

// helpers shared by the CLI
std::vector<std::string> split_csv(const std::string& s);
grid::TaskSpec parse_task(const std::string& text, int task_id);

} // namespace stt::cli
