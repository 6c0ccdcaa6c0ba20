#include "stt/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace stt::cli {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

int to_int(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        int r = std::stoi(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return r;
    } catch (...) {
        throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
    }
}

int64_t to_i64(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        long long r = std::stoll(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return r;
    } catch (...) {
        throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
    }
}

uint64_t to_u64(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        unsigned long long r = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return r;
    } catch (...) {
        throw ConfigError("config: '" + key + "' expects an unsigned integer, got '" + v + "'");
    }
}

double to_double(const std::string& v, const std::string& key) {
    try {
        size_t pos = 0;
        double r = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument("");
        return r;
    } catch (...) {
        throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
    }
}

bool to_bool(const std::string& v, const std::string& key) {
    if (v == "1" || v == "true" || v == "yes") return true;
    if (v == "0" || v == "false" || v == "no") return false;
    throw ConfigError("config: '" + key + "' expects a boolean, got '" + v + "'");
}

struct KeyEntry {
    std::string doc;
    std::function<void(ExperimentConfig&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

std::string fmt_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

const std::map<std::string, KeyEntry>& key_table() {
    static const std::map<std::string, KeyEntry> table = [] {
        std::map<std::string, KeyEntry> t;
        auto add = [&](const std::string& k, const std::string& doc, auto set, auto get) {
            t[k] = KeyEntry{doc, set, get};
        };
        add("suite.tasks", "comma list layout:WxH:sSEED[:shaped][:binary][:mSTEPS] or @one_task/@three_task/@ten_task",
            [](ExperimentConfig& c, const std::string& v) { c.suite_tasks = v; },
            [](const ExperimentConfig& c) { return c.suite_tasks; });
        add("collect.episodes_per_task", "episode count per task (when timesteps budget is 0)",
            [](ExperimentConfig& c, const std::string& v) { c.collect_episodes_per_task = to_int(v, "collect.episodes_per_task"); },
            [](const ExperimentConfig& c) { return std::to_string(c.collect_episodes_per_task); });
        add("collect.timesteps_per_task", "timestep budget per task; 0 falls back to episode count",
            [](ExperimentConfig& c, const std::string& v) { c.collect_timesteps_per_task = to_i64(v, "collect.timesteps_per_task"); },
            [](const ExperimentConfig& c) { return std::to_string(c.collect_timesteps_per_task); });
        add("collect.epsilons", "comma list of exploration rates cycled across episodes",
            [](ExperimentConfig& c, const std::string& v) { c.collect_epsilons = v; },
            [](const ExperimentConfig& c) { return c.collect_epsilons; });
        add("collect.seed", "dataset collection seed",
            [](ExperimentConfig& c, const std::string& v) { c.collect_seed = to_u64(v, "collect.seed"); },
            [](const ExperimentConfig& c) { return std::to_string(c.collect_seed); });
        add("gamma", "return-to-go discount (1 = undiscounted)",
            [](ExperimentConfig& c, const std::string& v) { c.gamma = to_double(v, "gamma"); },
            [](const ExperimentConfig& c) { return fmt_double(c.gamma); });
        add("model.preset", "small | medium | large",
            [](ExperimentConfig& c, const std::string& v) { c.model_preset = v; },
            [](const ExperimentConfig& c) { return c.model_preset; });
        add("model.context", "context length K in timestep groups",
            [](ExperimentConfig& c, const std::string& v) { c.model_context = to_int(v, "model.context"); },
            [](const ExperimentConfig& c) { return std::to_string(c.model_context); });
        add("model.ffn", "dense | switch",
            [](ExperimentConfig& c, const std::string& v) { c.model_ffn = v; },
            [](const ExperimentConfig& c) { return c.model_ffn; });
        add("model.experts", "expert count n for switch layers",
            [](ExperimentConfig& c, const std::string& v) { c.model_experts = to_int(v, "model.experts"); },
            [](const ExperimentConfig& c) { return std::to_string(c.model_experts); });
        add("model.top_k", "experts per token (1 = switch routing)",
            [](ExperimentConfig& c, const std::string& v) { c.model_top_k = to_int(v, "model.top_k"); },
            [](const ExperimentConfig& c) { return std::to_string(c.model_top_k); });
        add("model.aux_coef", "load-balance loss coefficient (0 disables)",
            [](ExperimentConfig& c, const std::string& v) { c.model_aux_coef = to_double(v, "model.aux_coef"); },
            [](const ExperimentConfig& c) { return fmt_double(c.model_aux_coef); });
        add("model.atoms", "atom count N of the value distribution",
            [](ExperimentConfig& c, const std::string& v) { c.model_atoms = to_int(v, "model.atoms"); },
            [](const ExperimentConfig& c) { return std::to_string(c.model_atoms); });
        add("model.vmin", "distribution support minimum",
            [](ExperimentConfig& c, const std::string& v) { c.model_vmin = to_double(v, "model.vmin"); },
            [](const ExperimentConfig& c) { return fmt_double(c.model_vmin); });
        add("model.vmax", "distribution support maximum; -1 = auto (1 sparse, 25 shaped)",
            [](ExperimentConfig& c, const std::string& v) { c.model_vmax = to_double(v, "model.vmax"); },
            [](const ExperimentConfig& c) { return fmt_double(c.model_vmax); });
        add("model.rtg_window", "state-action steps w fed to the return estimator",
            [](ExperimentConfig& c, const std::string& v) { c.model_rtg_window = to_int(v, "model.rtg_window"); },
            [](const ExperimentConfig& c) { return std::to_string(c.model_rtg_window); });
        add("train.models", "comma list of action,dynamics,rtg_dist,rtg_mean,action_bc",
            [](ExperimentConfig& c, const std::string& v) { c.train_models = v; },
            [](const ExperimentConfig& c) { return c.train_models; });
        add("train.epochs", "training epochs per model",
            [](ExperimentConfig& c, const std::string& v) { c.train_epochs = to_int(v, "train.epochs"); },
            [](const ExperimentConfig& c) { return std::to_string(c.train_epochs); });
        add("train.batch", "samples per optimizer step",
            [](ExperimentConfig& c, const std::string& v) { c.train_batch = to_int(v, "train.batch"); },
            [](const ExperimentConfig& c) { return std::to_string(c.train_batch); });
        add("train.lr", "Adam learning rate",
            [](ExperimentConfig& c, const std::string& v) { c.train_lr = to_double(v, "train.lr"); },
            [](const ExperimentConfig& c) { return fmt_double(c.train_lr); });
        add("train.beta1", "Adam beta1",
            [](ExperimentConfig& c, const std::string& v) { c.train_beta1 = to_double(v, "train.beta1"); },
            [](const ExperimentConfig& c) { return fmt_double(c.train_beta1); });
        add("train.beta2", "Adam beta2",
            [](ExperimentConfig& c, const std::string& v) { c.train_beta2 = to_double(v, "train.beta2"); },
            [](const ExperimentConfig& c) { return fmt_double(c.train_beta2); });
        add("train.eps", "Adam epsilon",
            [](ExperimentConfig& c, const std::string& v) { c.train_eps = to_double(v, "train.eps"); },
            [](const ExperimentConfig& c) { return fmt_double(c.train_eps); });
        add("train.seed", "training seed (init, shuffles)",
            [](ExperimentConfig& c, const std::string& v) { c.train_seed = to_u64(v, "train.seed"); },
            [](const ExperimentConfig& c) { return std::to_string(c.train_seed); });
        add("train.split", "training fraction of the episode-level split",
            [](ExperimentConfig& c, const std::string& v) { c.train_split = to_double(v, "train.split"); },
            [](const ExperimentConfig& c) { return fmt_double(c.train_split); });
        add("train.threads", "worker threads for batch accumulation",
            [](ExperimentConfig& c, const std::string& v) { c.train_threads = to_int(v, "train.threads"); },
            [](const ExperimentConfig& c) { return std::to_string(c.train_threads); });
        add("train.max_steps_per_epoch", "optimizer steps per epoch; 0 = full pass",
            [](ExperimentConfig& c, const std::string& v) { c.train_max_steps_per_epoch = to_int(v, "train.max_steps_per_epoch"); },
            [](const ExperimentConfig& c) { return std::to_string(c.train_max_steps_per_epoch); });
        add("train.max_val_samples", "validation subsample size per epoch",
            [](ExperimentConfig& c, const std::string& v) { c.train_max_val_samples = to_int(v, "train.max_val_samples"); },
            [](const ExperimentConfig& c) { return std::to_string(c.train_max_val_samples); });
        add("plan.candidates", "candidate count c",
            [](ExperimentConfig& c, const std::string& v) { c.plan_candidates = to_int(v, "plan.candidates"); },
            [](const ExperimentConfig& c) { return std::to_string(c.plan_candidates); });
        add("plan.horizon", "imagination horizon h",
            [](ExperimentConfig& c, const std::string& v) { c.plan_horizon = to_int(v, "plan.horizon"); },
            [](const ExperimentConfig& c) { return std::to_string(c.plan_horizon); });
        add("plan.mode", "switch_plan | dt_direct | bc",
            [](ExperimentConfig& c, const std::string& v) { c.plan_mode = v; },
            [](const ExperimentConfig& c) { return c.plan_mode; });
        add("plan.target_return", "initial RTG token R0; -1 = auto (1 sparse, 25 shaped)",
            [](ExperimentConfig& c, const std::string& v) { c.plan_target_return = to_double(v, "plan.target_return"); },
            [](const ExperimentConfig& c) { return fmt_double(c.plan_target_return); });
        add("plan.imagined_rtg", "phi (value model) | hold (carry last token)",
            [](ExperimentConfig& c, const std::string& v) { c.plan_imagined_rtg = v; },
            [](const ExperimentConfig& c) { return c.plan_imagined_rtg; });
        add("eval.episodes", "episodes per task per seed",
            [](ExperimentConfig& c, const std::string& v) { c.eval_episodes = to_int(v, "eval.episodes"); },
            [](const ExperimentConfig& c) { return std::to_string(c.eval_episodes); });
        add("eval.seeds", "comma list of evaluation seeds",
            [](ExperimentConfig& c, const std::string& v) { c.eval_seeds = v; },
            [](const ExperimentConfig& c) { return c.eval_seeds; });
        add("eval.methods", "comma list from SwitchTT,TT,TT-DV,BC,DT,DT-Switch,Random,Custom (Custom follows plan.mode)",
            [](ExperimentConfig& c, const std::string& v) { c.eval_methods = v; },
            [](const ExperimentConfig& c) { return c.eval_methods; });
        add("eval.rollout_dump", "write per-episode rollout dumps (0/1)",
            [](ExperimentConfig& c, const std::string& v) { c.eval_rollout_dump = to_bool(v, "eval.rollout_dump"); },
            [](const ExperimentConfig& c) { return std::string(c.eval_rollout_dump ? "1" : "0"); });
        add("bench.loss_threshold", "train-loss threshold for steps-to-loss timing",
            [](ExperimentConfig& c, const std::string& v) { c.bench_loss_threshold = to_double(v, "bench.loss_threshold"); },
            [](const ExperimentConfig& c) { return fmt_double(c.bench_loss_threshold); });
        add("bench.max_steps", "optimizer step budget per benchmarked variant",
            [](ExperimentConfig& c, const std::string& v) { c.bench_max_steps = to_int(v, "bench.max_steps"); },
            [](const ExperimentConfig& c) { return std::to_string(c.bench_max_steps); });
        add("bench.presets", "comma list of model presets to benchmark",
            [](ExperimentConfig& c, const std::string& v) { c.bench_presets = v; },
            [](const ExperimentConfig& c) { return c.bench_presets; });
        return t;
    }();
    return table;
}

std::string expand_suite_alias(const std::string& tasks) {
    if (tasks == "@one_task") return "empty:6x6:s1";
    if (tasks == "@three_task") return "fourrooms:9x9:s3,doorkey:8x8:s7,keycorridor:8x8:s5";
    if (tasks == "@ten_task")
        return "empty:6x6:s1,empty:8x8:s2,fourrooms:9x9:s3,fourrooms:11x11:s4,doorkey:6x6:s5,"
               "doorkey:8x8:s6,keycorridor:8x8:s7,keycorridor:10x10:s8,multiroom:10x7:s9,"
               "multiroom:12x8:s10";
    if (!tasks.empty() && tasks[0] == '@') throw ConfigError("config: unknown suite alias '" + tasks + "'");
    return tasks;
}

} // namespace

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(s);
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

grid::TaskSpec parse_task(const std::string& text, int task_id) {
    auto parts = [&] {
        std::vector<std::string> p;
        std::string item;
        std::istringstream is(text);
        while (std::getline(is, item, ':')) p.push_back(trim(item));
        return p;
    }();
    if (parts.size() < 3) throw ConfigError("config: task '" + text + "' needs layout:WxH:sSEED");
    grid::TaskSpec spec;
    spec.task_id = task_id;
    spec.layout = grid::layout_from_name(parts[0]);
    auto x = parts[1].find('x');
    if (x == std::string::npos) throw ConfigError("config: task '" + text + "' has no WxH size");
    spec.width = to_int(parts[1].substr(0, x), "task width");
    spec.height = to_int(parts[1].substr(x + 1), "task height");
    if (parts[2].empty() || parts[2][0] != 's')
        throw ConfigError("config: task '" + text + "' needs a seed field sN");
    spec.seed = to_u64(parts[2].substr(1), "task seed");
    for (size_t i = 3; i < parts.size(); ++i) {
        if (parts[i] == "sparse")
            spec.reward_mode = grid::RewardMode::Sparse;
        else if (parts[i] == "shaped")
            spec.reward_mode = grid::RewardMode::Shaped;
        else if (parts[i] == "binary")
            spec.binary_reward = true;
        else if (!parts[i].empty() && parts[i][0] == 'm')
            spec.max_steps = to_int(parts[i].substr(1), "task max_steps");
        else
            throw ConfigError("config: unknown task attribute '" + parts[i] + "' in '" + text + "'");
    }
    return spec;
}

std::vector<grid::TaskSpec> ExperimentConfig::suite() const {
    auto items = split_csv(expand_suite_alias(suite_tasks));
    if (items.empty()) throw ConfigError("config: empty task suite");
    std::vector<grid::TaskSpec> specs;
    for (size_t i = 0; i < items.size(); ++i)
        specs.push_back(parse_task(items[i], static_cast<int>(i)).resolved());
    return specs;
}

std::vector<double> ExperimentConfig::epsilon_schedule() const {
    std::vector<double> eps;
    for (const auto& s : split_csv(collect_epsilons)) eps.push_back(to_double(s, "collect.epsilons"));
    if (eps.empty()) throw ConfigError("config: empty epsilon schedule");
    for (double e : eps)
        if (e < 0.0 || e > 1.0) throw ConfigError("config: epsilons must lie in [0,1]");
    return eps;
}

std::vector<uint64_t> ExperimentConfig::seeds() const {
    std::vector<uint64_t> out;
    for (const auto& s : split_csv(eval_seeds)) out.push_back(to_u64(s, "eval.seeds"));
    if (out.empty()) throw ConfigError("config: eval.seeds must be non-empty");
    return out;
}

std::vector<std::string> ExperimentConfig::method_list() const {
    auto methods = split_csv(eval_methods);
    if (methods.empty()) throw ConfigError("config: eval.methods must be non-empty");
    return methods;
}

bool ExperimentConfig::suite_is_shaped() const {
    auto specs = suite();
    return std::all_of(specs.begin(), specs.end(), [](const grid::TaskSpec& s) {
        return s.reward_mode == grid::RewardMode::Shaped;
    });
}

double ExperimentConfig::resolved_vmax() const {
    if (model_vmax > 0.0) return model_vmax;
    return suite_is_shaped() ? 25.0 : 1.0;
}

double ExperimentConfig::resolved_target_return() const {
    if (plan_target_return >= 0.0) return plan_target_return;
    return suite_is_shaped() ? 25.0 : 1.0;
}

void ExperimentConfig::validate() const {
    (void)suite();
    (void)epsilon_schedule();
    (void)seeds();
    (void)method_list();
    if (model_preset != "small" && model_preset != "medium" && model_preset != "large")
        throw ConfigError("config: model.preset must be small/medium/large");
    if (model_ffn != "dense" && model_ffn != "switch")
        throw ConfigError("config: model.ffn must be dense or switch");
    if (model_context < 1) throw ConfigError("config: model.context must be positive");
    if (model_atoms < 2) throw ConfigError("config: model.atoms must be >= 2");
    if (model_experts < 1) throw ConfigError("config: model.experts must be >= 1");
    if (!(train_split > 0.0 && train_split < 1.0))
        throw ConfigError("config: train.split must lie in (0,1)");
    if (train_epochs < 1 || train_batch < 1) throw ConfigError("config: bad training sizes");
    if (plan_candidates < 1 || plan_horizon < 1) throw ConfigError("config: bad planner sizes");
    if (plan_mode != "switch_plan" && plan_mode != "dt_direct" && plan_mode != "bc")
        throw ConfigError("config: plan.mode must be switch_plan/dt_direct/bc");
    if (plan_imagined_rtg != "phi" && plan_imagined_rtg != "hold")
        throw ConfigError("config: plan.imagined_rtg must be phi or hold");
    if (eval_episodes < 1) throw ConfigError("config: eval.episodes must be positive");
}

std::vector<std::pair<std::string, std::string>> config_keys() {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [k, e] : key_table()) out.emplace_back(k, e.doc);
    return out;
}

void apply_override(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    auto it = key_table().find(key);
    if (it == key_table().end()) throw ConfigError("config: unknown key '" + key + "'");
    it->second.set(cfg, value);
}

ExperimentConfig parse_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    ExperimentConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: " + path + ":" + std::to_string(line_no) + ": expected key = value");
        apply_override(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
    }
    return cfg;
}

void write_config_snapshot(const ExperimentConfig& cfg, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw ConfigError("config: cannot write " + path);
    for (const auto& [k, e] : key_table()) os << k << " = " << e.get(cfg) << "\n";
}

} // namespace stt::cli
