#include "stt/commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <set>

#include "stt/metrics.hpp"
#include "stt/planner.hpp"
#include "stt/svg_plot.hpp"
#include "stt/trainer.hpp"

namespace stt::cli {

namespace fs = std::filesystem;

namespace {

model::ModelConfig make_model_config(const ExperimentConfig& cfg, model::ModelKind kind,
                                     const model::ModelVocab& vocab) {
    model::ModelConfig mc;
    mc.kind = kind;
    mc.trunk = nn::TransformerConfig::preset(cfg.model_preset);
    mc.trunk.context = cfg.model_context;
    mc.trunk.ffn_kind = cfg.model_ffn == "switch" ? nn::FfnKind::Switch : nn::FfnKind::Dense;
    mc.trunk.n_experts = cfg.model_experts;
    mc.trunk.top_k = cfg.model_top_k;
    mc.trunk.aux_coef = cfg.model_aux_coef;
    mc.vocab = vocab;
    mc.n_atoms = cfg.model_atoms;
    mc.v_min = cfg.model_vmin;
    mc.v_max = cfg.resolved_vmax();
    mc.rtg_window = cfg.model_rtg_window;
    return mc;
}

train::TrainConfig make_train_config(const ExperimentConfig& cfg, bool zero_rtg) {
    train::TrainConfig tc;
    tc.epochs = cfg.train_epochs;
    tc.batch_size = cfg.train_batch;
    tc.lr = cfg.train_lr;
    tc.beta1 = cfg.train_beta1;
    tc.beta2 = cfg.train_beta2;
    tc.eps = cfg.train_eps;
    tc.seed = cfg.train_seed;
    tc.max_steps_per_epoch = cfg.train_max_steps_per_epoch;
    tc.max_val_samples = cfg.train_max_val_samples;
    tc.threads = cfg.train_threads;
    tc.zero_rtg = zero_rtg;
    return tc;
}

struct TrainedModelSpec {
    std::string name;            // file stem and metrics label
    model::ModelKind kind;
    bool zero_rtg;
};

std::vector<TrainedModelSpec> requested_models(const ExperimentConfig& cfg) {
    std::vector<TrainedModelSpec> out;
    for (const auto& name : split_csv(cfg.train_models)) {
        if (name == "action")
            out.push_back({"action", model::ModelKind::Action, false});
        else if (name == "action_bc")
            out.push_back({"action_bc", model::ModelKind::Action, true});
        else if (name == "dynamics")
            out.push_back({"dynamics", model::ModelKind::Dynamics, false});
        else if (name == "rtg_dist")
            out.push_back({"rtg_dist", model::ModelKind::ReturnDist, false});
        else if (name == "rtg_mean")
            out.push_back({"rtg_mean", model::ModelKind::ReturnMean, false});
        else
            throw ConfigError("config: unknown entry '" + name + "' in train.models");
    }
    if (out.empty()) throw ConfigError("config: train.models is empty");
    return out;
}

double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    double m = mean_of(v);
    double acc = 0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

std::unique_ptr<model::SequenceModel> load_model_file(const std::string& dir, const std::string& stem) {
    fs::path p = fs::path(dir) / (stem + ".ckpt");
    if (!fs::exists(p))
        throw std::runtime_error("eval: missing checkpoint " + p.string() +
                                 " (train the matching run first)");
    return model::SequenceModel::load_from(p.string());
}

void check_vocab(const model::SequenceModel& m, const model::ModelVocab& vocab,
                 const std::string& what) {
    if (!(m.config().vocab == vocab))
        throw std::runtime_error("eval: checkpoint/config mismatch for " + what +
                                 " (state encoding or task count differs)");
}

struct MethodPlan {
    std::string name;
    plan::Mode mode = plan::Mode::DtDirect;
    bool needs_switch_dir = false;
    std::string action_stem = "action";
    bool needs_dynamics = false;
    std::string value_stem; // empty = none
    bool random = false;
};

MethodPlan method_plan(const std::string& name) {
    MethodPlan m;
    m.name = name;
    if (name == "SwitchTT") {
        m.mode = plan::Mode::SwitchPlan;
        m.needs_switch_dir = true;
        m.needs_dynamics = true;
        m.value_stem = "rtg_dist";
    } else if (name == "TT") {
        m.mode = plan::Mode::SwitchPlan;
        m.needs_dynamics = true;
        m.value_stem = "rtg_mean";
    } else if (name == "TT-DV") {
        m.mode = plan::Mode::SwitchPlan;
        m.needs_dynamics = true;
        m.value_stem = "rtg_dist";
    } else if (name == "BC") {
        m.mode = plan::Mode::Bc;
        m.action_stem = "action_bc";
    } else if (name == "DT") {
        m.mode = plan::Mode::DtDirect;
    } else if (name == "DT-Switch") {
        m.mode = plan::Mode::DtDirect;
        m.needs_switch_dir = true;
    } else if (name == "Random") {
        m.random = true;
    } else {
        throw ConfigError("eval: unknown method '" + name + "'");
    }
    return m;
}

// the Custom method runs whatever plan.mode/candidates/horizon the config
// asks for, on the standard checkpoint set
MethodPlan custom_method_plan(const ExperimentConfig& cfg) {
    MethodPlan m;
    m.name = "Custom";
    m.mode = plan::mode_from_name(cfg.plan_mode);
    if (m.mode == plan::Mode::Bc) m.action_stem = "action_bc";
    if (m.mode == plan::Mode::SwitchPlan) {
        m.needs_dynamics = true;
        m.value_stem = "rtg_dist";
        m.needs_switch_dir = cfg.model_ffn == "switch";
    }
    return m;
}

// uniform-random actor sharing the run_episode bookkeeping
plan::EpisodeResult run_random_episode(const grid::TaskSpec& spec, const data::StateCodec& codec,
                                       double target_return, uint64_t seed) {
    auto rng = std::make_shared<Rng>(seed);
    plan::PlannerModels pm;
    pm.action_scores = [rng](const plan::SequenceContext&) {
        std::vector<double> s(grid::kNumActions, 0.0);
        s[static_cast<size_t>(rng->below(grid::kNumActions))] = 1.0;
        return s;
    };
    plan::PlannerConfig pc;
    pc.mode = plan::Mode::DtDirect;
    pc.target_return = target_return;
    return plan::run_episode(pm, pc, spec, codec);
}

void report_config_diff(const std::string& run_dir, const std::string& run_dir_switch,
                        std::ostream& log) {
    fs::path a = fs::path(run_dir) / "config_snapshot.cfg";
    fs::path b = fs::path(run_dir_switch) / "config_snapshot.cfg";
    if (!fs::exists(a) || !fs::exists(b)) return;
    static const std::set<std::string> allowed{"model.ffn", "model.experts", "model.top_k",
                                               "model.aux_coef"};
    std::ifstream fa(a), fb(b);
    std::string la, lb;
    std::vector<std::string> diffs;
    while (std::getline(fa, la) && std::getline(fb, lb)) {
        if (la == lb) continue;
        std::string key = la.substr(0, la.find(" ="));
        if (!allowed.count(key)) diffs.push_back(key);
    }
    if (diffs.empty()) {
        log << "config diff: runs differ only in FFN settings (controlled comparison)\n";
    } else {
        log << "config diff: WARNING, runs differ beyond FFN settings:";
        for (const auto& k : diffs) log << " " << k;
        log << "\n";
    }
}

} // namespace

void cmd_collect(const ExperimentConfig& cfg, const std::string& out_path, std::ostream& log) {
    cfg.validate();
    auto specs = cfg.suite();
    data::CollectConfig cc;
    cc.episodes_per_task = cfg.collect_episodes_per_task;
    cc.timesteps_per_task = cfg.collect_timesteps_per_task;
    cc.epsilon_schedule = cfg.epsilon_schedule();
    cc.seed = cfg.collect_seed;
    cc.gamma = cfg.gamma;
    if (cc.timesteps_per_task <= 0 && cc.episodes_per_task <= 0)
        throw ConfigError("collect: set collect.timesteps_per_task or collect.episodes_per_task");

    data::Dataset ds = data::collect(specs, cc);
    data::save(ds, out_path);

    log << "wrote " << out_path << " (" << ds.episodes.size() << " episodes, " << ds.total_steps()
        << " steps)\n";
    for (const auto& spec : specs) {
        std::vector<double> returns;
        int64_t steps = 0;
        for (const auto& e : ds.episodes)
            if (e.task_id == spec.task_id) {
                returns.push_back(e.episode_return());
                steps += e.length();
            }
        double mn = returns.empty() ? 0 : *std::min_element(returns.begin(), returns.end());
        double mx = returns.empty() ? 0 : *std::max_element(returns.begin(), returns.end());
        log << "  task " << spec.task_id << " (" << grid::layout_name(spec.layout) << " "
            << spec.width << "x" << spec.height << "): " << returns.size() << " episodes, " << steps
            << " steps, return mean " << csv_num(mean_of(returns)) << " min " << csv_num(mn)
            << " max " << csv_num(mx) << "\n";
    }
}

void cmd_train(const ExperimentConfig& cfg, const std::string& dataset_path,
               const std::string& out_dir, std::ostream& log) {
    cfg.validate();
    data::Dataset full = data::load(dataset_path);
    auto [train_set, val_set] = data::split(full, cfg.train_split, cfg.train_seed);
    model::ModelVocab vocab = model::ModelVocab::from_dataset(full);

    fs::create_directories(out_dir);
    write_config_snapshot(cfg, (fs::path(out_dir) / "config_snapshot.cfg").string());

    CsvTable metrics;
    metrics.header = {"epoch", "model", "train_loss", "val_loss", "wall_seconds"};
    bool is_switch = cfg.model_ffn == "switch";
    if (is_switch) {
        for (int e = 0; e < cfg.model_experts; ++e) metrics.header.push_back("f_" + std::to_string(e));
        for (int e = 0; e < cfg.model_experts; ++e) metrics.header.push_back("p_" + std::to_string(e));
    }

    std::ofstream manifest(fs::path(out_dir) / "manifest.txt");
    manifest << "dataset = " << dataset_path << "\n";
    manifest << "config = config_snapshot.cfg\n";
    manifest << "train_seed = " << cfg.train_seed << "\n";
    manifest << "split = " << csv_num(cfg.train_split) << " (" << train_set.episodes.size() << " train / "
             << val_set.episodes.size() << " validation episodes)\n";

    for (const auto& spec : requested_models(cfg)) {
        model::ModelConfig mc = make_model_config(cfg, spec.kind, vocab);
        model::SequenceModel m(mc, mix_seed(cfg.train_seed, std::hash<std::string>{}(spec.name)));
        train::TrainConfig tc = make_train_config(cfg, spec.zero_rtg);
        log << "training " << spec.name << " (" << m.param_count() << " params, "
            << m.active_params_per_token() << " active/token)\n";
        auto history = train::train_model(m, train_set, val_set, tc, [&](const train::EpochMetrics& em) {
            log << "  epoch " << em.epoch << " train " << csv_num(em.train_loss) << " val "
                << csv_num(em.val_loss) << " (" << csv_num(em.wall_seconds) << "s)\n";
        });
        for (const auto& em : history) {
            std::vector<std::string> row{std::to_string(em.epoch), spec.name, csv_num(em.train_loss),
                                         csv_num(em.val_loss), csv_num(em.wall_seconds)};
            if (is_switch) {
                for (int e = 0; e < cfg.model_experts; ++e)
                    row.push_back(em.routing_fractions.empty()
                                      ? "0"
                                      : csv_num(em.routing_fractions[static_cast<size_t>(e)]));
                for (int e = 0; e < cfg.model_experts; ++e)
                    row.push_back(em.routing_mean_probs.empty()
                                      ? "0"
                                      : csv_num(em.routing_mean_probs[static_cast<size_t>(e)]));
            }
            metrics.rows.push_back(std::move(row));
        }
        std::string ckpt = (fs::path(out_dir) / (spec.name + ".ckpt")).string();
        m.save(ckpt);
        manifest << "model " << spec.name << " = " << spec.name << ".ckpt\n";
    }
    metrics.write((fs::path(out_dir) / "metrics.csv").string());
    manifest << "metrics = metrics.csv\n";
    log << "wrote " << out_dir << "/metrics.csv and checkpoints\n";
}

void cmd_eval(const ExperimentConfig& cfg, const std::string& run_dir,
              const std::string& run_dir_switch, const std::string& out_path, std::ostream& log) {
    cfg.validate();
    auto specs = cfg.suite();
    data::StateCodec codec = data::StateCodec::for_suite(specs);
    model::ModelVocab vocab;
    vocab.codec = codec;
    int max_id = 0;
    for (const auto& s : specs) max_id = std::max(max_id, s.task_id);
    vocab.n_tasks = max_id + 1;

    if (!run_dir.empty() && !run_dir_switch.empty()) report_config_diff(run_dir, run_dir_switch, log);

    CsvTable results;
    results.header = {"method", "task_id", "layout", "mean", "std", "episodes"};
    CsvTable episodes_csv;
    episodes_csv.header = {"method", "task_id", "seed", "episode", "return", "length", "goal"};

    fs::path dump_dir;
    if (cfg.eval_rollout_dump) {
        dump_dir = fs::path(out_path + ".rollouts");
        fs::create_directories(dump_dir);
    }

    for (const auto& name : cfg.method_list()) {
        MethodPlan mp = name == "Custom" ? custom_method_plan(cfg) : method_plan(name);
        std::string dir = mp.needs_switch_dir ? (run_dir_switch.empty() ? run_dir : run_dir_switch)
                                              : (run_dir.empty() ? run_dir_switch : run_dir);
        std::unique_ptr<model::SequenceModel> theta, f, phi;
        plan::PlannerModels pm;
        if (!mp.random) {
            if (dir.empty())
                throw std::runtime_error("eval: method " + name + " needs a run directory");
            theta = load_model_file(dir, mp.action_stem);
            check_vocab(*theta, vocab, name + " action model");
            if (mp.needs_dynamics) {
                f = load_model_file(dir, "dynamics");
                check_vocab(*f, vocab, name + " dynamics model");
            }
            if (!mp.value_stem.empty()) {
                phi = load_model_file(dir, mp.value_stem);
                check_vocab(*phi, vocab, name + " value model");
            }
            pm = plan::wrap_models(theta.get(), f.get(), phi.get(), cfg.model_context,
                                   mp.mode == plan::Mode::Bc);
        }

        std::vector<double> task_means;
        for (const auto& spec : specs) {
            std::vector<double> returns;
            for (uint64_t seed : cfg.seeds()) {
                for (int ep = 0; ep < cfg.eval_episodes; ++ep) {
                    plan::EpisodeResult r;
                    if (mp.random) {
                        r = run_random_episode(
                            spec, codec, cfg.resolved_target_return(),
                            mix_seed(mix_seed(seed, static_cast<uint64_t>(spec.task_id)),
                                     static_cast<uint64_t>(ep)));
                    } else {
                        plan::PlannerConfig pc;
                        pc.candidates = cfg.plan_candidates;
                        pc.horizon = cfg.plan_horizon;
                        pc.mode = mp.mode;
                        pc.target_return = cfg.resolved_target_return();
                        pc.imagined_rtg = cfg.plan_imagined_rtg == "hold" ? plan::ImaginedRtg::Hold
                                                                          : plan::ImaginedRtg::Phi;
                        pc.context_k = cfg.model_context;
                        std::ofstream dump;
                        if (cfg.eval_rollout_dump) {
                            dump.open(dump_dir / (name + "_t" + std::to_string(spec.task_id) + "_s" +
                                                  std::to_string(seed) + "_e" + std::to_string(ep) +
                                                  ".txt"));
                        }
                        r = plan::run_episode(pm, pc, spec, codec,
                                              cfg.eval_rollout_dump ? &dump : nullptr);
                    }
                    returns.push_back(r.episode_return);
                    episodes_csv.rows.push_back({name, std::to_string(spec.task_id),
                                                 std::to_string(seed), std::to_string(ep),
                                                 csv_num(r.episode_return), std::to_string(r.length),
                                                 r.goal_reached ? "1" : "0"});
                }
            }
            double m = mean_of(returns), s = std_of(returns);
            task_means.push_back(m);
            results.rows.push_back({name, std::to_string(spec.task_id), grid::layout_name(spec.layout),
                                    csv_num(m), csv_num(s), std::to_string(returns.size())});
            log << name << " task " << spec.task_id << " (" << grid::layout_name(spec.layout)
                << "): " << csv_num(m) << " +/- " << csv_num(s) << " over " << returns.size()
                << " episodes\n";
        }
        results.rows.push_back({name, "-1", "average", csv_num(mean_of(task_means)),
                                csv_num(std_of(task_means)), std::to_string(task_means.size())});
        log << name << " cross-task average: " << csv_num(mean_of(task_means)) << "\n";
    }
    results.write(out_path);
    episodes_csv.write(out_path + ".episodes.csv");
    log << "wrote " << out_path << " and per-episode returns\n";
}

void cmd_bench(const ExperimentConfig& cfg, const std::string& dataset_path,
               const std::string& out_path, std::ostream& log) {
    cfg.validate();
    data::Dataset full = data::load(dataset_path);
    auto [train_set, val_set] = data::split(full, cfg.train_split, cfg.train_seed);
    model::ModelVocab vocab = model::ModelVocab::from_dataset(full);

    CsvTable table;
    table.header = {"preset", "ffn",           "total_params",  "active_params_per_token",
                    "steps",  "steps_to_loss", "final_loss",    "sec_per_step"};

    for (const auto& preset : split_csv(cfg.bench_presets)) {
        for (const std::string& ffn : {std::string("dense"), std::string("switch")}) {
            ExperimentConfig variant = cfg;
            variant.model_preset = preset;
            variant.model_ffn = ffn;
            model::ModelConfig mc = make_model_config(variant, model::ModelKind::Action, vocab);
            model::SequenceModel m(mc, mix_seed(cfg.train_seed, 0xbe7c));

            train::TrainConfig tc = make_train_config(variant, false);
            tc.epochs = 1;
            tc.max_steps_per_epoch = cfg.bench_max_steps;
            tc.max_val_samples = 64;

            int steps_to_loss = -1;
            int step_idx = 0;
            double final_loss = 0.0;
            auto t0 = std::chrono::steady_clock::now();
            auto history = train::train_model(
                m, train_set, val_set, tc, nullptr,
                [&](int step, double batch_loss) {
                    final_loss = batch_loss;
                    if (steps_to_loss < 0 && batch_loss <= cfg.bench_loss_threshold)
                        steps_to_loss = step + 1;
                    step_idx = step + 1;
                });
            double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

            table.rows.push_back({preset, ffn, std::to_string(m.param_count()),
                                  std::to_string(m.active_params_per_token()),
                                  std::to_string(step_idx), std::to_string(steps_to_loss),
                                  csv_num(final_loss), csv_num(wall / std::max(1, step_idx))});
            log << preset << "/" << ffn << ": " << m.param_count() << " params, "
                << m.active_params_per_token() << " active/token, " << step_idx << " steps, "
                << "steps-to-loss(" << csv_num(cfg.bench_loss_threshold) << ") = " << steps_to_loss
                << ", " << csv_num(wall / std::max(1, step_idx)) << " s/step\n";
        }
    }
    table.write(out_path);
    log << "wrote " << out_path << "\n";
}

void cmd_plot(const std::vector<std::string>& metrics_csvs, const std::string& eval_csv,
              const std::string& out_dir, std::ostream& log) {
    if (metrics_csvs.empty() && eval_csv.empty())
        throw std::invalid_argument("plot: nothing to plot (no metrics or eval CSV given)");
    fs::create_directories(out_dir);

    if (!metrics_csvs.empty()) {
        // one loss figure per model name; one train and one val series per run
        std::map<std::string, std::vector<Series>> per_model;
        for (const auto& path : metrics_csvs) {
            CsvTable t = CsvTable::read(path);
            if (t.rows.empty()) throw CsvError("csv: " + path + " has no data rows");
            int c_epoch = t.column("epoch"), c_model = t.column("model"),
                c_train = t.column("train_loss"), c_val = t.column("val_loss");
            if (c_epoch < 0 || c_model < 0 || c_train < 0 || c_val < 0)
                throw CsvError("csv: " + path + " lacks the metrics columns");
            std::string stem = fs::path(path).stem().string();
            std::map<std::string, Series> train_series, val_series;
            for (const auto& row : t.rows) {
                const std::string& mdl = row[static_cast<size_t>(c_model)];
                double e = std::stod(row[static_cast<size_t>(c_epoch)]);
                auto& ts = train_series[mdl];
                ts.label = stem + " train";
                ts.xs.push_back(e);
                ts.ys.push_back(std::stod(row[static_cast<size_t>(c_train)]));
                auto& vs = val_series[mdl];
                vs.label = stem + " val";
                vs.xs.push_back(e);
                vs.ys.push_back(std::stod(row[static_cast<size_t>(c_val)]));
            }
            for (auto& [mdl, s] : train_series) per_model[mdl].push_back(std::move(s));
            for (auto& [mdl, s] : val_series) per_model[mdl].push_back(std::move(s));
        }
        for (const auto& [mdl, series] : per_model) {
            std::string path = (fs::path(out_dir) / ("loss_" + mdl + ".svg")).string();
            write_line_chart(path, mdl + " loss", "epoch", "cross-entropy", series);
            log << "wrote " << path << "\n";
        }
    }

    if (!eval_csv.empty()) {
        CsvTable t = CsvTable::read(eval_csv);
        if (t.rows.empty()) throw CsvError("csv: " + eval_csv + " has no data rows");
        int c_method = t.column("method"), c_task = t.column("task_id"), c_layout = t.column("layout"),
            c_mean = t.column("mean");
        if (c_method < 0 || c_task < 0 || c_mean < 0 || c_layout < 0)
            throw CsvError("csv: " + eval_csv + " lacks the eval columns");
        std::vector<std::string> methods;
        std::map<std::string, size_t> method_idx;
        std::map<int, BarGroup> groups;
        for (const auto& row : t.rows) {
            int task = std::stoi(row[static_cast<size_t>(c_task)]);
            if (task < 0) continue; // skip the cross-task average row
            const std::string& mth = row[static_cast<size_t>(c_method)];
            if (!method_idx.count(mth)) {
                method_idx[mth] = methods.size();
                methods.push_back(mth);
            }
            auto& grp = groups[task];
            grp.label = row[static_cast<size_t>(c_layout)] + " " + row[static_cast<size_t>(c_task)];
        }
        for (auto& [task, grp] : groups) grp.values.assign(methods.size(), 0.0);
        for (const auto& row : t.rows) {
            int task = std::stoi(row[static_cast<size_t>(c_task)]);
            if (task < 0) continue;
            groups[task].values[method_idx[row[static_cast<size_t>(c_method)]]] =
                std::stod(row[static_cast<size_t>(c_mean)]);
        }
        std::vector<BarGroup> glist;
        for (auto& [task, grp] : groups) glist.push_back(std::move(grp));
        std::string path = (fs::path(out_dir) / "rewards.svg").string();
        write_bar_chart(path, "per-task reward", methods, glist);
        log << "wrote " << path << "\n";
    }
}

} // namespace stt::cli
