#include "stt/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <thread>
#include <unordered_map>

namespace stt::train {

using model::ModelConfig;
using model::ModelKind;
using model::SequenceModel;
using nn::Graph;
using nn::NodeRef;
using nn::Param;
using nn::Tensor;

namespace {

constexpr int kShards = 4; // fixed so results do not depend on thread count

int window_len(const ModelConfig& cfg) {
    if (cfg.kind == ModelKind::ReturnDist || cfg.kind == ModelKind::ReturnMean)
        return std::min(cfg.rtg_window, cfg.trunk.context);
    return cfg.trunk.context;
}

// optimization objective (task loss plus the load-balance term when
// configured); `task_loss_out` receives the task term alone so dense and
// switch curves stay comparable
NodeRef sample_loss(Graph& g, SequenceModel& m, const BuiltSample& s, bool zero_rtg,
                    nn::RoutingStats* stats, double* task_loss_out) {
    const auto& cfg = m.config();
    bool aux = cfg.trunk.ffn_kind == nn::FfnKind::Switch && cfg.trunk.aux_coef != 0.0;
    std::vector<NodeRef> lb;
    NodeRef loss = m.loss(g, s.seq, s.targets, zero_rtg, stats, aux ? &lb : nullptr);
    if (task_loss_out) *task_loss_out = g.value(loss)[0];
    if (aux && !lb.empty()) {
        NodeRef total = lb[0];
        for (size_t i = 1; i < lb.size(); ++i) total = g.add(total, lb[i]);
        loss = g.add(loss, g.scale(total, cfg.trunk.aux_coef / static_cast<double>(lb.size())));
    }
    return loss;
}

std::vector<int> shuffled_indices(int n, uint64_t seed) {
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    Rng rng(seed);
    for (int i = n - 1; i > 0; --i) std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(rng.below(i + 1))]);
    return idx;
}

} // namespace

std::vector<int> epoch_sample_order(int n_samples, uint64_t seed, int epoch) {
    return shuffled_indices(n_samples, mix_seed(seed, 0x45500 + static_cast<uint64_t>(epoch)));
}

std::vector<SampleRef> enumerate_samples(const data::Dataset& ds, const ModelConfig&) {
    std::vector<SampleRef> out;
    for (int e = 0; e < static_cast<int>(ds.episodes.size()); ++e) {
        int len = ds.episodes[static_cast<size_t>(e)].length();
        for (int t = 0; t < len; ++t) out.push_back(SampleRef{e, t});
    }
    return out;
}

BuiltSample build_sample(const data::Dataset& ds, const ModelConfig& cfg, SampleRef ref) {
    const data::Trajectory& traj = ds.episodes[static_cast<size_t>(ref.episode)];
    BuiltSample s;
    s.seq = data::window(traj, ref.t_end, window_len(cfg), true);
    switch (cfg.kind) {
        case ModelKind::Action: {
            for (const auto& gp : s.seq.groups) s.targets.actions.push_back(gp.action);
            break;
        }
        case ModelKind::Dynamics: {
            for (int t = s.seq.t_begin; t <= ref.t_end; ++t) {
                const auto& next = (t + 1 < traj.length()) ? traj.steps[static_cast<size_t>(t) + 1].state
                                                           : traj.final_state;
                s.targets.next_states.push_back(next);
            }
            break;
        }
        case ModelKind::ReturnDist:
        case ModelKind::ReturnMean:
            s.targets.rtg_target = traj.returns_to_go[static_cast<size_t>(ref.t_end)];
            break;
    }
    return s;
}

double evaluate_loss(SequenceModel& m, const data::Dataset& ds, int max_samples, uint64_t seed,
                     bool zero_rtg) {
    auto samples = enumerate_samples(ds, m.config());
    if (samples.empty()) return 0.0;
    std::vector<int> order = shuffled_indices(static_cast<int>(samples.size()), mix_seed(seed, 0x76616c));
    int n = max_samples > 0 ? std::min<int>(max_samples, static_cast<int>(order.size()))
                            : static_cast<int>(order.size());
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        BuiltSample s = build_sample(ds, m.config(), samples[static_cast<size_t>(order[static_cast<size_t>(i)])]);
        Graph g;
        NodeRef loss = m.loss(g, s.seq, s.targets, zero_rtg, nullptr, nullptr);
        total += g.value(loss)[0];
    }
    return total / n;
}

std::vector<EpochMetrics> train_model(SequenceModel& m, const data::Dataset& train_set,
                                      const data::Dataset& val_set, const TrainConfig& cfg,
                                      const std::function<void(const EpochMetrics&)>& on_epoch,
                                      const std::function<void(int, double)>& on_step) {
    const ModelConfig& mc = m.config();
    auto samples = enumerate_samples(train_set, mc);
    if (samples.empty()) throw std::invalid_argument("train: no samples in the training set");

    nn::init_blas_single_thread();
    std::vector<Param*> params = m.params();
    std::unordered_map<const Param*, int> param_index;
    for (int i = 0; i < static_cast<int>(params.size()); ++i) param_index[params[static_cast<size_t>(i)]] = i;

    nn::Adam adam({cfg.lr, cfg.beta1, cfg.beta2, cfg.eps});
    adam.register_params(params);

    int n_threads = std::max(1, std::min(cfg.threads, kShards));
    std::vector<EpochMetrics> history;
    int global_step = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto t0 = std::chrono::steady_clock::now();
        std::vector<int> order = epoch_sample_order(static_cast<int>(samples.size()), cfg.seed, epoch);
        int total_batches = (static_cast<int>(order.size()) + cfg.batch_size - 1) / cfg.batch_size;
        if (cfg.max_steps_per_epoch > 0) total_batches = std::min(total_batches, cfg.max_steps_per_epoch);

        double loss_sum = 0.0;
        nn::RoutingStats epoch_stats;

        for (int b = 0; b < total_batches; ++b) {
            int begin = b * cfg.batch_size;
            int count = std::min<int>(cfg.batch_size, static_cast<int>(order.size()) - begin);

            // shard-local gradient buffers and loss sums, reduced in shard
            // order so the result is independent of the thread count
            std::vector<std::vector<Tensor>> shard_grads(kShards);
            std::vector<double> shard_loss(kShards, 0.0);
            std::vector<nn::RoutingStats> shard_stats(kShards);
            for (auto& sg : shard_grads) {
                sg.reserve(params.size());
                for (Param* p : params) sg.push_back(Tensor::zeros(p->value.shape));
            }

            auto run_shard = [&](int shard) {
                for (int i = shard; i < count; i += kShards) {
                    SampleRef ref = samples[static_cast<size_t>(order[static_cast<size_t>(begin + i)])];
                    BuiltSample s = build_sample(train_set, mc, ref);
                    Graph g;
                    double task_loss = 0.0;
                    NodeRef loss = sample_loss(g, m, s, cfg.zero_rtg,
                                               &shard_stats[static_cast<size_t>(shard)], &task_loss);
                    shard_loss[static_cast<size_t>(shard)] += task_loss;
                    g.backward(loss);
                    for (const auto& [p, leaf] : g.param_leaves()) {
                        const Tensor& gl = g.grad(leaf);
                        if (!gl.empty())
                            add_into(shard_grads[static_cast<size_t>(shard)][static_cast<size_t>(param_index[p])], gl);
                    }
                }
            };

            if (n_threads == 1) {
                for (int shard = 0; shard < kShards; ++shard) run_shard(shard);
            } else {
                std::vector<std::thread> pool;
                std::atomic<int> next{0};
                for (int t = 0; t < n_threads; ++t)
                    pool.emplace_back([&] {
                        int shard;
                        while ((shard = next.fetch_add(1)) < kShards) run_shard(shard);
                    });
                for (auto& th : pool) th.join();
            }

            double batch_loss = 0.0;
            for (int shard = 0; shard < kShards; ++shard) {
                batch_loss += shard_loss[static_cast<size_t>(shard)];
                for (size_t k = 0; k < params.size(); ++k)
                    add_into(params[k]->grad, shard_grads[static_cast<size_t>(shard)][k]);
                if (!shard_stats[static_cast<size_t>(shard)].tokens_per_expert.empty()) {
                    if (epoch_stats.tokens_per_expert.empty())
                        epoch_stats.init(static_cast<int>(shard_stats[static_cast<size_t>(shard)].tokens_per_expert.size()));
                    epoch_stats.merge(shard_stats[static_cast<size_t>(shard)]);
                }
            }
            loss_sum += batch_loss / count;
            for (Param* p : params) scale_inplace(p->grad, 1.0 / count);
            adam.step();
            adam.zero_grads();
            if (on_step) on_step(global_step, batch_loss / count);
            ++global_step;
        }

        EpochMetrics em;
        em.epoch = epoch;
        em.model = model_kind_name(mc.kind);
        em.train_loss = loss_sum / total_batches;
        // fixed subsample: validation curves stay comparable across epochs
        em.val_loss = evaluate_loss(m, val_set, cfg.max_val_samples, cfg.seed, cfg.zero_rtg);
        em.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!epoch_stats.tokens_per_expert.empty()) {
            em.routing_fractions = epoch_stats.fractions();
            em.routing_mean_probs = epoch_stats.mean_probs();
        }
        history.push_back(em);
        if (on_epoch) on_epoch(em);
    }
    return history;
}

} // namespace stt::train
