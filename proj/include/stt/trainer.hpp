#pragma once

#include <functional>
#include <string>
#include <vector>

#include "stt/models.hpp"
#include "stt/nn/adam.hpp"

namespace stt::train {

struct TrainConfig {
    int epochs = 5;
    int batch_size = 32;
    double lr = 1e-4;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    uint64_t seed = 0;
    int max_steps_per_epoch = 0; // 0 = full pass over the training samples
    int max_val_samples = 2000;
    int threads = 2;
    bool zero_rtg = false; // behaviour-cloning variant (action model only)
};

struct EpochMetrics {
    int epoch = 0;
    std::string model;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double wall_seconds = 0.0;
    std::vector<double> routing_fractions; // per expert; empty for dense models
    std::vector<double> routing_mean_probs;
};

// A training sample is a window of one episode ending at t_end.
struct SampleRef {
    int episode = 0;
    int t_end = 0;
};

struct BuiltSample {
    data::TokenSequence seq;
    model::SampleTargets targets;
};

// All (episode, t_end) windows appropriate for the model kind.
std::vector<SampleRef> enumerate_samples(const data::Dataset& ds, const model::ModelConfig& cfg);

// The shuffled sample order for one epoch. A function of (n, seed, epoch)
// only, so dense and switch runs with the same seed consume identical data.
std::vector<int> epoch_sample_order(int n_samples, uint64_t seed, int epoch);

BuiltSample build_sample(const data::Dataset& ds, const model::ModelConfig& cfg, SampleRef ref);

// Forward-only mean loss over (a deterministic subsample of) the samples.
double evaluate_loss(model::SequenceModel& m, const data::Dataset& ds, int max_samples,
                     uint64_t seed, bool zero_rtg);

// Adam training loop with deterministic shard-parallel gradient
// accumulation: results are independent of the thread count. `on_step`
// sees the running optimizer step index and its mean batch loss.
std::vector<EpochMetrics> train_model(model::SequenceModel& m, const data::Dataset& train_set,
                                      const data::Dataset& val_set, const TrainConfig& cfg,
                                      const std::function<void(const EpochMetrics&)>& on_epoch = nullptr,
                                      const std::function<void(int, double)>& on_step = nullptr);

} // namespace stt::train
