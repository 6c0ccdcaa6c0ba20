#pragma once

#include <optional>
#include <vector>

#include "stt/nn/graph.hpp"
#include "stt/rng.hpp"

namespace stt::nn {

// Aggregated routing counters for one or more switch layers.
struct RoutingStats {
    std::vector<int64_t> tokens_per_expert;
    std::vector<double> prob_sums; // summed router probability mass per expert
    int64_t total_tokens = 0;
    int64_t expert_evals = 0; // (token, expert) pairs actually evaluated

    void init(int n_experts) {
        tokens_per_expert.assign(n_experts, 0);
        prob_sums.assign(n_experts, 0.0);
        total_tokens = 0;
        expert_evals = 0;
    }
    // f_i: fraction of tokens routed to expert i.
    std::vector<double> fractions() const {
        std::vector<double> f(tokens_per_expert.size(), 0.0);
        if (total_tokens > 0)
            for (size_t i = 0; i < f.size(); ++i)
                f[i] = static_cast<double>(tokens_per_expert[i]) / static_cast<double>(total_tokens);
        return f;
    }
    // P_i: mean router probability for expert i.
    std::vector<double> mean_probs() const {
        std::vector<double> p(prob_sums.size(), 0.0);
        if (total_tokens > 0)
            for (size_t i = 0; i < p.size(); ++i) p[i] = prob_sums[i] / static_cast<double>(total_tokens);
        return p;
    }
    void merge(const RoutingStats& o) {
        for (size_t i = 0; i < tokens_per_expert.size(); ++i) {
            tokens_per_expert[i] += o.tokens_per_expert[i];
            prob_sums[i] += o.prob_sums[i];
        }
        total_tokens += o.total_tokens;
        expert_evals += o.expert_evals;
    }
};

// Two-layer feed-forward d -> d_ff -> d with GELU; the dense baseline and
// the body of every expert.
struct DenseFfn {
    Param w1, b1, w2, b2;

    DenseFfn(const std::string& prefix, int d, int d_ff, Rng& rng);
    NodeRef forward(Graph& g, NodeRef x);
    std::vector<Param*> params();
};

// Single-token gate: probs = softmax(router^T x), selection = top-k indices
// by probability, ties broken toward the lower expert index.
struct GateResult {
    std::vector<double> probs;
    int top1 = 0;
};
GateResult gate(const Tensor& router /* [d x n] */, const double* x, int d);

// Per-token top-k expert selection from a row of gate probabilities.
std::vector<int> top_k_experts(const double* probs, int n, int k);

// Reference load-balance loss n * sum_i f_i * P_i computed from a batch of
// router probabilities [T x n] and per-token expert assignments.
double load_balance_loss(const Tensor& batch_probs, const std::vector<int>& assignments);

// Sparsely activated feed-forward layer: router plus n identically shaped
// experts; each token is processed by its top-k experts (default 1) and the
// outputs are scaled by the gate values.
struct SwitchFfn {
    Param router; // [d x n]
    std::vector<DenseFfn> experts;
    int top_k = 1;

    SwitchFfn(const std::string& prefix, int d, int d_ff, int n_experts, int top_k, Rng& rng);

    // When `lb_loss` is non-null, a differentiable load-balance loss node is
    // emitted for this batch (gradients flow into the router via P_i).
    NodeRef forward(Graph& g, NodeRef x, RoutingStats* stats = nullptr, NodeRef* lb_loss = nullptr);

    int n_experts() const { return static_cast<int>(experts.size()); }
    std::vector<Param*> params();
};

} // namespace stt::nn
