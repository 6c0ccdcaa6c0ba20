#include "stt/nn/switch_ffn.hpp"

#include <algorithm>
#include <cmath>

namespace stt::nn {

namespace {

Param init_projection(const std::string& name, int rows, int cols, Rng& rng) {
    Param p(name, Tensor::zeros({rows, cols}));
    for (auto& v : p.value.data) v = rng.normal(0.0, 0.02);
    return p;
}

} // namespace

DenseFfn::DenseFfn(const std::string& prefix, int d, int d_ff, Rng& rng)
    : w1(init_projection(prefix + ".w1", d, d_ff, rng)),
      b1(prefix + ".b1", Tensor::zeros({d_ff})),
      w2(init_projection(prefix + ".w2", d_ff, d, rng)),
      b2(prefix + ".b2", Tensor::zeros({d})) {}

NodeRef DenseFfn::forward(Graph& g, NodeRef x) {
    NodeRef h = g.gelu(g.add_rowvec(g.matmul(x, g.param(w1)), g.param(b1)));
    return g.add_rowvec(g.matmul(h, g.param(w2)), g.param(b2));
}

std::vector<Param*> DenseFfn::params() { return {&w1, &b1, &w2, &b2}; }

GateResult gate(const Tensor& router, const double* x, int d) {
    int n = router.cols();
    GateResult r;
    r.probs.assign(n, 0.0);
    for (int j = 0; j < n; ++j) {
        double dot = 0.0;
        for (int i = 0; i < d; ++i) dot += router.at(i, j) * x[i];
        r.probs[j] = dot;
    }
    softmax_row_inplace(r.probs.data(), n);
    r.top1 = 0;
    for (int j = 1; j < n; ++j)
        if (r.probs[j] > r.probs[r.top1]) r.top1 = j;
    return r;
}

std::vector<int> top_k_experts(const double* probs, int n, int k) {
    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return probs[a] > probs[b]; });
    order.resize(std::min(k, n));
    return order;
}

double load_balance_loss(const Tensor& batch_probs, const std::vector<int>& assignments) {
    int t = batch_probs.rows(), n = batch_probs.cols();
    if (t == 0 || static_cast<int>(assignments.size()) != t)
        throw std::invalid_argument("load_balance_loss: empty batch or assignment mismatch");
    std::vector<double> f(n, 0.0), p(n, 0.0);
    for (int i = 0; i < t; ++i) {
        f[assignments[static_cast<size_t>(i)]] += 1.0;
        for (int j = 0; j < n; ++j) p[j] += batch_probs.at(i, j);
    }
    double loss = 0.0;
    for (int j = 0; j < n; ++j) loss += (f[j] / t) * (p[j] / t);
    return loss * n;
}

SwitchFfn::SwitchFfn(const std::string& prefix, int d, int d_ff, int n_experts, int k, Rng& rng)
    : router(init_projection(prefix + ".router", d, n_experts, rng)), top_k(k) {
    experts.reserve(static_cast<size_t>(n_experts));
    for (int e = 0; e < n_experts; ++e)
        experts.emplace_back(prefix + ".expert" + std::to_string(e), d, d_ff, rng);
}

NodeRef SwitchFfn::forward(Graph& g, NodeRef x, RoutingStats* stats, NodeRef* lb_loss) {
    const int n = n_experts();
    const Tensor& xv = g.value(x);
    const int t = xv.rows();

    NodeRef probs = g.softmax_rows(g.matmul(x, g.param(router)));
    const Tensor& pv = g.value(probs);

    // Per-token expert selection (argmax scan: ties go to the lower index).
    std::vector<std::vector<int>> routed(static_cast<size_t>(n));
    std::vector<int> top1(static_cast<size_t>(t));
    for (int i = 0; i < t; ++i) {
        auto sel = top_k_experts(&pv.data[static_cast<size_t>(i) * n], n, top_k);
        top1[static_cast<size_t>(i)] = sel[0];
        for (int e : sel) routed[static_cast<size_t>(e)].push_back(i);
    }

    if (stats) {
        if (stats->tokens_per_expert.empty()) stats->init(n);
        for (int i = 0; i < t; ++i) {
            stats->tokens_per_expert[top1[static_cast<size_t>(i)]]++;
            for (int j = 0; j < n; ++j) stats->prob_sums[j] += pv.at(i, j);
        }
        stats->total_tokens += t;
    }

    // y = sum over experts of scatter(p_e(x) * E_e(x_routed)). Exactly the
    // routed tokens reach each expert.
    NodeRef y = -1;
    for (int e = 0; e < n; ++e) {
        const auto& idx = routed[static_cast<size_t>(e)];
        if (idx.empty()) continue;
        if (stats) stats->expert_evals += static_cast<int64_t>(idx.size());
        NodeRef xe = g.gather_rows(x, idx);
        NodeRef ye = experts[static_cast<size_t>(e)].forward(g, xe);
        NodeRef pe = g.cols(g.gather_rows(probs, idx), e, 1);
        NodeRef scaled = g.scale_rows(ye, pe);
        NodeRef spread = g.scatter_rows(scaled, idx, t);
        y = (y < 0) ? spread : g.add(y, spread);
    }
    if (y < 0) y = g.scale(x, 0.0); // t == 0 degenerate batch

    if (lb_loss) {
        // n * sum_i f_i P_i with f from the realized top-1 assignment.
        Tensor f({n});
        for (int i = 0; i < t; ++i) f[top1[static_cast<size_t>(i)]] += 1.0;
        for (int j = 0; j < n; ++j) f[j] = f[j] / t * n;
        *lb_loss = g.dot_const(g.col_means(probs), std::move(f));
    }
    return y;
}

std::vector<Param*> SwitchFfn::params() {
    std::vector<Param*> out{&router};
    for (auto& e : experts)
        for (Param* p : e.params()) out.push_back(p);
    return out;
}

} // namespace stt::nn
