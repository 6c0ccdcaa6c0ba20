#include "stt/nn/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "stt/rng.hpp"

namespace stt::nn {

namespace {

double eval_loss(const std::function<NodeRef(Graph&)>& build_loss) {
    Graph g;
    NodeRef root = build_loss(g);
    return g.value(root)[0];
}

} // namespace

GradCheckReport grad_check(const std::function<NodeRef(Graph&)>& build_loss,
                           const std::vector<Param*>& params, GradCheckOptions opts) {
    GradCheckReport report;

    // Analytic pass.
    for (Param* p : params) p->zero_grad();
    {
        Graph g;
        NodeRef root = build_loss(g);
        g.backward(root);
        g.flush_param_grads();
    }

    Rng rng(mix_seed(opts.seed, 0x67726164));
    for (Param* p : params) {
        int64_t n = p->value.size();
        std::vector<int64_t> coords;
        if (n <= opts.max_coords_per_param) {
            coords.resize(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
        } else {
            for (int k = 0; k < opts.max_coords_per_param; ++k)
                coords.push_back(rng.below(static_cast<int>(n)));
            std::sort(coords.begin(), coords.end());
            coords.erase(std::unique(coords.begin(), coords.end()), coords.end());
        }
        for (int64_t i : coords) {
            double saved = p->value[i];
            p->value[i] = saved + opts.step;
            double lp = eval_loss(build_loss);
            p->value[i] = saved - opts.step;
            double lm = eval_loss(build_loss);
            p->value[i] = saved;

            double numeric = (lp - lm) / (2.0 * opts.step);
            double analytic = p->grad[i];
            double denom = std::max(std::abs(analytic), std::abs(numeric));
            double err;
            if (denom < 1e-6) {
                // Both near zero: compare absolutely at the same scale.
                err = std::abs(analytic - numeric) > 1e-6 ? 1.0 : 0.0;
            } else {
                err = std::abs(analytic - numeric) / denom;
            }
            ++report.coords_checked;
            if (err > report.max_rel_err) {
                report.max_rel_err = err;
                report.worst_param = p->name;
                report.worst_index = i;
                report.worst_analytic = analytic;
                report.worst_numeric = numeric;
            }
        }
    }
    report.pass = report.max_rel_err <= opts.tolerance;
    return report;
}

} // namespace stt::nn
