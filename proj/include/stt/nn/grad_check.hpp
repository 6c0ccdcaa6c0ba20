#pragma once

#include <functional>
#include <string>
#include <vector>

#include "stt/nn/graph.hpp"

namespace stt::nn {

struct GradCheckOptions {
    double step = 1e-4;
    double tolerance = 1e-4;
    int max_coords_per_param = 40; // central differences sample at most this many coordinates
    uint64_t seed = 0;
};

struct GradCheckReport {
    bool pass = false;
    double max_rel_err = 0.0;
    std::string worst_param;
    int64_t worst_index = -1;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    int coords_checked = 0;
};

// Compares reverse-mode gradients against central finite differences.
// `build_loss` must rebuild the same scalar loss from current parameter
// values on every call (it is invoked 2 per sampled coordinate plus once
// for the analytic pass).
GradCheckReport grad_check(const std::function<NodeRef(Graph&)>& build_loss,
                           const std::vector<Param*>& params, GradCheckOptions opts = {});

} // namespace stt::nn
