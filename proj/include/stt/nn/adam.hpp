#pragma once

#include <vector>

#include "stt/nn/graph.hpp"

namespace stt::nn {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam over a fixed set of parameters. Parameters are
// registered once; step() consumes the accumulated p.grad buffers.
class Adam {
public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    void register_params(const std::vector<Param*>& params) {
        for (Param* p : params) {
            params_.push_back(p);
            m_.push_back(Tensor::zeros(p->value.shape));
            v_.push_back(Tensor::zeros(p->value.shape));
        }
    }

    void step() {
        ++t_;
        double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (size_t k = 0; k < params_.size(); ++k) {
            Param& p = *params_[k];
            Tensor& m = m_[k];
            Tensor& v = v_[k];
            for (int64_t i = 0; i < p.value.size(); ++i) {
                double g = p.grad[i];
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
                double mhat = m[i] / bc1;
                double vhat = v[i] / bc2;
                p.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    void zero_grads() {
        for (Param* p : params_) p->zero_grad();
    }

    int64_t steps_taken() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::vector<Param*> params_;
    std::vector<Tensor> m_, v_;
    int64_t t_ = 0;
};

} // namespace stt::nn
