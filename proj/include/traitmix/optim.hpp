#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "traitmix/param.hpp"

namespace traitmix {

struct AdamConfig {
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_global_norm = 0.0; // 0 disables clipping
};

// Adam with bias correction and constant learning rate.
class Adam {
public:
    Adam(std::vector<Param*> params, AdamConfig config) : cfg_(config), params_(std::move(params)) {
        for (Param* p : params_) {
            m_.emplace_back(p->size(), 0.0);
            v_.emplace_back(p->size(), 0.0);
        }
    }

    void zero_grad() {
        for (Param* p : params_) p->zero_grad();
    }

    void step() {
        ++t_;
        double clip_scale = 1.0;
        if (cfg_.clip_global_norm > 0.0) {
            double sq = 0.0;
            for (Param* p : params_)
                for (double g : p->grad) sq += g * g;
            const double norm = std::sqrt(sq);
            if (norm > cfg_.clip_global_norm) clip_scale = cfg_.clip_global_norm / norm;
        }
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        for (size_t pi = 0; pi < params_.size(); ++pi) {
            Param& p = *params_[pi];
            auto& m = m_[pi];
            auto& v = v_[pi];
            for (size_t i = 0; i < p.size(); ++i) {
                const double g = p.grad[i] * clip_scale;
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                p.value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    int64_t steps_taken() const { return t_; }

private:
    AdamConfig cfg_;
    std::vector<Param*> params_;
    std::vector<std::vector<double>> m_, v_;
    int64_t t_ = 0;
};

} // namespace traitmix
