#pragma once

#include <cmath>
#include <vector>

#include "gcnlab/rng.hpp"
#include "gcnlab/tape.hpp"

namespace gcnlab {

struct AdamConfig {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// Bias-corrected Adam with decoupled weight decay: the value is shrunk by
// lr * weight_decay before the moment update is applied.
inline void adam_step(const std::vector<Parameter*>& params, const AdamConfig& c) {
    for (Parameter* p : params) {
        p->step_count += 1;
        const double corr1 = 1.0 - std::pow(c.beta1, static_cast<double>(p->step_count));
        const double corr2 = 1.0 - std::pow(c.beta2, static_cast<double>(p->step_count));
        for (std::size_t i = 0; i < p->value.data.size(); ++i) {
            if (c.weight_decay != 0.0)
                p->value.data[i] *= 1.0 - c.lr * c.weight_decay;
            const double g = p->grad[i];
            p->adam_m[i] = c.beta1 * p->adam_m[i] + (1.0 - c.beta1) * g;
            p->adam_v[i] = c.beta2 * p->adam_v[i] + (1.0 - c.beta2) * g * g;
            const double m_hat = p->adam_m[i] / corr1;
            const double v_hat = p->adam_v[i] / corr2;
            p->value.data[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
        }
    }
}

inline void zero_grad(const std::vector<Parameter*>& params) {
    for (Parameter* p : params) p->zero_grad();
}

// Glorot-uniform initialization: U(-l, l) with l = sqrt(6 / (fan_in + fan_out)).
inline void glorot_uniform(Parameter& p, Rng& rng) {
    const double limit =
        std::sqrt(6.0 / static_cast<double>(p.value.rows + p.value.cols));
    for (double& v : p.value.data) v = rng.uniform(-limit, limit);
}

} // namespace gcnlab
