#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <utility>

#include "metamix/params.hpp"
#include "metamix/tensor.hpp"

namespace metamix {

// Adaptive-moment outer optimizer with a shared step count across parameter
// groups, so jointly meta-learned groups see the same bias correction.
class Adam {
public:
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void begin_step() { ++t_; }
    long step_count() const { return t_; }

    // Updates every parameter in `target` that appears in `grads`, skipping
    // names not in `trainable` when a filter is given. Frozen parameters keep
    // their bits and accumulate no moments.
    void apply(ParamSet& target, const ParamSet& grads, double lr,
               const std::set<std::string>* trainable, const std::string& key_prefix) {
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
        for (auto& [name, value] : target) {
            if (trainable && trainable->count(name) == 0) continue;
            if (!grads.has(name)) continue;
            const Tensor& g = grads.get(name);
            auto& [m, v] = moments_[key_prefix + name];
            if (m.numel() != value.numel()) {
                m = Tensor::zeros(value.shape());
                v = Tensor::zeros(value.shape());
            }
            for (std::size_t i = 0; i < value.numel(); ++i) {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
    }

private:
    long t_ = 0;
    std::map<std::string, std::pair<Tensor, Tensor>> moments_;
};

}  // namespace metamix
