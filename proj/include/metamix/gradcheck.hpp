#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "metamix/autodiff.hpp"
#include "metamix/params.hpp"
#include "metamix/tensor.hpp"

namespace metamix {

using LossFn = std::function<Var(const VarMap&)>;

struct GradCheckResult {
    std::vector<std::pair<std::string, double>> per_param;  // max relative error per parameter

    double worst() const {
        double w = 0.0;
        for (const auto& [n, e] : per_param) w = std::max(w, e);
        return w;
    }
};

// Central-difference check of grad() against an independent numeric estimate.
// loss_fn must be deterministic; this is verified by evaluating twice.
inline GradCheckResult finite_diff_check(const LossFn& loss_fn, const ParamSet& params,
                                         double step) {
    if (!(step > 0.0)) throw std::invalid_argument("finite_diff_check: step must be positive");

    auto eval = [&](const ParamSet& p) -> double {
        return loss_fn(lift(p)).value().item();
    };

    const double l0 = eval(params);
    const double l1 = eval(params);
    if (l0 != l1) {
        throw std::runtime_error("finite_diff_check: loss_fn is not deterministic (" +
                                 std::to_string(l0) + " vs " + std::to_string(l1) + ")");
    }

    VarMap leaves = lift(params);
    VarMap analytic = grad(loss_fn(leaves), leaves, /*create_graph=*/false);

    GradCheckResult result;
    ParamSet work = params;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const auto& [name, tensor] = params[pi];
        const Tensor& ga = analytic.get(name).value();
        double worst = 0.0;
        for (std::size_t i = 0; i < tensor.numel(); ++i) {
            const double orig = work[pi].second[i];
            work[pi].second[i] = orig + step;
            const double lp = eval(work);
            work[pi].second[i] = orig - step;
            const double lm = eval(work);
            work[pi].second[i] = orig;
            const double numeric = (lp - lm) / (2.0 * step);
            const double denom = std::max({std::abs(ga[i]), std::abs(numeric), 1e-8});
            worst = std::max(worst, std::abs(ga[i] - numeric) / denom);
        }
        result.per_param.emplace_back(name, worst);
    }
    return result;
}

}  // namespace metamix
