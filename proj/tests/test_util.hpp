#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "ispl/autodiff.hpp"
#include "ispl/rng.hpp"
#include "ispl/tensor.hpp"

namespace testutil {

inline ispl::Tensor random_tensor(std::vector<int64_t> shape, ispl::Rng& rng, double lo = -1.0,
                                  double hi = 1.0) {
    ispl::Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = ispl::uniform(rng, lo, hi);
    return t;
}

inline ispl::Tensor random_image(std::vector<int64_t> shape, ispl::Rng& rng) {
    return random_tensor(std::move(shape), rng, 0.0, 1.0);
}

// Central finite-difference gradient check. `build` must construct the graph
// from the leaves and return a scalar root. Returns the maximum relative
// error across all leaf elements.
inline double gradcheck(const std::vector<ispl::ad::Var>& leaves,
                        const std::function<ispl::ad::Var()>& build, double h = 1e-4) {
    for (const auto& l : leaves) l->grad = ispl::Tensor();
    const auto root = build();
    ispl::ad::backward(root);
    std::vector<ispl::Tensor> analytic;
    analytic.reserve(leaves.size());
    for (const auto& l : leaves) {
        l->ensure_grad();
        analytic.push_back(l->grad);
    }

    double max_rel = 0.0;
    for (size_t li = 0; li < leaves.size(); ++li) {
        auto& t = leaves[li]->value;
        for (int64_t i = 0; i < t.numel(); ++i) {
            const double orig = t[i];
            t[i] = orig + h;
            const double fp = build()->value[0];
            t[i] = orig - h;
            const double fm = build()->value[0];
            t[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic[li][i];
            const double rel = std::abs(a - numeric) / std::max(1e-6, std::abs(a) + std::abs(numeric));
            if (rel > max_rel) max_rel = rel;
        }
    }
    return max_rel;
}

}  // namespace testutil
