#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "fr/graph.hpp"
#include "fr/tensor.hpp"

namespace frtest {

inline fr::Tensor rand_tensor(int b, int c, int h, int w, std::mt19937_64& rng,
                              double lo = 0.0, double hi = 1.0) {
    fr::Tensor t(b, c, h, w);
    std::uniform_real_distribution<double> d(lo, hi);
    for (size_t i = 0; i < t.size(); ++i) t[i] = d(rng);
    return t;
}

inline double max_abs_diff(const fr::Tensor& a, const fr::Tensor& b) {
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

// Central-difference check of d(scalar_fn)/d(leaf) against leaf->grad.
// Returns the worst relative error over `samples` randomly probed entries.
inline double grad_check(const std::function<fr::Var()>& scalar_fn,
                         const std::vector<fr::Var>& leaves, std::mt19937_64& rng,
                         int samples = 8, double eps = 1e-5) {
    fr::Var out = scalar_fn();
    for (const auto& l : leaves) l->grad.fill(0.0);
    fr::backward(out);
    double worst = 0;
    for (const auto& leaf : leaves) {
        std::uniform_int_distribution<size_t> pick(0, leaf->value.size() - 1);
        for (int s = 0; s < samples; ++s) {
            size_t i = pick(rng);
            double keep = leaf->value[i];
            leaf->value[i] = keep + eps;
            double up = scalar_fn()->value[0];
            leaf->value[i] = keep - eps;
            double dn = scalar_fn()->value[0];
            leaf->value[i] = keep;
            double num = (up - dn) / (2 * eps);
            double ana = leaf->grad[i];
            double rel = std::fabs(num - ana) / std::max({std::fabs(num), std::fabs(ana), 1e-6});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace frtest
