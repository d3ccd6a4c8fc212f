// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0
//
// Central finite differences over leaf tensors. Kept apart from the library's own
// gradient checker so the tests do not share code with what they verify.

#pragma once

#include "mimic/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace mimic::test {

/// d f / d leaf[i] for every i, by (f(x+h) - f(x-h)) / 2h.
inline std::vector<double> numeric_gradient(const std::function<double()>& f, ad::Tensor leaf, double h = 1e-5) {
    auto values = leaf.mutable_data();
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double saved = values[i];
        values[i] = saved + h;
        const double up = f();
        values[i] = saved - h;
        const double down = f();
        values[i] = saved;
        out[i] = (up - down) / (2.0 * h);
    }
    return out;
}

/// Largest entrywise relative error, with the denominator floored at 1e-3 of the
/// numeric gradient's largest magnitude so that near-zero entries compare absolutely.
inline double max_relative_error(std::span<const double> analytic, const std::vector<double>& numeric) {
    double scale = 0.0;
    for (double v : numeric) scale = std::max(scale, std::fabs(v));
    const double floor = std::max(1e-3 * scale, 1e-10);
    double worst = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
        const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric[i]), floor});
        worst = std::max(worst, std::fabs(analytic[i] - numeric[i]) / denom);
    }
    return worst;
}

inline ad::Tensor random_tensor(std::mt19937_64& rng, ad::Shape shape, double lo = -1.0, double hi = 1.0,
                                bool requires_grad = true) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(ad::numel(shape));
    for (auto& x : v) x = dist(rng);
    return ad::Tensor::from_vector(std::move(shape), std::move(v), requires_grad);
}

}  // namespace mimic::test
