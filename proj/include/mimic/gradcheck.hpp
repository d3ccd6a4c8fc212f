// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference audit of every differentiable operation and of the full
// pixel pipeline (texel -> super-resolution -> decoder -> compositing).

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mimic {

struct GradcheckOptions {
    std::uint64_t seed = 0;
    std::size_t configs = 20;  // random configurations per operation
    double tolerance = 1e-4;   // on the max relative error
    /// Negates every analytic gradient before comparison; a working checker then
    /// fails every row.
    bool inject_sign_flip = false;
};

struct GradcheckRow {
    std::string op;
    std::size_t configs = 0;
    double max_rel_error = 0.0;
    bool passed = false;
};

struct GradcheckReport {
    std::vector<GradcheckRow> rows;
    double seconds = 0.0;

    bool passed() const;
};

/// Names of the audited operations, each exactly once, in report order.
std::vector<std::string> gradcheck_operations();

/// Runs every case in float64. The error of one configuration is
/// max_i |a_i - n_i| / max(|a_i|, |n_i|, 1e-3 * max_j |n_j|, 1e-10) over all leaves,
/// with n the central difference estimate.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

}  // namespace mimic
