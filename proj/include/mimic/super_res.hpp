// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0
//
// 3D super-resolution: maps a coarse tri-plane at R to a residual tri-plane at k*R.

#pragma once

#include "mimic/aware3d.hpp"
#include "mimic/triplane.hpp"

#include <random>
#include <vector>

namespace mimic {

/// log2(factor) blocks of [nearest x2 -> modulated 3x3 conv -> leaky_relu(0.2)],
/// shared by the three planes.
struct SuperRes3D {
    std::size_t factor = 2;
    std::vector<ModConvParams> blocks;

    /// Throws unless factor is a power of two >= 2.
    static SuperRes3D init(std::size_t channels, std::size_t d_w, std::size_t factor, std::mt19937_64& rng);
    std::vector<ad::Tensor> parameters() const;
};

std::size_t super_res_block_count(std::size_t factor);

TriPlane super_resolve_3d(const TriPlane& coarse, const StyleCode& w, const SuperRes3D& sr);

}  // namespace mimic
