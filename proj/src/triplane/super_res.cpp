// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#include "mimic/super_res.hpp"

#include <stdexcept>
#include <string>

namespace mimic {

std::size_t super_res_block_count(std::size_t factor) {
    if (factor < 2 || (factor & (factor - 1)) != 0) {
        throw std::invalid_argument("super_resolve_3d: factor " + std::to_string(factor) +
                                    " is not a power of two >= 2");
    }
    std::size_t n = 0;
    while (factor > 1) {
        factor >>= 1;
        ++n;
    }
    return n;
}

SuperRes3D SuperRes3D::init(std::size_t channels, std::size_t d_w, std::size_t factor, std::mt19937_64& rng) {
    SuperRes3D sr;
    sr.factor = factor;
    const std::size_t n = super_res_block_count(factor);
    for (std::size_t i = 0; i < n; ++i) sr.blocks.push_back(ModConvParams::init(channels, channels, d_w, rng));
    return sr;
}

std::vector<ad::Tensor> SuperRes3D::parameters() const {
    std::vector<ad::Tensor> out;
    for (const auto& b : blocks) {
        auto p = b.parameters();
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

TriPlane super_resolve_3d(const TriPlane& coarse, const StyleCode& w, const SuperRes3D& sr) {
    if (sr.blocks.size() != super_res_block_count(sr.factor)) {
        throw std::invalid_argument("super_resolve_3d: " + std::to_string(sr.blocks.size()) +
                                    " blocks for factor " + std::to_string(sr.factor));
    }
    TriPlane out;
    for (std::size_t p = 0; p < 3; ++p) {
        auto x = coarse.planes[p];
        for (const auto& block : sr.blocks) x = ad::leaky_relu(modulated_conv2d(upsample_nearest2x(x), block, w), 0.2);
        out.planes[p] = x;
    }
    return out;
}

}  // namespace mimic
