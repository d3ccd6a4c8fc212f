// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0
//
// Planar convolutions and the 3D-aware block.
//
// Feature maps are C x H x W. Convolutions lower to im2col (a gather with a fixed
// index map) followed by matmul, so every path here is twice differentiable.
//
// Cross-plane alignment. For a target plane every auxiliary plane is mean-pooled
// over the target's missing world axis and repeated so that pixel (row, col) of
// each channel block refers to the same 3D column. With the plane conventions of
// triplane.hpp (xy: col x / row y, yz: col y / row z, zx: col z / row x):
//
//     target xy  [P_xy | mean_z P_yz -> rows y | mean_z P_zx -> cols x]
//     target yz  [P_yz | mean_x P_zx -> rows z | mean_x P_xy -> cols y]
//     target zx  [P_zx | mean_y P_xy -> rows x | mean_y P_yz -> cols z]
//
// The first auxiliary block is the next plane in xy -> yz -> zx order, pooled over
// its rows; the second is the one after, pooled over its columns.

#pragma once

#include "mimic/ops.hpp"
#include "mimic/triplane.hpp"

#include <array>
#include <random>
#include <vector>

namespace mimic {

enum class Padding { kZero, kReflect };

/// im2col index map for a k x k window: (C*k*k) x (Ho*Wo) entries into a C x H x W
/// input, -1 marking zero padding. Maps are cached per geometry.
ad::IndexMap im2col_map(std::size_t c, std::size_t h, std::size_t w, std::size_t k, std::size_t stride,
                        Padding padding);

/// x: C_in x H x W, kernel: C_out x C_in x k x k (odd k, padding k/2), bias: C_out or undefined.
ad::Tensor conv2d(const ad::Tensor& x, const ad::Tensor& kernel, const ad::Tensor& bias, std::size_t stride,
                  Padding padding);

/// Nearest-neighbour x2 upsampling of a C x H x W map.
ad::Tensor upsample_nearest2x(const ad::Tensor& x);

struct ModConvParams {
    ad::Tensor kernel;         // C_out x C_in x 3 x 3
    ad::Tensor affine_weight;  // C_in x d_w
    ad::Tensor affine_bias;    // C_in, or undefined for a linear affine map
    bool demodulate = true;
    double demod_eps = 1e-8;

    std::size_t in_channels() const { return kernel.size(1); }
    std::size_t out_channels() const { return kernel.size(0); }

    /// Kernel and affine weights uniform in +-1/sqrt(fan_in); affine bias 1.
    static ModConvParams init(std::size_t c_in, std::size_t c_out, std::size_t d_w, std::mt19937_64& rng);
    std::vector<ad::Tensor> parameters() const;
};

/// Per-input-channel style s = affine_weight * w + affine_bias.
ad::Tensor modulation_scales(const ModConvParams& p, const StyleCode& w);

/// 3x3 modulated convolution with reflect padding; output C_out x H x W.
ad::Tensor modulated_conv2d(const ad::Tensor& x, const ModConvParams& p, const StyleCode& w);

enum class PoolAxis { kRows, kCols };

/// Mean over `pooled` then repetition along the same axis, so the result is
/// constant along it. With `transpose` the surviving profile is laid along the
/// other axis instead: pooled rows then give out[c, i, j] = mean_r plane[c, r, i].
ad::Tensor axis_pool_repeat(const ad::Tensor& plane, PoolAxis pooled, bool transpose);

/// Channel stack [target | first auxiliary | second auxiliary], 3C x R x R.
ad::Tensor aware3d_align(const TriPlane& tp, Plane target);

struct Aware3dParams {
    std::array<ModConvParams, 3> conv;  // per target plane, 3C -> C

    static Aware3dParams init(std::size_t channels, std::size_t d_w, std::mt19937_64& rng);
    std::vector<ad::Tensor> parameters() const;
};

/// For every target: aware3d_align -> modulated_conv2d -> leaky_relu(0.2).
TriPlane aware3d_block(const TriPlane& tp, const StyleCode& w, const Aware3dParams& params);

/// Control without cross-plane input: each plane passes through its own C -> C
/// modulated conv (taken from the first C input channels of `params`).
TriPlane per_plane_block(const TriPlane& tp, const StyleCode& w, const Aware3dParams& params);

}  // namespace mimic
