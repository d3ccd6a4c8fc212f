// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0
//
// Tri-plane field representation on the cube [-1, 1]^3.
//
// Plane layout is channels x rows x columns (C x R x R). The three planes map
// world axes to (column, row) as
//
//     xy : column = x, row = y
//     yz : column = y, row = z
//     zx : column = z, row = x
//
// A world coordinate c in [-1, 1] maps to the continuous texel coordinate
// (c + 1) / 2 * R - 0.5, so texel i is centred at -1 + (2i + 1) / R. Lookups are
// bilinear with clamp-to-edge; points outside the cube are clamped onto it.

#pragma once

#include "mimic/tensor.hpp"

#include <array>
#include <random>

namespace mimic {

enum class Plane : std::size_t { kXY = 0, kYZ = 1, kZX = 2 };

inline constexpr std::array<Plane, 3> kPlanes = {Plane::kXY, Plane::kYZ, Plane::kZX};

const char* plane_name(Plane p);

/// World axes (0 = x, 1 = y, 2 = z) feeding a plane's column and row.
struct PlaneAxes {
    int column;
    int row;
};
PlaneAxes plane_axes(Plane p);

struct TriPlane {
    std::array<ad::Tensor, 3> planes;  // xy, yz, zx; each C x R x R

    const ad::Tensor& operator[](Plane p) const { return planes[static_cast<std::size_t>(p)]; }
    ad::Tensor& operator[](Plane p) { return planes[static_cast<std::size_t>(p)]; }

    std::size_t channels() const { return planes[0].size(0); }
    std::size_t resolution() const { return planes[0].size(1); }

    static TriPlane zeros(std::size_t channels, std::size_t resolution, bool requires_grad = false);
    /// Uniform values in [-scale, scale].
    static TriPlane random(std::size_t channels, std::size_t resolution, double scale, std::mt19937_64& rng,
                           bool requires_grad = true);

    /// Throws unless the three planes share C and R, are square and hold finite values.
    void validate() const;
};

/// Conditioning vector for the modulated convolutions.
struct StyleCode {
    ad::Tensor w;  // d_w

    std::size_t dim() const { return w.numel(); }
    static StyleCode random(std::size_t dim, std::mt19937_64& rng, bool requires_grad = true);
};

/// Texel-space coordinate of world coordinate `c` on a plane of resolution R.
double texel_coordinate(double c, std::size_t resolution);

/// Sum of the bilinear lookups on the three planes for each row of `points`
/// (N x 3). Returns N x C; differentiable with respect to the plane values only.
ad::Tensor sample_triplane(const TriPlane& tp, const ad::Tensor& points);

/// f = f_coarse + f_residual. Both must be N x C with identical shapes.
ad::Tensor compose(const ad::Tensor& coarse_features, const ad::Tensor& residual_features);

}  // namespace mimic
