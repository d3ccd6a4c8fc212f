// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0
//
// Multiview consistency metrics, image metrics, density grids and meshing.

#pragma once

#include "mimic/renderer.hpp"
#include "mimic/student.hpp"
#include "mimic/tensor.hpp"

#include <array>
#include <span>
#include <string>
#include <vector>

namespace mimic {

struct CameraPath {
    std::vector<CameraPose> poses;
    std::vector<std::string> labels;

    void validate() const;
};

/// V views with yaw evenly spaced over [-yaw_range, +yaw_range] (radians) at a fixed
/// pitch, all looking at the origin.
CameraPath yaw_sweep(std::size_t views, double yaw_range, double pitch, double radius, double fov_degrees,
                     std::size_t image_size);

/// Row v holds `samples` bilinear lookups of image v along the segment p0 -> p1,
/// given in pixel-index coordinates (pixel (u, v) sits at (u, v)). Result V x M x 3.
ad::Tensor spatiotemporal_texture(std::span<const ad::Tensor> images, std::array<double, 2> p0,
                                  std::array<double, 2> p1, std::size_t samples);

/// Mean squared difference between consecutive rows of a V x M x 3 strip.
double consistency_score(const ad::Tensor& strip);

inline constexpr double kPsnrCap = 99.0;

/// 10 log10(1 / mse) for unit-range images, capped at kPsnrCap.
double psnr(const ad::Tensor& a, const ad::Tensor& b);
/// Mean SSIM over channels and over every valid 11 x 11 Gaussian window
/// (sigma 1.5, k1 = 0.01, k2 = 0.03, dynamic range 1). Images must be >= 11 x 11.
double ssim(const ad::Tensor& a, const ad::Tensor& b);

/// Dense scalar grid over [-1, 1]^3 sampled at voxel centres, stored [z][y][x].
struct DensityGrid {
    std::size_t resolution = 0;
    std::vector<double> values;

    double at(std::size_t x, std::size_t y, std::size_t z) const {
        return values[(z * resolution + y) * resolution + x];
    }
    /// World coordinate of voxel centre i along any axis.
    double centre(std::size_t i) const { return -1.0 + (2.0 * double(i) + 1.0) / double(resolution); }
    double spacing() const { return 2.0 / double(resolution); }
};

/// Student density at voxel centres through the composed coarse + residual features.
DensityGrid density_grid(const StudentField& student, std::size_t resolution);
/// Any radiance field (for analytic scenes).
DensityGrid density_grid(const RadianceField& field, std::size_t resolution);

struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<std::uint32_t, 3>> triangles;

    void validate() const;
};

/// Marching cubes over the grid's voxel centres. Vertices sit on cell edges by linear
/// interpolation and are shared between neighbouring cells. Triangles wind
/// counter-clockwise seen from the side where the value is below `iso`, so for a
/// density grid normals point out of the dense region.
TriMesh marching_cubes(const DensityGrid& grid, double iso);

/// True when every undirected edge is used by exactly two triangles.
bool is_watertight(const TriMesh& mesh);

void write_obj(const std::string& path, const TriMesh& mesh);

}  // namespace mimic
