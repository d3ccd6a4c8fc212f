// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0
//
// Pinhole cameras, ray sampling and differentiable volume compositing.
//
// Camera frame: x right, y up, looking along -z. Pixel (u, v) has its centre at
// (u + 0.5, v + 0.5) with v growing downwards, so its camera-space direction is
// ((u + 0.5 - cx) / f, -(v + 0.5 - cy) / f, -1) before normalisation. A world
// point is R * p_cam + t; t is the camera centre.
//
// Images are row-major H x W x 3 tensors.

#pragma once

#include "mimic/field.hpp"
#include "mimic/student.hpp"
#include "mimic/tensor.hpp"

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace mimic {

using Vec3 = std::array<double, 3>;

struct CameraPose {
    std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major, camera-to-world
    Vec3 translation{0, 0, 0};
    double focal = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    std::size_t image_size = 1;  // F; images are F x F

    /// Camera at `eye` looking at `target` with world `up` projected into the image plane.
    static CameraPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                              std::size_t image_size);
    /// Eye at radius * (sin(yaw) cos(pitch), sin(pitch), cos(yaw) cos(pitch)) looking at
    /// the origin with +y up; yaw = pitch = 0 gives rotation I and eye (0, 0, radius).
    static CameraPose orbit(double radius, double yaw, double pitch, double fov_degrees, std::size_t image_size);

    Vec3 axis(int column) const { return {rotation[column], rotation[3 + column], rotation[6 + column]}; }
    /// Throws unless the rotation is orthonormal with det +1 and focal > 0.
    void validate() const;
};

struct PatchSpec {
    std::size_t u0 = 0;
    std::size_t v0 = 0;
    std::size_t size = 1;  // P
    std::size_t full = 1;  // F

    static PatchSpec whole(std::size_t f) { return {0, 0, f, f}; }
    void validate() const;
};

/// Rays with a ragged set of samples: ray i owns samples [offsets[i], offsets[i+1]).
/// Rays that miss the unit cube have near == far == 0 and no samples.
struct RayBatch {
    std::vector<double> origins;     // N x 3
    std::vector<double> directions;  // N x 3, unit norm
    std::vector<double> near;        // N
    std::vector<double> far;         // N
    std::vector<std::uint8_t> hit;   // N
    std::vector<std::uint64_t> pixel;  // v * F + u in the full image; keys the per-ray streams
    std::vector<std::size_t> offsets{0};
    std::vector<double> t;      // sorted within each ray
    std::vector<double> delta;  // t[i+1] - t[i], last = far - t[last]

    std::size_t size() const { return near.size(); }
    std::size_t samples() const { return t.size(); }
    std::size_t samples_of(std::size_t ray) const { return offsets[ray + 1] - offsets[ray]; }
    /// Sample positions origin + t * direction, M x 3 constant.
    ad::Tensor points() const;
};

/// Entry and exit distances of a ray through [-1, 1]^3, clamped to t >= 0;
/// returns false on a miss.
bool intersect_unit_cube(const Vec3& origin, const Vec3& direction, double& t_near, double& t_far);

/// One ray per pixel of the patch through the pixel centre, with cube bounds.
RayBatch generate_rays(const CameraPose& cam, const PatchSpec& patch);

/// Rays for the pixel rectangle [u0, u0 + width) x [v0, v0 + height).
RayBatch generate_rays(const CameraPose& cam, std::size_t u0, std::size_t v0, std::size_t width,
                       std::size_t height);

/// One uniform draw per equal-width bin of every hit ray's [near, far]. Each ray
/// draws from its own stream keyed by (seed, pixel), so crops and chunks agree.
void stratified_sample(RayBatch& rays, std::size_t s1, std::uint64_t seed);
/// Overrides every ray's bounds with [near, far] (and marks it hit) first.
void stratified_sample(RayBatch& rays, double near, double far, std::size_t s1, std::uint64_t seed);

/// n inverse-CDF draws from the density on [near, far] that is constant on each of
/// weights.size() equal bins, with bin mass proportional to weights[i] + floor.
std::vector<double> sample_piecewise_constant(double near, double far, std::span<const double> weights,
                                              std::size_t n, std::mt19937_64& rng, double floor = 1e-5);

/// `rays` must hold the stratified samples (sample i in bin i of S1 equal bins).
/// Draws S2 depths per ray by inverse CDF from the piecewise-constant density over
/// those bins with mass proportional to weights + floor, merges them with the
/// coarse depths, sorts, collapses gaps <= 1e-12 and recomputes delta.
RayBatch importance_sample(const RayBatch& rays, std::span<const double> weights, std::size_t s2,
                           std::uint64_t seed, double floor = 1e-5);

/// Recomputes delta from sorted t and per-ray far.
void update_deltas(RayBatch& rays);

struct Composite {
    ad::Tensor pixel;    // N x 3
    ad::Tensor weights;  // M (ragged) or N x S
    ad::Tensor t_end;    // N
};

/// w_i = T_i (1 - exp(-sigma_i delta_i)), T_i = exp(-sum_{j<i} sigma_j delta_j),
/// pixel = sum w_i c_i, t_end = T after the last sample. Differentiable in color
/// (M x 3) and sigma (M); delta is constant. First order only.
Composite composite(const ad::Tensor& color, const ad::Tensor& sigma, std::span<const double> delta,
                    std::span<const std::size_t> offsets);
/// Rectangular form: color N x S x 3, sigma N x S, delta N x S.
Composite composite(const ad::Tensor& color, const ad::Tensor& sigma, const ad::Tensor& delta);

struct RenderOptions {
    std::size_t coarse_samples = 48;
    std::size_t fine_samples = 48;
    Vec3 background{1.0, 1.0, 1.0};
    double importance_floor = 1e-5;
    std::uint64_t seed = 0;
    std::size_t chunk_rows = 0;  // rows per chunk when no gradient is recorded; 0 = whole patch
};

struct RenderOutput {
    ad::Tensor image;           // P x P x 3, background composited
    std::vector<double> depth;  // expected depth per pixel
    std::vector<double> opacity;  // sum of weights per pixel
};

/// Stratified proposal pass (no tape), importance resampling, then the recorded
/// final pass on the merged depths.
RenderOutput render(const RadianceField& field, const CameraPose& cam, const PatchSpec& patch,
                    const RenderOptions& opts);

/// Stratified + importance depths for a patch; the proposal pass records no tape.
RayBatch plan_samples(const RadianceField& field, const CameraPose& cam, const PatchSpec& patch,
                      const RenderOptions& opts);

/// Recorded final pass over fixed rays laid out row-major with `width` columns.
RenderOutput render_planned(const RadianceField& field, const RayBatch& rays, std::size_t width,
                            const Vec3& background);

ad::Tensor render_patch(const StudentField& student, const CameraPose& cam, const PatchSpec& patch,
                        const RenderOptions& opts);

struct DepthMap {
    std::size_t width = 0;
    std::vector<double> depth;
    std::vector<std::uint8_t> valid;  // sum of weights >= 0.01
};

DepthMap render_depth(const RadianceField& field, const CameraPose& cam, const PatchSpec& patch,
                      const RenderOptions& opts);
DepthMap render_depth(const StudentField& student, const CameraPose& cam, const PatchSpec& patch,
                      const RenderOptions& opts);

}  // namespace mimic
