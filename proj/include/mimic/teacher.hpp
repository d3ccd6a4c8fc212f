// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0
//
// Analytic scenes and the teacher image source. The teacher is a dense-sampled
// reference render plus a deterministic per-view perturbation, so it is
// view-dependent in a way no single 3D field can reproduce.

#pragma once

#include "mimic/field.hpp"
#include "mimic/renderer.hpp"

#include <cstdint>
#include <string>

namespace mimic {

enum class SceneKind { kSphere, kTwoBlob, kStripedBox };

SceneKind parse_scene_kind(const std::string& name);
std::string scene_kind_name(SceneKind kind);

/// Closed-form density and albedo on [-1, 1]^3. Density is sigma_max times a
/// smoothstep rising over [-edge_width, +edge_width] across the primitive's
/// boundary, so it is exactly zero outside the primitive plus edge_width.
struct OracleScene final : RadianceField {
    SceneKind kind = SceneKind::kSphere;
    double radius = 0.6;  // sphere radius; blob radius is 0.6 * radius; box half-extent is radius
    double sigma_max = 40.0;
    double edge_width = 0.01;
    double texture_frequency = 6.0;

    double density(const Vec3& x) const;
    /// In [0.2, 0.8] per channel.
    Vec3 albedo(const Vec3& x) const;
    void validate() const;

    FieldSample query(const ad::Tensor& points) const override;
};

struct OracleOptions {
    std::size_t samples = 256;  // midpoint samples per ray across the cube
    Vec3 background{1.0, 1.0, 1.0};
};

struct OracleImage {
    ad::Tensor image;           // H x W x 3 constant
    std::vector<double> alpha;  // 1 - T_end per pixel
};

/// Dense midpoint-rule reference render of the whole frame.
OracleImage oracle_render(const OracleScene& scene, const CameraPose& cam, const OracleOptions& opts = {});

enum class InconsistencyMode { kNone, kTextureJitter, kWarp };

InconsistencyMode parse_inconsistency_mode(const std::string& name);
std::string inconsistency_mode_name(InconsistencyMode mode);

/// Per-view seed = hash(seed, bit patterns of the pose), so a pose always gets the
/// same perturbation and nearby poses get independent ones.
struct InconsistencySpec {
    InconsistencyMode mode = InconsistencyMode::kNone;
    double amplitude = 0.0;  // epsilon
    std::uint64_t seed = 0;
    double blur_sigma = 1.5;  // pixels; band limit of the jitter noise

    void validate() const;
};

std::uint64_t view_seed(const CameraPose& cam, std::uint64_t seed);

/// oracle_render followed by the view's perturbation, confined to the foreground:
///  - texture_jitter adds alpha * eps * n, n blurred Gaussian noise rescaled to unit
///    standard deviation per channel;
///  - warp resamples the clean image through a smooth displacement field of maximum
///    magnitude eps * F pixels and blends it in with weight alpha.
/// Results are clamped to [0, 1]. eps = 0 returns the clean render bitwise.
ad::Tensor teacher_image(const OracleScene& scene, const CameraPose& cam, const InconsistencySpec& inc,
                         const OracleOptions& opts = {});

/// Patch-sized crop of an F x F x 3 image, as a constant.
ad::Tensor crop(const ad::Tensor& image, const PatchSpec& patch);

}  // namespace mimic
