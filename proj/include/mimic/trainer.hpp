// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0
//
// Imitation fitting: the student renders patches that are pulled towards the
// teacher's (detached) images, optionally with a patch discriminator.

#pragma once

#include "mimic/losses.hpp"
#include "mimic/renderer.hpp"
#include "mimic/student.hpp"
#include "mimic/teacher.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace mimic {

struct AdamHyper {
    double lr = 2.5e-3;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double eps = 1e-8;
};

struct MetricsRow;

struct FitConfig {
    std::size_t image_size = 128;  // F
    std::size_t patch_size = 64;   // P
    std::size_t steps = 5000;
    std::size_t batch = 4;  // patches per step
    double orbit_radius = 2.7;
    double fov_degrees = 30.0;
    double yaw_range = 35.0 * M_PI / 180.0;    // yaw ~ U[-yaw_range, yaw_range]
    double pitch_range = 15.0 * M_PI / 180.0;  // pitch ~ U[-pitch_range, pitch_range]
    AdamHyper student_opt{2.5e-3, 0.9, 0.99, 1e-8};
    AdamHyper disc_opt{2e-3, 0.9, 0.99, 1e-8};
    LossConfig loss;
    RenderOptions render;
    OracleOptions teacher;
    std::size_t disc_width = 16;
    std::size_t disc_hidden = 64;
    std::size_t stage_a_steps = 0;       // coarse-only warm-up on full low-res frames
    std::size_t stage_a_resolution = 32;
    std::uint64_t seed = 0;
    std::string out_dir;                 // empty: no files written
    std::size_t checkpoint_every = 0;    // 0: final checkpoint only (when out_dir is set)
    std::size_t preview_every = 0;       // 0: no preview renders
    std::function<void(const MetricsRow&)> on_step;  // progress hook, called after every step

    void validate() const;
};

/// Uniform yaw and pitch within the configured ranges, looking at the origin.
CameraPose sample_view(const FitConfig& config, std::mt19937_64& rng);

/// Patch centre uniform over the frame, then clamped so the patch stays inside.
PatchSpec sample_patch(std::size_t full, std::size_t patch, std::mt19937_64& rng);

struct AdamState {
    std::vector<std::vector<double>> m, v;
    std::size_t t = 0;
};

/// One bias-corrected Adam update of every parameter in place. Parameters with no
/// entry in `grads` are treated as having zero gradient.
void adam_step(std::span<ad::Tensor> params, std::span<const ad::Tensor> grads, AdamState& state,
               const AdamHyper& hyper);

struct MetricsRow {
    std::size_t step = 0;
    double loss_total = 0.0;
    double loss_imit = 0.0;
    double loss_adv = 0.0;
    double loss_r1 = 0.0;
    double psnr_preview = 0.0;  // PSNR of this step's rendered patches against their targets
    double wallclock_s = 0.0;
};

struct FitResult {
    StudentField student;
    std::optional<PatchDiscriminator> discriminator;
    std::vector<MetricsRow> log;
};

/// Runs the optional stage A, then `config.steps` imitation steps. The input student
/// is not modified. Throws std::runtime_error on a non-finite loss (naming the step
/// and term) or when an output file cannot be written.
FitResult fit_imitation(const OracleScene& scene, const InconsistencySpec& inc, const StudentField& student,
                        const FitConfig& config);

/// Header plus one row per step; doubles at full round-trip precision.
void write_metrics_csv(const std::string& path, const std::vector<MetricsRow>& log);

/// Held-out evaluation views: a yaw sweep offset from the training draws.
std::vector<CameraPose> held_out_views(const FitConfig& config, std::size_t count);

}  // namespace mimic
