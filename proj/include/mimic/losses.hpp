// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0
//
// Imitation and adversarial objectives.
//
// Sign convention (softplus f): the discriminator scores real patches high. It
// minimises f(-D(real)) + f(D(fake)) + R1; the generator minimises the
// non-saturating f(-D(fake)).

#pragma once

#include "mimic/tensor.hpp"

#include <random>
#include <vector>

namespace mimic {

struct LossConfig {
    double lambda_r1 = 1.0;
    std::size_t levels = 4;
    std::vector<double> level_weights{1.0, 0.5, 0.25, 0.125};
    bool imitation = true;
    bool adv3d = false;
    double imitation_weight = 1.0;
    double adv_weight = 1.0;

    void validate() const;
};

/// Gaussian-pyramid feature distance between two H x W x 3 images. Level 0 is the
/// image itself; level l + 1 is level l blurred by the 5-tap [1 4 6 4 1] / 16 kernel
/// (reflect padding) and decimated by 2. Each level's features are the RGB values
/// plus a gradient-magnitude channel sqrt(sum_c dx^2 + dy^2 + 1e-6) on the
/// (H - 1) x (W - 1) forward-difference grid; the level distance is the mean
/// absolute feature difference. Levels stop early once a side would drop below 2.
ad::Tensor perceptual_proxy(const ad::Tensor& a, const ad::Tensor& b, const LossConfig& config = {});

/// f(-score), averaged over scores.
ad::Tensor nonsat_gen_loss(const ad::Tensor& score_fake);
/// mean f(score_fake) + mean f(-score_real).
ad::Tensor disc_loss(const ad::Tensor& score_fake, const ad::Tensor& score_real);

/// Three stride-2 3x3 convolutions (zero padding, leaky_relu 0.2) followed by two
/// dense layers; maps a P x P x 3 patch to one score.
struct PatchDiscriminator {
    std::vector<ad::Tensor> conv_kernels;
    std::vector<ad::Tensor> conv_biases;
    ad::Tensor dense1_weight, dense1_bias;
    ad::Tensor dense2_weight, dense2_bias;
    std::size_t patch_size = 0;

    static PatchDiscriminator init(std::size_t patch_size, std::mt19937_64& rng, std::size_t width = 16,
                                   std::size_t hidden = 64);
    std::vector<ad::Tensor> parameters() const;
    /// Score of one patch, shape [] (scalar).
    ad::Tensor score(const ad::Tensor& patch) const;
};

/// lambda * ||dD/dx (real)||^2 with the input gradient recorded, so the result can
/// be differentiated with respect to the discriminator parameters.
ad::Tensor r1_penalty(const PatchDiscriminator& disc, const ad::Tensor& real_patch, double lambda);

struct LossTerms {
    ad::Tensor imitation;  // undefined when not computed
    ad::Tensor adv;
};

/// Weighted sum of the enabled generator terms; an enabled term must be defined.
ad::Tensor total_loss(const LossTerms& terms, const LossConfig& config);

}  // namespace mimic
