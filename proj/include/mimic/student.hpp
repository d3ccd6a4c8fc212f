// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0
//
// The optimisable 3D branch: coarse tri-plane, 3D super-resolution, optional
// 3D-aware refinement, decoder and style code.

#pragma once

#include "mimic/aware3d.hpp"
#include "mimic/decoder.hpp"
#include "mimic/field.hpp"
#include "mimic/super_res.hpp"
#include "mimic/triplane.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace mimic {

struct StudentConfig {
    std::size_t channels = 32;
    std::size_t coarse_resolution = 64;
    std::size_t factor = 2;  // residual resolution = factor * coarse_resolution
    std::size_t style_dim = 32;
    std::size_t hidden = 64;
    std::size_t depth = 2;
    std::size_t color_dim = 3;
    bool aware3d = false;
    double plane_init = 0.1;
    double density_bias = -1.0;
};

struct StudentField {
    TriPlane coarse;
    SuperRes3D super_res;
    std::optional<Aware3dParams> aware;
    DecoderParams decoder;
    StyleCode w;

    static StudentField init(const StudentConfig& config, std::uint64_t seed);

    std::size_t residual_resolution() const { return coarse.resolution() * super_res.factor; }
    /// Fixed order: coarse planes, super-res, aware3d, decoder, style.
    std::vector<ad::Tensor> parameters() const;
    /// Throws on inconsistent resolutions, widths or non-finite values.
    void validate() const;
    /// Deep copy with fresh leaves (same values, same requires_grad flags).
    StudentField clone() const;
};

/// A student evaluated once per forward pass: the effective coarse planes (after
/// the optional refinement coarse + aware3d_block(coarse)) and the residual planes.
class PreparedStudent final : public RadianceField {
public:
    /// With `coarse_only` the residual branch is skipped entirely.
    explicit PreparedStudent(const StudentField& student, bool coarse_only = false);

    FieldSample query(const ad::Tensor& points) const override;
    /// Composed features f = f^c + f^r (or f^c alone), N x C.
    ad::Tensor features(const ad::Tensor& points) const;

    const TriPlane& coarse() const { return coarse_; }
    const std::optional<TriPlane>& residual() const { return residual_; }

private:
    TriPlane coarse_;
    std::optional<TriPlane> residual_;
    const DecoderParams* decoder_;
};

}  // namespace mimic
