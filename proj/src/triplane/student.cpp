// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#include "mimic/student.hpp"

#include "mimic/ops.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mimic {

namespace {

ad::Tensor copy_leaf(const ad::Tensor& t) {
    auto c = t.clone();
    if (t.requires_grad()) c.set_requires_grad(true);
    return c;
}

ModConvParams copy_params(const ModConvParams& p) {
    ModConvParams out = p;
    out.kernel = copy_leaf(p.kernel);
    out.affine_weight = copy_leaf(p.affine_weight);
    if (p.affine_bias.defined()) out.affine_bias = copy_leaf(p.affine_bias);
    return out;
}

}  // namespace

StudentField StudentField::init(const StudentConfig& config, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    StudentField s;
    s.coarse = TriPlane::random(config.channels, config.coarse_resolution, config.plane_init, rng, true);
    s.super_res = SuperRes3D::init(config.channels, config.style_dim, config.factor, rng);
    if (config.aware3d) s.aware = Aware3dParams::init(config.channels, config.style_dim, rng);
    s.decoder = DecoderParams::init(config.channels, config.hidden, config.depth, config.color_dim, rng,
                                    config.density_bias);
    s.w = StyleCode::random(config.style_dim, rng, true);
    return s;
}

std::vector<ad::Tensor> StudentField::parameters() const {
    std::vector<ad::Tensor> out(coarse.planes.begin(), coarse.planes.end());
    auto append = [&out](const std::vector<ad::Tensor>& v) { out.insert(out.end(), v.begin(), v.end()); };
    append(super_res.parameters());
    if (aware) append(aware->parameters());
    append(decoder.parameters());
    out.push_back(w.w);
    return out;
}

void StudentField::validate() const {
    coarse.validate();
    decoder.validate();
    if (decoder.input_dim() != coarse.channels()) {
        throw std::invalid_argument("student: decoder expects " + std::to_string(decoder.input_dim()) +
                                    " features, tri-plane has " + std::to_string(coarse.channels()));
    }
    if (decoder.color_dim < 3) throw std::invalid_argument("student: color_dim must be >= 3");
    if (super_res.blocks.size() != super_res_block_count(super_res.factor)) {
        throw std::invalid_argument("student: super-resolution block count does not match factor");
    }
    for (const auto& b : super_res.blocks) {
        if (b.in_channels() != coarse.channels() || b.out_channels() != coarse.channels()) {
            throw std::invalid_argument("student: super-resolution width mismatch");
        }
    }
    for (const auto& p : parameters()) {
        for (double v : p.data()) {
            if (!std::isfinite(v)) throw std::invalid_argument("student: non-finite parameter");
        }
    }
}

StudentField StudentField::clone() const {
    StudentField s;
    for (std::size_t p = 0; p < 3; ++p) s.coarse.planes[p] = copy_leaf(coarse.planes[p]);
    s.super_res.factor = super_res.factor;
    for (const auto& b : super_res.blocks) s.super_res.blocks.push_back(copy_params(b));
    if (aware) {
        Aware3dParams a;
        for (std::size_t i = 0; i < 3; ++i) a.conv[i] = copy_params(aware->conv[i]);
        s.aware = a;
    }
    s.decoder.color_dim = decoder.color_dim;
    for (const auto& t : decoder.weights) s.decoder.weights.push_back(copy_leaf(t));
    for (const auto& t : decoder.biases) s.decoder.biases.push_back(copy_leaf(t));
    s.w.w = copy_leaf(w.w);
    return s;
}

PreparedStudent::PreparedStudent(const StudentField& student, bool coarse_only)
    : coarse_(student.coarse), decoder_(&student.decoder) {
    if (student.aware) {
        const auto refined = aware3d_block(student.coarse, student.w, *student.aware);
        for (std::size_t p = 0; p < 3; ++p) coarse_.planes[p] = ad::add(student.coarse.planes[p], refined.planes[p]);
    }
    if (!coarse_only) residual_ = super_resolve_3d(coarse_, student.w, student.super_res);
}

ad::Tensor PreparedStudent::features(const ad::Tensor& points) const {
    auto f = sample_triplane(coarse_, points);
    if (residual_) f = compose(f, sample_triplane(*residual_, points));
    return f;
}

FieldSample PreparedStudent::query(const ad::Tensor& points) const {
    auto out = decode(*decoder_, features(points));
    if (decoder_->color_dim > 3) out.color = ad::slice(out.color, 1, 0, 3);
    return {out.color, out.sigma};
}

}  // namespace mimic
