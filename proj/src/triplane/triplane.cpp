// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#include "mimic/triplane.hpp"

#include "mimic/ops.hpp"
#include "mimic/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace mimic {

namespace {

constexpr std::size_t kTaps = 4;

// Bilinear footprint of every point on every plane: texel offsets (row * R + col)
// and weights, indexed [(point * 3 + plane) * 4 + tap].
struct Footprint {
    std::vector<std::uint32_t> offset;
    std::vector<double> weight;
};

void bilinear_taps(double u, double v, std::size_t r, std::uint32_t* off, double* wt) {
    const double pu = texel_coordinate(u, r);
    const double pv = texel_coordinate(v, r);
    const double fu = std::floor(pu);
    const double fv = std::floor(pv);
    const double au = pu - fu;
    const double av = pv - fv;
    const auto last = static_cast<long>(r) - 1;
    const auto clampi = [last](long i) { return static_cast<std::uint32_t>(std::clamp(i, 0L, last)); };
    const std::uint32_t u0 = clampi(static_cast<long>(fu));
    const std::uint32_t u1 = clampi(static_cast<long>(fu) + 1);
    const std::uint32_t v0 = clampi(static_cast<long>(fv));
    const std::uint32_t v1 = clampi(static_cast<long>(fv) + 1);
    const auto rr = static_cast<std::uint32_t>(r);
    off[0] = v0 * rr + u0;
    off[1] = v0 * rr + u1;
    off[2] = v1 * rr + u0;
    off[3] = v1 * rr + u1;
    wt[0] = (1.0 - au) * (1.0 - av);
    wt[1] = au * (1.0 - av);
    wt[2] = (1.0 - au) * av;
    wt[3] = au * av;
}

// Channel-last copy (R*R x C) of a C x R x R plane so one tap reads C contiguous values.
std::vector<double> to_channel_last(std::span<const double> plane, std::size_t c, std::size_t rr) {
    std::vector<double> out(plane.size());
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t t = 0; t < rr; ++t) out[t * c + ch] = plane[ch * rr + t];
    }
    return out;
}

}  // namespace

const char* plane_name(Plane p) {
    switch (p) {
        case Plane::kXY: return "xy";
        case Plane::kYZ: return "yz";
        case Plane::kZX: return "zx";
    }
    return "?";
}

PlaneAxes plane_axes(Plane p) {
    switch (p) {
        case Plane::kXY: return {0, 1};
        case Plane::kYZ: return {1, 2};
        case Plane::kZX: return {2, 0};
    }
    throw std::invalid_argument("plane_axes: invalid plane");
}

TriPlane TriPlane::zeros(std::size_t channels, std::size_t resolution, bool requires_grad) {
    TriPlane tp;
    for (auto& p : tp.planes) p = ad::Tensor::zeros({channels, resolution, resolution}, requires_grad);
    return tp;
}

TriPlane TriPlane::random(std::size_t channels, std::size_t resolution, double scale, std::mt19937_64& rng,
                          bool requires_grad) {
    std::uniform_real_distribution<double> dist(-scale, scale);
    TriPlane tp;
    for (auto& p : tp.planes) {
        std::vector<double> v(channels * resolution * resolution);
        for (auto& x : v) x = dist(rng);
        p = ad::Tensor::from_vector({channels, resolution, resolution}, std::move(v), requires_grad);
    }
    return tp;
}

void TriPlane::validate() const {
    for (const auto& p : planes) {
        if (!p.defined()) throw std::invalid_argument("triplane: undefined plane");
        if (p.dim() != 3 || p.size(1) != p.size(2)) {
            throw std::invalid_argument("triplane: plane shape " + ad::to_string(p.shape()) + " is not C x R x R");
        }
        if (p.shape() != planes[0].shape()) {
            throw std::invalid_argument("triplane: plane shapes " + ad::to_string(planes[0].shape()) + " and " +
                                        ad::to_string(p.shape()) + " differ");
        }
        for (double v : p.data()) {
            if (!std::isfinite(v)) throw std::invalid_argument("triplane: non-finite plane value");
        }
    }
    if (planes[0].size(1) == 0 || planes[0].size(0) == 0) throw std::invalid_argument("triplane: empty planes");
}

StyleCode StyleCode::random(std::size_t dim, std::mt19937_64& rng, bool requires_grad) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(dim);
    for (auto& x : v) x = dist(rng);
    return {ad::Tensor::from_vector({dim}, std::move(v), requires_grad)};
}

double texel_coordinate(double c, std::size_t resolution) {
    const double clamped = std::clamp(c, -1.0, 1.0);
    return (clamped + 1.0) * 0.5 * static_cast<double>(resolution) - 0.5;
}

ad::Tensor sample_triplane(const TriPlane& tp, const ad::Tensor& points) {
    if (points.dim() != 2 || points.size(1) != 3) {
        throw std::invalid_argument("sample_triplane: points must be N x 3, got " + ad::to_string(points.shape()));
    }
    for (const auto& p : tp.planes) {
        if (p.dim() != 3 || p.shape() != tp.planes[0].shape() || p.size(1) != p.size(2)) {
            throw std::invalid_argument("sample_triplane: inconsistent plane shapes");
        }
    }
    const std::size_t n = points.size(0);
    const std::size_t c = tp.channels();
    const std::size_t r = tp.resolution();
    const std::size_t rr = r * r;

    auto fp = std::make_shared<Footprint>();
    fp->offset.resize(n * 3 * kTaps);
    fp->weight.resize(n * 3 * kTaps);
    const auto pts = points.data();
    parallel::parallel_for(n, 256, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const double* x = &pts[i * 3];
            for (std::size_t p = 0; p < 3; ++p) {
                const auto axes = plane_axes(kPlanes[p]);
                const std::size_t k = (i * 3 + p) * kTaps;
                bilinear_taps(x[axes.column], x[axes.row], r, &fp->offset[k], &fp->weight[k]);
            }
        }
    });

    std::array<std::vector<double>, 3> cl;
    for (std::size_t p = 0; p < 3; ++p) cl[p] = to_channel_last(tp.planes[p].data(), c, rr);

    std::vector<double> out(n * c, 0.0);
    parallel::parallel_for(n, 64, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            double* o = &out[i * c];
            for (std::size_t p = 0; p < 3; ++p) {
                const std::size_t k = (i * 3 + p) * kTaps;
                for (std::size_t t = 0; t < kTaps; ++t) {
                    const double wgt = fp->weight[k + t];
                    const double* src = &cl[p][static_cast<std::size_t>(fp->offset[k + t]) * c];
                    for (std::size_t ch = 0; ch < c; ++ch) o[ch] += wgt * src[ch];
                }
            }
        }
    });

    auto backward = [fp, n, c, r, rr](const ad::Tensor& grad) -> std::vector<ad::Tensor> {
        const auto g = grad.data();
        std::array<std::vector<double>, 3> acc;
        for (auto& a : acc) a.assign(rr * c, 0.0);
        // Each chunk owns a channel range, so scatter writes never collide and every
        // texel sums its contributions in point order.
        parallel::parallel_for(c, 1, [&](std::size_t cb, std::size_t ce) {
            for (std::size_t i = 0; i < n; ++i) {
                const double* gi = &g[i * c];
                for (std::size_t p = 0; p < 3; ++p) {
                    const std::size_t k = (i * 3 + p) * kTaps;
                    for (std::size_t t = 0; t < kTaps; ++t) {
                        const double wgt = fp->weight[k + t];
                        if (wgt == 0.0) continue;
                        double* dst = &acc[p][static_cast<std::size_t>(fp->offset[k + t]) * c];
                        for (std::size_t ch = cb; ch < ce; ++ch) dst[ch] += wgt * gi[ch];
                    }
                }
            }
        });
        std::vector<ad::Tensor> grads;
        for (std::size_t p = 0; p < 3; ++p) {
            std::vector<double> planar(rr * c);
            for (std::size_t t = 0; t < rr; ++t) {
                for (std::size_t ch = 0; ch < c; ++ch) planar[ch * rr + t] = acc[p][t * c + ch];
            }
            grads.push_back(ad::Tensor::from_vector({c, r, r}, std::move(planar)));
        }
        return grads;
    };
    return ad::make_op_result("sample_triplane", {n, c}, std::move(out),
                              {tp.planes[0], tp.planes[1], tp.planes[2]}, std::move(backward));
}

ad::Tensor compose(const ad::Tensor& coarse_features, const ad::Tensor& residual_features) {
    if (coarse_features.shape() != residual_features.shape()) {
        throw std::invalid_argument("compose: shapes " + ad::to_string(coarse_features.shape()) + " and " +
                                    ad::to_string(residual_features.shape()) + " differ");
    }
    return ad::add(coarse_features, residual_features);
}

}  // namespace mimic
