// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#include "fd_oracle.hpp"

#include "mimic/backward.hpp"
#include "mimic/ops.hpp"
#include "mimic/super_res.hpp"
#include "mimic/triplane.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mimic;
using ad::Tensor;

namespace {

// Scalar bilinear lookup written from the texel-centre definition: clamp the
// continuous texel coordinate into [0, R-1] and blend the two neighbours.
double oracle_bilinear(const Tensor& plane, std::size_t ch, double col_coord, double row_coord) {
    const std::size_t r = plane.size(1);
    auto texel = [r](double c) {
        c = std::min(1.0, std::max(-1.0, c));
        return std::min(double(r - 1), std::max(0.0, (c + 1.0) / 2.0 * double(r) - 0.5));
    };
    const double pu = texel(col_coord), pv = texel(row_coord);
    const auto u0 = static_cast<std::size_t>(pu), v0 = static_cast<std::size_t>(pv);
    const std::size_t u1 = std::min(u0 + 1, r - 1), v1 = std::min(v0 + 1, r - 1);
    const double a = pu - double(u0), b = pv - double(v0);
    auto at = [&](std::size_t v, std::size_t u) { return plane.data()[(ch * r + v) * r + u]; };
    return (1 - a) * (1 - b) * at(v0, u0) + a * (1 - b) * at(v0, u1) + (1 - a) * b * at(v1, u0) + a * b * at(v1, u1);
}

double oracle_feature(const TriPlane& tp, std::size_t ch, double x, double y, double z) {
    return oracle_bilinear(tp.planes[0], ch, x, y) + oracle_bilinear(tp.planes[1], ch, y, z) +
           oracle_bilinear(tp.planes[2], ch, z, x);
}

Tensor points_from(std::vector<double> xyz) {
    const auto n = xyz.size() / 3;
    return Tensor::from_vector({n, 3}, std::move(xyz));
}

double centre(std::size_t i, std::size_t r) { return -1.0 + (2.0 * double(i) + 1.0) / double(r); }

}  // namespace

TEST(SampleTriplane, ZeroPlanesGiveZeroFeatures) {
    const auto tp = TriPlane::zeros(5, 8);
    const auto f = sample_triplane(tp, points_from({0.3, -0.2, 0.9, 2.0, -3.0, 0.0}));
    ASSERT_EQ(f.shape(), (ad::Shape{2, 5}));
    for (double v : f.data()) EXPECT_EQ(v, 0.0);
}

TEST(SampleTriplane, TexelCentreReturnsTexelSum) {
    std::mt19937_64 rng(3);
    const std::size_t r = 4, c = 3;
    const auto tp = TriPlane::random(c, r, 1.0, rng, false);
    const std::size_t i = 1, j = 2, k = 3;  // x, y, z texel indices
    const auto f = sample_triplane(tp, points_from({centre(i, r), centre(j, r), centre(k, r)}));
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double expect = tp.planes[0].data()[(ch * r + j) * r + i] + tp.planes[1].data()[(ch * r + k) * r + j] +
                              tp.planes[2].data()[(ch * r + i) * r + k];
        EXPECT_NEAR(f[ch], expect, 1e-15);
    }
}

TEST(SampleTriplane, MatchesScalarBilinearOracle) {
    std::mt19937_64 rng(11);
    const auto tp = TriPlane::random(4, 7, 1.0, rng, false);
    std::uniform_real_distribution<double> coord(-1.2, 1.2);  // includes out-of-cube points
    std::vector<double> xyz(3000);
    for (auto& v : xyz) v = coord(rng);
    const auto f = sample_triplane(tp, points_from(xyz));
    double worst = 0.0;
    for (std::size_t n = 0; n < 1000; ++n) {
        for (std::size_t ch = 0; ch < 4; ++ch) {
            const double expect = oracle_feature(tp, ch, xyz[3 * n], xyz[3 * n + 1], xyz[3 * n + 2]);
            worst = std::max(worst, std::fabs(f[n * 4 + ch] - expect));
        }
    }
    EXPECT_LT(worst, 1e-12);
}

TEST(SampleTriplane, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        auto tp = TriPlane::random(2, 4, 1.0, rng, true);
        const auto pts = test::random_tensor(rng, {12, 3}, -1.1, 1.1, false);
        const auto weights = test::random_tensor(rng, {12, 2}, -1.0, 1.0, false);
        auto loss = [&] { return ad::sum_all(ad::mul(sample_triplane(tp, pts), weights)); };
        const auto g = ad::backward(loss());
        for (auto& p : tp.planes) {
            const auto numeric = test::numeric_gradient([&] { return loss().item(); }, p);
            EXPECT_LT(test::max_relative_error(g.of(p).data(), numeric), 1e-5);
        }
    }
}

TEST(SampleTriplane, TexelPerturbationIsLocal) {
    std::mt19937_64 rng(8);
    const std::size_t r = 8;
    auto tp = TriPlane::random(1, r, 1.0, rng, false);
    std::uniform_real_distribution<double> coord(-1.0, 1.0);
    std::vector<double> xyz(3 * 2000);
    for (auto& v : xyz) v = coord(rng);
    const auto pts = points_from(xyz);
    const auto before = sample_triplane(tp, pts);
    const std::size_t row = 3, col = 5;  // texel on P_yz: col = y, row = z
    tp.planes[1].mutable_data()[row * r + col] += 1.0;
    const auto after = sample_triplane(tp, pts);
    const double spacing = 2.0 / double(r);
    for (std::size_t n = 0; n < 2000; ++n) {
        const double dy = std::fabs(xyz[3 * n + 1] - centre(col, r));
        const double dz = std::fabs(xyz[3 * n + 2] - centre(row, r));
        if (dy >= spacing || dz >= spacing) EXPECT_EQ(before[n], after[n]) << "point " << n;
    }
}

TEST(SampleTriplane, AffineAlongAxisInsideOneCell) {
    std::mt19937_64 rng(9);
    const std::size_t r = 6;
    const auto tp = TriPlane::random(3, r, 1.0, rng, false);
    // Segment along x strictly between texel centres 2 and 3; y and z fixed.
    const double a = centre(2, r) + 0.01, b = centre(3, r) - 0.01, y = 0.17, z = -0.41;
    const auto f = sample_triplane(tp, points_from({a, y, z, b, y, z, 0.5 * (a + b), y, z, 0.75 * a + 0.25 * b, y, z}));
    for (std::size_t ch = 0; ch < 3; ++ch) {
        EXPECT_NEAR(f[2 * 3 + ch], 0.5 * (f[ch] + f[3 + ch]), 1e-14);
        EXPECT_NEAR(f[3 * 3 + ch], 0.75 * f[ch] + 0.25 * f[3 + ch], 1e-14);
    }
}

TEST(Compose, IdentityCancellationAndGradientSplit) {
    std::mt19937_64 rng(2);
    auto coarse = test::random_tensor(rng, {4, 3});
    auto resid = Tensor::zeros({4, 3}, true);
    const auto same = compose(coarse, resid);
    for (std::size_t i = 0; i < 12; ++i) EXPECT_EQ(same[i], coarse[i]);

    const auto cancel = compose(coarse, ad::neg(coarse));
    for (double v : cancel.data()) EXPECT_EQ(v, 0.0);

    const auto g = ad::backward(ad::sum_all(compose(coarse, resid)));
    for (std::size_t i = 0; i < 12; ++i) {
        EXPECT_EQ(g.of(coarse)[i], 1.0);
        EXPECT_EQ(g.of(resid)[i], 1.0);
    }
    EXPECT_THROW(compose(coarse, Tensor::zeros({3, 4})), std::invalid_argument);
}

TEST(SuperResolve, ShapeContractAndFactorValidation) {
    std::mt19937_64 rng(4);
    const auto coarse = TriPlane::random(3, 5, 0.5, rng, false);
    const auto w = StyleCode::random(6, rng, false);
    for (std::size_t k : {2, 4}) {
        const auto sr = SuperRes3D::init(3, 6, k, rng);
        const auto out = super_resolve_3d(coarse, w, sr);
        for (const auto& p : out.planes) EXPECT_EQ(p.shape(), (ad::Shape{3, 5 * k, 5 * k}));
        out.validate();
    }
    EXPECT_THROW(SuperRes3D::init(3, 6, 3, rng), std::invalid_argument);
    EXPECT_THROW(SuperRes3D::init(3, 6, 1, rng), std::invalid_argument);
}

TEST(SuperResolve, ZeroKernelsGiveZeroResidual) {
    std::mt19937_64 rng(6);
    const auto coarse = TriPlane::random(2, 4, 0.5, rng, false);
    const auto w = StyleCode::random(3, rng, false);
    auto sr = SuperRes3D::init(2, 3, 4, rng);
    for (auto& b : sr.blocks) b.kernel = Tensor::zeros(b.kernel.shape(), true);
    const auto out = super_resolve_3d(coarse, w, sr);
    for (const auto& p : out.planes) {
        for (double v : p.data()) EXPECT_EQ(v, 0.0);
    }
}

TEST(SuperResolve, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 4; ++trial) {
        auto coarse = TriPlane::random(2, 3, 0.5, rng, true);
        auto w = StyleCode::random(3, rng, true);
        auto sr = SuperRes3D::init(2, 3, 2, rng);
        const auto pts = test::random_tensor(rng, {10, 3}, -1.0, 1.0, false);
        const auto weights = test::random_tensor(rng, {10, 2}, -1.0, 1.0, false);
        auto loss = [&] { return ad::sum_all(ad::mul(sample_triplane(super_resolve_3d(coarse, w, sr), pts), weights)); };
        const auto g = ad::backward(loss());
        std::vector<Tensor> leaves = sr.parameters();
        leaves.push_back(w.w);
        leaves.push_back(coarse.planes[1]);
        for (auto& leaf : leaves) {
            const auto numeric = test::numeric_gradient([&] { return loss().item(); }, leaf, 1e-6);
            EXPECT_LT(test::max_relative_error(g.of(leaf).data(), numeric), 1e-4);
        }
    }
}

TEST(SuperResolve, Deterministic) {
    std::mt19937_64 rng(13);
    const auto coarse = TriPlane::random(2, 4, 0.5, rng, false);
    const auto w = StyleCode::random(3, rng, false);
    const auto sr = SuperRes3D::init(2, 3, 2, rng);
    const auto a = super_resolve_3d(coarse, w, sr);
    const auto b = super_resolve_3d(coarse, w, sr);
    for (std::size_t p = 0; p < 3; ++p) {
        ASSERT_EQ(a.planes[p].numel(), b.planes[p].numel());
        for (std::size_t i = 0; i < a.planes[p].numel(); ++i) EXPECT_EQ(a.planes[p][i], b.planes[p][i]);
    }
}
