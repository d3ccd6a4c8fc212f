// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#include "fd_oracle.hpp"

#include "mimic/backward.hpp"
#include "mimic/ops.hpp"
#include "mimic/renderer.hpp"
#include "mimic/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace mimic;
using ad::Tensor;

namespace {

// Constant-colour field whose density is `inside` where pred holds and 0 elsewhere.
template <class Pred>
class IndicatorField final : public RadianceField {
public:
    IndicatorField(Pred pred, double inside) : pred_(pred), inside_(inside) {}
    FieldSample query(const Tensor& points) const override {
        const std::size_t n = points.size(0);
        std::vector<double> s(n), c(n * 3);
        for (std::size_t i = 0; i < n; ++i) {
            const double* p = &points.data()[i * 3];
            s[i] = pred_(p[0], p[1], p[2]) ? inside_ : 0.0;
            c[i * 3] = 0.9;
            c[i * 3 + 1] = 0.2;
            c[i * 3 + 2] = 0.1;
        }
        return {Tensor::from_vector({n, 3}, std::move(c)), Tensor::from_vector({n}, std::move(s))};
    }

private:
    Pred pred_;
    double inside_;
};

template <class Pred>
IndicatorField<Pred> indicator(Pred p, double inside) {
    return IndicatorField<Pred>(p, inside);
}

RayBatch parallel_rays(std::size_t n) {
    RayBatch rays;
    rays.origins.assign(n * 3, 0.0);
    rays.directions.assign(n * 3, 0.0);
    for (std::size_t i = 0; i < n; ++i) rays.directions[i * 3 + 2] = 1.0;
    rays.near.assign(n, 0.0);
    rays.far.assign(n, 0.0);
    rays.hit.assign(n, 0);
    rays.pixel.resize(n);
    std::iota(rays.pixel.begin(), rays.pixel.end(), 0);
    rays.offsets.assign(n + 1, 0);
    return rays;
}

RenderOptions small_opts(std::size_t s1, std::size_t s2, std::uint64_t seed = 7) {
    RenderOptions o;
    o.coarse_samples = s1;
    o.fine_samples = s2;
    o.seed = seed;
    return o;
}

}  // namespace

TEST(Camera, PrincipalRayLooksDownMinusZ) {
    CameraPose cam;
    cam.translation = {0.0, 0.0, 5.0};
    cam.focal = 10.0;
    cam.cx = cam.cy = 2.5;
    cam.image_size = 5;
    const auto rays = generate_rays(cam, 2, 2, 1, 1);
    EXPECT_EQ(rays.directions[0], 0.0);
    EXPECT_EQ(rays.directions[1], 0.0);
    EXPECT_EQ(rays.directions[2], -1.0);
}

TEST(Camera, OrbitFrontalIsCanonical) {
    const auto cam = CameraPose::orbit(3.0, 0.0, 0.0, 40.0, 64);
    const std::array<double, 9> eye{1, 0, 0, 0, 1, 0, 0, 0, 1};
    for (int i = 0; i < 9; ++i) EXPECT_NEAR(cam.rotation[i], eye[i], 1e-15);
    EXPECT_NEAR(cam.translation[2], 3.0, 1e-15);
}

TEST(Camera, DirectionsAreUnitAndPatchesAreCrops) {
    const auto cam = CameraPose::orbit(2.7, 0.4, -0.3, 35.0, 16);
    const auto full = generate_rays(cam, PatchSpec::whole(16));
    for (std::size_t i = 0; i < full.size(); ++i) {
        const double* d = &full.directions[i * 3];
        EXPECT_NEAR(std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]), 1.0, 1e-12);
    }
    const PatchSpec patch{5, 9, 6, 16};
    const auto crop = generate_rays(cam, patch);
    for (std::size_t r = 0; r < 6; ++r)
        for (std::size_t c = 0; c < 6; ++c) {
            const std::size_t i = r * 6 + c, j = (9 + r) * 16 + 5 + c;
            for (int k = 0; k < 3; ++k) EXPECT_EQ(crop.directions[i * 3 + k], full.directions[j * 3 + k]);
            EXPECT_EQ(crop.near[i], full.near[j]);
            EXPECT_EQ(crop.far[i], full.far[j]);
        }
    EXPECT_THROW((PatchSpec{12, 0, 6, 16}.validate()), std::invalid_argument);
}

TEST(Stratified, BinContainmentAndSingleSample) {
    auto rays = parallel_rays(2000);
    stratified_sample(rays, 1.5, 4.0, 7, 3);
    for (std::size_t r = 0; r < rays.size(); ++r) {
        ASSERT_EQ(rays.samples_of(r), 7u);
        for (std::size_t i = 0; i < 7; ++i) {
            const double t = rays.t[rays.offsets[r] + i];
            EXPECT_GE(t, 1.5 + 2.5 * double(i) / 7.0);
            EXPECT_LE(t, 1.5 + 2.5 * double(i + 1) / 7.0);
        }
    }
    auto one = parallel_rays(100);
    stratified_sample(one, -1.0, 2.0, 1, 4);
    for (double t : one.t) {
        EXPECT_GE(t, -1.0);
        EXPECT_LE(t, 2.0);
    }
    EXPECT_THROW(stratified_sample(one, 2.0, 1.0, 4, 0), std::invalid_argument);
}

TEST(Stratified, MeanConvergesToMidpoint) {
    const std::size_t n = 100000;
    auto rays = parallel_rays(n);
    stratified_sample(rays, 1.0, 3.0, 1, 99);
    const double mean = std::accumulate(rays.t.begin(), rays.t.end(), 0.0) / double(n);
    const double sigma = 2.0 / std::sqrt(12.0) / std::sqrt(double(n));
    EXPECT_LT(std::fabs(mean - 2.0), 3.0 * sigma);
}

TEST(Importance, EqualWeightsGiveUniformDraws) {
    std::mt19937_64 rng(5);
    const std::vector<double> w(16, 0.3);
    const auto draws = sample_piecewise_constant(2.0, 6.0, w, 100000, rng);
    std::vector<double> hist(40, 0.0);
    for (double t : draws) hist[std::min<std::size_t>(39, std::size_t((t - 2.0) / 4.0 * 40.0))] += 1.0;
    double tv = 0.0;
    for (double h : hist) tv += std::fabs(h / 1e5 - 1.0 / 40.0);
    EXPECT_LT(0.5 * tv, 0.02);
}

TEST(Importance, SingleNonzeroBinCapturesDraws) {
    std::mt19937_64 rng(6);
    std::vector<double> w(8, 0.0);
    w[5] = 0.7;
    for (double t : sample_piecewise_constant(0.0, 8.0, w, 5000, rng, 0.0)) {
        EXPECT_GE(t, 5.0);
        EXPECT_LE(t, 6.0);
    }
    // With the default floor the leak outside is bounded by 7e-5 / 0.70007 per draw.
    std::size_t outside = 0;
    for (double t : sample_piecewise_constant(0.0, 8.0, w, 100000, rng)) outside += (t < 5.0 || t > 6.0);
    EXPECT_LT(outside, 100u);
}

TEST(Importance, AllZeroWeightsFallBackToUniform) {
    std::mt19937_64 rng(8);
    const std::vector<double> w(4, 0.0);
    const auto draws = sample_piecewise_constant(0.0, 1.0, w, 40000, rng);
    std::vector<double> hist(4, 0.0);
    for (double t : draws) hist[std::min<std::size_t>(3, std::size_t(t * 4.0))] += 1.0;
    for (double h : hist) EXPECT_NEAR(h / 40000.0, 0.25, 0.01);
}

TEST(Importance, MergedDepthsStrictlySortedWithConsistentDeltas) {
    auto rays = parallel_rays(300);
    stratified_sample(rays, 0.5, 2.5, 6, 10);
    std::mt19937_64 rng(11);
    std::vector<double> w(rays.samples());
    for (auto& x : w) x = uniform01(rng) < 0.3 ? 0.0 : uniform01(rng);
    const auto merged = importance_sample(rays, w, 6, 12);
    for (std::size_t r = 0; r < merged.size(); ++r) {
        const std::size_t b = merged.offsets[r], e = merged.offsets[r + 1];
        EXPECT_GE(e - b, 6u);
        EXPECT_LE(e - b, 12u);
        for (std::size_t i = b; i < e; ++i) {
            EXPECT_GE(merged.t[i], 0.5);
            EXPECT_LE(merged.t[i], 2.5);
            if (i + 1 < e) {
                EXPECT_GT(merged.t[i + 1] - merged.t[i], 1e-12);
                EXPECT_EQ(merged.delta[i], merged.t[i + 1] - merged.t[i]);
            } else {
                EXPECT_EQ(merged.delta[i], 2.5 - merged.t[i]);
            }
        }
    }
}

TEST(Composite, VacuumAndSingleSample) {
    const auto vac = composite(Tensor::full({2, 4, 3}, 0.7), Tensor::zeros({2, 4}), Tensor::full({2, 4}, 0.3));
    for (double v : vac.pixel.data()) EXPECT_EQ(v, 0.0);
    for (double v : vac.weights.data()) EXPECT_EQ(v, 0.0);
    for (double v : vac.t_end.data()) EXPECT_EQ(v, 1.0);

    const auto one = composite(Tensor::from_vector({1, 1, 3}, {1, 0, 0}), Tensor::from_vector({1, 1}, {std::log(2.0)}),
                               Tensor::from_vector({1, 1}, {1.0}));
    EXPECT_NEAR(one.pixel[0], 0.5, 1e-15);
    EXPECT_EQ(one.pixel[1], 0.0);
    EXPECT_NEAR(one.weights[0], 0.5, 1e-15);
    EXPECT_THROW(composite(Tensor::zeros({2, 4, 3}), Tensor::zeros({2, 3}), Tensor::zeros({2, 3})),
                 std::invalid_argument);
}

TEST(Composite, ConservationMonotonicityAndOcclusion) {
    std::mt19937_64 rng(13);
    const std::size_t n = 2000, s = 16;
    const auto color = test::random_tensor(rng, {n, s, 3}, 0, 1, false);
    const auto sigma = test::random_tensor(rng, {n, s}, 0, 5, false);
    const auto delta = test::random_tensor(rng, {n, s}, 0, 0.3, false);
    const auto c = composite(color, sigma, delta);
    for (std::size_t r = 0; r < n; ++r) {
        double sw = 0.0, trans = 1.0;
        for (std::size_t i = 0; i < s; ++i) {
            const double w = c.weights[r * s + i];
            sw += w;
            const double next = trans - w;  // T_{i+1}
            EXPECT_LE(next, trans + 1e-15);
            trans = next;
        }
        EXPECT_NEAR(sw + c.t_end[r], 1.0, 1e-12);
    }
    // Adding density at sample 3 never raises the weight of samples behind it.
    auto denser = sigma.clone();
    for (std::size_t r = 0; r < n; ++r) denser.mutable_data()[r * s + 3] += 1.0;
    const auto d = composite(color, denser, delta);
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t i = 4; i < s; ++i) EXPECT_LE(d.weights[r * s + i], c.weights[r * s + i]);
}

TEST(Composite, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 20; ++trial) {
        auto color = test::random_tensor(rng, {3, 5, 3}, 0, 1);
        auto sigma = test::random_tensor(rng, {3, 5}, 0.05, 3);
        const auto delta = test::random_tensor(rng, {3, 5}, 0.01, 0.5, false);
        const auto gp = test::random_tensor(rng, {3, 3}, -1, 1, false);
        const auto gw = test::random_tensor(rng, {3, 5}, -1, 1, false);
        const auto gt = test::random_tensor(rng, {3}, -1, 1, false);
        auto loss = [&] {
            const auto c = composite(color, sigma, delta);
            return ad::add(ad::add(ad::sum_all(ad::mul(c.pixel, gp)), ad::sum_all(ad::mul(c.weights, gw))),
                           ad::sum_all(ad::mul(c.t_end, gt)));
        };
        const auto g = ad::backward(loss());
        for (auto* leaf : {&color, &sigma}) {
            const auto numeric = test::numeric_gradient([&] { return loss().item(); }, *leaf);
            EXPECT_LT(test::max_relative_error(g.of(*leaf).data(), numeric), 1e-6);
        }
    }
}

TEST(Render, EmptyFieldShowsBackground) {
    StudentConfig cfg;
    cfg.channels = 4;
    cfg.coarse_resolution = 8;
    cfg.factor = 2;
    cfg.style_dim = 4;
    cfg.hidden = 8;
    cfg.density_bias = -30.0;
    auto student = StudentField::init(cfg, 1);
    auto opts = small_opts(16, 16);
    opts.background = {0.25, 0.5, 1.0};
    const auto cam = CameraPose::orbit(3.0, 0.3, 0.2, 40.0, 16);
    const auto img = render_patch(student, cam, PatchSpec::whole(16), opts);
    for (std::size_t i = 0; i < img.numel(); ++i) EXPECT_NEAR(img[i], opts.background[i % 3], 1e-3);

    const auto vacuum = indicator([](double, double, double) { return false; }, 0.0);
    const auto exact = render(vacuum, cam, PatchSpec::whole(16), opts).image;
    for (std::size_t i = 0; i < exact.numel(); ++i) EXPECT_EQ(exact[i], opts.background[i % 3]);
    const auto depth = render_depth(vacuum, cam, PatchSpec::whole(16), opts);
    for (auto v : depth.valid) EXPECT_EQ(v, 0);
}

TEST(Render, AbuttingPatchesTileTheFullImage) {
    StudentConfig cfg;
    cfg.channels = 4;
    cfg.coarse_resolution = 8;
    cfg.factor = 2;
    cfg.style_dim = 4;
    cfg.hidden = 8;
    cfg.density_bias = 0.5;
    const auto student = StudentField::init(cfg, 2);
    const auto cam = CameraPose::orbit(3.0, -0.2, 0.1, 40.0, 16);
    const auto opts = small_opts(8, 8);
    ad::NoGradGuard guard;
    const auto full = render_patch(student, cam, PatchSpec::whole(16), opts);
    const auto left = render_patch(student, cam, PatchSpec{0, 4, 8, 16}, opts);
    const auto right = render_patch(student, cam, PatchSpec{8, 4, 8, 16}, opts);
    for (std::size_t r = 0; r < 8; ++r)
        for (std::size_t c = 0; c < 16; ++c)
            for (std::size_t k = 0; k < 3; ++k) {
                const double tile = c < 8 ? left[(r * 8 + c) * 3 + k] : right[(r * 8 + c - 8) * 3 + k];
                EXPECT_EQ(tile, full[((r + 4) * 16 + c) * 3 + k]);
            }
    auto chunked = opts;
    chunked.chunk_rows = 5;
    const PreparedStudent field(student);
    const auto pieces = render(field, cam, PatchSpec::whole(16), chunked).image;
    for (std::size_t i = 0; i < full.numel(); ++i) EXPECT_EQ(pieces[i], full[i]);
}

TEST(Render, OpaqueSphereSilhouetteMatchesRaycast) {
    const double radius = 0.6;
    const auto sphere = indicator([radius](double x, double y, double z) { return x * x + y * y + z * z < radius * radius; },
                                  200.0);
    const std::size_t f = 64;
    const auto cam = CameraPose::orbit(3.0, 0.5, 0.25, 40.0, f);
    const auto out = render(sphere, cam, PatchSpec::whole(f), small_opts(48, 48));
    const auto rays = generate_rays(cam, PatchSpec::whole(f));
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < f * f; ++i) {
        const double* o = &rays.origins[i * 3];
        const double* d = &rays.directions[i * 3];
        const double b = o[0] * d[0] + o[1] * d[1] + o[2] * d[2];
        const double c = o[0] * o[0] + o[1] * o[1] + o[2] * o[2] - radius * radius;
        const bool oracle = b * b - c > 0.0;
        const bool rendered = out.opacity[i] > 0.5;
        inter += oracle && rendered;
        uni += oracle || rendered;
    }
    ASSERT_GT(uni, 0u);
    EXPECT_GT(double(inter) / double(uni), 0.98);
}

TEST(Render, DepthOfOpaquePlane) {
    const double plane_z = 0.2;
    const auto slab = indicator([plane_z](double, double, double z) { return z < plane_z; }, 500.0);
    CameraPose cam = CameraPose::orbit(3.0, 0.0, 0.0, 30.0, 16);
    const auto opts = small_opts(24, 24);
    const auto depth = render_depth(slab, cam, PatchSpec::whole(16), opts);
    const auto rays = generate_rays(cam, PatchSpec::whole(16));
    // Left-point quadrature places the first occupied sample at most two coarse bins
    // past the surface; averaged over pixels the bias stays under half a bin.
    double err_over_spacing = 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < depth.depth.size(); ++i) {
        if (!rays.hit[i]) continue;
        ASSERT_EQ(depth.valid[i], 1);
        const double d = (cam.translation[2] - plane_z) / -rays.directions[i * 3 + 2];
        const double spacing = (rays.far[i] - rays.near[i]) / double(opts.coarse_samples);
        EXPECT_GE(depth.depth[i], d - 1e-9);
        EXPECT_LE(depth.depth[i], d + 2.0 * spacing);
        EXPECT_GE(depth.depth[i], rays.near[i]);
        EXPECT_LE(depth.depth[i], rays.far[i]);
        err_over_spacing += (depth.depth[i] - d) / spacing;
        ++hits;
    }
    ASSERT_GT(hits, 0u);
    EXPECT_LT(err_over_spacing / double(hits), 0.5);
}

TEST(Render, SeededDeterminism) {
    StudentConfig cfg;
    cfg.channels = 4;
    cfg.coarse_resolution = 8;
    cfg.factor = 2;
    cfg.style_dim = 4;
    cfg.hidden = 8;
    cfg.density_bias = 0.5;
    const auto student = StudentField::init(cfg, 3);
    const auto cam = CameraPose::orbit(3.0, 0.1, 0.1, 40.0, 12);
    const auto a = render_patch(student, cam, PatchSpec::whole(12), small_opts(8, 8, 5));
    const auto b = render_patch(student, cam, PatchSpec::whole(12), small_opts(8, 8, 5));
    const auto c = render_patch(student, cam, PatchSpec::whole(12), small_opts(8, 8, 6));
    bool differs = false;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        EXPECT_EQ(a[i], b[i]);
        differs = differs || a[i] != c[i];
    }
    EXPECT_TRUE(differs);
}

TEST(Render, ZeroResidualEqualsCoarseOnlyBitwise) {
    StudentConfig cfg;
    cfg.channels = 4;
    cfg.coarse_resolution = 8;
    cfg.factor = 2;
    cfg.style_dim = 4;
    cfg.hidden = 8;
    cfg.density_bias = 0.5;
    auto student = StudentField::init(cfg, 4);
    for (auto& b : student.super_res.blocks) b.kernel = Tensor::zeros(b.kernel.shape(), true);
    const auto cam = CameraPose::orbit(3.0, 0.1, 0.1, 40.0, 12);
    const auto opts = small_opts(8, 8);
    const auto composed = render(PreparedStudent(student), cam, PatchSpec::whole(12), opts).image;
    const auto coarse = render(PreparedStudent(student, true), cam, PatchSpec::whole(12), opts).image;
    for (std::size_t i = 0; i < composed.numel(); ++i) EXPECT_EQ(composed[i], coarse[i]);
}

TEST(Render, PixelGradientMatchesFiniteDifferencesEndToEnd) {
    StudentConfig cfg;
    cfg.channels = 2;
    cfg.coarse_resolution = 4;
    cfg.factor = 2;
    cfg.style_dim = 3;
    cfg.hidden = 6;
    cfg.density_bias = 0.3;
    cfg.plane_init = 0.5;
    const auto cam = CameraPose::orbit(3.0, 0.3, 0.2, 40.0, 8);
    const PatchSpec patch{2, 3, 3, 8};
    for (int trial = 0; trial < 3; ++trial) {
        auto student = StudentField::init(cfg, 100 + trial);
        // Depths are planned once; the finite differences reuse them as constants.
        const auto rays = plan_samples(PreparedStudent(student), cam, patch, small_opts(4, 4, trial));
        std::mt19937_64 rng(trial);
        const auto weights = test::random_tensor(rng, {3, 3, 3}, -1, 1, false);
        auto loss = [&] {
            const PreparedStudent field(student);
            return ad::sum_all(ad::mul(render_planned(field, rays, 3, {1, 1, 1}).image, weights));
        };
        const auto g = ad::backward(loss());
        std::vector<Tensor> leaves{student.coarse.planes[0], student.coarse.planes[2], student.decoder.weights[0],
                                   student.decoder.biases[1], student.super_res.blocks[0].kernel, student.w.w};
        for (auto& leaf : leaves) {
            const auto numeric = test::numeric_gradient([&] { return loss().item(); }, leaf, 1e-4);
            EXPECT_LT(test::max_relative_error(g.of(leaf).data(), numeric), 1e-4);
        }
    }
}
