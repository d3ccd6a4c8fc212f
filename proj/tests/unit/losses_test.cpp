// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#include "fd_oracle.hpp"

#include "mimic/backward.hpp"
#include "mimic/losses.hpp"
#include "mimic/ops.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mimic;
using ad::Tensor;

namespace {

Tensor image(std::size_t h, std::size_t w, const std::function<double(std::size_t, std::size_t, std::size_t)>& f) {
    std::vector<double> v(h * w * 3);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t c = 0; c < 3; ++c) v[(y * w + x) * 3 + c] = f(y, x, c);
    return Tensor::from_vector({h, w, 3}, std::move(v));
}

double softplus(double x) { return std::log1p(std::exp(-std::fabs(x))) + std::max(x, 0.0); }

}  // namespace

TEST(PerceptualProxy, ZeroOnIdenticalImagesAndSymmetric) {
    std::mt19937_64 rng(1);
    const auto a = test::random_tensor(rng, {16, 16, 3}, 0.0, 1.0, false);
    const auto b = test::random_tensor(rng, {16, 16, 3}, 0.0, 1.0, false);
    EXPECT_EQ(perceptual_proxy(a, a).item(), 0.0);
    EXPECT_GT(perceptual_proxy(a, b).item(), 0.0);
    EXPECT_NEAR(perceptual_proxy(a, b).item(), perceptual_proxy(b, a).item(), 1e-14);
}

TEST(PerceptualProxy, StructureCostsMoreThanBrightness) {
    // Both perturbations move every pixel by 0.1 in absolute value; only the
    // checkerboard changes the image structure.
    const auto base = image(32, 32, [](auto y, auto x, auto c) { return 0.4 + 0.01 * double((x + 2 * y + c) % 7); });
    const auto brighter = ad::add_scalar(base, 0.1);
    const auto checker = ad::add(base, image(32, 32, [](auto y, auto x, auto) { return (x + y) % 2 ? 0.1 : -0.1; }));
    EXPECT_LT(perceptual_proxy(base, brighter).item(), perceptual_proxy(base, checker).item());
}

TEST(PerceptualProxy, RejectsMismatchedShapes) {
    EXPECT_THROW(perceptual_proxy(Tensor::zeros({8, 8, 3}), Tensor::zeros({8, 4, 3})), std::invalid_argument);
    EXPECT_THROW(perceptual_proxy(Tensor::zeros({8, 8, 2}), Tensor::zeros({8, 8, 2})), std::invalid_argument);
}

TEST(PerceptualProxy, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(2);
    auto a = test::random_tensor(rng, {8, 8, 3}, 0.0, 1.0, true);
    const auto b = test::random_tensor(rng, {8, 8, 3}, 0.0, 1.0, false);
    const auto g = ad::backward(perceptual_proxy(a, b));
    const auto numeric = test::numeric_gradient([&] { return perceptual_proxy(a, b).item(); }, a, 1e-7);
    EXPECT_LT(test::max_relative_error(g.of(a).data(), numeric), 1e-4);
}

TEST(AdversarialLosses, SoftplusIdentities) {
    const auto fake = Tensor::from_vector({3}, {-2.0, 0.0, 3.5});
    const auto real = Tensor::from_vector({3}, {1.0, -0.5, 0.25});
    double gen = 0.0, disc = 0.0;
    for (std::size_t i = 0; i < 3; ++i) {
        gen += softplus(-fake[i]) / 3.0;
        disc += (softplus(fake[i]) + softplus(-real[i])) / 3.0;
    }
    EXPECT_NEAR(nonsat_gen_loss(fake).item(), gen, 1e-14);
    EXPECT_NEAR(disc_loss(fake, real).item(), disc, 1e-14);
    EXPECT_NEAR(nonsat_gen_loss(Tensor::scalar(0.0)).item(), std::log(2.0), 1e-15);
    // A discriminator scoring real high and fake low is cheap; the generator pays.
    EXPECT_LT(disc_loss(Tensor::scalar(-5.0), Tensor::scalar(5.0)).item(), 0.02);
    EXPECT_GT(nonsat_gen_loss(Tensor::scalar(-5.0)).item(), 4.9);
}

TEST(AdversarialLosses, SoftplusOddPartIsIdentity) {
    std::mt19937_64 rng(21);
    auto u = test::random_tensor(rng, {200}, -30, 30);
    const auto diff = ad::sub(ad::softplus(u), ad::softplus(ad::neg(u)));
    for (std::size_t i = 0; i < u.numel(); ++i) EXPECT_NEAR(diff[i], u[i], 1e-12);
    auto zero = Tensor::from_vector({1}, {0.0}, true);
    const auto g = ad::backward(ad::sum_all(ad::softplus(zero)));
    EXPECT_EQ(g.of(zero)[0], 0.5);
}

TEST(R1Penalty, LinearDiscriminatorGivesSquaredKernelNorm) {
    // With every leaky unit in its positive regime D is linear in the patch:
    // D(x) = v . x + c, so R1 = lambda * |v|^2 for any x. Check against the
    // input gradient taken by finite differences.
    std::mt19937_64 rng(3);
    auto d = PatchDiscriminator::init(8, rng, 2, 4);
    for (auto& b : d.conv_biases) b = Tensor::full(b.shape(), 50.0, true);
    d.dense1_bias = Tensor::full(d.dense1_bias.shape(), 50.0, true);
    for (auto* k : {&d.conv_kernels[0], &d.conv_kernels[1], &d.conv_kernels[2], &d.dense1_weight}) {
        std::vector<double> v(k->numel());
        std::uniform_real_distribution<double> pos(0.0, 0.3);
        for (auto& x : v) x = pos(rng);
        *k = Tensor::from_vector(k->shape(), std::move(v), true);
    }
    auto x = test::random_tensor(rng, {8, 8, 3}, 0.0, 1.0, false);
    const auto grad = test::numeric_gradient([&] { return d.score(x).item(); }, x, 1e-4);
    double norm2 = 0.0;
    for (double g : grad) norm2 += g * g;
    EXPECT_NEAR(r1_penalty(d, x, 2.5).item(), 2.5 * norm2, 1e-6 * norm2);
}

TEST(R1Penalty, ConstantDiscriminatorGivesZero) {
    std::mt19937_64 rng(4);
    auto d = PatchDiscriminator::init(8, rng, 2, 4);
    d.dense2_weight = Tensor::zeros(d.dense2_weight.shape(), true);
    const auto x = test::random_tensor(rng, {8, 8, 3}, 0.0, 1.0, false);
    EXPECT_EQ(r1_penalty(d, x, 1.0).item(), 0.0);
}

TEST(R1Penalty, ParameterGradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(5);
    auto d = PatchDiscriminator::init(8, rng, 2, 4);
    const auto x = test::random_tensor(rng, {8, 8, 3}, 0.0, 1.0, false);
    const auto g = ad::backward(r1_penalty(d, x, 1.0));
    for (auto leaf : {d.dense2_weight, d.conv_kernels[1], d.dense1_weight}) {
        const auto numeric = test::numeric_gradient([&] { return r1_penalty(d, x, 1.0).item(); }, leaf, 1e-6);
        EXPECT_LT(test::max_relative_error(g.of(leaf).data(), numeric), 1e-3);
    }
}

TEST(PatchDiscriminator, ShapeValidation) {
    std::mt19937_64 rng(6);
    const auto d = PatchDiscriminator::init(16, rng);
    EXPECT_EQ(d.score(Tensor::zeros({16, 16, 3})).shape(), ad::Shape{});
    EXPECT_THROW(d.score(Tensor::zeros({8, 8, 3})), std::invalid_argument);
    EXPECT_THROW(PatchDiscriminator::init(12, rng), std::invalid_argument);
}

TEST(TotalLoss, WeightedSumOfEnabledTerms) {
    LossConfig cfg;
    cfg.adv3d = true;
    cfg.imitation_weight = 2.0;
    cfg.adv_weight = 0.5;
    const LossTerms terms{Tensor::scalar(3.0), Tensor::scalar(-4.0)};
    EXPECT_DOUBLE_EQ(total_loss(terms, cfg).item(), 2.0 * 3.0 + 0.5 * -4.0);
    cfg.adv3d = false;
    EXPECT_DOUBLE_EQ(total_loss(terms, cfg).item(), 6.0);
    cfg.adv3d = true;
    EXPECT_THROW(total_loss({Tensor::scalar(1.0), {}}, cfg), std::invalid_argument);
}
