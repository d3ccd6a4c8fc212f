// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#include "fd_oracle.hpp"

#include "mimic/backward.hpp"
#include "mimic/decoder.hpp"
#include "mimic/ops.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace mimic;
using ad::Tensor;

TEST(Decoder, ZeroParametersGiveHalfColorAndLog2Density) {
    std::mt19937_64 rng(1);
    auto p = DecoderParams::init(4, 8, 2, 3, rng);
    for (auto& t : p.parameters()) std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
    const auto out = decode(p, test::random_tensor(rng, {5, 4}, -1, 1, false));
    for (double v : out.color.data()) EXPECT_EQ(v, 0.5);
    for (double v : out.sigma.data()) EXPECT_NEAR(v, 0.693147, 1e-6);
    EXPECT_EQ(out.color.shape(), (ad::Shape{5, 3}));
    EXPECT_EQ(out.sigma.shape(), (ad::Shape{5}));
}

TEST(Decoder, OutputRanges) {
    std::mt19937_64 rng(2);
    const auto p = DecoderParams::init(6, 16, 3, 3, rng);
    const auto out = decode(p, test::random_tensor(rng, {10000, 6}, -3, 3, false));
    for (double v : out.sigma.data()) EXPECT_GT(v, 0.0);
    for (double v : out.color.data()) {
        EXPECT_GT(v, 0.0);
        EXPECT_LT(v, 1.0);
    }
}

TEST(Decoder, InitialisationContract) {
    std::mt19937_64 rng(3);
    const auto p = DecoderParams::init(32, 64, 2, 3, rng);
    p.validate();
    EXPECT_EQ(p.depth(), 2u);
    EXPECT_EQ(p.hidden(), 64u);
    EXPECT_EQ(p.biases.back()[3], -1.0);
    for (double v : p.weights[0].data()) EXPECT_LE(std::fabs(v), 1.0 / std::sqrt(32.0));
    for (double v : p.weights[1].data()) EXPECT_LE(std::fabs(v), 1.0 / 8.0);
}

TEST(Decoder, WidthMismatchThrows) {
    std::mt19937_64 rng(4);
    const auto p = DecoderParams::init(4, 8, 2, 3, rng);
    EXPECT_THROW(decode(p, Tensor::zeros({2, 5})), std::invalid_argument);
}

TEST(Decoder, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto p = DecoderParams::init(4, 6, 2, 3, rng);
        auto f = test::random_tensor(rng, {7, 4});
        const auto wc = test::random_tensor(rng, {7, 3}, -1, 1, false);
        const auto ws = test::random_tensor(rng, {7}, -1, 1, false);
        auto loss = [&] {
            const auto out = decode(p, f);
            return ad::add(ad::sum_all(ad::mul(out.color, wc)), ad::sum_all(ad::mul(out.sigma, ws)));
        };
        const auto g = ad::backward(loss());
        auto leaves = p.parameters();
        leaves.push_back(f);
        for (auto& leaf : leaves) {
            const auto numeric = test::numeric_gradient([&] { return loss().item(); }, leaf);
            EXPECT_LT(test::max_relative_error(g.of(leaf).data(), numeric), 1e-5);
        }
    }
}

TEST(Decoder, Deterministic) {
    std::mt19937_64 rng(6);
    const auto p = DecoderParams::init(4, 8, 2, 3, rng);
    const auto f = test::random_tensor(rng, {50, 4}, -1, 1, false);
    const auto a = decode(p, f), b = decode(p, f);
    for (std::size_t i = 0; i < a.color.numel(); ++i) EXPECT_EQ(a.color[i], b.color[i]);
    for (std::size_t i = 0; i < a.sigma.numel(); ++i) EXPECT_EQ(a.sigma[i], b.sigma[i]);
}

TEST(FusedMlp, MatchesComposedOpsAcrossBlocks) {
    std::mt19937_64 rng(9);
    // 600 rows span two full 256-row blocks and a partial one.
    auto x = test::random_tensor(rng, {600, 5}, -1, 1);
    auto p = DecoderParams::init(5, 7, 3, 3, rng);
    const auto up = test::random_tensor(rng, {600, 4}, -1, 1, false);

    auto composed = [&] {
        Tensor h = x;
        for (std::size_t l = 0; l < p.depth(); ++l) {
            h = ad::add_along(ad::matmul(h, p.weights[l], false, true), p.biases[l], 1);
            if (l + 1 < p.depth()) h = ad::leaky_relu(h, 0.2);
        }
        return h;
    };
    const auto fused = fused_mlp(x, p.weights, p.biases, 0.2);
    const auto ref = composed();
    ASSERT_EQ(fused.shape(), ref.shape());
    for (std::size_t i = 0; i < ref.numel(); ++i) EXPECT_NEAR(fused[i], ref[i], 1e-12);

    const auto gf = ad::backward(ad::sum_all(ad::mul(fused, up)));
    const auto gr = ad::backward(ad::sum_all(ad::mul(ref, up)));
    std::vector<Tensor> leaves{x};
    for (const auto& t : p.parameters()) leaves.push_back(t);
    for (const auto& leaf : leaves) {
        const auto a = gf.of(leaf);
        const auto b = gr.of(leaf);
        EXPECT_LT(test::max_relative_error(a.data(), std::vector<double>(b.data().begin(), b.data().end())), 1e-12);
    }
}

TEST(FusedMlp, GradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(10);
    auto x = test::random_tensor(rng, {9, 3}, -1, 1);
    auto p = DecoderParams::init(3, 6, 2, 2, rng);
    const auto up = test::random_tensor(rng, {9, 3}, -1, 1, false);
    auto loss = [&] { return ad::sum_all(ad::mul(fused_mlp(x, p.weights, p.biases, 0.2), up)); };
    const auto g = ad::backward(loss());
    std::vector<Tensor> leaves{x};
    for (const auto& t : p.parameters()) leaves.push_back(t);
    for (auto& leaf : leaves) {
        const auto numeric = test::numeric_gradient([&] { return loss().item(); }, leaf);
        EXPECT_LT(test::max_relative_error(g.of(leaf).data(), numeric), 1e-6);
    }
}

TEST(FusedMlp, ShapeMismatchThrows) {
    std::mt19937_64 rng(11);
    auto p = DecoderParams::init(3, 6, 2, 2, rng);
    EXPECT_THROW(fused_mlp(Tensor::zeros({4, 5}), p.weights, p.biases, 0.2), std::invalid_argument);
    std::vector<Tensor> one_bias{p.biases[0]};
    EXPECT_THROW(fused_mlp(Tensor::zeros({4, 3}), p.weights, one_bias, 0.2), std::invalid_argument);
}
