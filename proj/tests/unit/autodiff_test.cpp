// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#include "fd_oracle.hpp"

#include "mimic/backward.hpp"
#include "mimic/ops.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <set>

using namespace mimic;
using ad::Tensor;

namespace {

Tensor vec(std::vector<double> v, bool rg = false) {
    const auto n = v.size();
    return Tensor::from_vector({n}, std::move(v), rg);
}

// Gradient of sum(weights * f(inputs)) checked against finite differences for every input.
double check_op(const std::function<Tensor(const std::vector<Tensor>&)>& op, std::vector<Tensor> inputs,
                std::mt19937_64& rng) {
    const Tensor probe = op(inputs);
    const Tensor weights = test::random_tensor(rng, probe.shape(), -1.0, 1.0, false);
    auto loss = [&] { return ad::sum_all(ad::mul(op(inputs), weights)); };
    const auto grads = ad::backward(loss());
    double worst = 0.0;
    for (auto& in : inputs) {
        if (!in.requires_grad()) continue;
        const auto numeric = test::numeric_gradient([&] { return loss().item(); }, in);
        worst = std::max(worst, test::max_relative_error(grads.of(in).data(), numeric));
    }
    return worst;
}

}  // namespace

TEST(Elementwise, TrivialValues) {
    EXPECT_NEAR(ad::softplus(Tensor::scalar(0.0)).item(), std::log(2.0), 1e-15);
    const auto s = ad::add(vec({1, 2}), vec({3, 4}));
    EXPECT_EQ(s[0], 4.0);
    EXPECT_EQ(s[1], 6.0);

    Tensor a = Tensor::scalar(3.0, true);
    Tensor b = Tensor::scalar(5.0, true);
    const auto g = ad::backward(ad::mul(a, b));
    EXPECT_EQ(g.of(a).item(), 5.0);
    EXPECT_EQ(g.of(b).item(), 3.0);
}

TEST(Elementwise, ScalarBroadcastOnly) {
    const auto r = ad::mul(vec({1, 2, 3}), Tensor::scalar(2.0));
    EXPECT_EQ(r[2], 6.0);
    try {
        ad::add(vec({1, 2}), vec({1, 2, 3}));
        FAIL() << "expected shape mismatch";
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("[2]"), std::string::npos);
        EXPECT_NE(msg.find("[3]"), std::string::npos);
    }
}

TEST(Elementwise, DivisionBackwardAtZeroIsAnError) {
    Tensor a = vec({1.0, 2.0}, true);
    Tensor b = vec({0.0, 1.0}, true);
    const auto q = ad::sum_all(ad::div(a, b));
    EXPECT_THROW(ad::backward(q), std::domain_error);
}

TEST(Elementwise, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(7);
    using K = ad::Elementwise;
    const std::vector<K> unary = {K::kNeg,  K::kExp,       K::kSoftplus, K::kSigmoid, K::kRelu,
                                  K::kLeakyRelu, K::kSqrt, K::kSquare,   K::kAbs};
    const std::vector<K> binary = {K::kAdd, K::kSub, K::kMul, K::kDiv};
    for (int trial = 0; trial < 20; ++trial) {
        for (auto kind : unary) {
            // sqrt needs positive inputs; kinks of relu/abs are avoided by keeping |x| >= 0.05
            const bool positive = kind == K::kSqrt;
            auto x = test::random_tensor(rng, {3, 4}, positive ? 0.2 : -2.0, 2.0);
            for (auto& v : x.mutable_data()) {
                if (std::fabs(v) < 0.05) v = 0.05;
            }
            const double err = check_op([kind](const auto& in) { return ad::elementwise(kind, in[0]); }, {x}, rng);
            EXPECT_LT(err, 1e-5) << "unary kind " << static_cast<int>(kind) << " trial " << trial;
        }
        for (auto kind : binary) {
            auto a = test::random_tensor(rng, {2, 5}, -2.0, 2.0);
            auto b = test::random_tensor(rng, {2, 5}, 0.5, 2.0);
            const double err =
                check_op([kind](const auto& in) { return ad::elementwise(kind, in[0], in[1]); }, {a, b}, rng);
            EXPECT_LT(err, 1e-5) << "binary kind " << static_cast<int>(kind);
            auto s = test::random_tensor(rng, {}, 0.5, 2.0);
            const double err_bc =
                check_op([kind](const auto& in) { return ad::elementwise(kind, in[0], in[1]); }, {a, s}, rng);
            EXPECT_LT(err_bc, 1e-5) << "scalar-broadcast kind " << static_cast<int>(kind);
        }
    }
}

TEST(Matmul, TrivialProducts) {
    const auto eye = Tensor::from_vector({2, 2}, {1, 0, 0, 1});
    const auto m = Tensor::from_vector({2, 2}, {1, 2, 3, 4});
    const auto p = ad::matmul(eye, m);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(p[i], m[i]);
    const auto d = ad::matmul(Tensor::from_vector({1, 2}, {1, 2}), Tensor::from_vector({2, 1}, {3, 4}));
    EXPECT_EQ(d.shape(), (ad::Shape{1, 1}));
    EXPECT_EQ(d.item(), 11.0);
    EXPECT_THROW(ad::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), std::invalid_argument);
}

TEST(Matmul, GradientMatchesFiniteDifferencesForEveryTransposeMode) {
    std::mt19937_64 rng(11);
    for (int mode = 0; mode < 4; ++mode) {
        const bool ta = mode & 1, tb = mode & 2;
        auto a = test::random_tensor(rng, ta ? ad::Shape{5, 4} : ad::Shape{4, 5});
        auto b = test::random_tensor(rng, tb ? ad::Shape{3, 5} : ad::Shape{5, 3});
        const double err =
            check_op([ta, tb](const auto& in) { return ad::matmul(in[0], in[1], ta, tb); }, {a, b}, rng);
        EXPECT_LT(err, 1e-6) << "mode " << mode;
    }
}

TEST(Reduce, MeanSumMax) {
    EXPECT_EQ(ad::mean(vec({2, 4, 6}), 0).item(), 4.0);

    Tensor x = vec({1, 2, 3}, true);
    const auto g = ad::backward(ad::sum(x, 0));
    const auto gx = g.of(x);
    for (double v : gx.data()) EXPECT_EQ(v, 1.0);

    Tensor plane = Tensor::full({3, 4}, 2.5);
    const auto pooled = ad::expand(ad::mean(plane, 0), 0, 3);
    for (double v : pooled.data()) EXPECT_EQ(v, 2.5);

    Tensor ties = vec({5, 1, 5}, true);
    const auto gm = ad::backward(ad::reduce(ad::Reduce::kMax, ties, 0));
    EXPECT_EQ(gm.of(ties)[0], 1.0);
    EXPECT_EQ(gm.of(ties)[2], 0.0);

    EXPECT_THROW(ad::sum(Tensor::zeros({2, 2}), 2), std::out_of_range);
}

TEST(Reduce, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto x = test::random_tensor(rng, {3, 4, 2});
        for (std::size_t axis = 0; axis < 3; ++axis) {
            for (auto kind : {ad::Reduce::kSum, ad::Reduce::kMean, ad::Reduce::kMax}) {
                const double err = check_op([=](const auto& in) { return ad::reduce(kind, in[0], axis); }, {x}, rng);
                EXPECT_LT(err, 1e-5);
            }
        }
    }
}

TEST(Layout, ConcatPermuteSlice) {
    const auto a = Tensor::zeros({2, 3});
    const auto b = Tensor::zeros({2, 5});
    EXPECT_EQ(ad::concat({a, b}, 1).shape(), (ad::Shape{2, 8}));
    EXPECT_THROW(ad::concat({a, Tensor::zeros({3, 5})}, 1), std::invalid_argument);

    std::mt19937_64 rng(5);
    const auto x = test::random_tensor(rng, {2, 3, 4}, -1, 1, false);
    const auto y = ad::permute(ad::permute(x, {2, 0, 1}), {1, 2, 0});
    for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(x[i], y[i]);

    Tensor p = test::random_tensor(rng, {2, 3});
    Tensor q = test::random_tensor(rng, {2, 5});
    const auto w = test::random_tensor(rng, {2, 8}, -1, 1, false);
    const auto grads = ad::backward(ad::sum_all(ad::mul(ad::concat({p, q}, 1), w)));
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ(grads.of(p)[r * 3 + c], w[r * 8 + c]);
        for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(grads.of(q)[r * 5 + c], w[r * 8 + 3 + c]);
    }
}

TEST(Layout, GradientsMatchFiniteDifferences) {
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 20; ++trial) {
        auto a = test::random_tensor(rng, {2, 3, 4});
        auto b = test::random_tensor(rng, {2, 1, 4});
        auto v = test::random_tensor(rng, {3});
        EXPECT_LT(check_op([](const auto& in) { return ad::concat({in[0], in[1]}, 1); }, {a, b}, rng), 1e-5);
        EXPECT_LT(check_op([](const auto& in) { return ad::permute(in[0], {1, 2, 0}); }, {a}, rng), 1e-5);
        EXPECT_LT(check_op([](const auto& in) { return ad::slice(in[0], 2, 1, 2); }, {a}, rng), 1e-5);
        EXPECT_LT(check_op([](const auto& in) { return ad::reshape(in[0], {6, 4}); }, {a}, rng), 1e-5);
        EXPECT_LT(check_op([](const auto& in) { return ad::expand(in[0], 1, 3); }, {a}, rng), 1e-5);
        EXPECT_LT(check_op([](const auto& in) { return ad::pad_axis(in[0], 0, 1, 4); }, {a}, rng), 1e-5);
        EXPECT_LT(check_op([](const auto& in) { return ad::mul_along(in[0], in[1], 1); }, {a, v}, rng), 1e-5);
        EXPECT_LT(check_op([](const auto& in) { return ad::add_along(in[0], in[1], 1); }, {a, v}, rng), 1e-5);
        auto index = std::make_shared<std::vector<std::int64_t>>();
        std::uniform_int_distribution<std::int64_t> pick(-1, 23);
        for (int i = 0; i < 30; ++i) index->push_back(pick(rng));
        ad::IndexMap map = index;
        EXPECT_LT(check_op([map](const auto& in) { return ad::gather(in[0], map, {30}); }, {a}, rng), 1e-5);
        auto c = test::random_tensor(rng, {30});
        EXPECT_LT(check_op([map](const auto& in) { return ad::scatter_add(in[0], map, {24}); }, {c}, rng), 1e-5);
    }
}

TEST(Backward, RootMustBeScalar) {
    Tensor x = vec({1, 2}, true);
    EXPECT_THROW(ad::backward(ad::mul_scalar(x, 2.0)), std::invalid_argument);
}

TEST(Backward, ConstantsYieldEmptyMap) {
    const auto g = ad::backward(ad::sum_all(vec({1, 2, 3})));
    EXPECT_TRUE(g.empty());
}

TEST(Backward, RepeatedCallsAreIdentical) {
    std::mt19937_64 rng(17);
    Tensor w = test::random_tensor(rng, {4, 3});
    Tensor x = test::random_tensor(rng, {5, 4}, -1, 1, false);
    const auto loss = ad::sum_all(ad::softplus(ad::matmul(x, w)));
    const auto g1 = ad::backward(loss);
    const auto g2 = ad::backward(loss);
    for (std::size_t i = 0; i < w.numel(); ++i) EXPECT_EQ(g1.of(w)[i], g2.of(w)[i]);
}

TEST(Backward, IsLinearInTheRoot) {
    std::mt19937_64 rng(19);
    Tensor w = test::random_tensor(rng, {6});
    const auto l1 = [&] { return ad::sum_all(ad::exp(w)); };
    const auto l2 = [&] { return ad::sum_all(ad::square(ad::sigmoid(w))); };
    const double alpha = 0.7, beta = -1.3;
    const auto g1 = ad::backward(l1()).of(w);
    const auto g2 = ad::backward(l2()).of(w);
    const auto gc = ad::backward(ad::add(ad::mul_scalar(l1(), alpha), ad::mul_scalar(l2(), beta))).of(w);
    for (std::size_t i = 0; i < w.numel(); ++i) EXPECT_NEAR(gc[i], alpha * g1[i] + beta * g2[i], 1e-12);
}

TEST(Backward, TapeIsTopologicalAndVisitsOnce) {
    std::mt19937_64 rng(23);
    Tensor a = test::random_tensor(rng, {3});
    Tensor b = test::random_tensor(rng, {3});
    const auto shared = ad::mul(a, b);
    const auto root = ad::sum_all(ad::add(ad::exp(shared), ad::square(shared)));
    const auto tape = ad::Tape::record(root);
    std::set<std::uint64_t> seen;
    for (const auto& e : tape.entries()) {
        for (auto p : e.parents) EXPECT_TRUE(seen.count(p)) << e.op << " precedes its parent";
        EXPECT_TRUE(seen.insert(e.id).second);
    }
    EXPECT_EQ(tape.entries().back().id, *root.node_id());
}

TEST(Backward, ReplayWithSameSeedIsBitwiseIdentical) {
    auto run = [] {
        std::mt19937_64 rng(29);
        Tensor w = test::random_tensor(rng, {8, 4});
        Tensor x = test::random_tensor(rng, {16, 8}, -1, 1, false);
        const auto loss = ad::mean_all(ad::leaky_relu(ad::matmul(x, w)));
        const auto g = ad::backward(loss).of(w);
        return std::pair{loss.item(), std::vector<double>(g.data().begin(), g.data().end())};
    };
    const auto [v1, g1] = run();
    const auto [v2, g2] = run();
    EXPECT_EQ(v1, v2);
    EXPECT_EQ(g1, g2);
}

TEST(Detach, StopsGradientAndKeepsValues) {
    Tensor x = vec({0.1, -0.7, 3.25}, true);
    Tensor y = vec({1, 2, 3}, true);
    const auto dx = ad::detach(x);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(dx[i], x[i]);
    const auto g = ad::backward(ad::sum_all(ad::mul(dx, y)));
    EXPECT_FALSE(g.contains(x));
    EXPECT_TRUE(g.contains(y));
}

TEST(Backward, CreateGraphSupportsSecondDerivative) {
    Tensor x = Tensor::scalar(1.5, true);
    const auto cube = ad::mul(ad::mul(x, x), x);
    ad::BackwardOptions opts;
    opts.create_graph = true;
    const auto dx = ad::backward(cube, opts).of(x);
    EXPECT_NEAR(dx.item(), 3 * 1.5 * 1.5, 1e-12);
    ASSERT_TRUE(dx.requires_grad());
    const auto ddx = ad::backward(dx).of(x);
    EXPECT_NEAR(ddx.item(), 6 * 1.5, 1e-12);
}

TEST(Precision, Float32ModeRoundsResults) {
    Tensor a = Tensor::from_vector({1}, {0.1}).to(ad::DType::kFloat32);
    const auto r = ad::mul_scalar(a, 3.0);
    EXPECT_EQ(r.dtype(), ad::DType::kFloat32);
    EXPECT_EQ(r[0], static_cast<double>(static_cast<float>(static_cast<double>(0.1f) * 3.0)));
}
