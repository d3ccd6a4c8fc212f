// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#include "mimic/gradcheck.hpp"

#include "mimic/aware3d.hpp"
#include "mimic/backward.hpp"
#include "mimic/decoder.hpp"
#include "mimic/losses.hpp"
#include "mimic/ops.hpp"
#include "mimic/renderer.hpp"
#include "mimic/rng.hpp"
#include "mimic/student.hpp"
#include "mimic/super_res.hpp"
#include "mimic/triplane.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace mimic {

namespace {

using ad::Shape;
using ad::Tensor;
using Rng = std::mt19937_64;

struct Case {
    std::vector<Tensor> leaves;
    std::function<Tensor()> loss;  // scalar
    double step = 1e-6;
};

using Builder = std::function<Case(Rng&)>;

Tensor uniform(Rng& rng, Shape shape, double lo, double hi, bool requires_grad = true) {
    std::vector<double> v(ad::numel(shape));
    for (auto& x : v) x = lo + (hi - lo) * uniform01(rng);
    return Tensor::from_vector(std::move(shape), std::move(v), requires_grad);
}

// Magnitudes in [lo, hi] with random signs: keeps kinks at zero out of reach.
Tensor signed_away(Rng& rng, Shape shape, double lo, double hi) {
    auto t = uniform(rng, std::move(shape), lo, hi);
    for (auto& x : t.mutable_data())
        if (rng() & 1) x = -x;
    return t;
}

// sum(t * p) with a fixed irregular probe p, so every output element matters.
Tensor probe(const Tensor& t, double phase = 0.0) {
    std::vector<double> p(t.numel());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::cos(0.73 * double(i) + 0.4 + phase) + 0.3;
    return ad::sum_all(ad::mul(t, Tensor::from_vector(t.shape(), std::move(p))));
}

std::size_t pick(Rng& rng, std::size_t n) { return std::size_t(rng() % n); }

Case unary(Rng& rng, Tensor (*op)(const Tensor&), double lo, double hi, bool away_from_zero) {
    auto a = away_from_zero ? signed_away(rng, {3, 4}, lo, hi) : uniform(rng, {3, 4}, lo, hi);
    return {{a}, [a, op] { return probe(op(a)); }};
}

Case binary(Rng& rng, Tensor (*op)(const Tensor&, const Tensor&), bool divisor) {
    auto a = uniform(rng, {3, 4}, -1, 1);
    // Every other configuration broadcasts a single-element operand.
    const Shape bs = rng() & 1 ? Shape{1} : Shape{3, 4};
    auto b = divisor ? signed_away(rng, bs, 0.5, 2.0) : uniform(rng, bs, -1, 1);
    return {{a, b}, [a, b, op] { return probe(op(a, b)); }};
}

ad::IndexMap random_map(Rng& rng, std::size_t count, std::size_t source) {
    auto idx = std::make_shared<std::vector<std::int64_t>>(count);
    for (auto& i : *idx) i = pick(rng, 5) == 0 ? -1 : std::int64_t(pick(rng, source));
    return idx;
}

std::vector<Tensor> decoder_leaves(const DecoderParams& d) { return d.parameters(); }

StudentField pipeline_student(Rng& rng, bool aware) {
    StudentConfig cfg;
    cfg.channels = 2;
    cfg.coarse_resolution = 4;
    cfg.factor = 2;
    cfg.style_dim = 3;
    cfg.hidden = 5;
    cfg.aware3d = aware;
    cfg.density_bias = 0.3;
    cfg.plane_init = 0.5;
    return StudentField::init(cfg, rng());
}

std::vector<std::pair<std::string, Builder>> registry() {
    std::vector<std::pair<std::string, Builder>> r;
    auto add = [&r](std::string name, Builder b) { r.emplace_back(std::move(name), std::move(b)); };

    add("add", [](Rng& g) { return binary(g, ad::add, false); });
    add("sub", [](Rng& g) { return binary(g, ad::sub, false); });
    add("mul", [](Rng& g) { return binary(g, ad::mul, false); });
    add("div", [](Rng& g) { return binary(g, ad::div, true); });
    add("neg", [](Rng& g) { return unary(g, ad::neg, -1, 1, false); });
    add("exp", [](Rng& g) { return unary(g, ad::exp, -1, 1, false); });
    add("softplus", [](Rng& g) { return unary(g, ad::softplus, -3, 3, false); });
    add("sigmoid", [](Rng& g) { return unary(g, ad::sigmoid, -3, 3, false); });
    add("relu", [](Rng& g) { return unary(g, ad::relu, 0.05, 1, true); });
    add("leaky_relu", [](Rng& g) {
        auto a = signed_away(g, {3, 4}, 0.05, 1);
        const double slope = 0.05 + 0.5 * uniform01(g);
        return Case{{a}, [a, slope] { return probe(ad::leaky_relu(a, slope)); }};
    });
    add("sqrt", [](Rng& g) { return unary(g, ad::sqrt, 0.2, 2, false); });
    add("square", [](Rng& g) { return unary(g, ad::square, -1, 1, false); });
    add("abs", [](Rng& g) { return unary(g, ad::abs, 0.05, 1, true); });
    add("add_scalar", [](Rng& g) {
        auto a = uniform(g, {3, 4}, -1, 1);
        const double s = uniform01(g);
        return Case{{a}, [a, s] { return probe(ad::add_scalar(a, s)); }};
    });
    add("mul_scalar", [](Rng& g) {
        auto a = uniform(g, {3, 4}, -1, 1);
        const double s = 2.0 * uniform01(g) - 1.0;
        return Case{{a}, [a, s] { return probe(ad::mul_scalar(a, s)); }};
    });
    add("matmul", [](Rng& g) {
        const bool ta = g() & 1, tb = g() & 1;
        auto a = uniform(g, ta ? Shape{4, 3} : Shape{3, 4}, -1, 1);
        auto b = uniform(g, tb ? Shape{2, 4} : Shape{4, 2}, -1, 1);
        return Case{{a, b}, [a, b, ta, tb] { return probe(ad::matmul(a, b, ta, tb)); }};
    });
    add("sum", [](Rng& g) {
        auto a = uniform(g, {3, 4, 2}, -1, 1);
        const std::size_t axis = pick(g, 3);
        return Case{{a}, [a, axis] { return probe(ad::sum(a, axis)); }};
    });
    add("mean", [](Rng& g) {
        auto a = uniform(g, {3, 4, 2}, -1, 1);
        const std::size_t axis = pick(g, 3);
        return Case{{a}, [a, axis] { return probe(ad::mean(a, axis)); }};
    });
    add("max", [](Rng& g) {
        // Distinct values at least 0.1 apart so the arg max is stable under h.
        std::vector<double> v(24);
        std::iota(v.begin(), v.end(), 0.0);
        std::shuffle(v.begin(), v.end(), g);
        for (auto& x : v) x = 0.1 * x + 0.01 * uniform01(g);
        auto a = Tensor::from_vector({3, 4, 2}, std::move(v), true);
        const std::size_t axis = pick(g, 3);
        return Case{{a}, [a, axis] { return probe(ad::reduce(ad::Reduce::kMax, a, axis)); }};
    });
    add("sum_all", [](Rng& g) {
        auto a = uniform(g, {3, 4}, -1, 1);
        return Case{{a}, [a] { return ad::mul(ad::sum_all(a), ad::sum_all(a)); }};
    });
    add("mean_all", [](Rng& g) {
        auto a = uniform(g, {3, 4}, -1, 1);
        return Case{{a}, [a] { return ad::square(ad::mean_all(a)); }};
    });
    add("expand", [](Rng& g) {
        auto a = uniform(g, {3, 2}, -1, 1);
        const std::size_t axis = pick(g, 3);
        return Case{{a}, [a, axis] { return probe(ad::expand(a, axis, 3)); }};
    });
    add("reshape", [](Rng& g) {
        auto a = uniform(g, {3, 4}, -1, 1);
        return Case{{a}, [a] { return probe(ad::square(ad::reshape(a, {2, 6}))); }};
    });
    add("permute", [](Rng& g) {
        auto a = uniform(g, {2, 3, 4}, -1, 1);
        std::vector<std::size_t> perm{0, 1, 2};
        std::shuffle(perm.begin(), perm.end(), g);
        return Case{{a}, [a, perm] { return probe(ad::permute(a, perm)); }};
    });
    add("transpose", [](Rng& g) {
        auto a = uniform(g, {3, 4}, -1, 1);
        return Case{{a}, [a] { return probe(ad::transpose(a)); }};
    });
    add("concat", [](Rng& g) {
        const std::size_t axis = pick(g, 2);
        auto a = uniform(g, {2, 3}, -1, 1);
        auto b = uniform(g, axis == 0 ? Shape{1, 3} : Shape{2, 2}, -1, 1);
        return Case{{a, b}, [a, b, axis] { return probe(ad::concat({a, b}, axis)); }};
    });
    add("slice", [](Rng& g) {
        auto a = uniform(g, {4, 5}, -1, 1);
        const std::size_t axis = pick(g, 2), start = pick(g, 2);
        return Case{{a}, [a, axis, start] { return probe(ad::slice(a, axis, start, 2)); }};
    });
    add("pad_axis", [](Rng& g) {
        auto a = uniform(g, {2, 3}, -1, 1);
        const std::size_t axis = pick(g, 2), offset = pick(g, 3);
        const std::size_t extent = a.size(axis) + 3;
        return Case{{a}, [a, axis, offset, extent] { return probe(ad::pad_axis(a, axis, offset, extent)); }};
    });
    add("mul_along", [](Rng& g) {
        auto a = uniform(g, {3, 4, 2}, -1, 1);
        const std::size_t axis = pick(g, 3);
        auto v = uniform(g, {a.size(axis)}, -1, 1);
        return Case{{a, v}, [a, v, axis] { return probe(ad::mul_along(a, v, axis)); }};
    });
    add("add_along", [](Rng& g) {
        auto a = uniform(g, {3, 4, 2}, -1, 1);
        const std::size_t axis = pick(g, 3);
        auto v = uniform(g, {a.size(axis)}, -1, 1);
        return Case{{a, v}, [a, v, axis] { return probe(ad::square(ad::add_along(a, v, axis))); }};
    });
    add("gather", [](Rng& g) {
        auto a = uniform(g, {3, 4}, -1, 1);
        const auto idx = random_map(g, 10, 12);
        return Case{{a}, [a, idx] { return probe(ad::square(ad::gather(a, idx, {2, 5}))); }};
    });
    add("scatter_add", [](Rng& g) {
        auto a = uniform(g, {10}, -1, 1);
        const auto idx = random_map(g, 10, 6);
        return Case{{a}, [a, idx] { return probe(ad::square(ad::scatter_add(a, idx, {2, 3}))); }};
    });
    add("conv2d", [](Rng& g) {
        const std::size_t stride = 1 + pick(g, 2);
        const Padding pad = g() & 1 ? Padding::kZero : Padding::kReflect;
        auto x = uniform(g, {2, 5, 6}, -1, 1);
        auto k = uniform(g, {3, 2, 3, 3}, -0.5, 0.5);
        auto b = uniform(g, {3}, -0.5, 0.5);
        return Case{{x, k, b}, [x, k, b, stride, pad] { return probe(conv2d(x, k, b, stride, pad)); }};
    });
    add("upsample_nearest2x", [](Rng& g) {
        auto x = uniform(g, {2, 3, 3}, -1, 1);
        return Case{{x}, [x] { return probe(ad::square(upsample_nearest2x(x))); }};
    });
    add("modulated_conv2d", [](Rng& g) {
        auto p = ModConvParams::init(2, 3, 4, g);
        p.demodulate = g() & 1;
        auto w = StyleCode::random(4, g);
        auto x = uniform(g, {2, 5, 5}, -1, 1);
        auto leaves = p.parameters();
        leaves.push_back(w.w);
        leaves.push_back(x);
        return Case{leaves, [x, p, w] { return probe(modulated_conv2d(x, p, w)); }};
    });
    add("axis_pool_repeat", [](Rng& g) {
        auto x = uniform(g, {2, 4, 4}, -1, 1);
        const PoolAxis axis = g() & 1 ? PoolAxis::kRows : PoolAxis::kCols;
        const bool transpose = g() & 1;
        return Case{{x}, [x, axis, transpose] { return probe(axis_pool_repeat(x, axis, transpose)); }};
    });
    add("aware3d_align", [](Rng& g) {
        const auto tp = TriPlane::random(2, 4, 0.5, g);
        const Plane target = kPlanes[pick(g, 3)];
        return Case{{tp.planes.begin(), tp.planes.end()},
                    [tp, target] { return probe(aware3d_align(tp, target)); }};
    });
    add("aware3d_block", [](Rng& g) {
        const auto tp = TriPlane::random(2, 4, 0.5, g);
        const auto w = StyleCode::random(3, g);
        const auto params = Aware3dParams::init(2, 3, g);
        std::vector<Tensor> leaves(tp.planes.begin(), tp.planes.end());
        for (const auto& t : params.parameters()) leaves.push_back(t);
        leaves.push_back(w.w);
        return Case{leaves, [tp, w, params] {
                        const auto out = aware3d_block(tp, w, params);
                        return ad::add(ad::add(probe(out.planes[0]), probe(out.planes[1], 1.0)),
                                       probe(out.planes[2], 2.0));
                    }};
    });
    add("super_resolve_3d", [](Rng& g) {
        const auto tp = TriPlane::random(2, 3, 0.5, g);
        const auto w = StyleCode::random(3, g);
        const auto sr = SuperRes3D::init(2, 3, 2, g);
        std::vector<Tensor> leaves(tp.planes.begin(), tp.planes.end());
        for (const auto& t : sr.parameters()) leaves.push_back(t);
        leaves.push_back(w.w);
        return Case{leaves, [tp, w, sr] {
                        const auto out = super_resolve_3d(tp, w, sr);
                        return ad::add(ad::add(probe(out.planes[0]), probe(out.planes[1], 1.0)),
                                       probe(out.planes[2], 2.0));
                    }};
    });
    add("sample_triplane", [](Rng& g) {
        const auto tp = TriPlane::random(2, 4, 0.5, g);
        const auto pts = uniform(g, {6, 3}, -0.95, 0.95, false);
        return Case{{tp.planes.begin(), tp.planes.end()}, [tp, pts] { return probe(sample_triplane(tp, pts)); }};
    });
    add("compose", [](Rng& g) {
        auto a = uniform(g, {5, 3}, -1, 1);
        auto b = uniform(g, {5, 3}, -1, 1);
        return Case{{a, b}, [a, b] { return probe(ad::square(compose(a, b))); }};
    });
    add("fused_mlp", [](Rng& g) {
        const auto d = DecoderParams::init(3, 5, 2 + pick(g, 2), 3, g, 0.1);
        auto x = uniform(g, {5, 3}, -1, 1);
        auto leaves = decoder_leaves(d);
        leaves.push_back(x);
        const double slope = 0.05 + 0.5 * uniform01(g);
        return Case{leaves, [x, d, slope] { return probe(fused_mlp(x, d.weights, d.biases, slope)); }};
    });
    add("decode", [](Rng& g) {
        const auto d = DecoderParams::init(3, 5, 2, 3, g, 0.1);
        auto x = uniform(g, {5, 3}, -1, 1);
        auto leaves = decoder_leaves(d);
        leaves.push_back(x);
        return Case{leaves, [x, d] {
                        const auto out = decode(d, x);
                        return ad::add(probe(out.color), probe(out.sigma, 1.0));
                    }};
    });
    add("composite", [](Rng& g) {
        std::vector<std::size_t> offsets{0};
        for (int r = 0; r < 3; ++r) offsets.push_back(offsets.back() + 1 + pick(g, 5));
        const std::size_t m = offsets.back();
        auto color = uniform(g, {m, 3}, 0, 1);
        auto sigma = uniform(g, {m}, 0.05, 3);
        std::vector<double> delta(m);
        for (auto& d : delta) d = 0.01 + 0.5 * uniform01(g);
        return Case{{color, sigma}, [color, sigma, delta, offsets] {
                        const auto c = composite(color, sigma, delta, offsets);
                        return ad::add(ad::add(probe(c.pixel), probe(c.weights, 1.0)), probe(c.t_end, 2.0));
                    }};
    });
    add("perceptual_proxy", [](Rng& g) {
        auto a = uniform(g, {12, 12, 3}, 0, 1);
        const auto b = uniform(g, {12, 12, 3}, 0, 1, false);
        return Case{{a}, [a, b] { return perceptual_proxy(a, b); }};
    });
    add("nonsat_gen_loss", [](Rng& g) {
        auto s = uniform(g, {4}, -3, 3);
        return Case{{s}, [s] { return nonsat_gen_loss(s); }};
    });
    add("disc_loss", [](Rng& g) {
        auto fake = uniform(g, {4}, -3, 3);
        auto real = uniform(g, {4}, -3, 3);
        return Case{{fake, real}, [fake, real] { return disc_loss(fake, real); }};
    });
    add("discriminator_score", [](Rng& g) {
        const auto d = PatchDiscriminator::init(8, g, 2, 4);
        auto x = uniform(g, {8, 8, 3}, 0, 1);
        auto leaves = d.parameters();
        leaves.push_back(x);
        return Case{leaves, [d, x] { return d.score(x); }};
    });
    add("r1_penalty", [](Rng& g) {
        const auto d = PatchDiscriminator::init(8, g, 2, 4);
        const auto x = uniform(g, {8, 8, 3}, 0, 1, false);
        const double lambda = 0.5 + 1.5 * uniform01(g);
        return Case{d.parameters(), [d, x, lambda] { return r1_penalty(d, x, lambda); }};
    });
    add("pixel_pipeline", [](Rng& g) {
        // Tri-plane texels -> S^3D (-> optional 3D-aware block) -> decoder ->
        // compositing, 4 + 4 samples per ray. Depths are planned once and held fixed.
        const auto student = pipeline_student(g, g() & 1);
        const auto cam = CameraPose::orbit(3.0, 0.6 * uniform01(g) - 0.3, 0.4 * uniform01(g) - 0.2, 40.0, 8);
        const PatchSpec patch{2 + pick(g, 3), 2 + pick(g, 3), 3, 8};
        RenderOptions opts;
        opts.coarse_samples = 4;
        opts.fine_samples = 4;
        opts.seed = g();
        const auto rays = plan_samples(PreparedStudent(student), cam, patch, opts);
        return Case{student.parameters(), [student, rays] {
                        const PreparedStudent field(student);
                        return probe(render_planned(field, rays, 3, {1, 1, 1}).image);
                    }, 1e-5};
    });
    return r;
}

double config_error(const Case& c, bool flip) {
    const auto grads = ad::backward(c.loss());
    double worst = 0.0;
    for (const auto& leaf : c.leaves) {
        const auto analytic_t = grads.of(leaf);
        const auto analytic = analytic_t.data();
        auto values = Tensor(leaf).mutable_data();
        std::vector<double> numeric(values.size());
        double scale = 0.0;
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + c.step;
            const double up = c.loss().item();
            values[i] = saved - c.step;
            const double down = c.loss().item();
            values[i] = saved;
            numeric[i] = (up - down) / (2.0 * c.step);
            scale = std::max(scale, std::fabs(numeric[i]));
        }
        const double floor = std::max(1e-3 * scale, 1e-10);
        for (std::size_t i = 0; i < numeric.size(); ++i) {
            const double a = flip ? -analytic[i] : analytic[i];
            if (!std::isfinite(a) || !std::isfinite(numeric[i])) return INFINITY;
            const double denom = std::max({std::fabs(a), std::fabs(numeric[i]), floor});
            worst = std::max(worst, std::fabs(a - numeric[i]) / denom);
        }
    }
    return worst;
}

}  // namespace

bool GradcheckReport::passed() const {
    return !rows.empty() && std::all_of(rows.begin(), rows.end(), [](const auto& r) { return r.passed; });
}

std::vector<std::string> gradcheck_operations() {
    std::vector<std::string> names;
    for (const auto& [name, builder] : registry()) names.push_back(name);
    return names;
}

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
    if (options.configs == 0) throw std::invalid_argument("gradcheck: configs must be >= 1");
    if (!(options.tolerance > 0.0)) throw std::invalid_argument("gradcheck: tolerance must be positive");
    const auto start = std::chrono::steady_clock::now();
    ad::EnableGradGuard grad_on;
    GradcheckReport report;
    std::uint64_t op_index = 0;
    for (const auto& [name, builder] : registry()) {
        GradcheckRow row;
        row.op = name;
        for (std::size_t k = 0; k < options.configs; ++k) {
            auto rng = make_rng(options.seed, {op_index, k});
            const Case c = builder(rng);
            const double err = config_error(c, options.inject_sign_flip);
            row.max_rel_error = std::max(row.max_rel_error, err);
            ++row.configs;
        }
        row.passed = row.max_rel_error < options.tolerance;
        report.rows.push_back(row);
        ++op_index;
    }
    report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

}  // namespace mimic
