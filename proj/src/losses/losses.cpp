// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#include "mimic/losses.hpp"

#include "mimic/aware3d.hpp"
#include "mimic/backward.hpp"
#include "mimic/ops.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace mimic {

namespace {

constexpr double kTaps[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};

std::size_t reflect(long i, long n) {
    if (n == 1) return 0;
    while (i < 0 || i >= n) i = i < 0 ? -i : 2 * (n - 1) - i;
    return static_cast<std::size_t>(i);
}

// (n / 2) x n matrix applying the blur and keeping even samples.
ad::Tensor blur_decimate_matrix(std::size_t n) {
    const std::size_t m = n / 2;
    std::vector<double> a(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (long k = 0; k < 5; ++k) a[i * n + reflect(long(2 * i) + k - 2, long(n))] += kTaps[k];
    }
    return ad::Tensor::from_vector({m, n}, std::move(a));
}

ad::Tensor blur_decimate(const ad::Tensor& img) {
    const std::size_t h = img.size(0), w = img.size(1);
    auto y = ad::matmul(blur_decimate_matrix(h), ad::reshape(img, {h, w * 3}));
    y = ad::reshape(ad::permute(ad::reshape(y, {h / 2, w, 3}), {1, 0, 2}), {w, (h / 2) * 3});
    y = ad::matmul(blur_decimate_matrix(w), y);
    return ad::permute(ad::reshape(y, {w / 2, h / 2, 3}), {1, 0, 2});
}

ad::Tensor gradient_magnitude(const ad::Tensor& img) {
    const std::size_t h = img.size(0), w = img.size(1);
    const auto dx = ad::sub(ad::slice(ad::slice(img, 1, 1, w - 1), 0, 0, h - 1),
                            ad::slice(ad::slice(img, 1, 0, w - 1), 0, 0, h - 1));
    const auto dy = ad::sub(ad::slice(ad::slice(img, 0, 1, h - 1), 1, 0, w - 1),
                            ad::slice(ad::slice(img, 0, 0, h - 1), 1, 0, w - 1));
    const auto energy = ad::sum(ad::add(ad::square(dx), ad::square(dy)), 2);
    return ad::sqrt(ad::add_scalar(energy, 1e-6));
}

ad::Tensor level_distance(const ad::Tensor& a, const ad::Tensor& b) {
    const auto rgb = ad::sum_all(ad::abs(ad::sub(a, b)));
    const auto mag = ad::sum_all(ad::abs(ad::sub(gradient_magnitude(a), gradient_magnitude(b))));
    const std::size_t h = a.size(0), w = a.size(1);
    const double count = double(h * w * 3 + (h - 1) * (w - 1));
    return ad::mul_scalar(ad::add(rgb, mag), 1.0 / count);
}

ad::Tensor uniform(ad::Shape shape, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(ad::numel(shape));
    for (auto& x : v) x = dist(rng);
    return ad::Tensor::from_vector(std::move(shape), std::move(v), true);
}

}  // namespace

void LossConfig::validate() const {
    if (!(lambda_r1 >= 0.0)) throw std::invalid_argument("loss config: lambda_r1 must be >= 0");
    if (levels == 0 || level_weights.size() < levels) {
        throw std::invalid_argument("loss config: need one weight per pyramid level");
    }
    for (double w : level_weights) {
        if (!(w >= 0.0)) throw std::invalid_argument("loss config: level weights must be >= 0");
    }
}

ad::Tensor perceptual_proxy(const ad::Tensor& a, const ad::Tensor& b, const LossConfig& config) {
    config.validate();
    if (a.shape() != b.shape()) {
        throw std::invalid_argument("perceptual_proxy: shapes " + ad::to_string(a.shape()) + " and " +
                                    ad::to_string(b.shape()) + " differ");
    }
    if (a.dim() != 3 || a.size(2) != 3 || a.size(0) < 2 || a.size(1) < 2) {
        throw std::invalid_argument("perceptual_proxy: expected H x W x 3 with H, W >= 2, got " +
                                    ad::to_string(a.shape()));
    }
    ad::Tensor total;
    ad::Tensor la = a, lb = b;
    for (std::size_t l = 0; l < config.levels; ++l) {
        if (l > 0) {
            if (la.size(0) < 4 || la.size(1) < 4) break;
            la = blur_decimate(la);
            lb = blur_decimate(lb);
        }
        const auto term = ad::mul_scalar(level_distance(la, lb), config.level_weights[l]);
        total = total.defined() ? ad::add(total, term) : term;
    }
    return total;
}

ad::Tensor nonsat_gen_loss(const ad::Tensor& score_fake) { return ad::mean_all(ad::softplus(ad::neg(score_fake))); }

ad::Tensor disc_loss(const ad::Tensor& score_fake, const ad::Tensor& score_real) {
    return ad::add(ad::mean_all(ad::softplus(score_fake)), ad::mean_all(ad::softplus(ad::neg(score_real))));
}

PatchDiscriminator PatchDiscriminator::init(std::size_t patch_size, std::mt19937_64& rng, std::size_t width,
                                            std::size_t hidden) {
    if (patch_size < 8 || patch_size % 8 != 0) {
        throw std::invalid_argument("discriminator: patch size must be a positive multiple of 8");
    }
    PatchDiscriminator d;
    d.patch_size = patch_size;
    const std::size_t channels[4] = {3, width, 2 * width, 2 * width};
    for (std::size_t l = 0; l < 3; ++l) {
        const double bound = 1.0 / std::sqrt(double(channels[l] * 9));
        d.conv_kernels.push_back(uniform({channels[l + 1], channels[l], 3, 3}, bound, rng));
        d.conv_biases.push_back(ad::Tensor::zeros({channels[l + 1]}, true));
    }
    const std::size_t side = patch_size / 8;
    const std::size_t flat = channels[3] * side * side;
    d.dense1_weight = uniform({hidden, flat}, 1.0 / std::sqrt(double(flat)), rng);
    d.dense1_bias = ad::Tensor::zeros({hidden}, true);
    d.dense2_weight = uniform({1, hidden}, 1.0 / std::sqrt(double(hidden)), rng);
    d.dense2_bias = ad::Tensor::zeros({1}, true);
    return d;
}

std::vector<ad::Tensor> PatchDiscriminator::parameters() const {
    std::vector<ad::Tensor> out;
    for (std::size_t l = 0; l < conv_kernels.size(); ++l) {
        out.push_back(conv_kernels[l]);
        out.push_back(conv_biases[l]);
    }
    out.insert(out.end(), {dense1_weight, dense1_bias, dense2_weight, dense2_bias});
    return out;
}

ad::Tensor PatchDiscriminator::score(const ad::Tensor& patch) const {
    if (patch.shape() != ad::Shape{patch_size, patch_size, 3}) {
        throw std::invalid_argument("discriminator: expected " + std::to_string(patch_size) + " x " +
                                    std::to_string(patch_size) + " x 3 patch, got " + ad::to_string(patch.shape()));
    }
    auto x = ad::permute(patch, {2, 0, 1});
    for (std::size_t l = 0; l < conv_kernels.size(); ++l) {
        x = ad::leaky_relu(conv2d(x, conv_kernels[l], conv_biases[l], 2, Padding::kZero), 0.2);
    }
    auto v = ad::reshape(x, {1, x.numel()});
    v = ad::leaky_relu(ad::add_along(ad::matmul(v, dense1_weight, false, true), dense1_bias, 1), 0.2);
    v = ad::add_along(ad::matmul(v, dense2_weight, false, true), dense2_bias, 1);
    return ad::reshape(v, {});
}

ad::Tensor r1_penalty(const PatchDiscriminator& disc, const ad::Tensor& real_patch, double lambda) {
    auto real = real_patch.clone();
    real.set_requires_grad(true);
    ad::EnableGradGuard guard;
    ad::BackwardOptions opts;
    opts.create_graph = true;
    opts.inputs = {real};
    const auto grad = ad::backward(disc.score(real), opts).of(real);
    return ad::mul_scalar(ad::sum_all(ad::square(grad)), lambda);
}

ad::Tensor total_loss(const LossTerms& terms, const LossConfig& config) {
    ad::Tensor total = ad::Tensor::scalar(0.0);
    if (config.imitation) {
        if (!terms.imitation.defined()) throw std::invalid_argument("total_loss: imitation enabled but not computed");
        total = ad::add(total, ad::mul_scalar(terms.imitation, config.imitation_weight));
    }
    if (config.adv3d) {
        if (!terms.adv.defined()) throw std::invalid_argument("total_loss: adv3d enabled but not computed");
        total = ad::add(total, ad::mul_scalar(terms.adv, config.adv_weight));
    }
    return total;
}

}  // namespace mimic
