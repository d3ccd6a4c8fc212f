// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#include "mimic/aware3d.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <string>
#include <tuple>

namespace mimic {

namespace {

std::int64_t pad_index(std::int64_t i, std::int64_t n, Padding padding) {
    if (i >= 0 && i < n) return i;
    if (padding == Padding::kZero) return -1;
    if (n == 1) return 0;
    if (i < 0) i = -i;
    if (i >= n) i = 2 * (n - 1) - i;
    return std::clamp<std::int64_t>(i, 0, n - 1);
}

std::vector<double> uniform_values(std::size_t n, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(n);
    for (auto& x : v) x = dist(rng);
    return v;
}

void check_map(const ad::Tensor& x, const char* who) {
    if (x.dim() != 3) throw std::invalid_argument(std::string(who) + ": expected C x H x W, got " + ad::to_string(x.shape()));
}

}  // namespace

ad::IndexMap im2col_map(std::size_t c, std::size_t h, std::size_t w, std::size_t k, std::size_t stride,
                        Padding padding) {
    using Key = std::tuple<std::size_t, std::size_t, std::size_t, std::size_t, std::size_t, int>;
    static std::mutex mu;
    static std::map<Key, ad::IndexMap> cache;
    const Key key{c, h, w, k, stride, static_cast<int>(padding)};
    {
        std::lock_guard lock(mu);
        if (auto it = cache.find(key); it != cache.end()) return it->second;
    }
    if (k % 2 == 0 || stride == 0) throw std::invalid_argument("im2col: kernel must be odd and stride positive");
    const std::size_t pad = k / 2;
    if (h + 2 * pad < k || w + 2 * pad < k) throw std::invalid_argument("im2col: input smaller than kernel");
    const std::size_t ho = (h + 2 * pad - k) / stride + 1;
    const std::size_t wo = (w + 2 * pad - k) / stride + 1;
    auto map = std::make_shared<std::vector<std::int64_t>>(c * k * k * ho * wo);
    std::size_t idx = 0;
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t ky = 0; ky < k; ++ky) {
            for (std::size_t kx = 0; kx < k; ++kx) {
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const auto iy = pad_index(static_cast<std::int64_t>(oy * stride + ky) - static_cast<std::int64_t>(pad),
                                              static_cast<std::int64_t>(h), padding);
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const auto ix = pad_index(
                            static_cast<std::int64_t>(ox * stride + kx) - static_cast<std::int64_t>(pad),
                            static_cast<std::int64_t>(w), padding);
                        (*map)[idx++] = (iy < 0 || ix < 0)
                                            ? -1
                                            : static_cast<std::int64_t>((ci * h + static_cast<std::size_t>(iy)) * w +
                                                                        static_cast<std::size_t>(ix));
                    }
                }
            }
        }
    }
    ad::IndexMap result = map;
    std::lock_guard lock(mu);
    return cache.emplace(key, result).first->second;
}

ad::Tensor conv2d(const ad::Tensor& x, const ad::Tensor& kernel, const ad::Tensor& bias, std::size_t stride,
                  Padding padding) {
    check_map(x, "conv2d");
    if (kernel.dim() != 4 || kernel.size(2) != kernel.size(3)) {
        throw std::invalid_argument("conv2d: kernel must be C_out x C_in x k x k, got " + ad::to_string(kernel.shape()));
    }
    if (kernel.size(1) != x.size(0)) {
        throw std::invalid_argument("conv2d: kernel expects " + std::to_string(kernel.size(1)) +
                                    " input channels, got " + std::to_string(x.size(0)));
    }
    const std::size_t c = x.size(0), h = x.size(1), w = x.size(2), k = kernel.size(2);
    const std::size_t pad = k / 2;
    const std::size_t ho = (h + 2 * pad - k) / stride + 1;
    const std::size_t wo = (w + 2 * pad - k) / stride + 1;
    const std::size_t c_out = kernel.size(0);
    auto cols = ad::gather(x, im2col_map(c, h, w, k, stride, padding), {c * k * k, ho * wo});
    auto out = ad::matmul(ad::reshape(kernel, {c_out, c * k * k}), cols);
    if (bias.defined()) out = ad::add_along(out, bias, 0);
    return ad::reshape(out, {c_out, ho, wo});
}

ad::Tensor upsample_nearest2x(const ad::Tensor& x) {
    check_map(x, "upsample_nearest2x");
    const std::size_t c = x.size(0), h = x.size(1), w = x.size(2);
    auto map = std::make_shared<std::vector<std::int64_t>>(c * 4 * h * w);
    std::size_t idx = 0;
    for (std::size_t ci = 0; ci < c; ++ci) {
        for (std::size_t y = 0; y < 2 * h; ++y) {
            for (std::size_t xx = 0; xx < 2 * w; ++xx) {
                (*map)[idx++] = static_cast<std::int64_t>((ci * h + y / 2) * w + xx / 2);
            }
        }
    }
    return ad::gather(x, map, {c, 2 * h, 2 * w});
}

ModConvParams ModConvParams::init(std::size_t c_in, std::size_t c_out, std::size_t d_w, std::mt19937_64& rng) {
    ModConvParams p;
    p.kernel = ad::Tensor::from_vector({c_out, c_in, 3, 3},
                                       uniform_values(c_out * c_in * 9, 1.0 / std::sqrt(c_in * 9.0), rng), true);
    p.affine_weight =
        ad::Tensor::from_vector({c_in, d_w}, uniform_values(c_in * d_w, 1.0 / std::sqrt(double(d_w)), rng), true);
    p.affine_bias = ad::Tensor::full({c_in}, 1.0, true);
    return p;
}

std::vector<ad::Tensor> ModConvParams::parameters() const {
    std::vector<ad::Tensor> out{kernel, affine_weight};
    if (affine_bias.defined()) out.push_back(affine_bias);
    return out;
}

ad::Tensor modulation_scales(const ModConvParams& p, const StyleCode& w) {
    if (p.affine_weight.dim() != 2 || p.affine_weight.size(1) != w.dim()) {
        throw std::invalid_argument("modulated_conv2d: affine map " + ad::to_string(p.affine_weight.shape()) +
                                    " does not accept a style of length " + std::to_string(w.dim()));
    }
    const std::size_t c_in = p.affine_weight.size(0);
    auto s = ad::reshape(ad::matmul(p.affine_weight, ad::reshape(w.w, {w.dim(), 1})), {c_in});
    if (p.affine_bias.defined()) s = ad::add(s, p.affine_bias);
    return s;
}

ad::Tensor modulated_conv2d(const ad::Tensor& x, const ModConvParams& p, const StyleCode& w) {
    check_map(x, "modulated_conv2d");
    if (p.kernel.dim() != 4 || p.kernel.size(2) != 3 || p.kernel.size(3) != 3) {
        throw std::invalid_argument("modulated_conv2d: kernel must be C_out x C_in x 3 x 3, got " +
                                    ad::to_string(p.kernel.shape()));
    }
    if (p.in_channels() != x.size(0)) {
        throw std::invalid_argument("modulated_conv2d: kernel expects " + std::to_string(p.in_channels()) +
                                    " input channels, got " + std::to_string(x.size(0)));
    }
    const std::size_t c_out = p.out_channels();
    const std::size_t fan = p.in_channels() * 9;
    auto k = ad::mul_along(p.kernel, modulation_scales(p, w), 1);
    if (p.demodulate) {
        auto energy = ad::sum(ad::reshape(ad::square(k), {c_out, fan}), 1);
        auto inv = ad::div(ad::Tensor::scalar(1.0), ad::sqrt(ad::add_scalar(energy, p.demod_eps)));
        k = ad::mul_along(k, inv, 0);
    }
    return conv2d(x, k, {}, 1, Padding::kReflect);
}

ad::Tensor axis_pool_repeat(const ad::Tensor& plane, PoolAxis pooled, bool transpose) {
    check_map(plane, "axis_pool_repeat");
    if (plane.size(1) != plane.size(2)) {
        throw std::invalid_argument("axis_pool_repeat: plane must be square, got " + ad::to_string(plane.shape()));
    }
    const std::size_t r = plane.size(1);
    if (pooled == PoolAxis::kRows) {
        auto m = ad::mean(plane, 1);  // indexed by column
        return ad::expand(m, transpose ? 2 : 1, r);
    }
    auto m = ad::mean(plane, 2);  // indexed by row
    return ad::expand(m, transpose ? 1 : 2, r);
}

ad::Tensor aware3d_align(const TriPlane& tp, Plane target) {
    const auto t = static_cast<std::size_t>(target);
    const auto& first = tp.planes[(t + 1) % 3];
    const auto& second = tp.planes[(t + 2) % 3];
    if (first.shape() != tp.planes[t].shape() || second.shape() != tp.planes[t].shape()) {
        throw std::invalid_argument("aware3d_align: planes differ in shape");
    }
    return ad::concat({tp.planes[t], axis_pool_repeat(first, PoolAxis::kRows, true),
                       axis_pool_repeat(second, PoolAxis::kCols, true)},
                      0);
}

Aware3dParams Aware3dParams::init(std::size_t channels, std::size_t d_w, std::mt19937_64& rng) {
    Aware3dParams p;
    for (auto& c : p.conv) c = ModConvParams::init(3 * channels, channels, d_w, rng);
    return p;
}

std::vector<ad::Tensor> Aware3dParams::parameters() const {
    std::vector<ad::Tensor> out;
    for (const auto& c : conv) {
        auto p = c.parameters();
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

TriPlane aware3d_block(const TriPlane& tp, const StyleCode& w, const Aware3dParams& params) {
    TriPlane out;
    for (auto plane : kPlanes) {
        const auto i = static_cast<std::size_t>(plane);
        out.planes[i] = ad::leaky_relu(modulated_conv2d(aware3d_align(tp, plane), params.conv[i], w), 0.2);
    }
    return out;
}

TriPlane per_plane_block(const TriPlane& tp, const StyleCode& w, const Aware3dParams& params) {
    const std::size_t c = tp.channels();
    TriPlane out;
    for (auto plane : kPlanes) {
        const auto i = static_cast<std::size_t>(plane);
        const auto& full = params.conv[i];
        ModConvParams own = full;
        own.kernel = ad::slice(full.kernel, 1, 0, c);
        own.affine_weight = ad::slice(full.affine_weight, 0, 0, c);
        if (full.affine_bias.defined()) own.affine_bias = ad::slice(full.affine_bias, 0, 0, c);
        out.planes[i] = ad::leaky_relu(modulated_conv2d(tp.planes[i], own, w), 0.2);
    }
    return out;
}

}  // namespace mimic
