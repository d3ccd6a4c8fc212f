// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#include "mimic/decoder.hpp"

#include "mimic/ops.hpp"
#include "mimic/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>

namespace mimic {

namespace {

ad::Tensor uniform(ad::Shape shape, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> v(ad::numel(shape));
    for (auto& x : v) x = dist(rng);
    return ad::Tensor::from_vector(std::move(shape), std::move(v), true);
}

}  // namespace

DecoderParams DecoderParams::init(std::size_t input_dim, std::size_t hidden, std::size_t depth,
                                  std::size_t color_dim, std::mt19937_64& rng, double density_bias) {
    if (depth == 0 || input_dim == 0 || color_dim == 0 || (depth > 1 && hidden == 0)) {
        throw std::invalid_argument("decoder: depth, widths and color_dim must be positive");
    }
    DecoderParams p;
    p.color_dim = color_dim;
    std::size_t in = input_dim;
    for (std::size_t l = 0; l < depth; ++l) {
        const std::size_t out = l + 1 == depth ? color_dim + 1 : hidden;
        const double bound = 1.0 / std::sqrt(static_cast<double>(in));
        p.weights.push_back(uniform({out, in}, bound, rng));
        p.biases.push_back(uniform({out}, bound, rng));
        in = out;
    }
    p.biases.back().mutable_data()[color_dim] = density_bias;
    return p;
}

std::vector<ad::Tensor> DecoderParams::parameters() const {
    std::vector<ad::Tensor> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        out.push_back(weights[l]);
        out.push_back(biases[l]);
    }
    return out;
}

void DecoderParams::validate() const {
    if (weights.empty() || weights.size() != biases.size()) throw std::invalid_argument("decoder: layer count mismatch");
    for (std::size_t l = 0; l < weights.size(); ++l) {
        const auto& w = weights[l];
        if (w.dim() != 2 || biases[l].shape() != ad::Shape{w.size(0)}) {
            throw std::invalid_argument("decoder: layer " + std::to_string(l) + " has weight " + ad::to_string(w.shape()) +
                                        " and bias " + ad::to_string(biases[l].shape()));
        }
        if (l > 0 && w.size(1) != weights[l - 1].size(0)) {
            throw std::invalid_argument("decoder: layer " + std::to_string(l) + " expects width " +
                                        std::to_string(w.size(1)) + ", previous layer yields " +
                                        std::to_string(weights[l - 1].size(0)));
        }
    }
    if (weights.back().size(0) != color_dim + 1) throw std::invalid_argument("decoder: head width != color_dim + 1");
}

namespace {

constexpr std::size_t kBlock = 256;

struct MlpLayout {
    std::vector<std::size_t> width;         // width[0] = input, width[l + 1] = output of layer l
    std::vector<std::size_t> param_offset;  // offset of (W_l, b_l) in a flat gradient block
    std::size_t param_total = 0;
};

MlpLayout layout_of(std::span<const ad::Tensor> weights) {
    MlpLayout m;
    m.width.push_back(weights.front().size(1));
    for (const auto& w : weights) {
        m.width.push_back(w.size(0));
        m.param_offset.push_back(m.param_total);
        m.param_total += w.size(0) * w.size(1) + w.size(0);
    }
    return m;
}

// Eight interleaved partial sums combined in a fixed tree, so the result is
// independent of how the caller partitions work.
double dot(const double* a, const double* b, std::size_t n) {
    double acc[8] = {};
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        for (std::size_t k = 0; k < 8; ++k) acc[k] += a[i + k] * b[i + k];
    }
    for (std::size_t k = 0; i < n; ++i, ++k) acc[k] += a[i] * b[i];
    return ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7]));
}

// Blocks are feature-major (width x rows) so every inner loop runs along rows.
// acts[l] is layer l's input, pre[l] its pre-activation; pre.back() is the head.
// Each z[o, i] sums W[o, p] h[p, i] over ascending p from 0, then adds the bias.
void mlp_block(std::span<const ad::Tensor> weights, std::span<const ad::Tensor> biases, const MlpLayout& m,
               const double* x, std::size_t rows, double slope, std::vector<std::vector<double>>& acts,
               std::vector<std::vector<double>>& pre) {
    const std::size_t layers = weights.size(), in0 = m.width[0];
    acts.resize(layers);
    pre.resize(layers);
    acts[0].resize(in0 * rows);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t p = 0; p < in0; ++p) acts[0][p * rows + i] = x[i * in0 + p];
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t in = m.width[l], out = m.width[l + 1];
        const auto w = weights[l].data();
        const auto bias = biases[l].data();
        const double* h = acts[l].data();
        auto& z = pre[l];
        z.assign(out * rows, 0.0);
        for (std::size_t o = 0; o < out; ++o) {
            double* zo = &z[o * rows];
            for (std::size_t p = 0; p < in; ++p) {
                const double c = w[o * in + p];
                const double* hp = h + p * rows;
                for (std::size_t i = 0; i < rows; ++i) zo[i] += c * hp[i];
            }
            for (std::size_t i = 0; i < rows; ++i) zo[i] += bias[o];
        }
        if (l + 1 < layers) {
            auto& next = acts[l + 1];
            next.resize(out * rows);
            for (std::size_t k = 0; k < out * rows; ++k) next[k] = z[k] > 0 ? z[k] : slope * z[k];
        }
    }
}

}  // namespace

ad::Tensor fused_mlp(const ad::Tensor& features, std::span<const ad::Tensor> weights,
                     std::span<const ad::Tensor> biases, double slope) {
    if (weights.empty() || weights.size() != biases.size()) throw std::invalid_argument("fused_mlp: layer count mismatch");
    if (features.dim() != 2 || features.size(1) != weights.front().size(1)) {
        throw std::invalid_argument("fused_mlp: features " + ad::to_string(features.shape()) + " vs first layer " +
                                    ad::to_string(weights.front().shape()));
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].dim() != 2 || biases[l].shape() != ad::Shape{weights[l].size(0)} ||
            (l > 0 && weights[l].size(1) != weights[l - 1].size(0))) {
            throw std::invalid_argument("fused_mlp: layer " + std::to_string(l) + " shapes do not chain");
        }
    }
    auto m = std::make_shared<const MlpLayout>(layout_of(weights));
    const std::size_t n = features.size(0), out_w = m->width.back(), in_w = m->width.front();
    const std::size_t blocks = (n + kBlock - 1) / kBlock;
    std::vector<double> out(n * out_w);
    const auto x = features.data();
    parallel::parallel_for(blocks, 1, [&](std::size_t b0, std::size_t b1) {
        std::vector<std::vector<double>> acts, pre;
        for (std::size_t blk = b0; blk < b1; ++blk) {
            const std::size_t r0 = blk * kBlock, rows = std::min(kBlock, n - r0);
            mlp_block(weights, biases, *m, &x[r0 * in_w], rows, slope, acts, pre);
            const auto& head = pre.back();
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t o = 0; o < out_w; ++o) out[(r0 + i) * out_w + o] = head[o * rows + i];
        }
    });

    std::vector<ad::Tensor> inputs{features};
    inputs.insert(inputs.end(), weights.begin(), weights.end());
    inputs.insert(inputs.end(), biases.begin(), biases.end());
    std::vector<ad::Tensor> w_saved(weights.begin(), weights.end()), b_saved(biases.begin(), biases.end());
    auto backward = [m, features, w_saved, b_saved, slope, n, blocks](const ad::Tensor& grad) {
        const std::size_t layers = w_saved.size(), in_w = m->width.front(), out_w = m->width.back();
        const auto g = grad.data();
        const auto x = features.data();
        std::vector<double> gx(n * in_w, 0.0);
        std::vector<double> partial(blocks * m->param_total, 0.0);
        const std::vector<double> ones(kBlock, 1.0);
        parallel::parallel_for(blocks, 1, [&](std::size_t b0, std::size_t b1) {
            std::vector<std::vector<double>> acts, pre;
            std::vector<double> gcur, gprev;
            for (std::size_t blk = b0; blk < b1; ++blk) {
                const std::size_t r0 = blk * kBlock, rows = std::min(kBlock, n - r0);
                mlp_block(w_saved, b_saved, *m, &x[r0 * in_w], rows, slope, acts, pre);
                double* part = &partial[blk * m->param_total];
                gcur.resize(out_w * rows);
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t o = 0; o < out_w; ++o) gcur[o * rows + i] = g[(r0 + i) * out_w + o];
                for (std::size_t l = layers; l-- > 0;) {
                    const std::size_t in = m->width[l], out = m->width[l + 1];
                    double* gw = part + m->param_offset[l];
                    double* gb = gw + out * in;
                    const double* h = acts[l].data();
                    const auto w = w_saved[l].data();
                    for (std::size_t o = 0; o < out; ++o) {
                        const double* go = &gcur[o * rows];
                        gb[o] = dot(go, ones.data(), rows);
                        for (std::size_t p = 0; p < in; ++p) gw[o * in + p] = dot(go, h + p * rows, rows);
                    }
                    gprev.assign(in * rows, 0.0);
                    for (std::size_t p = 0; p < in; ++p) {
                        double* gp = &gprev[p * rows];
                        for (std::size_t o = 0; o < out; ++o) {
                            const double c = w[o * in + p];
                            const double* go = &gcur[o * rows];
                            for (std::size_t i = 0; i < rows; ++i) gp[i] += c * go[i];
                        }
                    }
                    if (l > 0) {
                        const auto& z = pre[l - 1];
                        for (std::size_t k = 0; k < in * rows; ++k) gprev[k] *= z[k] > 0 ? 1.0 : slope;
                    } else {
                        for (std::size_t i = 0; i < rows; ++i)
                            for (std::size_t p = 0; p < in; ++p) gx[(r0 + i) * in_w + p] = gprev[p * rows + i];
                    }
                    std::swap(gcur, gprev);
                }
            }
        });
        std::vector<double> total(m->param_total, 0.0);
        for (std::size_t blk = 0; blk < blocks; ++blk) {
            const double* part = &partial[blk * m->param_total];
            for (std::size_t k = 0; k < m->param_total; ++k) total[k] += part[k];
        }
        std::vector<ad::Tensor> grads{ad::Tensor::from_vector({n, in_w}, std::move(gx))};
        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t in = m->width[l], out = m->width[l + 1];
            const auto* base = &total[m->param_offset[l]];
            grads.push_back(ad::Tensor::from_vector({out, in}, std::vector<double>(base, base + out * in)));
        }
        for (std::size_t l = 0; l < layers; ++l) {
            const std::size_t in = m->width[l], out = m->width[l + 1];
            const auto* base = &total[m->param_offset[l] + out * in];
            grads.push_back(ad::Tensor::from_vector({out}, std::vector<double>(base, base + out)));
        }
        return grads;
    };
    return ad::make_op_result("fused_mlp", {n, out_w}, std::move(out), std::move(inputs), std::move(backward));
}

Decoded decode(const DecoderParams& params, const ad::Tensor& features) {
    if (features.dim() != 2 || features.size(1) != params.input_dim()) {
        throw std::invalid_argument("decode: features " + ad::to_string(features.shape()) + " do not match input width " +
                                    std::to_string(params.input_dim()));
    }
    const auto h = fused_mlp(features, params.weights, params.biases, 0.2);
    const std::size_t n = features.size(0);
    const std::size_t dc = params.color_dim;
    return {ad::sigmoid(ad::slice(h, 1, 0, dc)), ad::reshape(ad::softplus(ad::slice(h, 1, dc, 1)), {n})};
}

}  // namespace mimic
