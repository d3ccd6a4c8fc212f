// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0
//
// MLP decoder from tri-plane features to color and volume density.

#pragma once

#include "mimic/tensor.hpp"

#include <random>
#include <span>
#include <vector>

namespace mimic {

/// `depth` linear layers: depth - 1 hidden layers of width `hidden` with
/// leaky_relu(0.2), then a head of color_dim + 1 units. Weights are out x in.
struct DecoderParams {
    std::vector<ad::Tensor> weights;
    std::vector<ad::Tensor> biases;
    std::size_t color_dim = 3;

    /// Uniform +-1/sqrt(fan_in) weights and biases; the density bias starts at
    /// `density_bias` so a fresh field is nearly transparent.
    static DecoderParams init(std::size_t input_dim, std::size_t hidden, std::size_t depth, std::size_t color_dim,
                              std::mt19937_64& rng, double density_bias = -1.0);

    std::size_t input_dim() const { return weights.front().size(1); }
    std::size_t hidden() const { return weights.size() > 1 ? weights.front().size(0) : 0; }
    std::size_t depth() const { return weights.size(); }
    std::vector<ad::Tensor> parameters() const;
    /// Throws unless the layer shapes chain and end in a color_dim + 1 head.
    void validate() const;
};

struct Decoded {
    ad::Tensor color;  // N x color_dim, sigmoid
    ad::Tensor sigma;  // N, softplus
};

/// Raw head activations of the MLP: h_{l+1} = leaky_relu(h_l W_l^T + b_l, slope) on
/// hidden layers, no activation on the last. A single fused op that keeps only its
/// N x out result; backward recomputes hidden activations block by block, so memory
/// traffic stays O(N * (in + out)). Weight gradients are summed per fixed 256-row
/// block, then across blocks in order. First order only.
ad::Tensor fused_mlp(const ad::Tensor& features, std::span<const ad::Tensor> weights,
                     std::span<const ad::Tensor> biases, double slope);

/// color = sigmoid(head[:, :color_dim]), sigma = softplus(head[:, color_dim]).
Decoded decode(const DecoderParams& params, const ad::Tensor& features);

}  // namespace mimic
