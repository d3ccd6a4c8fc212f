// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0
//
// Differentiable tensor operations. Binary elementwise ops accept operands of
// identical shape, or one operand with a single element (scalar broadcast); there is
// no other implicit broadcasting. Backward passes of the generic ops are themselves
// written with these ops, so a gradient computed with create_graph can be
// differentiated again.

#pragma once

#include "mimic/tensor.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace mimic::ad {

enum class Elementwise {
    kAdd,
    kSub,
    kMul,
    kDiv,
    kNeg,
    kExp,
    kSoftplus,  // log(1 + exp(u))
    kSigmoid,
    kRelu,
    kLeakyRelu,
    kSqrt,
    kSquare,
    kAbs,
};

/// Dispatches on `kind`; `b` is required for the binary kinds and ignored otherwise.
/// `alpha` is the negative slope of kLeakyRelu.
Tensor elementwise(Elementwise kind, const Tensor& a, const Tensor& b = {}, double alpha = 0.2);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Backward throws if any divisor element is zero.
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.2);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }

/// Matrix product of 2-D tensors; `trans_a`/`trans_b` use the transposed operand.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

enum class Reduce { kSum, kMean, kMax };

/// Reduces over `axis`, removing it from the shape. kMax routes the gradient to the
/// first maximal element.
Tensor reduce(Reduce kind, const Tensor& a, std::size_t axis);
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);

/// Inserts a new axis of extent `n` at position `axis` by repetition.
Tensor expand(const Tensor& a, std::size_t axis, std::size_t n);

Tensor reshape(const Tensor& a, Shape shape);
/// out.shape[i] = a.shape[perm[i]].
Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm);
Tensor transpose(const Tensor& a);

/// Extents must agree on every axis except `axis`; inputs are laid out in order.
Tensor concat(const std::vector<Tensor>& tensors, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
/// Places `a` at [offset, offset + a.size(axis)) of a zero tensor with extent `extent`.
Tensor pad_axis(const Tensor& a, std::size_t axis, std::size_t offset, std::size_t extent);

/// Multiplies (adds) `v` along `axis` of `a`; v.numel() must equal a.size(axis).
Tensor mul_along(const Tensor& a, const Tensor& v, std::size_t axis);
Tensor add_along(const Tensor& a, const Tensor& v, std::size_t axis);

using IndexMap = std::shared_ptr<const std::vector<std::int64_t>>;

/// out[i] = index[i] >= 0 ? a[index[i]] : 0. The adjoint pair gather/scatter_add
/// carries im2col, nearest upsampling and other fixed re-indexings.
Tensor gather(const Tensor& a, IndexMap index, Shape out_shape);
/// out[index[i]] += a[i] for index[i] >= 0; out has `out_shape`.
Tensor scatter_add(const Tensor& a, IndexMap index, Shape out_shape);

}  // namespace mimic::ad
