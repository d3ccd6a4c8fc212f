// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#include "mimic/ops.hpp"

#include "mimic/parallel.hpp"
#include "node.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mimic::ad {

namespace {

constexpr std::size_t kGrain = 4096;

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                                to_string(b.shape()));
}

// Installs a backward closure that needs the op's own output. Capturing a constant
// view of the output storage avoids a node -> closure -> node cycle.
template <class Make>
void attach_backward(Tensor& out, Make make) {
    auto& node = detail::Node::unwrap(out);
    if (node->recorded) node->backward = make(make_constant_view(out));
}

Tensor reduce_to(const Tensor& grad, const Tensor& operand) {
    if (grad.shape() == operand.shape()) return grad;
    return reshape(sum_all(grad), operand.shape());
}

struct Strides3 {
    std::size_t outer = 1, n = 1, inner = 1;
};

Strides3 split_at(const Shape& shape, std::size_t axis) {
    Strides3 s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.n = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

void check_axis(const char* op, const Tensor& a, std::size_t axis, bool allow_end = false) {
    const auto limit = a.dim() + (allow_end ? 1 : 0);
    if (axis >= limit) {
        throw std::out_of_range(std::string(op) + ": axis " + std::to_string(axis) + " out of range for shape " +
                                to_string(a.shape()));
    }
}

template <class F>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, F f, BackwardFn (*make_bw)(Tensor, Tensor)) {
    Shape shape;
    if (a.shape() == b.shape()) {
        shape = a.shape();
    } else if (b.numel() == 1) {
        shape = a.shape();
    } else if (a.numel() == 1) {
        shape = b.shape();
    } else {
        shape_error(name, a, b);
    }
    const auto n = numel(shape);
    std::vector<double> out(n);
    const auto da = a.data();
    const auto db = b.data();
    const bool a_bc = da.size() != n;
    const bool b_bc = db.size() != n;
    for (std::size_t i = 0; i < n; ++i) out[i] = f(da[a_bc ? 0 : i], db[b_bc ? 0 : i]);
    return make_op_result(name, std::move(shape), std::move(out), {a, b}, make_bw(a, b));
}

template <class F>
Tensor unary_values(const Tensor& a, F f, std::vector<double>& out) {
    const auto d = a.data();
    out.resize(d.size());
    for (std::size_t i = 0; i < d.size(); ++i) out[i] = f(d[i]);
    return a;
}

Tensor constant_like(const Tensor& a, std::vector<double> values) {
    return Tensor::from_vector(a.shape(), std::move(values));
}

double softplus_value(double u) {
    // log1p(exp(u)) without overflow
    return u > 0 ? u + std::log1p(std::exp(-u)) : std::log1p(std::exp(u));
}

double sigmoid_value(double u) {
    if (u >= 0) return 1.0 / (1.0 + std::exp(-u));
    const double e = std::exp(u);
    return e / (1.0 + e);
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise

Tensor add(const Tensor& a, const Tensor& b) {
    return binary("add", a, b, [](double x, double y) { return x + y; }, [](Tensor a, Tensor b) -> BackwardFn {
        return [a, b](const Tensor& g) { return std::vector<Tensor>{reduce_to(g, a), reduce_to(g, b)}; };
    });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary("sub", a, b, [](double x, double y) { return x - y; }, [](Tensor a, Tensor b) -> BackwardFn {
        return [a, b](const Tensor& g) { return std::vector<Tensor>{reduce_to(g, a), reduce_to(neg(g), b)}; };
    });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary("mul", a, b, [](double x, double y) { return x * y; }, [](Tensor a, Tensor b) -> BackwardFn {
        return [a, b](const Tensor& g) {
            Tensor ga, gb;
            if (a.requires_grad()) ga = reduce_to(mul(g, b), a);
            if (b.requires_grad()) gb = reduce_to(mul(g, a), b);
            return std::vector<Tensor>{ga, gb};
        };
    });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary("div", a, b, [](double x, double y) { return x / y; }, [](Tensor a, Tensor b) -> BackwardFn {
        return [a, b](const Tensor& g) {
            for (double v : b.data()) {
                if (v == 0.0) throw std::domain_error("div: backward undefined at divisor 0");
            }
            Tensor ga, gb;
            if (a.requires_grad()) ga = reduce_to(div(g, b), a);
            if (b.requires_grad()) gb = reduce_to(neg(div(mul(g, a), square(b))), b);
            return std::vector<Tensor>{ga, gb};
        };
    });
}

Tensor neg(const Tensor& a) {
    std::vector<double> out;
    unary_values(a, [](double x) { return -x; }, out);
    return make_op_result("neg", a.shape(), std::move(out), {a},
                          [](const Tensor& g) { return std::vector<Tensor>{neg(g)}; });
}

Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out;
    unary_values(a, [s](double x) { return x + s; }, out);
    return make_op_result("add_scalar", a.shape(), std::move(out), {a},
                          [](const Tensor& g) { return std::vector<Tensor>{g}; });
}

Tensor mul_scalar(const Tensor& a, double s) {
    std::vector<double> out;
    unary_values(a, [s](double x) { return x * s; }, out);
    return make_op_result("mul_scalar", a.shape(), std::move(out), {a},
                          [s](const Tensor& g) { return std::vector<Tensor>{mul_scalar(g, s)}; });
}

Tensor exp(const Tensor& a) {
    std::vector<double> values;
    unary_values(a, [](double x) { return std::exp(x); }, values);
    auto out = make_op_result("exp", a.shape(), std::move(values), {a}, nullptr);
    attach_backward(out, [a](Tensor saved) -> BackwardFn {
        return [a, saved](const Tensor& g) {
            return std::vector<Tensor>{mul(g, GradMode::enabled() ? exp(a) : saved)};
        };
    });
    return out;
}

Tensor softplus(const Tensor& a) {
    std::vector<double> values;
    unary_values(a, softplus_value, values);
    return make_op_result("softplus", a.shape(), std::move(values), {a},
                          [a](const Tensor& g) { return std::vector<Tensor>{mul(g, sigmoid(a))}; });
}

Tensor sigmoid(const Tensor& a) {
    std::vector<double> values;
    unary_values(a, sigmoid_value, values);
    auto out = make_op_result("sigmoid", a.shape(), std::move(values), {a}, nullptr);
    attach_backward(out, [a](Tensor saved) -> BackwardFn {
        return [a, saved](const Tensor& g) {
            const Tensor s = GradMode::enabled() ? sigmoid(a) : saved;
            return std::vector<Tensor>{mul(g, mul(s, add_scalar(neg(s), 1.0)))};
        };
    });
    return out;
}

Tensor relu(const Tensor& a) { return leaky_relu(a, 0.0); }

Tensor leaky_relu(const Tensor& a, double slope) {
    std::vector<double> values;
    unary_values(a, [slope](double x) { return x > 0 ? x : slope * x; }, values);
    return make_op_result(slope == 0.0 ? "relu" : "leaky_relu", a.shape(), std::move(values), {a},
                          [a, slope](const Tensor& g) {
                              std::vector<double> d(a.numel());
                              const auto x = a.data();
                              for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] > 0 ? 1.0 : slope;
                              return std::vector<Tensor>{mul(g, constant_like(a, std::move(d)))};
                          });
}

Tensor sqrt(const Tensor& a) {
    std::vector<double> values;
    unary_values(a, [](double x) { return std::sqrt(x); }, values);
    auto out = make_op_result("sqrt", a.shape(), std::move(values), {a}, nullptr);
    attach_backward(out, [a](Tensor saved) -> BackwardFn {
        return [a, saved](const Tensor& g) {
            const Tensor r = GradMode::enabled() ? sqrt(a) : saved;
            return std::vector<Tensor>{div(g, mul_scalar(r, 2.0))};
        };
    });
    return out;
}

Tensor square(const Tensor& a) {
    std::vector<double> values;
    unary_values(a, [](double x) { return x * x; }, values);
    return make_op_result("square", a.shape(), std::move(values), {a},
                          [a](const Tensor& g) { return std::vector<Tensor>{mul(g, mul_scalar(a, 2.0))}; });
}

Tensor abs(const Tensor& a) {
    std::vector<double> values;
    unary_values(a, [](double x) { return std::fabs(x); }, values);
    return make_op_result("abs", a.shape(), std::move(values), {a}, [a](const Tensor& g) {
        std::vector<double> s(a.numel());
        const auto x = a.data();
        for (std::size_t i = 0; i < s.size(); ++i) s[i] = x[i] > 0 ? 1.0 : (x[i] < 0 ? -1.0 : 0.0);
        return std::vector<Tensor>{mul(g, constant_like(a, std::move(s)))};
    });
}

Tensor elementwise(Elementwise kind, const Tensor& a, const Tensor& b, double alpha) {
    auto need_b = [&]() -> const Tensor& {
        if (!b.defined()) throw std::invalid_argument("elementwise: binary op requires two operands");
        return b;
    };
    switch (kind) {
        case Elementwise::kAdd: return add(a, need_b());
        case Elementwise::kSub: return sub(a, need_b());
        case Elementwise::kMul: return mul(a, need_b());
        case Elementwise::kDiv: return div(a, need_b());
        case Elementwise::kNeg: return neg(a);
        case Elementwise::kExp: return exp(a);
        case Elementwise::kSoftplus: return softplus(a);
        case Elementwise::kSigmoid: return sigmoid(a);
        case Elementwise::kRelu: return relu(a);
        case Elementwise::kLeakyRelu: return leaky_relu(a, alpha);
        case Elementwise::kSqrt: return sqrt(a);
        case Elementwise::kSquare: return square(a);
        case Elementwise::kAbs: return abs(a);
    }
    throw std::invalid_argument("elementwise: unknown kind");
}

// ---------------------------------------------------------------------------
// Matrix product

namespace {

void matmul_kernel(const double* A, const double* B, double* C, std::size_t m, std::size_t n, std::size_t k,
                   bool ta, bool tb) {
    // A transposed B is copied to k x n first so the inner loop runs over contiguous
    // output columns. Each C[i, j] still accumulates over k in ascending order from 0,
    // so the result does not depend on the partition or on this layout change.
    std::vector<double> bt;
    if (tb) {
        bt.resize(k * n);
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = B[j * k + p];
        B = bt.data();
    }
    const auto grain = std::max<std::size_t>(1, 8 * kGrain / (n * k + 1));
    parallel::parallel_for(m, grain, [&](std::size_t i0, std::size_t i1) {
        if (!ta) {
            for (std::size_t i = i0; i < i1; ++i) {
                double* c = C + i * n;
                for (std::size_t p = 0; p < k; ++p) {
                    const double a = A[i * k + p];
                    const double* b = B + p * n;
                    for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
                }
            }
        } else {
            for (std::size_t p = 0; p < k; ++p) {
                const double* b = B + p * n;
                for (std::size_t i = i0; i < i1; ++i) {
                    const double a = A[p * m + i];
                    double* c = C + i * n;
                    for (std::size_t j = 0; j < n; ++j) c[j] += a * b[j];
                }
            }
        }
    });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, bool ta, bool tb) {
    if (a.dim() != 2 || b.dim() != 2) {
        throw std::invalid_argument("matmul: expected 2-D operands, got " + to_string(a.shape()) + " and " +
                                    to_string(b.shape()));
    }
    const auto m = ta ? a.size(1) : a.size(0);
    const auto k = ta ? a.size(0) : a.size(1);
    const auto kb = tb ? b.size(1) : b.size(0);
    const auto n = tb ? b.size(0) : b.size(1);
    if (k != kb) shape_error("matmul", a, b);
    std::vector<double> out(m * n, 0.0);
    matmul_kernel(a.data().data(), b.data().data(), out.data(), m, n, k, ta, tb);
    return make_op_result("matmul", {m, n}, std::move(out), {a, b}, [a, b, ta, tb](const Tensor& g) {
        Tensor ga, gb;
        if (a.requires_grad()) ga = ta ? matmul(b, g, tb, true) : matmul(g, b, false, !tb);
        if (b.requires_grad()) gb = tb ? matmul(g, a, true, ta) : matmul(a, g, !ta, false);
        return std::vector<Tensor>{ga, gb};
    });
}

// ---------------------------------------------------------------------------
// Reductions and broadcasting

Tensor expand(const Tensor& a, std::size_t axis, std::size_t n) {
    check_axis("expand", a, axis, true);
    Shape shape = a.shape();
    shape.insert(shape.begin() + static_cast<std::ptrdiff_t>(axis), n);
    const auto s = split_at(shape, axis);
    std::vector<double> out(numel(shape));
    const auto x = a.data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t k = 0; k < n; ++k)
            for (std::size_t i = 0; i < s.inner; ++i) out[(o * n + k) * s.inner + i] = x[o * s.inner + i];
    return make_op_result("expand", std::move(shape), std::move(out), {a},
                          [axis](const Tensor& g) { return std::vector<Tensor>{sum(g, axis)}; });
}

Tensor reduce(Reduce kind, const Tensor& a, std::size_t axis) {
    check_axis("reduce", a, axis);
    const auto s = split_at(a.shape(), axis);
    Shape shape = a.shape();
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
    std::vector<double> out(s.outer * s.inner, 0.0);
    const auto x = a.data();
    std::vector<std::size_t> arg;
    if (kind == Reduce::kMax) {
        if (s.n == 0) throw std::invalid_argument("reduce: max over empty axis");
        arg.assign(out.size(), 0);
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t i = 0; i < s.inner; ++i) {
                std::size_t best = 0;
                double v = x[o * s.n * s.inner + i];
                for (std::size_t k = 1; k < s.n; ++k) {
                    const double c = x[(o * s.n + k) * s.inner + i];
                    if (c > v) {
                        v = c;
                        best = k;
                    }
                }
                out[o * s.inner + i] = v;
                arg[o * s.inner + i] = best;
            }
    } else {
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t k = 0; k < s.n; ++k)
                for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += x[(o * s.n + k) * s.inner + i];
        if (kind == Reduce::kMean && s.n > 0) {
            for (auto& v : out) v /= static_cast<double>(s.n);
        }
    }
    const char* name = kind == Reduce::kSum ? "sum" : (kind == Reduce::kMean ? "mean" : "max");
    return make_op_result(name, std::move(shape), std::move(out), {a}, [a, kind, axis, s, arg](const Tensor& g) {
        Tensor e = expand(g, axis, s.n);
        if (kind == Reduce::kMean) return std::vector<Tensor>{mul_scalar(e, 1.0 / static_cast<double>(s.n))};
        if (kind == Reduce::kSum) return std::vector<Tensor>{e};
        std::vector<double> mask(a.numel(), 0.0);
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t i = 0; i < s.inner; ++i) mask[(o * s.n + arg[o * s.inner + i]) * s.inner + i] = 1.0;
        return std::vector<Tensor>{mul(e, Tensor::from_vector(a.shape(), std::move(mask)))};
    });
}

Tensor sum(const Tensor& a, std::size_t axis) { return reduce(Reduce::kSum, a, axis); }
Tensor mean(const Tensor& a, std::size_t axis) { return reduce(Reduce::kMean, a, axis); }
Tensor sum_all(const Tensor& a) { return sum(reshape(a, {a.numel()}), 0); }
Tensor mean_all(const Tensor& a) { return mean(reshape(a, {a.numel()}), 0); }

// ---------------------------------------------------------------------------
// Layout

Tensor reshape(const Tensor& a, Shape shape) {
    if (numel(shape) != a.numel()) {
        throw std::invalid_argument("reshape: cannot view " + to_string(a.shape()) + " as " + to_string(shape));
    }
    std::vector<double> out(a.data().begin(), a.data().end());
    const Shape original = a.shape();
    return make_op_result("reshape", std::move(shape), std::move(out), {a},
                          [original](const Tensor& g) { return std::vector<Tensor>{reshape(g, original)}; });
}

Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm) {
    const auto d = a.dim();
    if (perm.size() != d) throw std::invalid_argument("permute: rank mismatch for " + to_string(a.shape()));
    std::vector<bool> seen(d, false);
    for (auto p : perm) {
        if (p >= d || seen[p]) throw std::invalid_argument("permute: invalid permutation");
        seen[p] = true;
    }
    Shape shape(d);
    for (std::size_t i = 0; i < d; ++i) shape[i] = a.shape()[perm[i]];
    std::vector<std::size_t> in_stride(d, 1);
    for (std::size_t i = d; i-- > 1;) in_stride[i - 1] = in_stride[i] * a.shape()[i];
    const auto n = a.numel();
    std::vector<double> out(n);
    const auto x = a.data();
    std::vector<std::size_t> idx(d, 0);
    for (std::size_t flat = 0; flat < n; ++flat) {
        std::size_t src = 0;
        for (std::size_t i = 0; i < d; ++i) src += idx[i] * in_stride[perm[i]];
        out[flat] = x[src];
        for (std::size_t i = d; i-- > 0;) {
            if (++idx[i] < shape[i]) break;
            idx[i] = 0;
        }
    }
    std::vector<std::size_t> inverse(d);
    for (std::size_t i = 0; i < d; ++i) inverse[perm[i]] = i;
    return make_op_result("permute", std::move(shape), std::move(out), {a},
                          [inverse](const Tensor& g) { return std::vector<Tensor>{permute(g, inverse)}; });
}

Tensor transpose(const Tensor& a) {
    if (a.dim() != 2) throw std::invalid_argument("transpose: expected 2-D, got " + to_string(a.shape()));
    return permute(a, {1, 0});
}

Tensor concat(const std::vector<Tensor>& tensors, std::size_t axis) {
    if (tensors.empty()) throw std::invalid_argument("concat: no inputs");
    const auto& first = tensors.front();
    check_axis("concat", first, axis);
    Shape shape = first.shape();
    shape[axis] = 0;
    for (const auto& t : tensors) {
        if (t.dim() != first.dim()) shape_error("concat", first, t);
        for (std::size_t i = 0; i < t.dim(); ++i) {
            if (i != axis && t.shape()[i] != first.shape()[i]) shape_error("concat", first, t);
        }
        shape[axis] += t.shape()[axis];
    }
    const auto s = split_at(shape, axis);
    std::vector<double> out(numel(shape));
    std::size_t offset = 0;
    std::vector<std::size_t> offsets;
    for (const auto& t : tensors) {
        const auto n = t.shape()[axis];
        const auto x = t.data();
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t k = 0; k < n; ++k)
                for (std::size_t i = 0; i < s.inner; ++i)
                    out[(o * s.n + offset + k) * s.inner + i] = x[(o * n + k) * s.inner + i];
        offsets.push_back(offset);
        offset += n;
    }
    std::vector<std::size_t> extents;
    for (const auto& t : tensors) extents.push_back(t.shape()[axis]);
    return make_op_result("concat", std::move(shape), std::move(out), tensors,
                          [axis, offsets, extents](const Tensor& g) {
                              std::vector<Tensor> grads;
                              for (std::size_t i = 0; i < offsets.size(); ++i)
                                  grads.push_back(slice(g, axis, offsets[i], extents[i]));
                              return grads;
                          });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
    check_axis("slice", a, axis);
    if (start + length > a.shape()[axis]) {
        throw std::out_of_range("slice: [" + std::to_string(start) + ", " + std::to_string(start + length) +
                                ") exceeds extent of axis " + std::to_string(axis) + " in " + to_string(a.shape()));
    }
    const auto s = split_at(a.shape(), axis);
    Shape shape = a.shape();
    shape[axis] = length;
    std::vector<double> out(numel(shape));
    const auto x = a.data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t k = 0; k < length; ++k)
            for (std::size_t i = 0; i < s.inner; ++i)
                out[(o * length + k) * s.inner + i] = x[(o * s.n + start + k) * s.inner + i];
    const auto extent = s.n;
    return make_op_result("slice", std::move(shape), std::move(out), {a}, [axis, start, extent](const Tensor& g) {
        return std::vector<Tensor>{pad_axis(g, axis, start, extent)};
    });
}

Tensor pad_axis(const Tensor& a, std::size_t axis, std::size_t offset, std::size_t extent) {
    check_axis("pad_axis", a, axis);
    const auto len = a.shape()[axis];
    if (offset + len > extent) throw std::out_of_range("pad_axis: block exceeds target extent");
    Shape shape = a.shape();
    shape[axis] = extent;
    const auto s = split_at(a.shape(), axis);
    std::vector<double> out(numel(shape), 0.0);
    const auto x = a.data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t k = 0; k < len; ++k)
            for (std::size_t i = 0; i < s.inner; ++i)
                out[(o * extent + offset + k) * s.inner + i] = x[(o * len + k) * s.inner + i];
    return make_op_result("pad_axis", std::move(shape), std::move(out), {a}, [axis, offset, len](const Tensor& g) {
        return std::vector<Tensor>{slice(g, axis, offset, len)};
    });
}

namespace {

Tensor sum_except(const Tensor& a, std::size_t axis) {
    const auto s = split_at(a.shape(), axis);
    return sum(sum(reshape(a, {s.outer, s.n, s.inner}), 2), 0);
}

template <class F>
std::vector<double> along_values(const Tensor& a, const Tensor& v, std::size_t axis, const char* name, F f) {
    check_axis(name, a, axis);
    if (v.numel() != a.shape()[axis]) {
        throw std::invalid_argument(std::string(name) + ": vector " + to_string(v.shape()) +
                                    " does not match axis " + std::to_string(axis) + " of " + to_string(a.shape()));
    }
    const auto s = split_at(a.shape(), axis);
    std::vector<double> out(a.numel());
    const auto x = a.data();
    const auto w = v.data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t k = 0; k < s.n; ++k)
            for (std::size_t i = 0; i < s.inner; ++i) {
                const auto idx = (o * s.n + k) * s.inner + i;
                out[idx] = f(x[idx], w[k]);
            }
    return out;
}

}  // namespace

Tensor mul_along(const Tensor& a, const Tensor& v, std::size_t axis) {
    auto out = along_values(a, v, axis, "mul_along", [](double x, double w) { return x * w; });
    return make_op_result("mul_along", a.shape(), std::move(out), {a, v}, [a, v, axis](const Tensor& g) {
        Tensor ga, gv;
        if (a.requires_grad()) ga = mul_along(g, v, axis);
        if (v.requires_grad()) gv = reshape(sum_except(mul(g, a), axis), v.shape());
        return std::vector<Tensor>{ga, gv};
    });
}

Tensor add_along(const Tensor& a, const Tensor& v, std::size_t axis) {
    auto out = along_values(a, v, axis, "add_along", [](double x, double w) { return x + w; });
    return make_op_result("add_along", a.shape(), std::move(out), {a, v}, [v, axis](const Tensor& g) {
        Tensor gv;
        if (v.requires_grad()) gv = reshape(sum_except(g, axis), v.shape());
        return std::vector<Tensor>{g, gv};
    });
}

Tensor gather(const Tensor& a, IndexMap index, Shape out_shape) {
    if (numel(out_shape) != index->size()) throw std::invalid_argument("gather: index size does not match shape");
    std::vector<double> out(index->size());
    const auto x = a.data();
    const auto& idx = *index;
    const auto limit = static_cast<std::int64_t>(x.size());
    for (const auto j : idx) {
        if (j >= limit) throw std::out_of_range("gather: index out of range for " + to_string(a.shape()));
    }
    parallel::parallel_for(out.size(), kGrain, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i) {
            const auto j = idx[i];
            out[i] = j >= 0 ? x[static_cast<std::size_t>(j)] : 0.0;
        }
    });
    const Shape in_shape = a.shape();
    return make_op_result("gather", std::move(out_shape), std::move(out), {a}, [index, in_shape](const Tensor& g) {
        return std::vector<Tensor>{scatter_add(g, index, in_shape)};
    });
}

Tensor scatter_add(const Tensor& a, IndexMap index, Shape out_shape) {
    if (a.numel() != index->size()) throw std::invalid_argument("scatter_add: index size does not match input");
    std::vector<double> out(numel(out_shape), 0.0);
    const auto x = a.data();
    const auto& idx = *index;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] >= 0) out[static_cast<std::size_t>(idx[i])] += x[i];
    }
    const Shape in_shape = a.shape();
    return make_op_result("scatter_add", std::move(out_shape), std::move(out), {a},
                          [index, in_shape](const Tensor& g) {
                              return std::vector<Tensor>{gather(g, index, in_shape)};
                          });
}

}  // namespace mimic::ad
