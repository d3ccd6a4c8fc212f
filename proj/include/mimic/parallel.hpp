// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0
//
// Static work partitioning. Every kernel that uses parallel_for computes each output
// element entirely inside one chunk with a fixed summation order, so results are
// bitwise identical for any thread count.

#pragma once

#include <algorithm>
#include <cstddef>

namespace mimic::parallel {

void set_num_threads(int threads);
int num_threads();

namespace detail {
void run_chunks(std::size_t chunks, void (*body)(std::size_t, void*), void* ctx);
}

/// Calls fn(begin, end) over disjoint ranges covering [0, n).
template <class Fn>
void parallel_for(std::size_t n, std::size_t grain, Fn&& fn) {
    if (n == 0) return;
    const auto threads = static_cast<std::size_t>(std::max(1, num_threads()));
    const auto by_grain = (n + std::max<std::size_t>(grain, 1) - 1) / std::max<std::size_t>(grain, 1);
    const auto chunks = std::min(threads, by_grain);
    if (chunks <= 1) {
        fn(std::size_t{0}, n);
        return;
    }
    struct Ctx {
        Fn* fn;
        std::size_t n;
        std::size_t chunks;
    } ctx{&fn, n, chunks};
    detail::run_chunks(
        chunks,
        [](std::size_t c, void* p) {
            auto* ctx = static_cast<Ctx*>(p);
            const auto begin = ctx->n * c / ctx->chunks;
            const auto end = ctx->n * (c + 1) / ctx->chunks;
            if (begin < end) (*ctx->fn)(begin, end);
        },
        &ctx);
}

}  // namespace mimic::parallel
