// Copyright Contributors to the triplane-mimic Project
// SPDX-License-Identifier: Apache-2.0

#include "mimic/parallel.hpp"

#include <atomic>

#include <omp.h>

namespace mimic::parallel {

namespace {
std::atomic<int> g_threads{1};
}

void set_num_threads(int threads) { g_threads.store(std::max(1, threads)); }
int num_threads() { return g_threads.load(); }

void detail::run_chunks(std::size_t chunks, void (*body)(std::size_t, void*), void* ctx) {
    const auto n = static_cast<long>(chunks);
#pragma omp parallel for schedule(static, 1) num_threads(static_cast<int>(chunks))
    for (long c = 0; c < n; ++c) body(static_cast<std::size_t>(c), ctx);
}

}  // namespace mimic::parallel
