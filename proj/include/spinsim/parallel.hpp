#pragma once

// Deterministic work distribution: items are indexed, workers pick indices
// round-robin, results land in index order, so reductions never depend on the
// thread count or scheduling.

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "spinsim/errors.hpp"

namespace spinsim {

/// 0 or negative -> SPINSIM_THREADS env var -> hardware concurrency.
inline int resolve_threads(int requested) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("SPINSIM_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end && *end == '\0' && v > 0) return int(v);
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? int(hw) : 1;
}

/// fn(i) for i in [0, n); fn must only write to per-index state.
template <typename Fn>
void parallel_index_for(long n, int threads, Fn&& fn) {
    if (n <= 0) return;
    threads = std::max(1, std::min(threads, int(std::min<long>(n, 1024))));
    if (threads <= 1 || n == 1) {
        for (long i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(std::size_t(threads));
    std::exception_ptr first_error;
    std::mutex error_mutex;
    for (int tid = 0; tid < threads; ++tid) {
        pool.emplace_back([&, tid] {
            try {
                for (long i = tid; i < n; i += threads) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

} // namespace spinsim
