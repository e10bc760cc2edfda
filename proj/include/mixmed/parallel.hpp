#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace mixmed {

/// Runs f(i) for i in [0, count) on up to `workers` threads. Results must be
/// written to per-index slots so the outcome does not depend on scheduling.
/// The exception from the lowest failing index is rethrown.
template <class F>
void parallel_for(std::size_t count, int workers, F&& f) {
    const std::size_t nthreads =
        std::min<std::size_t>(count, static_cast<std::size_t>(std::max(1, workers)));
    if (nthreads <= 1) {
        for (std::size_t i = 0; i < count; ++i) f(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(count);
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (std::size_t t = 0; t < nthreads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < count; i = next++) {
                try {
                    f(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline int default_workers() {
    const unsigned hc = std::thread::hardware_concurrency();
    return hc == 0 ? 1 : static_cast<int>(hc);
}

} // namespace mixmed
