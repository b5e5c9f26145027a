#pragma once

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace vanishlab {

// Worker count: explicit request > VANISHLAB_THREADS > hardware concurrency.
inline int resolve_threads(int requested = 0) {
    if (requested > 0) return requested;
    if (const char* env = std::getenv("VANISHLAB_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

// Runs fn(i) for i in [0, count) across threads.  Indices are claimed from a
// shared counter; callers write results into per-index slots so the gathered
// output is independent of scheduling.
inline void parallel_for(long count, int threads, const std::function<void(long)>& fn) {
    if (count <= 0) return;
    threads = static_cast<int>(std::max<long>(1, std::min<long>(threads, count)));
    if (threads == 1) {
        for (long i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<long> next{0};
    std::vector<std::thread> pool;
    pool.reserve(threads);
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (long i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace vanishlab
