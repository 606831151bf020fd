#pragma once

#include <functional>
#include <thread>
#include <vector>

namespace lfa {

/// Runs fn(i) for i in [0, n) across up to `threads` workers using a static
/// block partition, then joins. threads <= 1 degenerates to a plain loop.
/// Callers guarantee that concurrent fn invocations touch disjoint state.
inline void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    if (threads <= 1 || n == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    const int workers = std::min(threads, n);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            for (int i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

}  // namespace lfa
