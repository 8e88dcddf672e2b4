#pragma once

#include <algorithm>
#include <cstddef>
#include <thread>
#include <vector>

namespace voxsr {

inline unsigned default_threads() {
    const unsigned n = std::thread::hardware_concurrency();
    return n == 0 ? 1 : n;
}

/// Run fn(begin, end) over a partition of [0, n). Safe only for disjoint
/// writes; every element is produced by exactly one invocation, so results do
/// not depend on the thread count.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    if (n == 0) return;
    threads = std::max(1u, threads);
    const std::size_t grain = 64; // below this, spawning costs more than it saves
    if (threads == 1 || n < grain * 2) {
        fn(std::size_t{0}, n);
        return;
    }
    const std::size_t nt = std::min<std::size_t>(threads, (n + grain - 1) / grain);
    std::vector<std::thread> pool;
    pool.reserve(nt - 1);
    const std::size_t chunk = (n + nt - 1) / nt;
    for (std::size_t t = 1; t < nt; ++t) {
        const std::size_t b = t * chunk;
        const std::size_t e = std::min(n, b + chunk);
        if (b < e) pool.emplace_back([&fn, b, e] { fn(b, e); });
    }
    fn(std::size_t{0}, std::min(n, chunk));
    for (auto& th : pool) th.join();
}

} // namespace voxsr
