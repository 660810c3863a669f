#ifndef TCSC_PARALLEL_HPP
#define TCSC_PARALLEL_HPP

#include <atomic>
#include <cstddef>
#include <thread>
#include <vector>

namespace tcsc {

// Runs fn(i) for i in [0, count). Work items must be independent; callers
// guarantee bit-identical results for any thread count by deriving all
// randomness from per-item streams.
template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    const int workers = static_cast<int>(std::min<std::size_t>(threads, count));
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= count) return;
                fn(i);
            }
        });
    }
    for (auto& t : pool) t.join();
}

} // namespace tcsc

#endif
