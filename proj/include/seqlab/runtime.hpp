#pragma once

#include <cstddef>
#include <thread>
#include <vector>

namespace seqlab::runtime {

// Process-wide worker count for tensor kernels. Results are independent of
// this setting: work is partitioned over output rows only, never over
// reduction dimensions.
inline int& thread_count_ref() {
    static int n = 1;
    return n;
}

inline int thread_count() { return thread_count_ref(); }

inline void set_thread_count(int n) { thread_count_ref() = n < 1 ? 1 : n; }

// Calls fn(begin, end) on contiguous index chunks. Chunk boundaries depend
// only on (begin, end, thread count); fn must not reduce across chunks.
template <typename Fn>
void parallel_for(std::size_t begin, std::size_t end, Fn&& fn) {
    const std::size_t n = end > begin ? end - begin : 0;
    const int workers = thread_count();
    if (workers <= 1 || n < 2) {
        if (n > 0) fn(begin, end);
        return;
    }
    const std::size_t chunks = std::min<std::size_t>(static_cast<std::size_t>(workers), n);
    const std::size_t per = n / chunks;
    const std::size_t extra = n % chunks;
    std::vector<std::thread> pool;
    pool.reserve(chunks);
    std::size_t lo = begin;
    for (std::size_t c = 0; c < chunks; ++c) {
        const std::size_t hi = lo + per + (c < extra ? 1 : 0);
        pool.emplace_back([lo, hi, &fn] { fn(lo, hi); });
        lo = hi;
    }
    for (auto& t : pool) t.join();
}

}  // namespace seqlab::runtime
