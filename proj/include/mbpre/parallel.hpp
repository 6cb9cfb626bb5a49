#ifndef MBPRE_PARALLEL_HPP
#define MBPRE_PARALLEL_HPP

#include <atomic>
#include <cstdlib>
#include <functional>
#include <thread>
#include <vector>

namespace mbpre {

// Runs work(shard) for shard = 0..n_shards-1 across up to `threads` workers.
// The shard decomposition (and hence every RNG stream) is fixed by the
// caller, so numeric output cannot depend on the thread count: each shard
// writes only to its own slot and the caller merges slots in shard order.
inline void parallel_shards(std::size_t n_shards, unsigned threads,
                            const std::function<void(std::size_t)>& work) {
    if (threads == 0) threads = 1;
    if (threads <= 1 || n_shards <= 1) {
        for (std::size_t s = 0; s < n_shards; ++s) work(s);
        return;
    }
    std::atomic<std::size_t> next{0};
    auto loop = [&] {
        for (;;) {
            std::size_t s = next.fetch_add(1);
            if (s >= n_shards) return;
            work(s);
        }
    };
    std::vector<std::thread> pool;
    unsigned nt = threads < n_shards ? threads : static_cast<unsigned>(n_shards);
    pool.reserve(nt);
    for (unsigned t = 0; t < nt; ++t) pool.emplace_back(loop);
    for (auto& th : pool) th.join();
}

// Worker count resolution: explicit argument, else MBPRE_THREADS, else
// hardware concurrency.
inline unsigned resolve_threads(int requested) {
    if (requested > 0) return static_cast<unsigned>(requested);
    if (const char* env = std::getenv("MBPRE_THREADS")) {
        int v = std::atoi(env);
        if (v > 0) return static_cast<unsigned>(v);
    }
    unsigned hc = std::thread::hardware_concurrency();
    return hc ? hc : 1;
}

// Splits `total` replicas into contiguous shard ranges of near-equal size.
inline std::vector<std::pair<std::uint64_t, std::uint64_t>> shard_ranges(
    std::uint64_t total, std::size_t n_shards) {
    std::vector<std::pair<std::uint64_t, std::uint64_t>> out;
    if (n_shards == 0) n_shards = 1;
    std::uint64_t base = total / n_shards, rem = total % n_shards;
    std::uint64_t lo = 0;
    for (std::size_t s = 0; s < n_shards; ++s) {
        std::uint64_t len = base + (s < rem ? 1 : 0);
        out.emplace_back(lo, lo + len);
        lo += len;
    }
    return out;
}

}  // namespace mbpre

#endif
