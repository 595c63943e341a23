#pragma once

// Deterministic chunked parallel reduction: chunk accumulators depend only on
// the chunk index (every replica owns an index-derived RNG stream), and the
// merge runs in chunk order, so results are identical for any worker count.

#include <atomic>
#include <cstdint>
#include <functional>
#include <thread>
#include <vector>

namespace rwrw {

template <typename Acc, typename Work, typename Merge>
Acc parallel_chunks(uint64_t total, uint64_t chunk_size, int workers, Work&& work, Merge&& merge) {
    if (chunk_size == 0) chunk_size = 1;
    const uint64_t n_chunks = (total + chunk_size - 1) / chunk_size;
    std::vector<Acc> accs(static_cast<size_t>(n_chunks));
    std::atomic<uint64_t> next{0};
    auto run = [&]() {
        for (;;) {
            const uint64_t c = next.fetch_add(1);
            if (c >= n_chunks) return;
            const uint64_t begin = c * chunk_size;
            const uint64_t end = std::min(total, begin + chunk_size);
            work(begin, end, accs[static_cast<size_t>(c)]);
        }
    };
    if (workers <= 1 || n_chunks <= 1) {
        run();
    } else {
        std::vector<std::thread> pool;
        const int k = std::min<int>(workers, static_cast<int>(n_chunks));
        pool.reserve(static_cast<size_t>(k));
        for (int i = 0; i < k; ++i) pool.emplace_back(run);
        for (auto& t : pool) t.join();
    }
    Acc out{};
    for (auto& a : accs) merge(out, std::move(a));
    return out;
}

inline int default_workers() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

}  // namespace rwrw
