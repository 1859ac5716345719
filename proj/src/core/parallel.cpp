#include "core/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace fscs {

int worker_count() {
    if (const char* env = std::getenv("FSCS_THREADS")) {
        int n = std::atoi(env);
        if (n >= 1) return std::min(n, 16);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return std::clamp(static_cast<int>(hw == 0 ? 1 : hw), 1, 16);
}

void parallel_chunks(int64_t n, int threads, const std::function<void(int64_t, int64_t)>& fn) {
    if (n <= 0) return;
    int64_t workers = std::min<int64_t>(std::max(threads, 1), n);
    if (workers == 1) {
        fn(0, n);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    int64_t chunk = (n + workers - 1) / workers;
    for (int64_t w = 0; w < workers; ++w) {
        int64_t begin = w * chunk;
        int64_t end = std::min(n, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    for (auto& t : pool) t.join();
}

}  // namespace fscs
