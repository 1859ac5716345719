#pragma once

#include <cstdint>
#include <functional>

namespace fscs {

// Worker count for data-parallel sections: FSCS_THREADS env var when set,
// otherwise hardware concurrency, clamped to [1, 16].
int worker_count();

// Runs fn(begin, end) over a partition of [0, n) on up to `threads` workers.
// Partitioning is a pure function of (n, threads), so any per-index work that
// writes to disjoint slots stays bit-deterministic.
void parallel_chunks(int64_t n, int threads, const std::function<void(int64_t, int64_t)>& fn);

}  // namespace fscs
