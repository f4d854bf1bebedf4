#pragma once

#include <cstdint>
#include <functional>

namespace dv {

// Worker-thread cap: min(hardware concurrency, DREAMVIDEO_THREADS).
int max_threads();

// Runs fn(0..n-1); results must be written to per-index slots so the
// aggregation is order-independent.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

}  // namespace dv
