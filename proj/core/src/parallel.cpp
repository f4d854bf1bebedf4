#include "dv/parallel.hpp"

#include <algorithm>
#include <cstdlib>
#include <thread>
#include <vector>

namespace dv {

int max_threads() {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (const char* env = std::getenv("DREAMVIDEO_THREADS")) {
        int cap = std::atoi(env);
        if (cap >= 1) hw = std::min(hw, cap);
    }
    return hw;
}

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    int workers = static_cast<int>(std::min<int64_t>(max_threads(), n));
    if (workers <= 1) {
        for (int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (int64_t i = w; i < n; i += workers) fn(i);
        });
    for (auto& th : pool) th.join();
}

}  // namespace dv
