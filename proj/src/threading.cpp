#include "anysize/threading.hpp"

#include <algorithm>
#include <thread>
#include <vector>

extern "C" void openblas_set_num_threads(int);

namespace anysize {

namespace {
int g_threads = 1;
bool g_blas_pinned = false;

void pin_blas() {
    if (!g_blas_pinned) {
        openblas_set_num_threads(1);
        g_blas_pinned = true;
    }
}
}  // namespace

void set_num_threads(int n) {
    g_threads = std::max(1, n);
    pin_blas();
}

int num_threads() { return g_threads; }

void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& fn) {
    if (n <= 0) return;
    pin_blas();
    const int workers = static_cast<int>(std::min<std::int64_t>(g_threads, n));
    if (workers <= 1) {
        fn(0, n);
        return;
    }
    const std::int64_t chunk = (n + workers - 1) / workers;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) {
        const std::int64_t begin = t * chunk;
        const std::int64_t end = std::min<std::int64_t>(begin + chunk, n);
        if (begin >= end) break;
        pool.emplace_back([&fn, begin, end] { fn(begin, end); });
    }
    for (auto& th : pool) th.join();
}

}  // namespace anysize
