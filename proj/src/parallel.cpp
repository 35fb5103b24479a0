#include "lka/parallel.hpp"

#include <atomic>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lka {

namespace {
std::atomic<bool> g_parallel{true};
}

bool parallel_enabled() noexcept { return g_parallel.load(std::memory_order_relaxed); }

void set_parallel_enabled(bool enabled) noexcept { g_parallel.store(enabled, std::memory_order_relaxed); }

int worker_count() noexcept {
#ifdef _OPENMP
    return parallel_enabled() ? omp_get_max_threads() : 1;
#else
    return 1;
#endif
}

} // namespace lka
