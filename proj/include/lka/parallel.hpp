#pragma once

#include <cstdint>

namespace lka {

/// Global switch between OpenMP and serial execution of the same kernel
/// bodies. Every kernel assigns each output element to exactly one iteration,
/// so results are bitwise identical in both modes and for any thread count.
bool parallel_enabled() noexcept;
void set_parallel_enabled(bool enabled) noexcept;
int worker_count() noexcept;

/// RAII helper for tests that force one mode locally.
class ParallelGuard {
public:
    explicit ParallelGuard(bool enabled) : prev_(parallel_enabled()) { set_parallel_enabled(enabled); }
    ~ParallelGuard() { set_parallel_enabled(prev_); }

private:
    bool prev_;
};

template <class F>
void parallel_for(std::int64_t n, F&& body) {
#ifdef _OPENMP
    if (parallel_enabled() && n > 1) {
#pragma omp parallel for schedule(static)
        for (std::int64_t i = 0; i < n; ++i) body(i);
        return;
    }
#endif
    for (std::int64_t i = 0; i < n; ++i) body(i);
}

} // namespace lka
