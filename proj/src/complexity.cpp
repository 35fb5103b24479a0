#include "lka/complexity.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace lka {

namespace {

std::int64_t cube(std::int64_t v) { return v * v * v; }

void require_positive(int channels, int kernel) {
    if (channels < 1 || kernel < 1)
        throw std::invalid_argument("complexity: channels and kernel must be >= 1");
}

void require_divides(int kernel, int dilation) {
    if (dilation < 1 || kernel % dilation != 0)
        throw std::invalid_argument("complexity: dilation " + std::to_string(dilation) +
                                    " does not divide kernel " + std::to_string(kernel));
}

} // namespace

std::int64_t nprm_original(int channels, int kernel) {
    require_positive(channels, kernel);
    const std::int64_t c = channels;
    return c * (c * cube(kernel) + 1);
}

std::int64_t nprm_decomposed(int channels, int kernel, int dilation) {
    require_positive(channels, kernel);
    require_divides(kernel, dilation);
    const std::int64_t c = channels;
    return c * (cube(2 * std::int64_t{dilation} - 1) + cube(kernel / dilation) + c + 3);
}

std::int64_t flops_original(int channels, int kernel, std::int64_t h, std::int64_t w, std::int64_t d) {
    if (h < 1 || w < 1 || d < 1) throw std::invalid_argument("complexity: spatial dims must be >= 1");
    return nprm_original(channels, kernel) * h * w * d;
}

std::int64_t flops_decomposed(int channels, int kernel, int dilation, std::int64_t h, std::int64_t w,
                              std::int64_t d) {
    if (h < 1 || w < 1 || d < 1) throw std::invalid_argument("complexity: spatial dims must be >= 1");
    return nprm_decomposed(channels, kernel, dilation) * h * w * d;
}

double dilation_residual(int kernel, double d) {
    if (!(d > 0.0)) throw std::invalid_argument("dilation_residual: d must be > 0");
    const double k3 = static_cast<double>(cube(kernel));
    return 24.0 * d * d - 24.0 * d - 3.0 * k3 / (d * d * d * d) + 6.0;
}

std::int64_t decomposition_bracket(int kernel, int dilation) {
    require_divides(kernel, dilation);
    return cube(2 * std::int64_t{dilation} - 1) + cube(kernel / dilation);
}

DilationSolution solve_optimal_dilation(int kernel) {
    if (kernel < 1) throw std::invalid_argument("solve_optimal_dilation: kernel must be >= 1");
    DilationSolution sol;

    double lo = 1.0, hi = static_cast<double>(kernel);
    const double f_lo = dilation_residual(kernel, lo);
    if (f_lo >= 0.0) {
        // Residual already positive at d = 1: the unconstrained root lies
        // below 1; report the clamped boundary.
        sol.continuous_root = 1.0;
        sol.clamped = true;
    } else {
        for (int it = 0; it < 200 && (hi - lo) > 1e-9; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (dilation_residual(kernel, mid) < 0.0)
                lo = mid;
            else
                hi = mid;
        }
        sol.continuous_root = 0.5 * (lo + hi);
    }

    std::int64_t best = -1;
    for (int d = 1; d <= kernel; ++d) {
        if (kernel % d != 0) continue;
        const std::int64_t bracket = decomposition_bracket(kernel, d);
        if (best < 0 || bracket < best) {
            best = bracket;
            sol.integer_optimum = d;
        }
    }
    return sol;
}

std::vector<ComplexityReport> table_report(const std::vector<int>& channels, int kernel, int dilation,
                                           std::int64_t h, std::int64_t w, std::int64_t d) {
    std::vector<ComplexityReport> rows;
    rows.reserve(channels.size());
    for (int c : channels) {
        ComplexityReport r;
        r.channels = c;
        r.kernel = kernel;
        r.dilation = dilation;
        r.nprm_original = nprm_original(c, kernel);
        r.nprm_decomposed = nprm_decomposed(c, kernel, dilation);
        r.ratio = static_cast<double>(r.nprm_decomposed) / static_cast<double>(r.nprm_original);
        r.decomposition_beneficial = r.nprm_decomposed <= r.nprm_original;
        if (h > 0 && w > 0 && d > 0) {
            r.spatial_h = h;
            r.spatial_w = w;
            r.spatial_d = d;
            r.flops_original = flops_original(c, kernel, h, w, d);
            r.flops_decomposed = flops_decomposed(c, kernel, dilation, h, w, d);
        }
        rows.push_back(r);
    }
    return rows;
}

std::string human_count(std::int64_t count) {
    char buf[64];
    const double v = static_cast<double>(count);
    if (count >= 1000000) {
        std::snprintf(buf, sizeof(buf), "%.2f M", v / 1e6);
    } else if (count >= 1000) {
        std::snprintf(buf, sizeof(buf), "%.2f k", v / 1e3);
    } else {
        std::snprintf(buf, sizeof(buf), "%lld", static_cast<long long>(count));
    }
    return buf;
}

} // namespace lka
