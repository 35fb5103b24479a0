#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace lka {

/// Closed-form parameter/FLOP accounting for a KxKxK convolution over C
/// channels versus its depthwise + depthwise-dilated + pointwise
/// decomposition with dilation d. All counts are exact integers.
struct ComplexityReport {
    int channels = 0;
    int kernel = 0;
    int dilation = 0;
    std::int64_t spatial_h = 0, spatial_w = 0, spatial_d = 0; // 0 when not requested
    std::int64_t nprm_original = 0;
    std::int64_t nprm_decomposed = 0;
    std::int64_t flops_original = 0;   // 0 when no spatial dims given
    std::int64_t flops_decomposed = 0;
    double ratio = 0.0; // decomposed / original
    bool decomposition_beneficial = true; // ratio <= 1
};

/// C * (C*K^3 + 1)
std::int64_t nprm_original(int channels, int kernel);
/// C * ((2d-1)^3 + (K/d)^3 + C + 3); requires d | K.
std::int64_t nprm_decomposed(int channels, int kernel, int dilation);

std::int64_t flops_original(int channels, int kernel, std::int64_t h, std::int64_t w, std::int64_t d);
std::int64_t flops_decomposed(int channels, int kernel, int dilation, std::int64_t h, std::int64_t w,
                              std::int64_t d);

/// Residual of the optimal-dilation condition 24d^2 - 24d - 3K^3/d^4 + 6.
double dilation_residual(int kernel, double d);

struct DilationSolution {
    double continuous_root = 1.0;
    int integer_optimum = 1;
    bool clamped = false; // root fell below 1 (tiny kernels)
};

/// Continuous root by bisection on [1, K] (|residual| <= 1e-3 at return,
/// interval narrowed to 1e-9); integer optimum by exhaustive search over the
/// divisors of K, ties broken toward smaller d.
DilationSolution solve_optimal_dilation(int kernel);

/// The parenthesized Eq-3 bracket without the channel terms, used by the
/// integer-dilation search: (2d-1)^3 + (K/d)^3.
std::int64_t decomposition_bracket(int kernel, int dilation);

std::vector<ComplexityReport> table_report(const std::vector<int>& channels, int kernel, int dilation,
                                           std::int64_t h = 0, std::int64_t w = 0, std::int64_t d = 0);

/// "16.10 k" / "9.48 M" style rendering (2 decimals), plain count below 1000.
std::string human_count(std::int64_t count);

} // namespace lka
