#include <doctest.h>

#include <cmath>

#include "lka/complexity.hpp"

using namespace lka;

TEST_SUITE("complexity") {

TEST_CASE("original parameter counts") {
    CHECK(nprm_original(32, 21) == 9483296);
    CHECK(nprm_original(512, 6) == 56623616);
    CHECK(nprm_original(1, 1) == 2);
    CHECK_THROWS_AS(nprm_original(0, 3), std::invalid_argument);
}

TEST_CASE("decomposed parameter counts") {
    CHECK(nprm_decomposed(32, 21, 3) == 16096);
    CHECK(nprm_decomposed(64, 21, 3) == 34240);
    CHECK(nprm_decomposed(128, 21, 3) == 76672);
    CHECK(nprm_decomposed(256, 21, 3) == 186112);
    CHECK(nprm_decomposed(512, 21, 3) == 503296);
    CHECK_THROWS_AS(nprm_decomposed(32, 21, 2), std::invalid_argument);
}

TEST_CASE("per-scale decomposed counts and the full-network sum") {
    CHECK(nprm_decomposed(512, 6, 2) == 291328);
    CHECK(nprm_decomposed(256, 6, 2) == 80128);
    CHECK(nprm_decomposed(128, 6, 2) == 23680);
    CHECK(nprm_decomposed(64, 6, 2) == 7744);
    CHECK(nprm_decomposed(32, 6, 2) == 2848);
    CHECK(nprm_decomposed(32, 10, 2) == 5984);
    CHECK(nprm_decomposed(32, 15, 3) == 9120);
    CHECK(nprm_decomposed(32, 21, 3) == 16096);
    CHECK(nprm_decomposed(128, 21, 3) == 76672);

    const std::int64_t full = nprm_decomposed(512, 6, 2) + nprm_decomposed(256, 6, 2) +
                              nprm_decomposed(128, 10, 2) + nprm_decomposed(64, 15, 3) +
                              nprm_decomposed(32, 21, 3);
    CHECK(full == 444064);
}

TEST_CASE("flops are counts times the voxel volume") {
    CHECK(flops_original(32, 21, 10, 12, 8) == 9483296LL * 960);
    CHECK(flops_decomposed(32, 21, 3, 10, 12, 8) == 16096LL * 960);
    CHECK(flops_original(32, 21, 1, 1, 1) == nprm_original(32, 21));
    CHECK(flops_decomposed(32, 21, 3, 1, 1, 1) == nprm_decomposed(32, 21, 3));
}

TEST_CASE("dilation residual values and monotonicity") {
    CHECK(dilation_residual(21, 1.0) == doctest::Approx(-27777.0)); // 24-24-3*9261+6
    CHECK(std::abs(dilation_residual(21, 3.4159)) <= 1.0);
    CHECK_THROWS_AS(dilation_residual(21, 0.0), std::invalid_argument);

    // strictly increasing in d for d >= 1, so the sign change brackets one root
    double prev = dilation_residual(21, 1.0);
    for (double d = 1.1; d <= 21.0; d += 0.1) {
        const double cur = dilation_residual(21, d);
        CHECK(cur > prev);
        prev = cur;
    }
}

TEST_CASE("optimal dilation for the paper kernels") {
    const auto s21 = solve_optimal_dilation(21);
    CHECK(std::abs(s21.continuous_root - 3.4159) < 1e-3);
    CHECK(s21.integer_optimum == 3);
    CHECK(std::abs(dilation_residual(21, s21.continuous_root)) <= 1e-3);

    const auto s6 = solve_optimal_dilation(6);
    CHECK(s6.integer_optimum == 2);
    CHECK(decomposition_bracket(6, 1) == 217);
    CHECK(decomposition_bracket(6, 2) == 54);
    CHECK(decomposition_bracket(6, 3) == 133);
    CHECK(decomposition_bracket(6, 6) == 1332);

    const auto s1 = solve_optimal_dilation(1);
    CHECK(s1.integer_optimum == 1);
    CHECK(s1.clamped);
    CHECK(s1.continuous_root == 1.0);
}

TEST_CASE("integer optimum agrees with divisor enumeration for K in 1..30") {
    for (int k = 1; k <= 30; ++k) {
        int best_d = 1;
        std::int64_t best = -1;
        for (int d = 1; d <= k; ++d) {
            if (k % d != 0) continue;
            const std::int64_t b = decomposition_bracket(k, d);
            if (best < 0 || b < best) {
                best = b;
                best_d = d;
            }
        }
        CHECK(solve_optimal_dilation(k).integer_optimum == best_d);
    }
}

TEST_CASE("table report ratios match the golden percentages") {
    const auto rows = table_report({32, 64, 128, 256, 512}, 21, 3);
    const double expect[] = {0.17, 0.09, 0.05, 0.03, 0.02};
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const double pct = std::round(rows[i].ratio * 100.0 * 100.0) / 100.0;
        CHECK(pct == doctest::Approx(expect[i]));
        CHECK(rows[i].decomposition_beneficial);
    }
    CHECK(rows[2].nprm_decomposed == 76672);
    CHECK(rows[2].nprm_original == 151732352);

    // degenerate 1-channel pointwise case: decomposition costs more
    const auto row1 = table_report({1}, 1, 1).at(0);
    CHECK(row1.nprm_original == 2);
    CHECK(row1.nprm_decomposed == 6);
    CHECK(row1.ratio == doctest::Approx(3.0));
    CHECK_FALSE(row1.decomposition_beneficial);
}

TEST_CASE("paper-rounded table values within display tolerance") {
    // printed M-values carry small rounding slack; generated values must sit
    // within 0.5% of them
    const double printed_orig_M[] = {9.48, 37.94, 151.75, 606.99, 2427.98};
    const int chans[] = {32, 64, 128, 256, 512};
    for (int i = 0; i < 5; ++i) {
        const double computed = static_cast<double>(nprm_original(chans[i], 21)) / 1e6;
        CHECK(std::abs(computed - printed_orig_M[i]) / printed_orig_M[i] < 0.005);
    }
    const double printed_dec_k[] = {16.10, 34.24, 76.67, 186.11, 503.30};
    for (int i = 0; i < 5; ++i) {
        const double computed = static_cast<double>(nprm_decomposed(chans[i], 21, 3)) / 1e3;
        CHECK(std::round(computed * 100.0) / 100.0 == doctest::Approx(printed_dec_k[i]));
    }
}

TEST_CASE("ratio strictly decreases in channel count") {
    for (int k : {6, 10, 15, 21}) {
        const int d = k % 3 == 0 ? 3 : 2;
        double prev = 1e9;
        for (int c : {8, 16, 32, 64, 128, 256, 512, 1024}) {
            const double r = static_cast<double>(nprm_decomposed(c, k, d)) / static_cast<double>(nprm_original(c, k));
            CHECK(r < prev);
            prev = r;
        }
    }
}

TEST_CASE("human rendering") {
    CHECK(human_count(16096) == "16.10 k");
    CHECK(human_count(9483296) == "9.48 M");
    CHECK(human_count(999) == "999");
}

} // TEST_SUITE
