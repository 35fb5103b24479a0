#include <doctest.h>

#include <cmath>

#include "lka/eval_metrics.hpp"
#include "lka/rng.hpp"

using namespace lka;

namespace {

Tensor random_mask(Rng& rng, std::int64_t h, std::int64_t w, std::int64_t d, double fill) {
    Tensor m = Tensor::zeros({h, w, d}, DType::U8);
    for (std::int64_t i = 0; i < m.numel(); ++i)
        if (rng.bernoulli(fill)) m.set(i, 1.0);
    return m;
}

Tensor single_voxel(std::int64_t h, std::int64_t w, std::int64_t d, std::int64_t at_h) {
    Tensor m = Tensor::zeros({h, w, d}, DType::U8);
    m.set((at_h * w + 0) * d + 0, 1.0);
    return m;
}

} // namespace

TEST_SUITE("eval_metrics") {

TEST_CASE("dice on identical, disjoint, and half-overlapping masks") {
    Rng rng(1);
    Tensor a = random_mask(rng, 6, 6, 6, 0.4);
    CHECK(dice_score(a, a) == 1.0);

    Tensor b = Tensor::zeros({6, 6, 6}, DType::U8);
    Tensor c = Tensor::zeros({6, 6, 6}, DType::U8);
    b.set(0, 1.0);
    c.set(1, 1.0);
    CHECK(dice_score(b, c) == 0.0);

    // |X|=8, |Y|=8, |X∩Y|=4 -> 0.5
    Tensor x = Tensor::zeros({4, 4, 4}, DType::U8);
    Tensor y = Tensor::zeros({4, 4, 4}, DType::U8);
    for (std::int64_t i = 0; i < 8; ++i) x.set(i, 1.0);
    for (std::int64_t i = 4; i < 12; ++i) y.set(i, 1.0);
    CHECK(dice_score(x, y) == doctest::Approx(0.5));

    // both empty -> 1; one empty -> 0
    Tensor e = Tensor::zeros({4, 4, 4}, DType::U8);
    CHECK(dice_score(e, e) == 1.0);
    CHECK(dice_score(x, e) == 0.0);

    CHECK_THROWS_AS(dice_score(x, Tensor::zeros({5, 4, 4}, DType::U8)), std::invalid_argument);
}

TEST_CASE("dice is symmetric and order-invariant") {
    Rng rng(2);
    for (int i = 0; i < 20; ++i) {
        Tensor a = random_mask(rng, 5, 5, 5, 0.3);
        Tensor b = random_mask(rng, 5, 5, 5, 0.3);
        CHECK(dice_score(a, b) == dice_score(b, a));
    }
}

TEST_CASE("hd95: identical masks, two voxels, spacing covariance") {
    Rng rng(4);
    Tensor a = random_mask(rng, 8, 8, 8, 0.35);
    bool nonempty = false;
    for (std::int64_t i = 0; i < a.numel(); ++i) nonempty |= a.get(i) != 0.0;
    REQUIRE(nonempty);
    CHECK(hd95(a, a) == 0.0);

    // two single voxels 5 apart
    Tensor p = single_voxel(8, 8, 8, 1);
    Tensor q = single_voxel(8, 8, 8, 6);
    CHECK(hd95(p, q) == doctest::Approx(5.0));

    // isotropic spacing scales the metric linearly
    Tensor b = random_mask(rng, 8, 8, 8, 0.3);
    const double unit = hd95(a, b);
    const double scaled = hd95(a, b, {2.5, 2.5, 2.5});
    CHECK(scaled == doctest::Approx(2.5 * unit).epsilon(1e-12));

    // empty mask is an error (handled by the penalty path upstream)
    Tensor e = Tensor::zeros({8, 8, 8}, DType::U8);
    CHECK_THROWS_AS(hd95(a, e), std::invalid_argument);
}

TEST_CASE("hd95 equals the all-pairs oracle on random masks") {
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const std::int64_t n = 4 + static_cast<std::int64_t>(rng.next_u64() % 13); // up to 16
        Tensor a = random_mask(rng, n, n, n, 0.15 + 0.3 * rng.next_double());
        Tensor b = random_mask(rng, n, n, n, 0.15 + 0.3 * rng.next_double());
        bool ea = true, eb = true;
        for (std::int64_t i = 0; i < a.numel(); ++i) {
            ea &= a.get(i) == 0.0;
            eb &= b.get(i) == 0.0;
        }
        if (ea || eb) continue;
        const std::array<double, 3> sp{1.0, 0.7, 1.3};
        CHECK(std::abs(hd95(a, b, sp) - hd95_oracle(a, b, sp)) < 1e-9);
        CHECK(std::abs(hd95(a, b, sp) - hd95(b, a, sp)) < 1e-12); // symmetric
    }
}

TEST_CASE("percentile uses linear interpolation between closest ranks") {
    CHECK(percentile_linear({1, 2, 3, 4}, 50.0) == doctest::Approx(2.5));
    CHECK(percentile_linear({5}, 95.0) == doctest::Approx(5.0));
    CHECK(percentile_linear({0, 10}, 95.0) == doctest::Approx(9.5));
}

TEST_CASE("evaluate_case handles empties and the penalty rule") {
    Tensor gt = Tensor::zeros({6, 6, 6}, DType::U8);
    Tensor pred = Tensor::zeros({6, 6, 6}, DType::U8);
    for (std::int64_t i = 0; i < 30; ++i) {
        gt.set(i, 1.0);
        pred.set(i, 1.0);
    }
    // class 2: gt empty, pred has one voxel
    pred.set(100, 2.0);

    const std::vector<int> classes{1, 2, 3};
    const auto with_penalty = evaluate_case(pred, gt, classes, PenaltyRule{});
    CHECK(with_penalty.classes[0].dice == 1.0);
    CHECK(with_penalty.classes[0].hd95 == 0.0);
    CHECK(with_penalty.classes[1].dice == 0.0);
    CHECK(with_penalty.classes[1].hd95 == doctest::Approx(373.13));
    CHECK(with_penalty.classes[1].penalty_applied);
    // class 3 empty on both sides -> perfect by convention
    CHECK(with_penalty.classes[2].dice == 1.0);
    CHECK(with_penalty.classes[2].hd95 == 0.0);
    CHECK_FALSE(with_penalty.classes[2].penalty_applied);

    const auto without = evaluate_case(pred, gt, classes);
    CHECK(without.classes[1].dice == 0.0);
    CHECK_FALSE(without.classes[1].has_hd95);

    CHECK_THROWS_AS(evaluate_case(pred, gt, std::vector<int>{-1}), std::invalid_argument);
}

TEST_CASE("paired t-test golden values") {
    // d = a - b = {1,2,3,4,5}
    const std::vector<double> a{2, 4, 6, 8, 10};
    const std::vector<double> b{1, 2, 3, 4, 5};
    const auto r = paired_t_test(a, b);
    CHECK(r.n == 5);
    CHECK(std::abs(r.t - 4.242640687) < 1e-6);
    CHECK(std::abs(r.p - 0.0132) < 2e-3);
    CHECK_FALSE(r.zero_variance);

    // symmetric differences: t = 0, p = 1
    const std::vector<double> c{1, -1, 1, -1};
    const std::vector<double> z{0, 0, 0, 0};
    const auto r2 = paired_t_test(c, z);
    CHECK(r2.t == doctest::Approx(0.0));
    CHECK(r2.p == doctest::Approx(1.0));

    // identical samples: zero-variance flag, p undefined
    const auto r3 = paired_t_test(b, b);
    CHECK(r3.zero_variance);
    CHECK(std::isnan(r3.p));

    CHECK_THROWS_AS(paired_t_test(std::vector<double>{1.0}, std::vector<double>{2.0}), std::invalid_argument);
}

TEST_CASE("student t cdf against reference table values") {
    // two-sided p for t with nu dof; textbook critical values
    CHECK(student_t_two_sided_p(12.706, 1) == doctest::Approx(0.05).epsilon(1e-3));
    CHECK(student_t_two_sided_p(2.776, 4) == doctest::Approx(0.05).epsilon(1e-3));
    CHECK(student_t_two_sided_p(2.228, 10) == doctest::Approx(0.05).epsilon(1e-3));
    CHECK(student_t_two_sided_p(1.812, 10) == doctest::Approx(0.10).epsilon(1e-3));
    CHECK(student_t_two_sided_p(0.0, 7) == doctest::Approx(1.0));
}

} // TEST_SUITE
