#include <doctest.h>

#include <cmath>

#include "lka/complexity.hpp"
#include "lka/exec.hpp"
#include "lka/lk_attention.hpp"

using namespace lka;

namespace {

struct PlanCase {
    int K, d, dw_k, dw_p, dwd_k, dwd_d, dwd_p;
};

// the five decomposition rows, finest scale first
constexpr PlanCase kPlanTable[] = {
    {21, 3, 5, 2, 7, 3, 9},
    {15, 3, 5, 2, 5, 3, 6},
    {10, 2, 3, 1, 5, 2, 4},
    {6, 2, 3, 1, 3, 2, 2},
    {6, 2, 3, 1, 3, 2, 2},
};

} // namespace

TEST_SUITE("lk_attention") {

TEST_CASE("plan_decomposition reproduces all five table rows") {
    for (int scale = 0; scale < 5; ++scale) {
        const auto& e = kPlanTable[scale];
        const LKAPlan p = plan_decomposition(e.K, e.d);
        CHECK(p.dw_kernel == e.dw_k);
        CHECK(p.dw_padding == e.dw_p);
        CHECK(p.dwd_kernel == e.dwd_k);
        CHECK(p.dwd_dilation == e.dwd_d);
        CHECK(p.dwd_padding == e.dwd_p);

        const LKAPlan q = plan_for_scale(scale);
        CHECK(q.equal_kernel == e.K);
        CHECK(q.dilation == e.d);
    }
    CHECK_THROWS_AS(plan_decomposition(21, 2), std::invalid_argument);
    // K=12, d=3 would need a fractional padding
    CHECK_THROWS_AS(plan_decomposition(12, 3), std::invalid_argument);
}

TEST_CASE("effective receptive field") {
    CHECK(effective_receptive_field(plan_decomposition(21, 3)) == 23);
    CHECK(effective_receptive_field(plan_decomposition(6, 2)) == 7);
    CHECK(effective_receptive_field(plan_decomposition(1, 1)) == 1);
}

TEST_CASE("impulse support of the depthwise pair is a (K+d-1)^3 cube") {
    for (const auto& e : kPlanTable) {
        const LKAPlan p = plan_decomposition(e.K, e.d);
        const int rf = effective_receptive_field(p);
        const int size = rf + 4;

        ConvSpec dwd = ConvSpec::conv(1, 1, p.dwd_kernel, 1, p.dwd_padding, p.dwd_dilation, 1, false);
        ConvSpec dw = ConvSpec::conv(1, 1, p.dw_kernel, 1, p.dw_padding, 1, 1, false);
        ConvWeights wdwd = ConvWeights::zeros(dwd);
        ConvWeights wdw = ConvWeights::zeros(dw);
        for (std::int64_t i = 0; i < wdwd.kernel.numel(); ++i) wdwd.kernel.set(i, 1.0);
        for (std::int64_t i = 0; i < wdw.kernel.numel(); ++i) wdw.kernel.set(i, 1.0);

        Tensor x = Tensor::zeros({1, 1, size, size, size});
        const std::int64_t c = size / 2;
        x.set((c * size + c) * size + c, 1.0);
        Tensor y = conv3d(conv3d(x, dwd, wdwd), dw, wdw);
        REQUIRE(y.shape() == x.shape());

        const int half = (rf - 1) / 2;
        for (std::int64_t h = 0; h < size; ++h)
            for (std::int64_t w = 0; w < size; ++w)
                for (std::int64_t d2 = 0; d2 < size; ++d2) {
                    const bool inside =
                        std::abs(h - c) <= half && std::abs(w - c) <= half && std::abs(d2 - c) <= half;
                    const double v = y.get((h * size + w) * size + d2);
                    if (inside)
                        CHECK(v > 0.0);
                    else
                        CHECK(v == 0.0);
                }
    }
}

TEST_CASE("module parameter counts match the closed forms") {
    Rng rng(9);
    for (const auto& [C, K, d] : std::vector<std::array<int, 3>>{
             {32, 21, 3}, {64, 15, 3}, {128, 10, 2}, {16, 6, 2}, {512, 6, 2}}) {
        LKAModule m = LKAModule::create(C, plan_decomposition(K, d), rng);
        CHECK(m.conv_param_count() == nprm_decomposed(C, K, d));
        CHECK(m.total_param_count() == nprm_decomposed(C, K, d) + 2 * C);
    }
}

TEST_CASE("forward shapes, attention bounds, and the residual identity") {
    Rng rng(5);
    const int C = 4;
    LKAModule m = LKAModule::create(C, plan_decomposition(6, 2), rng);
    Tensor x = uniform(rng, -2.0, 2.0, {2, C, 6, 6, 6});
    auto [out, att] = lka_forward(m, x);
    CHECK(out.shape() == x.shape());
    CHECK(att.shape() == x.shape());
    for (std::int64_t i = 0; i < att.numel(); ++i) {
        CHECK(att.get(i) > 0.0);
        CHECK(att.get(i) < 1.0);
    }

    // out - x' = A * x', so the residual carries the sign of x'
    Tensor xprime = leaky_relu(group_norm(x, m.gn_groups, m.gn_eps, m.gn_gamma.value, m.gn_beta.value), 0.01);
    for (std::int64_t i = 0; i < out.numel(); ++i) {
        const double resid = out.get(i) - xprime.get(i);
        if (xprime.get(i) > 1e-6) CHECK(resid > 0.0);
        if (xprime.get(i) < -1e-6) CHECK(resid < 0.0);
        // multiplicative gain in (1, 2) wherever x' is positive
        if (xprime.get(i) > 1e-6) {
            const double gain = out.get(i) / xprime.get(i);
            CHECK(gain > 1.0);
            CHECK(gain < 2.0);
        }
    }
}

TEST_CASE("saturated pointwise bias drives the attention to its limits") {
    Rng rng(6);
    const int C = 3;
    LKAModule m = LKAModule::create(C, plan_decomposition(6, 2), rng);
    Tensor x = uniform(rng, -1.0, 1.0, {1, C, 6, 6, 6});
    Tensor xprime = leaky_relu(group_norm(x, m.gn_groups, m.gn_eps, m.gn_gamma.value, m.gn_beta.value), 0.01);

    // zero pointwise weights, strongly negative bias: A ~ 0, out ~ x'
    m.pw_w.value = Tensor::zeros_like(m.pw_w.value);
    m.pw_b.value = Tensor::full({C}, DType::F32, -40.0);
    auto [out_lo, att_lo] = lka_forward(m, x);
    CHECK(max_abs_diff(out_lo, xprime) < 1e-5);
    for (std::int64_t i = 0; i < att_lo.numel(); ++i) CHECK(att_lo.get(i) < 1e-6);

    // strongly positive bias: A ~ 1, out ~ 2 x'
    m.pw_b.value = Tensor::full({C}, DType::F32, 40.0);
    auto [out_hi, att_hi] = lka_forward(m, x);
    CHECK(max_abs_diff(out_hi, scale(xprime, 2.0)) < 1e-4);
    for (std::int64_t i = 0; i < att_hi.numel(); ++i) CHECK(att_hi.get(i) > 1.0 - 1e-6);
}

TEST_CASE("shape invariance for every table plan") {
    Rng rng(11);
    for (int scale = 0; scale < 5; ++scale) {
        const LKAPlan p = plan_for_scale(scale);
        LKAModule m = LKAModule::create(2, p, rng);
        const int size = effective_receptive_field(p) + 3; // comfortably larger than the padded kernel
        Tensor x = uniform(rng, -1.0, 1.0, {1, 2, size, size, size});
        auto [out, att] = lka_forward(m, x);
        CHECK(out.shape() == x.shape());
        CHECK(att.shape() == x.shape());
    }
}

TEST_CASE("traced and eager module forwards agree bitwise") {
    Rng rng(13);
    LKAModule m = LKAModule::create(4, plan_decomposition(6, 2), rng);
    Tensor x = uniform(rng, -1.0, 1.0, {1, 4, 6, 6, 6});
    auto [eager_out, eager_att] = lka_forward(m, x);

    ad::Tape tape;
    TapeExec ex(tape);
    ad::Var xv = tape.input(x);
    auto [tout, tatt] = m.forward(ex, xv);
    CHECK(bitwise_equal(tape.value(tout), eager_out));
    CHECK(bitwise_equal(tape.value(tatt), eager_att));
}

TEST_CASE("module gradients pass gradcheck in f64") {
    Rng rng(21);
    LKAModule m = LKAModule::create(4, plan_decomposition(6, 2), rng, DType::F64);
    Tensor x = uniform(rng, -1.0, 1.0, {1, 4, 6, 6, 6}, DType::F64);

    auto fn = [&m](ad::Tape& t, const std::vector<ad::Var>& xs) {
        TapeExec ex(t);
        auto [out, att] = m.forward(ex, xs[0]);
        (void)att;
        return ad::sum_all(t, out);
    };
    ad::GradcheckOptions opt;
    opt.seed = 99;
    const auto rep = ad::gradcheck(fn, {x}, opt);
    CHECK(rep.max_rel_err <= 1e-4);
}

} // TEST_SUITE
