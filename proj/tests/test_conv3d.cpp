#include <doctest.h>

#include <cmath>

#include "lka/conv3d.hpp"
#include "lka/ops.hpp"
#include "lka/parallel.hpp"
#include "lka/rng.hpp"

using namespace lka;

namespace {

ConvSpec random_spec(Rng& rng, int& cin_out) {
    const int groups_mode = static_cast<int>(rng.next_u64() % 2); // 1 or depthwise
    const int c = 1 + static_cast<int>(rng.next_u64() % 4);
    ConvSpec s;
    if (groups_mode == 0) {
        s.in_channels = c;
        s.out_channels = 1 + static_cast<int>(rng.next_u64() % 4);
        s.groups = 1;
    } else {
        s.in_channels = s.out_channels = c;
        s.groups = c;
    }
    for (int i = 0; i < 3; ++i) {
        s.kernel[i] = 1 + 2 * static_cast<int>(rng.next_u64() % 2); // 1 or 3
        s.stride[i] = 1 + static_cast<int>(rng.next_u64() % 2);
        s.dilation[i] = 1 + static_cast<int>(rng.next_u64() % 3);
        s.padding[i] = static_cast<int>(rng.next_u64() % 3);
    }
    s.has_bias = rng.bernoulli(0.7);
    cin_out = s.in_channels;
    return s;
}

Tensor random_input(Rng& rng, const ConvSpec& s, DType dt, int max_dim = 6, bool snap = false) {
    Shape shape{1 + static_cast<std::int64_t>(rng.next_u64() % 2), s.in_channels, 0, 0, 0};
    for (int i = 0; i < 3; ++i) {
        const std::int64_t extent = std::int64_t{s.dilation[i]} * (s.kernel[i] - 1) + 1;
        const std::int64_t lo = std::max<std::int64_t>(1, extent - 2 * s.padding[i]);
        std::int64_t dim = lo + static_cast<std::int64_t>(rng.next_u64() % max_dim);
        if (snap) {
            // shrink so the conv size formula round-trips through the
            // transposed formula (no stride remainder)
            while (dim > lo && (dim + 2 * s.padding[i] - extent) % s.stride[i] != 0) --dim;
            while ((dim + 2 * s.padding[i] - extent) % s.stride[i] != 0) ++dim;
        }
        shape[static_cast<std::size_t>(2 + i)] = dim;
    }
    return uniform(rng, -1.0, 1.0, shape, dt);
}

} // namespace

TEST_SUITE("conv3d") {

TEST_CASE("same_padding values and even-kernel error") {
    CHECK(same_padding(7, 3) == 9);
    CHECK(same_padding(5, 3) == 6);
    CHECK(same_padding(1, 1) == 0);
    CHECK(same_padding(3, 1) == 1);
    CHECK_THROWS_AS(same_padding(4, 1), std::invalid_argument);
}

TEST_CASE("spec validation") {
    ConvSpec s = ConvSpec::conv(4, 6, 3);
    CHECK_NOTHROW(s.validate());
    s.groups = 3;
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);
    CHECK(ConvSpec::conv(4, 6, 3).weight_shape() == Shape{6, 4, 3, 3, 3});
    CHECK(ConvSpec::conv(4, 6, 3).param_count() == 6 * 4 * 27 + 6);
    ConvSpec dw = ConvSpec::conv(4, 4, 3, 1, 1, 1, 4);
    CHECK(dw.is_depthwise());
    CHECK(dw.param_count() == 4 * 27 + 4);
}

TEST_CASE("pointwise identity convolution") {
    ConvSpec s = ConvSpec::conv(3, 3, 1, 1, 0, 1, 3, false);
    ConvWeights w = ConvWeights::zeros(s);
    for (int c = 0; c < 3; ++c) w.kernel.set(c, 1.0);
    Rng rng(1);
    Tensor x = uniform(rng, -1.0, 1.0, {2, 3, 4, 5, 6});
    Tensor y = conv3d(x, s, w);
    CHECK(bitwise_equal(x, y));
}

TEST_CASE("impulse response of an all-ones 3x3x3 kernel") {
    ConvSpec s = ConvSpec::conv(1, 1, 3, 1, 1, 1, 1, false);
    ConvWeights w = ConvWeights::zeros(s);
    for (std::int64_t i = 0; i < 27; ++i) w.kernel.set(i, 1.0);
    Tensor x = Tensor::zeros({1, 1, 7, 7, 7});
    x.set(((3 * 7) + 3) * 7 + 3, 1.0); // center impulse
    Tensor y = conv3d(x, s, w);
    for (std::int64_t h = 0; h < 7; ++h)
        for (std::int64_t ww = 0; ww < 7; ++ww)
            for (std::int64_t d = 0; d < 7; ++d) {
                const bool inside = std::abs(h - 3) <= 1 && std::abs(ww - 3) <= 1 && std::abs(d - 3) <= 1;
                CHECK(y.get((h * 7 + ww) * 7 + d) == (inside ? 1.0 : 0.0));
            }

    // at a corner the cube is clipped
    Tensor xc = Tensor::zeros({1, 1, 5, 5, 5});
    xc.set(0, 1.0);
    Tensor yc = conv3d(xc, s, w);
    CHECK(scalar_value(sum_all(yc)) == doctest::Approx(8.0));
}

TEST_CASE("channel mismatch and too-small output are errors") {
    ConvSpec s = ConvSpec::conv(2, 2, 3);
    ConvWeights w = ConvWeights::zeros(s);
    Tensor bad = Tensor::zeros({1, 3, 4, 4, 4});
    CHECK_THROWS_AS(conv3d(bad, s, w), std::invalid_argument);
    Tensor tiny = Tensor::zeros({1, 2, 2, 2, 2});
    CHECK_THROWS_AS(conv3d(tiny, s, w), std::invalid_argument);
}

TEST_CASE("oracle basics: zero weights and bias-only") {
    ConvSpec s = ConvSpec::conv(2, 3, 3, 1, 1);
    ConvWeights w = ConvWeights::zeros(s);
    Rng rng(4);
    Tensor x = uniform(rng, -1.0, 1.0, {1, 2, 4, 4, 4});
    Tensor y = conv3d_oracle(x, s, w);
    for (std::int64_t i = 0; i < y.numel(); ++i) CHECK(y.get(i) == 0.0);

    w.bias.set(0, 1.5);
    w.bias.set(1, -2.0);
    w.bias.set(2, 0.25);
    Tensor yb = conv3d_oracle(x, s, w);
    const std::int64_t sp = 64;
    for (std::int64_t c = 0; c < 3; ++c)
        for (std::int64_t i = 0; i < sp; ++i) CHECK(yb.get(c * sp + i) == doctest::Approx(w.bias.get(c)));
}

TEST_CASE("randomized oracle equivalence (f32 and f64)") {
    Rng rng(2024);
    for (int trial = 0; trial < 60; ++trial) {
        int cin;
        ConvSpec s = random_spec(rng, cin);
        const DType dt = trial % 2 == 0 ? DType::F32 : DType::F64;
        Tensor x = random_input(rng, s, dt);
        ConvWeights w = ConvWeights::fan_in_uniform(s, rng, dt);
        Tensor fast = conv3d(x, s, w);
        Tensor ref = conv3d_oracle(x, s, w);
        const double tol = dt == DType::F32 ? 1e-5 : 1e-12;
        CHECK(max_rel_diff(fast, ref, 1.0) < tol);
    }
}

TEST_CASE("linearity with bias disabled") {
    Rng rng(5);
    ConvSpec s = ConvSpec::conv(3, 4, 3, 1, 2, 2, 1, false);
    ConvWeights w = ConvWeights::fan_in_uniform(s, rng);
    Tensor x = uniform(rng, -1.0, 1.0, {1, 3, 6, 6, 6});
    Tensor y = uniform(rng, -1.0, 1.0, {1, 3, 6, 6, 6});
    const double a = 0.7, b = -1.3;
    Tensor lhs = conv3d(add(scale(x, a), scale(y, b)), s, w);
    Tensor rhs = add(scale(conv3d(x, s, w), a), scale(conv3d(y, s, w), b));
    CHECK(max_rel_diff(lhs, rhs, 1.0) < 1e-5);
}

TEST_CASE("translation equivariance at stride 1 (interior)") {
    Rng rng(6);
    ConvSpec s = ConvSpec::conv(1, 1, 3, 1, 1, 1, 1, false);
    ConvWeights w = ConvWeights::fan_in_uniform(s, rng);
    Tensor x = Tensor::zeros({1, 1, 8, 8, 8});
    // a little blob away from borders
    for (std::int64_t h = 2; h < 4; ++h)
        for (std::int64_t ww = 2; ww < 4; ++ww)
            for (std::int64_t d = 2; d < 4; ++d) x.set((h * 8 + ww) * 8 + d, rng.next_double());
    Tensor xs = Tensor::zeros({1, 1, 8, 8, 8});
    for (std::int64_t h = 0; h < 7; ++h) // shift by +1 along the first axis
        for (std::int64_t ww = 0; ww < 8; ++ww)
            for (std::int64_t d = 0; d < 8; ++d) xs.set(((h + 1) * 8 + ww) * 8 + d, x.get((h * 8 + ww) * 8 + d));
    Tensor y = conv3d(x, s, w);
    Tensor ys = conv3d(xs, s, w);
    for (std::int64_t h = 2; h < 6; ++h)
        for (std::int64_t ww = 2; ww < 6; ++ww)
            for (std::int64_t d = 2; d < 6; ++d)
                CHECK(ys.get(((h + 1) * 8 + ww) * 8 + d) == doctest::Approx(y.get((h * 8 + ww) * 8 + d)).epsilon(1e-5));
}

TEST_CASE("transposed conv output size and identity") {
    ConvSpec s = ConvSpec::deconv(1, 1, 4, 2, 1);
    ConvWeights w = ConvWeights::zeros(s);
    Tensor x = Tensor::zeros({1, 1, 8, 8, 8});
    CHECK(conv3d_transposed(x, s, w).shape() == Shape{1, 1, 16, 16, 16});

    ConvSpec id = ConvSpec::deconv(2, 2, 1, 1, 0, 1, 2, false);
    ConvWeights wi = ConvWeights::zeros(id);
    wi.kernel.set(0, 1.0);
    wi.kernel.set(1, 1.0);
    Rng rng(8);
    Tensor r = uniform(rng, -1.0, 1.0, {1, 2, 3, 4, 5});
    CHECK(bitwise_equal(conv3d_transposed(r, id, wi), r));
}

TEST_CASE("transposed conv matches its oracle") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        int cin;
        ConvSpec s = random_spec(rng, cin);
        s.transposed = true;
        for (int i = 0; i < 3; ++i) s.padding[i] = std::min(s.padding[i], (s.kernel[i] - 1) * s.dilation[i] / 2);
        Tensor x = random_input(rng, s, DType::F64, 4);
        ConvWeights w = ConvWeights::fan_in_uniform(s, rng, DType::F64);
        Tensor fast = conv3d_transposed(x, s, w);
        Tensor ref = conv3d_oracle(x, s, w);
        CHECK(max_rel_diff(fast, ref, 1.0) < 1e-12);
    }
}

TEST_CASE("adjoint identity <conv(x), y> = <x, conv_t(y)>") {
    Rng rng(7);
    for (int trial = 0; trial < 25; ++trial) {
        int cin;
        ConvSpec s = random_spec(rng, cin);
        s.has_bias = false;
        Tensor x = random_input(rng, s, DType::F64, 4, true);
        ConvWeights w = ConvWeights::fan_in_uniform(s, rng, DType::F64);
        Tensor cx = conv3d(x, s, w);
        Tensor y = uniform(rng, -1.0, 1.0, cx.shape(), DType::F64);

        double lhs = 0.0;
        for (std::int64_t i = 0; i < cx.numel(); ++i) lhs += cx.get(i) * y.get(i);

        const ConvSpec ts = adjoint_spec(s);
        const Tensor tw = adjoint_weights(s, w.kernel);
        Tensor xt = conv3d_transposed(y, ts, tw, nullptr);
        REQUIRE(xt.shape() == x.shape());
        double rhs = 0.0;
        for (std::int64_t i = 0; i < x.numel(); ++i) rhs += x.get(i) * xt.get(i);

        CHECK(std::abs(lhs - rhs) / std::max({std::abs(lhs), std::abs(rhs), 1.0}) < 1e-10);
    }
}

TEST_CASE("grad kernels match the adjoint relations") {
    Rng rng(12);
    int cin;
    ConvSpec s = random_spec(rng, cin);
    s.has_bias = false;
    Tensor x = random_input(rng, s, DType::F64, 4, true);
    ConvWeights w = ConvWeights::fan_in_uniform(s, rng, DType::F64);
    Tensor y = conv3d(x, s, w);
    Tensor gy = uniform(rng, -1.0, 1.0, y.shape(), DType::F64);

    // backward w.r.t. input == transposed forward with matched spec/weights
    Tensor gx = conv3d_grad_input(gy, s, w.kernel, {x.dim(2), x.dim(3), x.dim(4)});
    Tensor via_t = conv3d_transposed(gy, adjoint_spec(s), adjoint_weights(s, w.kernel), nullptr);
    CHECK(max_rel_diff(gx, via_t, 1.0) < 1e-12);
}

TEST_CASE("parallel and serial conv agree bitwise") {
    Rng rng(55);
    ConvSpec s = ConvSpec::conv(4, 4, 3, 1, 1);
    ConvWeights w = ConvWeights::fan_in_uniform(s, rng);
    Tensor x = uniform(rng, -1.0, 1.0, {2, 4, 8, 8, 8});
    Tensor yp, ys;
    {
        ParallelGuard g(true);
        yp = conv3d(x, s, w);
    }
    {
        ParallelGuard g(false);
        ys = conv3d(x, s, w);
    }
    CHECK(bitwise_equal(yp, ys));
}

} // TEST_SUITE
