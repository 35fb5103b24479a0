#include <doctest.h>

#include <cmath>

#include "lka/ops.hpp"
#include "lka/rng.hpp"
#include "lka/tensor.hpp"

using namespace lka;

TEST_SUITE("tensor") {

TEST_CASE("make_tensor fill and data") {
    Tensor z = make_tensor({2, 3}, DType::F32, 0.0);
    CHECK(z.numel() == 6);
    for (std::int64_t i = 0; i < 6; ++i) CHECK(z.get(i) == 0.0);

    const double seven = 7.0;
    Tensor s = make_tensor({1}, DType::F64, std::span<const double>(&seven, 1));
    CHECK(s.get(0) == 7.0);
    CHECK(s.dtype() == DType::F64);

    const std::vector<double> three{1, 2, 3};
    CHECK_THROWS_AS(make_tensor({2, 2}, DType::F32, std::span<const double>(three)), std::invalid_argument);
    CHECK_THROWS_AS(Tensor::zeros({2, 0, 2}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor::zeros({}), std::invalid_argument);
}

TEST_CASE("dtype accessors enforce the stored type") {
    Tensor t = Tensor::zeros({4}, DType::F32);
    CHECK_NOTHROW(t.f32());
    CHECK_THROWS_AS(t.f64(), std::invalid_argument);
    CHECK_THROWS_AS(t.u8(), std::invalid_argument);
}

TEST_CASE("astype roundtrip and finiteness") {
    Rng rng(5);
    Tensor a = uniform(rng, -2.0, 2.0, {3, 4});
    CHECK(a.all_finite());
    Tensor b = a.astype(DType::F64);
    CHECK(max_abs_diff(a.astype(DType::F64), b) == 0.0);
    Tensor inf = Tensor::full({2}, DType::F32, 1.0);
    inf.f32()[0] = std::numeric_limits<float>::infinity();
    CHECK_FALSE(inf.all_finite());
    CHECK_THROWS_AS(assert_finite(inf, "test"), std::runtime_error);
}

TEST_CASE("rng determinism: identical seeds give bitwise-equal streams") {
    Rng a(1234), b(1234);
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng r1(99), r2(99);
    Tensor t1 = uniform(r1, -1.0, 1.0, {17, 3});
    Tensor t2 = uniform(r2, -1.0, 1.0, {17, 3});
    CHECK(bitwise_equal(t1, t2));
}

TEST_CASE("uniform range, mean, and lo>=hi error") {
    Rng rng(7);
    const int n = 100000;
    Tensor t = uniform(rng, 0.0, 1.0, {n}, DType::F64);
    double mean = 0.0;
    for (double v : t.f64()) {
        CHECK(v >= 0.0);
        CHECK(v < 1.0);
        mean += v;
    }
    mean /= n;
    CHECK(std::abs(mean - 0.5) < 0.01);
    CHECK_THROWS_AS(uniform(rng, 1.0, 1.0, {4}), std::invalid_argument);
}

TEST_CASE("rng split produces unrelated child streams") {
    Rng parent(42);
    Rng c1 = parent.split(0);
    Rng c2 = parent.split(1);
    CHECK(c1.next_u64() != c2.next_u64());

    Rng parent2(42);
    Rng c1again = parent2.split(0);
    CHECK(c1again.next_u64() == Rng(42).split(0).next_u64());
}

TEST_CASE("normal draws have roughly unit variance") {
    Rng rng(11);
    const int n = 50000;
    double mean = 0.0, m2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal();
        mean += v;
        m2 += v * v;
    }
    mean /= n;
    const double var = m2 / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.03);
}

} // TEST_SUITE
