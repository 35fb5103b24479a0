// Kernel timing harness: optimized OpenMP kernels against the serial mode
// and the brute-force convolution reference.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "lka/conv3d.hpp"
#include "lka/lk_attention.hpp"
#include "lka/ops.hpp"
#include "lka/parallel.hpp"
#include "lka/rng.hpp"

using namespace lka;

namespace {

double time_ms(const std::function<void()>& fn, int reps) {
    fn(); // warm up
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void report(const char* name, double macs, const std::function<void()>& fn, int reps) {
    double par_ms, ser_ms;
    {
        ParallelGuard g(true);
        par_ms = time_ms(fn, reps);
    }
    {
        ParallelGuard g(false);
        ser_ms = time_ms(fn, reps);
    }
    std::printf("%-34s %9.2f ms %7.2f GF/s | serial %9.2f ms %7.2f GF/s | speedup %.2fx\n", name, par_ms,
                2e-6 * macs / par_ms, ser_ms, 2e-6 * macs / ser_ms, ser_ms / par_ms);
}

} // namespace

int main(int argc, char** argv) {
    int reps = 5;
    if (argc > 1) reps = std::atoi(argv[1]);
    std::printf("threads=%d reps=%d\n", worker_count(), reps);

    Rng rng(7);

    { // encoder-style conv at full toy resolution
        ConvSpec s = ConvSpec::conv(8, 8, 3, 1, 1);
        ConvWeights w = ConvWeights::fan_in_uniform(s, rng);
        Tensor x = uniform(rng, -1.0, 1.0, {1, 8, 32, 32, 32});
        const double macs = 8.0 * 8 * 27 * 32768;
        report("conv3d 8->8 k3 32^3 fwd", macs, [&] { conv3d(x, s, w); }, reps);
        Tensor y = conv3d(x, s, w);
        report("conv3d 8->8 k3 32^3 grad_w", macs, [&] { conv3d_grad_weights(x, y, s); }, reps);
        report("conv3d 8->8 k3 32^3 grad_x", macs,
               [&] { conv3d_grad_input(y, s, w.kernel, {32, 32, 32}); }, reps);
    }
    { // decoder concat block entry
        ConvSpec s = ConvSpec::conv(16, 8, 3, 1, 1);
        ConvWeights w = ConvWeights::fan_in_uniform(s, rng);
        Tensor x = uniform(rng, -1.0, 1.0, {1, 16, 32, 32, 32});
        const double macs = 8.0 * 16 * 27 * 32768;
        report("conv3d 16->8 k3 32^3 fwd", macs, [&] { conv3d(x, s, w); }, reps);
        Tensor y = conv3d(x, s, w);
        report("conv3d 16->8 k3 32^3 grad_w", macs, [&] { conv3d_grad_weights(x, y, s); }, reps);
        report("conv3d 16->8 k3 32^3 grad_x", macs,
               [&] { conv3d_grad_input(y, s, w.kernel, {32, 32, 32}); }, reps);
    }
    { // strided downsample
        ConvSpec s = ConvSpec::conv(8, 16, 3, 2, 1);
        ConvWeights w = ConvWeights::fan_in_uniform(s, rng);
        Tensor x = uniform(rng, -1.0, 1.0, {1, 8, 32, 32, 32});
        const double macs = 16.0 * 8 * 27 * 4096;
        report("conv3d 8->16 k3 s2 fwd", macs, [&] { conv3d(x, s, w); }, reps);
        Tensor y = conv3d(x, s, w);
        report("conv3d 8->16 k3 s2 grad_w", macs, [&] { conv3d_grad_weights(x, y, s); }, reps);
        report("conv3d 8->16 k3 s2 grad_x", macs,
               [&] { conv3d_grad_input(y, s, w.kernel, {32, 32, 32}); }, reps);
    }
    { // transposed upsample
        ConvSpec s = ConvSpec::deconv(16, 8, 4, 2, 1);
        ConvWeights w = ConvWeights::fan_in_uniform(s, rng);
        Tensor x = uniform(rng, -1.0, 1.0, {1, 16, 16, 16, 16});
        const double macs = 8.0 * 16 * 8 * 32768; // 8 taps reach each output voxel
        report("deconv 16->8 k4 s2 fwd", macs, [&] { conv3d_transposed(x, s, w); }, reps);
        Tensor y = conv3d_transposed(x, s, w);
        report("deconv 16->8 k4 s2 grad_w", macs,
               [&] { conv3d_transposed_grad_weights(x, y, s); }, reps);
        report("deconv 16->8 k4 s2 grad_x", macs,
               [&] { conv3d_transposed_grad_input(y, s, w.kernel, {16, 16, 16}); }, reps);
    }
    { // attention module at the toy bottleneck
        LKAModule m = LKAModule::create(32, plan_decomposition(21, 3), rng);
        Tensor x = uniform(rng, -1.0, 1.0, {1, 32, 8, 8, 8});
        const double macs = 32.0 * 512 * (125.0 + 343.0 + 32.0);
        report("lka C=32 K=21 d=3 8^3 fwd", macs, [&] { lka_forward(m, x); }, reps);
    }
    { // group norm + activations at full resolution
        Tensor x = uniform(rng, -1.0, 1.0, {1, 8, 32, 32, 32});
        Tensor gamma = Tensor::full({8}, DType::F32, 1.0);
        Tensor beta = Tensor::zeros({8}, DType::F32);
        report("group_norm 8ch 32^3", 8.0 * 32768, [&] { group_norm(x, 8, 1e-5, gamma, beta); }, reps);
        report("sigmoid 8ch 32^3", 8.0 * 32768, [&] { sigmoid(x); }, reps);
    }
    { // oracle vs optimized on an oracle-sized problem
        ConvSpec s = ConvSpec::conv(4, 4, 3, 1, 1, 2);
        ConvWeights w = ConvWeights::fan_in_uniform(s, rng);
        Tensor x = uniform(rng, -1.0, 1.0, {1, 4, 10, 10, 10});
        const double macs = 4.0 * 4 * 27 * 1000;
        report("conv3d 4->4 k3 d2 10^3 fwd", macs, [&] { conv3d(x, s, w); }, reps);
        const double oracle_ms = time_ms([&] { conv3d_oracle(x, s, w); }, reps);
        std::printf("%-34s %9.2f ms %7.2f GF/s (reference definition)\n", "conv3d_oracle same problem",
                    oracle_ms, 2e-6 * macs / oracle_ms);
    }
    return 0;
}
