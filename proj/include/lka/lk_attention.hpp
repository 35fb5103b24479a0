#pragma once

#include <utility>
#include <vector>

#include "lka/autodiff.hpp"
#include "lka/conv3d.hpp"
#include "lka/ops.hpp"
#include "lka/rng.hpp"

namespace lka {

/// Decomposition of an equal KxKxK kernel into a depthwise (2d-1)^3 conv, a
/// depthwise (K/d)^3 conv with dilation d, and a pointwise 1x1x1 conv. The
/// stride-1 paddings preserve spatial size.
struct LKAPlan {
    int equal_kernel = 1; // K
    int dilation = 1;     // d
    int dw_kernel = 1;    // 2d - 1
    int dwd_kernel = 1;   // K / d
    int dwd_dilation = 1; // d
    int dw_padding = 0;   // (dw_kernel - 1) / 2
    int dwd_padding = 0;  // d * (dwd_kernel - 1) / 2
};

/// Requires d | K and an integral dwd padding.
LKAPlan plan_decomposition(int equal_kernel, int dilation);

/// Spatial support of the composed depthwise pair: K + d - 1.
int effective_receptive_field(const LKAPlan& plan);

/// Plans per decoder scale (0 = full resolution), largest kernel at the
/// finest scale: K/d = 21/3, 15/3, 10/2, 6/2, then 6/2 for anything deeper.
LKAPlan plan_for_scale(int scale);

/// Attention module: x' = lrelu(gn(x)); A = sigmoid(pw(dw(dwd(x'))));
/// out = A*x' + x'. The dilated depthwise conv runs first.
struct LKAModule {
    LKAPlan plan;
    int channels = 0;
    int gn_groups = 1;
    double gn_eps = 1e-5;
    double lrelu_slope = 0.01;

    ConvSpec dwd_spec, dw_spec, pw_spec;
    Parameter gn_gamma, gn_beta;
    Parameter dwd_w, dwd_b, dw_w, dw_b, pw_w, pw_b;

    static LKAModule create(int channels, const LKAPlan& plan, Rng& rng, DType dtype = DType::F32,
                            int gn_groups = -1, const std::string& name_prefix = "lka");

    /// Conv weights + conv biases only: C*((2d-1)^3 + (K/d)^3 + C + 3).
    std::int64_t conv_param_count() const;
    /// Including the 2C normalization affine parameters.
    std::int64_t total_param_count() const;

    std::vector<Parameter*> parameters();

    /// Forward over an executor (eager tensors or tape vars); returns
    /// (output, attention).
    template <class Exec>
    std::pair<typename Exec::V, typename Exec::V> forward(Exec& ex, typename Exec::V x) {
        using V = typename Exec::V;
        V normed = ex.group_norm(x, gn_groups, gn_eps, ex.param(gn_gamma), ex.param(gn_beta));
        V xprime = ex.leaky_relu(normed, lrelu_slope);
        V a = ex.conv3d(xprime, dwd_spec, ex.param(dwd_w), ex.param(dwd_b));
        a = ex.conv3d(a, dw_spec, ex.param(dw_w), ex.param(dw_b));
        a = ex.conv3d(a, pw_spec, ex.param(pw_w), ex.param(pw_b));
        V attention = ex.sigmoid(a);
        V out = ex.add(ex.mul(attention, xprime), xprime);
        return {out, attention};
    }
};

/// Eager convenience: (output, attention).
std::pair<Tensor, Tensor> lka_forward(LKAModule& m, const Tensor& x);

} // namespace lka
