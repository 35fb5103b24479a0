#pragma once

#include "lka/tensor.hpp"

namespace lka {

// Elementwise activations. Float dtypes only; shapes preserved.
Tensor leaky_relu(const Tensor& x, double slope);
Tensor leaky_relu_backward(const Tensor& x, const Tensor& gy, double slope);

/// Numerically saturating: finite input never produces NaN/Inf.
Tensor sigmoid(const Tensor& x);
Tensor sigmoid_backward(const Tensor& y, const Tensor& gy);

/// Max-subtracted softmax along `axis`; each slice sums to 1.
Tensor softmax(const Tensor& x, int axis);
Tensor softmax_backward(const Tensor& y, const Tensor& gy, int axis);

/// Group normalization over [N, C, spatial...]. Per (sample, group) the
/// pre-affine output has zero mean and unit variance; gamma/beta are [C].
Tensor group_norm(const Tensor& x, int groups, double eps, const Tensor& gamma, const Tensor& beta);

struct GroupNormGrads {
    Tensor gx;
    Tensor ggamma;
    Tensor gbeta;
};
GroupNormGrads group_norm_backward(const Tensor& x, int groups, double eps, const Tensor& gamma,
                                   const Tensor& gy);

/// gn_groups convention used across the library: min(8, C), reduced to the
/// largest divisor of C when that does not divide evenly.
int default_gn_groups(int channels);

// Same-shape elementwise arithmetic.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double alpha);
Tensor add_scalar(const Tensor& a, double alpha);

/// [N, C, spatial...] -> [C]; sums over sample and spatial axes.
Tensor sum_per_channel(const Tensor& x);
/// -> [1]. Fixed-block reduction, deterministic for any thread count.
Tensor sum_all(const Tensor& x);
/// Expand a [C] vector back over [N, C, spatial...] (adjoint of sum_per_channel).
Tensor broadcast_per_channel(const Tensor& g, const Shape& shape);

/// Concatenate along the channel axis (axis 1); all other dims must match.
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Slice channels [c0, c1) out of a [N, C, spatial...] tensor.
Tensor slice_channels(const Tensor& x, std::int64_t c0, std::int64_t c1);

double scalar_value(const Tensor& t);

} // namespace lka
