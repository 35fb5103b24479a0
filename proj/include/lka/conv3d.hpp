#pragma once

#include <array>

#include "lka/rng.hpp"
#include "lka/tensor.hpp"

namespace lka {

/// Full parameterization of a grouped/dilated/strided (optionally transposed)
/// 3D convolution. Cross-correlation convention: no kernel flip.
struct ConvSpec {
    int in_channels = 1;
    int out_channels = 1;
    std::array<int, 3> kernel{1, 1, 1};
    std::array<int, 3> stride{1, 1, 1};
    std::array<int, 3> dilation{1, 1, 1};
    std::array<int, 3> padding{0, 0, 0}; // symmetric zero padding
    int groups = 1;
    bool has_bias = true;
    bool transposed = false;

    void validate() const;
    /// Output spatial dims; throws when any would fall below 1.
    std::array<std::int64_t, 3> out_spatial(const std::array<std::int64_t, 3>& in) const;
    Shape weight_shape() const; // [out, in/groups, k1, k2, k3]
    std::int64_t weight_numel() const;
    std::int64_t param_count() const;
    bool is_depthwise() const { return groups == in_channels && groups == out_channels; }

    static ConvSpec conv(int in, int out, int k, int stride = 1, int pad = 0, int dil = 1, int groups = 1,
                         bool bias = true);
    static ConvSpec deconv(int in, int out, int k, int stride, int pad, int dil = 1, int groups = 1,
                           bool bias = true);
};

/// Stride-1 "same" padding: dilation*(kernel-1)/2. Kernel must be odd.
int same_padding(int kernel, int dilation);

struct ConvWeights {
    Tensor kernel; // [out, in/groups, k1, k2, k3]
    Tensor bias;   // [out] when spec.has_bias, otherwise empty

    static ConvWeights zeros(const ConvSpec& spec, DType dtype = DType::F32);
    /// Uniform(-b, b) with b = 1/sqrt(fan_in), fan_in = in/groups * k1*k2*k3.
    static ConvWeights fan_in_uniform(const ConvSpec& spec, Rng& rng, DType dtype = DType::F32);
    std::int64_t param_count() const;
};

Tensor conv3d(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor* bias);
Tensor conv3d(const Tensor& x, const ConvSpec& spec, const ConvWeights& weights);

Tensor conv3d_transposed(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor* bias);
Tensor conv3d_transposed(const Tensor& x, const ConvSpec& spec, const ConvWeights& weights);

/// Brute-force reference: the literal nested-loop definition, serial, double
/// accumulation, no shortcuts. Handles both directions. Intended for small
/// inputs only.
Tensor conv3d_oracle(const Tensor& x, const ConvSpec& spec, const ConvWeights& weights);

// Adjoint kernels (used by the tape; also exposed for direct testing).
Tensor conv3d_grad_input(const Tensor& gy, const ConvSpec& spec, const Tensor& w,
                         const std::array<std::int64_t, 3>& in_spatial);
Tensor conv3d_grad_weights(const Tensor& x, const Tensor& gy, const ConvSpec& spec);
Tensor conv3d_grad_bias(const Tensor& gy);
Tensor conv3d_transposed_grad_input(const Tensor& gy, const ConvSpec& spec, const Tensor& w,
                                    const std::array<std::int64_t, 3>& in_spatial);
Tensor conv3d_transposed_grad_weights(const Tensor& x, const Tensor& gy, const ConvSpec& spec);

/// Matched transposed spec/weights for the adjoint identity
/// <conv(x), y> = <x, conv_transposed(y)>: channel roles swap and the kernel
/// is transposed within each group.
ConvSpec adjoint_spec(const ConvSpec& spec);
Tensor adjoint_weights(const ConvSpec& spec, const Tensor& w);

} // namespace lka
