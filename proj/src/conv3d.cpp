#include "lka/conv3d.hpp"

#include <algorithm>
#include <cmath>

#include "lka/parallel.hpp"

namespace lka {

namespace {

inline std::int64_t ceil_div(std::int64_t a, std::int64_t s) {
    return a > 0 ? (a + s - 1) / s : a / s;
}

// Iterate i in [lo, hi) with the partner index j = s*i + off guaranteed to
// stay inside [0, limit_j). Every kernel below walks one of these
// progressions per axis, so inner loops carry no bounds checks.
struct AxisMap {
    std::int64_t lo = 0, hi = 0;
};

inline AxisMap axis_map(std::int64_t limit_i, std::int64_t limit_j, std::int64_t s, std::int64_t off) {
    AxisMap m;
    m.lo = std::max<std::int64_t>(0, ceil_div(-off, s));
    m.hi = std::min(limit_i, ceil_div(limit_j - off, s));
    if (m.hi < m.lo) m.hi = m.lo;
    return m;
}

struct Geometry {
    std::int64_t n, cin, cout;
    std::array<std::int64_t, 3> in, out;
    std::int64_t ipg, opg; // channels per group
    std::int64_t in_sp, out_sp, k123;
};

Geometry make_geometry(const Tensor& x, const ConvSpec& spec) {
    spec.validate();
    if (x.ndim() != 5)
        throw std::invalid_argument("conv3d: input must be [N,C,H,W,D], got " + shape_str(x.shape()));
    if (x.dim(1) != spec.in_channels)
        throw std::invalid_argument("conv3d: input has " + std::to_string(x.dim(1)) + " channels, spec expects " +
                                    std::to_string(spec.in_channels));
    Geometry g;
    g.n = x.dim(0);
    g.cin = spec.in_channels;
    g.cout = spec.out_channels;
    g.in = {x.dim(2), x.dim(3), x.dim(4)};
    g.out = spec.out_spatial(g.in);
    g.ipg = spec.in_channels / spec.groups;
    g.opg = spec.out_channels / spec.groups;
    g.in_sp = g.in[0] * g.in[1] * g.in[2];
    g.out_sp = g.out[0] * g.out[1] * g.out[2];
    g.k123 = std::int64_t{1} * spec.kernel[0] * spec.kernel[1] * spec.kernel[2];
    return g;
}

void check_weights(const ConvSpec& spec, const Tensor& w, const Tensor* bias) {
    if (w.shape() != spec.weight_shape())
        throw std::invalid_argument("conv3d: weight shape " + shape_str(w.shape()) + " does not match spec " +
                                    shape_str(spec.weight_shape()));
    if (spec.has_bias) {
        if (bias == nullptr || bias->numel() != spec.out_channels)
            throw std::invalid_argument("conv3d: spec has bias but none (or wrong size) given");
    }
}

template <class T>
std::span<const T> cspan(const Tensor& t);
template <>
std::span<const float> cspan<float>(const Tensor& t) { return t.f32(); }
template <>
std::span<const double> cspan<double>(const Tensor& t) { return t.f64(); }

template <class T>
std::span<T> mspan(Tensor& t);
template <>
std::span<float> mspan<float>(Tensor& t) { return t.f32(); }
template <>
std::span<double> mspan<double>(Tensor& t) { return t.f64(); }

// Forward: y[n,co,o] = bias + sum_{ci,k} w * x[n,ci, s*o - p + k*d].
// One task per (n, co); contributions per output element arrive in fixed
// (ci, k1, k2, k3) order, so results are bitwise reproducible for any thread
// count.
template <class T>
void conv_forward_impl(const ConvSpec& s, const Geometry& g, const T* x, const T* w, const T* b, T* y) {
    const auto [H, W, D] = g.in;
    const auto [OH, OW, OD] = g.out;
    const int k1 = s.kernel[0], k2 = s.kernel[1], k3 = s.kernel[2];
    const std::int64_t s1 = s.stride[0], s2 = s.stride[1], s3 = s.stride[2];

    parallel_for(g.n * g.cout, [&, H = H, W = W, D = D, OH = OH, OW = OW, OD = OD](std::int64_t nco) {
        const std::int64_t n = nco / g.cout, co = nco % g.cout;
        const std::int64_t grp = co / g.opg;
        const T* xg = x + (n * g.cin + grp * g.ipg) * g.in_sp;
        const T* wc = w + co * g.ipg * g.k123;
        T* yc = y + (n * g.cout + co) * g.out_sp;
        std::fill(yc, yc + g.out_sp, b ? b[co] : T(0));

        for (std::int64_t ci = 0; ci < g.ipg; ++ci) {
            const T* xc = xg + ci * g.in_sp;
            for (int a = 0; a < k1; ++a) {
                const std::int64_t off1 = std::int64_t{a} * s.dilation[0] - s.padding[0];
                const auto m1 = axis_map(OH, H, s1, off1);
                for (int bk = 0; bk < k2; ++bk) {
                    const std::int64_t off2 = std::int64_t{bk} * s.dilation[1] - s.padding[1];
                    const auto m2 = axis_map(OW, W, s2, off2);
                    for (int c = 0; c < k3; ++c) {
                        const std::int64_t off3 = std::int64_t{c} * s.dilation[2] - s.padding[2];
                        const auto m3 = axis_map(OD, D, s3, off3);
                        if (m3.lo >= m3.hi) continue;
                        const T wv = wc[((ci * k1 + a) * k2 + bk) * k3 + c];
                        for (std::int64_t oh = m1.lo; oh < m1.hi; ++oh) {
                            const std::int64_t ih = s1 * oh + off1;
                            for (std::int64_t ow = m2.lo; ow < m2.hi; ++ow) {
                                const std::int64_t iw = s2 * ow + off2;
                                const T* xr = xc + (ih * W + iw) * D + off3;
                                T* yr = yc + (oh * OW + ow) * OD;
                                if (s3 == 1) {
                                    for (std::int64_t od = m3.lo; od < m3.hi; ++od) yr[od] += wv * xr[od];
                                } else {
                                    for (std::int64_t od = m3.lo; od < m3.hi; ++od) yr[od] += wv * xr[od * s3];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
}

// Transposed forward as a scatter: y[n,co, s*i - p + k*d] += w * x[n,ci,i],
// restructured so each (n, co) task walks input rows with precomputed valid
// ranges.
template <class T>
void deconv_forward_impl(const ConvSpec& s, const Geometry& g, const T* x, const T* w, const T* b, T* y) {
    const auto [H, W, D] = g.in;
    const auto [OH, OW, OD] = g.out;
    const int k1 = s.kernel[0], k2 = s.kernel[1], k3 = s.kernel[2];
    const std::int64_t s1 = s.stride[0], s2 = s.stride[1], s3 = s.stride[2];

    parallel_for(g.n * g.cout, [&, H = H, W = W, D = D, OH = OH, OW = OW, OD = OD](std::int64_t nco) {
        const std::int64_t n = nco / g.cout, co = nco % g.cout;
        const std::int64_t grp = co / g.opg;
        const T* xg = x + (n * g.cin + grp * g.ipg) * g.in_sp;
        const T* wc = w + co * g.ipg * g.k123;
        T* yc = y + (n * g.cout + co) * g.out_sp;
        std::fill(yc, yc + g.out_sp, b ? b[co] : T(0));

        for (std::int64_t ci = 0; ci < g.ipg; ++ci) {
            const T* xc = xg + ci * g.in_sp;
            for (int a = 0; a < k1; ++a) {
                const std::int64_t off1 = std::int64_t{a} * s.dilation[0] - s.padding[0];
                const auto m1 = axis_map(H, OH, s1, off1);
                for (int bk = 0; bk < k2; ++bk) {
                    const std::int64_t off2 = std::int64_t{bk} * s.dilation[1] - s.padding[1];
                    const auto m2 = axis_map(W, OW, s2, off2);
                    for (int c = 0; c < k3; ++c) {
                        const std::int64_t off3 = std::int64_t{c} * s.dilation[2] - s.padding[2];
                        const auto m3 = axis_map(D, OD, s3, off3);
                        if (m3.lo >= m3.hi) continue;
                        const T wv = wc[((ci * k1 + a) * k2 + bk) * k3 + c];
                        for (std::int64_t ih = m1.lo; ih < m1.hi; ++ih) {
                            const std::int64_t oh = s1 * ih + off1;
                            for (std::int64_t iw = m2.lo; iw < m2.hi; ++iw) {
                                const std::int64_t ow = s2 * iw + off2;
                                const T* xr = xc + (ih * W + iw) * D;
                                T* yr = yc + (oh * OW + ow) * OD + off3;
                                if (s3 == 1) {
                                    for (std::int64_t id = m3.lo; id < m3.hi; ++id) yr[id] += wv * xr[id];
                                } else {
                                    for (std::int64_t id = m3.lo; id < m3.hi; ++id) yr[id * s3] += wv * xr[id];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
}

// Forward-conv input gradient as a scatter over output rows:
// gx[n,ci, s*o + k*d - p] += w * gy[n,co,o]. One task per (n, ci).
template <class T>
void conv_grad_input_impl(const ConvSpec& s, const Geometry& g, const T* gy, const T* w, T* gx) {
    const auto [H, W, D] = g.in;
    const auto [OH, OW, OD] = g.out;
    const int k1 = s.kernel[0], k2 = s.kernel[1], k3 = s.kernel[2];
    const std::int64_t s1 = s.stride[0], s2 = s.stride[1], s3 = s.stride[2];

    parallel_for(g.n * g.cin, [&, H = H, W = W, D = D, OH = OH, OW = OW, OD = OD](std::int64_t nci) {
        const std::int64_t n = nci / g.cin, ci = nci % g.cin;
        const std::int64_t grp = ci / g.ipg, ci_g = ci % g.ipg;
        T* gxc = gx + (n * g.cin + ci) * g.in_sp;
        std::fill(gxc, gxc + g.in_sp, T(0));

        for (std::int64_t co_g = 0; co_g < g.opg; ++co_g) {
            const std::int64_t co = grp * g.opg + co_g;
            const T* gyc = gy + (n * g.cout + co) * g.out_sp;
            const T* wc = w + (co * g.ipg + ci_g) * g.k123;
            for (int a = 0; a < k1; ++a) {
                const std::int64_t off1 = std::int64_t{a} * s.dilation[0] - s.padding[0];
                const auto m1 = axis_map(OH, H, s1, off1);
                for (int bk = 0; bk < k2; ++bk) {
                    const std::int64_t off2 = std::int64_t{bk} * s.dilation[1] - s.padding[1];
                    const auto m2 = axis_map(OW, W, s2, off2);
                    for (int c = 0; c < k3; ++c) {
                        const std::int64_t off3 = std::int64_t{c} * s.dilation[2] - s.padding[2];
                        const auto m3 = axis_map(OD, D, s3, off3);
                        if (m3.lo >= m3.hi) continue;
                        const T wv = wc[(std::int64_t{a} * k2 + bk) * k3 + c];
                        for (std::int64_t oh = m1.lo; oh < m1.hi; ++oh) {
                            const std::int64_t ih = s1 * oh + off1;
                            for (std::int64_t ow = m2.lo; ow < m2.hi; ++ow) {
                                const std::int64_t iw = s2 * ow + off2;
                                const T* gr = gyc + (oh * OW + ow) * OD;
                                T* gxr = gxc + (ih * W + iw) * D + off3;
                                if (s3 == 1) {
                                    for (std::int64_t od = m3.lo; od < m3.hi; ++od) gxr[od] += wv * gr[od];
                                } else {
                                    for (std::int64_t od = m3.lo; od < m3.hi; ++od) gxr[od * s3] += wv * gr[od];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
}

// Forward-conv weight gradient: gw[co,ci_g,k] = sum_{n,o} x[s*o + k*d - p] * gy[o].
// One task per (group, ci_g, block of co): the input channel streams once
// while a small block of output channels accumulates, keeping the pass
// compute-bound instead of re-reading whole channels per weight entry.
template <class T>
void conv_grad_weights_impl(const ConvSpec& s, const Geometry& g, const T* x, const T* gy, T* gw) {
    const auto [H, W, D] = g.in;
    const auto [OH, OW, OD] = g.out;
    const int k1 = s.kernel[0], k2 = s.kernel[1], k3 = s.kernel[2];
    const std::int64_t s1 = s.stride[0], s2 = s.stride[1], s3 = s.stride[2];
    const std::int64_t groups = g.cin / g.ipg;
    constexpr std::int64_t kCoBlock = 8;
    const std::int64_t blocks = ceil_div(g.opg, kCoBlock);

    parallel_for(groups * g.ipg * blocks, [&, H = H, W = W, D = D, OH = OH, OW = OW, OD = OD](std::int64_t idx) {
        const std::int64_t grp = idx / (g.ipg * blocks);
        const std::int64_t ci_g = (idx / blocks) % g.ipg;
        const std::int64_t blk = idx % blocks;
        const std::int64_t ci = grp * g.ipg + ci_g;
        const std::int64_t co0 = grp * g.opg + blk * kCoBlock;
        const std::int64_t co1 = std::min(grp * g.opg + g.opg, co0 + kCoBlock);

        std::vector<T> acc(static_cast<std::size_t>((co1 - co0) * g.k123), T(0));
        for (int a = 0; a < k1; ++a) {
            const std::int64_t off1 = std::int64_t{a} * s.dilation[0] - s.padding[0];
            const auto m1 = axis_map(OH, H, s1, off1);
            for (int bk = 0; bk < k2; ++bk) {
                const std::int64_t off2 = std::int64_t{bk} * s.dilation[1] - s.padding[1];
                const auto m2 = axis_map(OW, W, s2, off2);
                for (std::int64_t n = 0; n < g.n; ++n) {
                    const T* xc = x + (n * g.cin + ci) * g.in_sp;
                    for (std::int64_t oh = m1.lo; oh < m1.hi; ++oh) {
                        const std::int64_t ih = s1 * oh + off1;
                        for (std::int64_t ow = m2.lo; ow < m2.hi; ++ow) {
                            const std::int64_t iw = s2 * ow + off2;
                            const T* xr = xc + (ih * W + iw) * D;
                            for (std::int64_t co = co0; co < co1; ++co) {
                                const T* gr = gy + ((n * g.cout + co) * g.out_sp) + (oh * OW + ow) * OD;
                                T* arow = acc.data() + (co - co0) * g.k123 + (std::int64_t{a} * k2 + bk) * k3;
                                for (int c = 0; c < k3; ++c) {
                                    const std::int64_t off3 = std::int64_t{c} * s.dilation[2] - s.padding[2];
                                    const auto m3 = axis_map(OD, D, s3, off3);
                                    T dot = T(0);
                                    const T* xr3 = xr + off3;
                                    if (s3 == 1) {
                                        for (std::int64_t od = m3.lo; od < m3.hi; ++od) dot += xr3[od] * gr[od];
                                    } else {
                                        for (std::int64_t od = m3.lo; od < m3.hi; ++od) dot += xr3[od * s3] * gr[od];
                                    }
                                    arow[c] += dot;
                                }
                            }
                        }
                    }
                }
            }
        }
        for (std::int64_t co = co0; co < co1; ++co)
            for (std::int64_t k = 0; k < g.k123; ++k)
                gw[(co * g.ipg + ci_g) * g.k123 + k] = acc[static_cast<std::size_t>((co - co0) * g.k123 + k)];
    });
}

// Transposed-conv input gradient (gather): gx[n,ci,i] = sum w * gy[s*i + k*d - p].
template <class T>
void deconv_grad_input_impl(const ConvSpec& s, const Geometry& g, const T* gy, const T* w, T* gx) {
    const auto [H, W, D] = g.in;
    const auto [OH, OW, OD] = g.out;
    const int k1 = s.kernel[0], k2 = s.kernel[1], k3 = s.kernel[2];
    const std::int64_t s1 = s.stride[0], s2 = s.stride[1], s3 = s.stride[2];

    parallel_for(g.n * g.cin, [&, H = H, W = W, D = D, OH = OH, OW = OW, OD = OD](std::int64_t nci) {
        const std::int64_t n = nci / g.cin, ci = nci % g.cin;
        const std::int64_t grp = ci / g.ipg, ci_g = ci % g.ipg;
        T* gxc = gx + (n * g.cin + ci) * g.in_sp;
        std::fill(gxc, gxc + g.in_sp, T(0));

        for (std::int64_t co_g = 0; co_g < g.opg; ++co_g) {
            const std::int64_t co = grp * g.opg + co_g;
            const T* gyc = gy + (n * g.cout + co) * g.out_sp;
            const T* wc = w + (co * g.ipg + ci_g) * g.k123;
            for (int a = 0; a < k1; ++a) {
                const std::int64_t off1 = std::int64_t{a} * s.dilation[0] - s.padding[0];
                const auto m1 = axis_map(H, OH, s1, off1);
                for (int bk = 0; bk < k2; ++bk) {
                    const std::int64_t off2 = std::int64_t{bk} * s.dilation[1] - s.padding[1];
                    const auto m2 = axis_map(W, OW, s2, off2);
                    for (int c = 0; c < k3; ++c) {
                        const std::int64_t off3 = std::int64_t{c} * s.dilation[2] - s.padding[2];
                        const auto m3 = axis_map(D, OD, s3, off3);
                        if (m3.lo >= m3.hi) continue;
                        const T wv = wc[(std::int64_t{a} * k2 + bk) * k3 + c];
                        for (std::int64_t ih = m1.lo; ih < m1.hi; ++ih) {
                            const std::int64_t oh = s1 * ih + off1;
                            for (std::int64_t iw = m2.lo; iw < m2.hi; ++iw) {
                                const std::int64_t ow = s2 * iw + off2;
                                const T* gr = gyc + (oh * OW + ow) * OD + off3;
                                T* gxr = gxc + (ih * W + iw) * D;
                                if (s3 == 1) {
                                    for (std::int64_t id = m3.lo; id < m3.hi; ++id) gxr[id] += wv * gr[id];
                                } else {
                                    for (std::int64_t id = m3.lo; id < m3.hi; ++id) gxr[id] += wv * gr[id * s3];
                                }
                            }
                        }
                    }
                }
            }
        }
    });
}

// Transposed-conv weight gradient: gw[co,ci_g,k] = sum_{n,i} x[i] * gy[s*i + k*d - p].
// Same co-blocked single-stream layout as the forward-conv weight gradient.
template <class T>
void deconv_grad_weights_impl(const ConvSpec& s, const Geometry& g, const T* x, const T* gy, T* gw) {
    const auto [H, W, D] = g.in;
    const auto [OH, OW, OD] = g.out;
    const int k1 = s.kernel[0], k2 = s.kernel[1], k3 = s.kernel[2];
    const std::int64_t s1 = s.stride[0], s2 = s.stride[1], s3 = s.stride[2];
    const std::int64_t groups = g.cin / g.ipg;
    constexpr std::int64_t kCoBlock = 8;
    const std::int64_t blocks = ceil_div(g.opg, kCoBlock);

    parallel_for(groups * g.ipg * blocks, [&, H = H, W = W, D = D, OH = OH, OW = OW, OD = OD](std::int64_t idx) {
        const std::int64_t grp = idx / (g.ipg * blocks);
        const std::int64_t ci_g = (idx / blocks) % g.ipg;
        const std::int64_t blk = idx % blocks;
        const std::int64_t ci = grp * g.ipg + ci_g;
        const std::int64_t co0 = grp * g.opg + blk * kCoBlock;
        const std::int64_t co1 = std::min(grp * g.opg + g.opg, co0 + kCoBlock);

        std::vector<T> acc(static_cast<std::size_t>((co1 - co0) * g.k123), T(0));
        for (int a = 0; a < k1; ++a) {
            const std::int64_t off1 = std::int64_t{a} * s.dilation[0] - s.padding[0];
            const auto m1 = axis_map(H, OH, s1, off1);
            for (int bk = 0; bk < k2; ++bk) {
                const std::int64_t off2 = std::int64_t{bk} * s.dilation[1] - s.padding[1];
                const auto m2 = axis_map(W, OW, s2, off2);
                for (std::int64_t n = 0; n < g.n; ++n) {
                    const T* xc = x + (n * g.cin + ci) * g.in_sp;
                    for (std::int64_t ih = m1.lo; ih < m1.hi; ++ih) {
                        const std::int64_t oh = s1 * ih + off1;
                        for (std::int64_t iw = m2.lo; iw < m2.hi; ++iw) {
                            const std::int64_t ow = s2 * iw + off2;
                            const T* xr = xc + (ih * W + iw) * D;
                            for (std::int64_t co = co0; co < co1; ++co) {
                                const T* gr = gy + ((n * g.cout + co) * g.out_sp) + (oh * OW + ow) * OD;
                                T* arow = acc.data() + (co - co0) * g.k123 + (std::int64_t{a} * k2 + bk) * k3;
                                for (int c = 0; c < k3; ++c) {
                                    const std::int64_t off3 = std::int64_t{c} * s.dilation[2] - s.padding[2];
                                    const auto m3 = axis_map(D, OD, s3, off3);
                                    T dot = T(0);
                                    const T* gr3 = gr + off3;
                                    if (s3 == 1) {
                                        for (std::int64_t id = m3.lo; id < m3.hi; ++id) dot += xr[id] * gr3[id];
                                    } else {
                                        for (std::int64_t id = m3.lo; id < m3.hi; ++id) dot += xr[id] * gr3[id * s3];
                                    }
                                    arow[c] += dot;
                                }
                            }
                        }
                    }
                }
            }
        }
        for (std::int64_t co = co0; co < co1; ++co)
            for (std::int64_t k = 0; k < g.k123; ++k)
                gw[(co * g.ipg + ci_g) * g.k123 + k] = acc[static_cast<std::size_t>((co - co0) * g.k123 + k)];
    });
}

} // namespace

void ConvSpec::validate() const {
    if (in_channels < 1 || out_channels < 1) throw std::invalid_argument("ConvSpec: channels must be >= 1");
    if (groups < 1 || in_channels % groups != 0 || out_channels % groups != 0)
        throw std::invalid_argument("ConvSpec: in/out channels must be divisible by groups");
    for (int i = 0; i < 3; ++i) {
        if (kernel[i] < 1) throw std::invalid_argument("ConvSpec: kernel dims must be >= 1");
        if (stride[i] < 1) throw std::invalid_argument("ConvSpec: stride must be >= 1");
        if (dilation[i] < 1) throw std::invalid_argument("ConvSpec: dilation must be >= 1");
        if (padding[i] < 0) throw std::invalid_argument("ConvSpec: padding must be >= 0");
    }
}

std::array<std::int64_t, 3> ConvSpec::out_spatial(const std::array<std::int64_t, 3>& in) const {
    std::array<std::int64_t, 3> out{};
    for (int i = 0; i < 3; ++i) {
        if (!transposed) {
            out[i] = (in[i] + 2 * padding[i] - std::int64_t{dilation[i]} * (kernel[i] - 1) - 1) / stride[i] + 1;
        } else {
            out[i] = (in[i] - 1) * stride[i] - 2 * padding[i] + std::int64_t{dilation[i]} * (kernel[i] - 1) + 1;
        }
        if (out[i] < 1)
            throw std::invalid_argument("ConvSpec: output spatial dim " + std::to_string(i) +
                                        " would be " + std::to_string(out[i]));
    }
    return out;
}

Shape ConvSpec::weight_shape() const {
    return Shape{out_channels, in_channels / groups, kernel[0], kernel[1], kernel[2]};
}

std::int64_t ConvSpec::weight_numel() const { return shape_numel(weight_shape()); }

std::int64_t ConvSpec::param_count() const { return weight_numel() + (has_bias ? out_channels : 0); }

ConvSpec ConvSpec::conv(int in, int out, int k, int stride, int pad, int dil, int groups, bool bias) {
    ConvSpec s;
    s.in_channels = in;
    s.out_channels = out;
    s.kernel = {k, k, k};
    s.stride = {stride, stride, stride};
    s.padding = {pad, pad, pad};
    s.dilation = {dil, dil, dil};
    s.groups = groups;
    s.has_bias = bias;
    return s;
}

ConvSpec ConvSpec::deconv(int in, int out, int k, int stride, int pad, int dil, int groups, bool bias) {
    ConvSpec s = conv(in, out, k, stride, pad, dil, groups, bias);
    s.transposed = true;
    return s;
}

int same_padding(int kernel, int dilation) {
    if (kernel < 1 || kernel % 2 == 0)
        throw std::invalid_argument("same_padding: kernel must be odd, got " + std::to_string(kernel));
    if (dilation < 1) throw std::invalid_argument("same_padding: dilation must be >= 1");
    return dilation * (kernel - 1) / 2;
}

ConvWeights ConvWeights::zeros(const ConvSpec& spec, DType dtype) {
    spec.validate();
    ConvWeights w;
    w.kernel = Tensor::zeros(spec.weight_shape(), dtype);
    if (spec.has_bias) w.bias = Tensor::zeros(Shape{spec.out_channels}, dtype);
    return w;
}

ConvWeights ConvWeights::fan_in_uniform(const ConvSpec& spec, Rng& rng, DType dtype) {
    spec.validate();
    const double fan_in = static_cast<double>(spec.in_channels / spec.groups) * spec.kernel[0] *
                          spec.kernel[1] * spec.kernel[2];
    const double bound = 1.0 / std::sqrt(fan_in);
    ConvWeights w;
    w.kernel = uniform(rng, -bound, bound, spec.weight_shape(), dtype);
    if (spec.has_bias) w.bias = uniform(rng, -bound, bound, Shape{spec.out_channels}, dtype);
    return w;
}

std::int64_t ConvWeights::param_count() const {
    return kernel.numel() + (bias.ndim() > 0 ? bias.numel() : 0);
}

Tensor conv3d(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor* bias) {
    if (spec.transposed) throw std::invalid_argument("conv3d: spec is transposed, use conv3d_transposed");
    const Geometry g = make_geometry(x, spec);
    check_weights(spec, w, bias);
    if (!is_float_dtype(x.dtype())) throw std::invalid_argument("conv3d: float dtype required");
    Tensor y = Tensor::zeros(Shape{g.n, g.cout, g.out[0], g.out[1], g.out[2]}, x.dtype());
    if (x.dtype() == DType::F32)
        conv_forward_impl<float>(spec, g, cspan<float>(x).data(), cspan<float>(w).data(),
                                 spec.has_bias ? cspan<float>(*bias).data() : nullptr, mspan<float>(y).data());
    else
        conv_forward_impl<double>(spec, g, cspan<double>(x).data(), cspan<double>(w).data(),
                                  spec.has_bias ? cspan<double>(*bias).data() : nullptr, mspan<double>(y).data());
    return y;
}

Tensor conv3d(const Tensor& x, const ConvSpec& spec, const ConvWeights& weights) {
    return conv3d(x, spec, weights.kernel, spec.has_bias ? &weights.bias : nullptr);
}

Tensor conv3d_transposed(const Tensor& x, const ConvSpec& spec, const Tensor& w, const Tensor* bias) {
    if (!spec.transposed) throw std::invalid_argument("conv3d_transposed: spec is not transposed");
    const Geometry g = make_geometry(x, spec);
    check_weights(spec, w, bias);
    if (!is_float_dtype(x.dtype())) throw std::invalid_argument("conv3d_transposed: float dtype required");
    Tensor y = Tensor::zeros(Shape{g.n, g.cout, g.out[0], g.out[1], g.out[2]}, x.dtype());
    if (x.dtype() == DType::F32)
        deconv_forward_impl<float>(spec, g, cspan<float>(x).data(), cspan<float>(w).data(),
                                   spec.has_bias ? cspan<float>(*bias).data() : nullptr, mspan<float>(y).data());
    else
        deconv_forward_impl<double>(spec, g, cspan<double>(x).data(), cspan<double>(w).data(),
                                    spec.has_bias ? cspan<double>(*bias).data() : nullptr, mspan<double>(y).data());
    return y;
}

Tensor conv3d_transposed(const Tensor& x, const ConvSpec& spec, const ConvWeights& weights) {
    return conv3d_transposed(x, spec, weights.kernel, spec.has_bias ? &weights.bias : nullptr);
}

Tensor conv3d_oracle(const Tensor& x, const ConvSpec& spec, const ConvWeights& weights) {
    const Geometry g = make_geometry(x, spec);
    check_weights(spec, weights.kernel, spec.has_bias ? &weights.bias : nullptr);
    const auto [H, W, D] = g.in;
    const auto [OH, OW, OD] = g.out;
    const int k1 = spec.kernel[0], k2 = spec.kernel[1], k3 = spec.kernel[2];

    Tensor y = Tensor::zeros(Shape{g.n, g.cout, g.out[0], g.out[1], g.out[2]}, x.dtype());
    // Everything below is the plain definition: visit every index tuple,
    // test bounds, accumulate in double.
    if (!spec.transposed) {
        for (std::int64_t n = 0; n < g.n; ++n)
            for (std::int64_t co = 0; co < g.cout; ++co)
                for (std::int64_t oh = 0; oh < OH; ++oh)
                    for (std::int64_t ow = 0; ow < OW; ++ow)
                        for (std::int64_t od = 0; od < OD; ++od) {
                            double acc = spec.has_bias ? weights.bias.get(co) : 0.0;
                            for (std::int64_t ci = 0; ci < g.cin; ++ci) {
                                if (ci / g.ipg != co / g.opg) continue;
                                for (int a = 0; a < k1; ++a)
                                    for (int b = 0; b < k2; ++b)
                                        for (int c = 0; c < k3; ++c) {
                                            const std::int64_t ih = oh * spec.stride[0] - spec.padding[0] + std::int64_t{a} * spec.dilation[0];
                                            const std::int64_t iw = ow * spec.stride[1] - spec.padding[1] + std::int64_t{b} * spec.dilation[1];
                                            const std::int64_t id = od * spec.stride[2] - spec.padding[2] + std::int64_t{c} * spec.dilation[2];
                                            if (ih < 0 || ih >= H || iw < 0 || iw >= W || id < 0 || id >= D) continue;
                                            const std::int64_t widx = (((co * g.ipg + (ci % g.ipg)) * k1 + a) * k2 + b) * k3 + c;
                                            const std::int64_t xidx = ((n * g.cin + ci) * H + ih) * W * D + iw * D + id;
                                            acc += weights.kernel.get(widx) * x.get(xidx);
                                        }
                            }
                            y.set(((n * g.cout + co) * OH + oh) * OW * OD + ow * OD + od, acc);
                        }
    } else {
        // Scatter form of the definition.
        std::vector<double> acc(static_cast<std::size_t>(y.numel()), 0.0);
        for (std::int64_t i = 0; i < y.numel(); ++i)
            if (spec.has_bias) acc[static_cast<std::size_t>(i)] = weights.bias.get((i / g.out_sp) % g.cout);
        for (std::int64_t n = 0; n < g.n; ++n)
            for (std::int64_t ci = 0; ci < g.cin; ++ci)
                for (std::int64_t ih = 0; ih < H; ++ih)
                    for (std::int64_t iw = 0; iw < W; ++iw)
                        for (std::int64_t id = 0; id < D; ++id)
                            for (std::int64_t co = 0; co < g.cout; ++co) {
                                if (ci / g.ipg != co / g.opg) continue;
                                for (int a = 0; a < k1; ++a)
                                    for (int b = 0; b < k2; ++b)
                                        for (int c = 0; c < k3; ++c) {
                                            const std::int64_t oh = ih * spec.stride[0] - spec.padding[0] + std::int64_t{a} * spec.dilation[0];
                                            const std::int64_t ow = iw * spec.stride[1] - spec.padding[1] + std::int64_t{b} * spec.dilation[1];
                                            const std::int64_t od = id * spec.stride[2] - spec.padding[2] + std::int64_t{c} * spec.dilation[2];
                                            if (oh < 0 || oh >= OH || ow < 0 || ow >= OW || od < 0 || od >= OD) continue;
                                            const std::int64_t widx = (((co * g.ipg + (ci % g.ipg)) * k1 + a) * k2 + b) * k3 + c;
                                            const std::int64_t xidx = ((n * g.cin + ci) * H + ih) * W * D + iw * D + id;
                                            acc[static_cast<std::size_t>(((n * g.cout + co) * OH + oh) * OW * OD + ow * OD + od)] +=
                                                weights.kernel.get(widx) * x.get(xidx);
                                        }
                            }
        for (std::int64_t i = 0; i < y.numel(); ++i) y.set(i, acc[static_cast<std::size_t>(i)]);
    }
    return y;
}

namespace {

void check_grad_args(const ConvSpec& spec, const Tensor& gy, const Tensor& w) {
    if (w.shape() != spec.weight_shape())
        throw std::invalid_argument("conv grad: weight shape mismatch");
    if (gy.dtype() != w.dtype()) throw std::invalid_argument("conv grad: dtype mismatch");
}

} // namespace

Tensor conv3d_grad_input(const Tensor& gy, const ConvSpec& spec, const Tensor& w,
                         const std::array<std::int64_t, 3>& in_spatial) {
    spec.validate();
    check_grad_args(spec, gy, w);
    Tensor gx = Tensor::zeros(Shape{gy.dim(0), spec.in_channels, in_spatial[0], in_spatial[1], in_spatial[2]},
                              gy.dtype());
    const Geometry g = make_geometry(gx, spec);
    if (g.out != std::array<std::int64_t, 3>{gy.dim(2), gy.dim(3), gy.dim(4)} || gy.dim(1) != spec.out_channels)
        throw std::invalid_argument("conv3d_grad_input: gy shape does not match spec/in_spatial");
    if (gy.dtype() == DType::F32)
        conv_grad_input_impl<float>(spec, g, gy.f32().data(), w.f32().data(), gx.f32().data());
    else
        conv_grad_input_impl<double>(spec, g, gy.f64().data(), w.f64().data(), gx.f64().data());
    return gx;
}

Tensor conv3d_grad_weights(const Tensor& x, const Tensor& gy, const ConvSpec& spec) {
    const Geometry g = make_geometry(x, spec);
    Tensor gw = Tensor::zeros(spec.weight_shape(), x.dtype());
    if (x.dtype() == DType::F32)
        conv_grad_weights_impl<float>(spec, g, x.f32().data(), gy.f32().data(), gw.f32().data());
    else
        conv_grad_weights_impl<double>(spec, g, x.f64().data(), gy.f64().data(), gw.f64().data());
    return gw;
}

Tensor conv3d_grad_bias(const Tensor& gy) {
    const std::int64_t n = gy.dim(0), c = gy.dim(1);
    std::int64_t spatial = 1;
    for (int i = 2; i < gy.ndim(); ++i) spatial *= gy.dim(i);
    Tensor gb = Tensor::zeros(Shape{c}, gy.dtype());
    parallel_for(c, [&](std::int64_t co) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            const std::int64_t base = (i * c + co) * spatial;
            for (std::int64_t s = 0; s < spatial; ++s) acc += gy.get(base + s);
        }
        gb.set(co, acc);
    });
    return gb;
}

Tensor conv3d_transposed_grad_input(const Tensor& gy, const ConvSpec& spec, const Tensor& w,
                                    const std::array<std::int64_t, 3>& in_spatial) {
    spec.validate();
    check_grad_args(spec, gy, w);
    Tensor gx = Tensor::zeros(Shape{gy.dim(0), spec.in_channels, in_spatial[0], in_spatial[1], in_spatial[2]},
                              gy.dtype());
    const Geometry g = make_geometry(gx, spec);
    if (g.out != std::array<std::int64_t, 3>{gy.dim(2), gy.dim(3), gy.dim(4)} || gy.dim(1) != spec.out_channels)
        throw std::invalid_argument("conv3d_transposed_grad_input: gy shape mismatch");
    if (gy.dtype() == DType::F32)
        deconv_grad_input_impl<float>(spec, g, gy.f32().data(), w.f32().data(), gx.f32().data());
    else
        deconv_grad_input_impl<double>(spec, g, gy.f64().data(), w.f64().data(), gx.f64().data());
    return gx;
}

Tensor conv3d_transposed_grad_weights(const Tensor& x, const Tensor& gy, const ConvSpec& spec) {
    const Geometry g = make_geometry(x, spec);
    Tensor gw = Tensor::zeros(spec.weight_shape(), x.dtype());
    if (x.dtype() == DType::F32)
        deconv_grad_weights_impl<float>(spec, g, x.f32().data(), gy.f32().data(), gw.f32().data());
    else
        deconv_grad_weights_impl<double>(spec, g, x.f64().data(), gy.f64().data(), gw.f64().data());
    return gw;
}

ConvSpec adjoint_spec(const ConvSpec& spec) {
    ConvSpec t = spec;
    t.in_channels = spec.out_channels;
    t.out_channels = spec.in_channels;
    t.transposed = !spec.transposed;
    t.has_bias = false;
    return t;
}

Tensor adjoint_weights(const ConvSpec& spec, const Tensor& w) {
    // [out, in/g, k...] -> [in, out/g, k...], transposing within each group.
    const ConvSpec t = adjoint_spec(spec);
    const std::int64_t ipg = spec.in_channels / spec.groups;
    const std::int64_t opg = spec.out_channels / spec.groups;
    const std::int64_t k123 = std::int64_t{1} * spec.kernel[0] * spec.kernel[1] * spec.kernel[2];
    Tensor out = Tensor::zeros(t.weight_shape(), w.dtype());
    for (std::int64_t co = 0; co < spec.out_channels; ++co) {
        const std::int64_t grp = co / opg;
        for (std::int64_t ci_g = 0; ci_g < ipg; ++ci_g) {
            const std::int64_t ci = grp * ipg + ci_g;
            for (std::int64_t k = 0; k < k123; ++k)
                out.set((ci * opg + (co % opg)) * k123 + k, w.get((co * ipg + ci_g) * k123 + k));
        }
    }
    return out;
}

} // namespace lka
