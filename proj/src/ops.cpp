#include "lka/ops.hpp"

#include <algorithm>
#include <cmath>

#include "lka/parallel.hpp"

namespace lka {

namespace {

void require_float(const Tensor& x, const char* op) {
    if (!is_float_dtype(x.dtype()))
        throw std::invalid_argument(std::string(op) + ": float dtype required, got " + dtype_name(x.dtype()));
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
    if (a.dtype() != b.dtype())
        throw std::invalid_argument(std::string(op) + ": dtype mismatch");
    if (!same_shape(a, b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
}

template <class T>
std::span<const T> in_span(const Tensor& t);
template <>
std::span<const float> in_span<float>(const Tensor& t) { return t.f32(); }
template <>
std::span<const double> in_span<double>(const Tensor& t) { return t.f64(); }

template <class T>
std::span<T> out_span(Tensor& t);
template <>
std::span<float> out_span<float>(Tensor& t) { return t.f32(); }
template <>
std::span<double> out_span<double>(Tensor& t) { return t.f64(); }

template <class F>
Tensor unary_op(const Tensor& x, const char* name, F&& f) {
    require_float(x, name);
    Tensor y = Tensor::zeros_like(x);
    const std::int64_t n = x.numel();
    if (x.dtype() == DType::F32) {
        auto xi = in_span<float>(x);
        auto yo = out_span<float>(y);
        parallel_for(n, [&](std::int64_t i) { yo[static_cast<std::size_t>(i)] = static_cast<float>(f(static_cast<double>(xi[static_cast<std::size_t>(i)]))); });
    } else {
        auto xi = in_span<double>(x);
        auto yo = out_span<double>(y);
        parallel_for(n, [&](std::int64_t i) { yo[static_cast<std::size_t>(i)] = f(xi[static_cast<std::size_t>(i)]); });
    }
    return y;
}

template <class F>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, F&& f) {
    require_float(a, name);
    require_same(a, b, name);
    Tensor y = Tensor::zeros_like(a);
    const std::int64_t n = a.numel();
    if (a.dtype() == DType::F32) {
        auto ai = in_span<float>(a);
        auto bi = in_span<float>(b);
        auto yo = out_span<float>(y);
        parallel_for(n, [&](std::int64_t i) {
            const auto u = static_cast<std::size_t>(i);
            yo[u] = static_cast<float>(f(static_cast<double>(ai[u]), static_cast<double>(bi[u])));
        });
    } else {
        auto ai = in_span<double>(a);
        auto bi = in_span<double>(b);
        auto yo = out_span<double>(y);
        parallel_for(n, [&](std::int64_t i) {
            const auto u = static_cast<std::size_t>(i);
            yo[u] = f(ai[u], bi[u]);
        });
    }
    return y;
}

inline double sigmoid_stable(double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
}

struct NCView {
    std::int64_t n, c, spatial;
};

NCView nc_view(const Tensor& x, const char* op) {
    if (x.ndim() < 2) throw std::invalid_argument(std::string(op) + ": need [N, C, ...] tensor");
    std::int64_t spatial = 1;
    for (int i = 2; i < x.ndim(); ++i) spatial *= x.dim(i);
    return {x.dim(0), x.dim(1), spatial};
}

} // namespace

Tensor leaky_relu(const Tensor& x, double slope) {
    return unary_op(x, "leaky_relu", [slope](double v) { return v >= 0.0 ? v : slope * v; });
}

Tensor leaky_relu_backward(const Tensor& x, const Tensor& gy, double slope) {
    // Subgradient at 0 is `slope`.
    return binary_op(x, gy, "leaky_relu_backward", [slope](double xv, double g) { return xv > 0.0 ? g : slope * g; });
}

Tensor sigmoid(const Tensor& x) { return unary_op(x, "sigmoid", sigmoid_stable); }

Tensor sigmoid_backward(const Tensor& y, const Tensor& gy) {
    return binary_op(y, gy, "sigmoid_backward", [](double yv, double g) { return g * yv * (1.0 - yv); });
}

Tensor softmax(const Tensor& x, int axis) {
    require_float(x, "softmax");
    if (axis < 0 || axis >= x.ndim())
        throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " out of range for " +
                                    shape_str(x.shape()));
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= x.dim(i);
    for (int i = axis + 1; i < x.ndim(); ++i) inner *= x.dim(i);
    const std::int64_t m = x.dim(axis);

    Tensor y = Tensor::zeros_like(x);
    auto run = [&](auto tag) {
        using T = decltype(tag);
        auto xi = in_span<T>(x);
        auto yo = out_span<T>(y);
        parallel_for(outer * inner, [&](std::int64_t oi) {
            const std::int64_t o = oi / inner, in = oi % inner;
            const std::int64_t base = o * m * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::int64_t k = 0; k < m; ++k) mx = std::max(mx, static_cast<double>(xi[static_cast<std::size_t>(base + k * inner)]));
            double sum = 0.0;
            for (std::int64_t k = 0; k < m; ++k) {
                const double e = std::exp(static_cast<double>(xi[static_cast<std::size_t>(base + k * inner)]) - mx);
                yo[static_cast<std::size_t>(base + k * inner)] = static_cast<T>(e);
                sum += e;
            }
            const double inv = 1.0 / sum;
            for (std::int64_t k = 0; k < m; ++k) {
                auto& v = yo[static_cast<std::size_t>(base + k * inner)];
                v = static_cast<T>(static_cast<double>(v) * inv);
            }
        });
    };
    if (x.dtype() == DType::F32) run(float{}); else run(double{});
    return y;
}

Tensor softmax_backward(const Tensor& y, const Tensor& gy, int axis) {
    require_same(y, gy, "softmax_backward");
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= y.dim(i);
    for (int i = axis + 1; i < y.ndim(); ++i) inner *= y.dim(i);
    const std::int64_t m = y.dim(axis);

    Tensor gx = Tensor::zeros_like(y);
    auto run = [&](auto tag) {
        using T = decltype(tag);
        auto yi = in_span<T>(y);
        auto gi = in_span<T>(gy);
        auto go = out_span<T>(gx);
        parallel_for(outer * inner, [&](std::int64_t oi) {
            const std::int64_t o = oi / inner, in = oi % inner;
            const std::int64_t base = o * m * inner + in;
            double dot = 0.0;
            for (std::int64_t k = 0; k < m; ++k) {
                const auto u = static_cast<std::size_t>(base + k * inner);
                dot += static_cast<double>(gi[u]) * static_cast<double>(yi[u]);
            }
            for (std::int64_t k = 0; k < m; ++k) {
                const auto u = static_cast<std::size_t>(base + k * inner);
                go[u] = static_cast<T>(static_cast<double>(yi[u]) * (static_cast<double>(gi[u]) - dot));
            }
        });
    };
    if (y.dtype() == DType::F32) run(float{}); else run(double{});
    return gx;
}

int default_gn_groups(int channels) {
    int g = std::min(8, channels);
    while (g > 1 && channels % g != 0) --g;
    return g;
}

Tensor group_norm(const Tensor& x, int groups, double eps, const Tensor& gamma, const Tensor& beta) {
    require_float(x, "group_norm");
    const auto v = nc_view(x, "group_norm");
    if (groups < 1 || v.c % groups != 0)
        throw std::invalid_argument("group_norm: channels " + std::to_string(v.c) +
                                    " not divisible by groups " + std::to_string(groups));
    if (!(eps > 0.0)) throw std::invalid_argument("group_norm: eps must be > 0");
    if (gamma.numel() != v.c || beta.numel() != v.c)
        throw std::invalid_argument("group_norm: gamma/beta must have C elements");

    const std::int64_t cg = v.c / groups;       // channels per group
    const std::int64_t slice = cg * v.spatial;  // elements per (sample, group)

    Tensor y = Tensor::zeros_like(x);
    auto run = [&](auto tag) {
        using T = decltype(tag);
        auto xi = in_span<T>(x);
        auto yo = out_span<T>(y);
        const Tensor gammaT = gamma.astype(x.dtype());
        const Tensor betaT = beta.astype(x.dtype());
        auto ga = in_span<T>(gammaT);
        auto be = in_span<T>(betaT);
        parallel_for(v.n * groups, [&](std::int64_t ng) {
            const std::int64_t n = ng / groups, g = ng % groups;
            const std::int64_t base = (n * v.c + g * cg) * v.spatial;
            double mean = 0.0;
            for (std::int64_t i = 0; i < slice; ++i) mean += static_cast<double>(xi[static_cast<std::size_t>(base + i)]);
            mean /= static_cast<double>(slice);
            double var = 0.0;
            for (std::int64_t i = 0; i < slice; ++i) {
                const double d = static_cast<double>(xi[static_cast<std::size_t>(base + i)]) - mean;
                var += d * d;
            }
            var /= static_cast<double>(slice);
            const double inv_sigma = 1.0 / std::sqrt(var + eps);
            for (std::int64_t c = 0; c < cg; ++c) {
                const double gc = static_cast<double>(ga[static_cast<std::size_t>(g * cg + c)]);
                const double bc = static_cast<double>(be[static_cast<std::size_t>(g * cg + c)]);
                const std::int64_t row = base + c * v.spatial;
                for (std::int64_t s = 0; s < v.spatial; ++s) {
                    const double xh = (static_cast<double>(xi[static_cast<std::size_t>(row + s)]) - mean) * inv_sigma;
                    yo[static_cast<std::size_t>(row + s)] = static_cast<T>(gc * xh + bc);
                }
            }
        });
    };
    if (x.dtype() == DType::F32) run(float{}); else run(double{});
    return y;
}

GroupNormGrads group_norm_backward(const Tensor& x, int groups, double eps, const Tensor& gamma,
                                   const Tensor& gy) {
    require_same(x, gy, "group_norm_backward");
    const auto v = nc_view(x, "group_norm_backward");
    const std::int64_t cg = v.c / groups;
    const std::int64_t slice = cg * v.spatial;

    GroupNormGrads out{Tensor::zeros_like(x), Tensor::zeros(Shape{v.c}, x.dtype()),
                       Tensor::zeros(Shape{v.c}, x.dtype())};

    auto run = [&](auto tag) {
        using T = decltype(tag);
        auto xi = in_span<T>(x);
        auto gi = in_span<T>(gy);
        const Tensor gammaT = gamma.astype(x.dtype());
        auto ga = in_span<T>(gammaT);
        auto gxo = out_span<T>(out.gx);

        // dgamma_c = sum gy*xhat, dbeta_c = sum gy; serial over samples per
        // channel keeps the reduction order fixed.
        parallel_for(v.c, [&](std::int64_t c) {
            const std::int64_t g = c / cg;
            double dg = 0.0, db = 0.0;
            for (std::int64_t n = 0; n < v.n; ++n) {
                const std::int64_t gbase = (n * v.c + g * cg) * v.spatial;
                double mean = 0.0;
                for (std::int64_t i = 0; i < slice; ++i) mean += static_cast<double>(xi[static_cast<std::size_t>(gbase + i)]);
                mean /= static_cast<double>(slice);
                double var = 0.0;
                for (std::int64_t i = 0; i < slice; ++i) {
                    const double d = static_cast<double>(xi[static_cast<std::size_t>(gbase + i)]) - mean;
                    var += d * d;
                }
                var /= static_cast<double>(slice);
                const double inv_sigma = 1.0 / std::sqrt(var + eps);
                const std::int64_t row = (n * v.c + c) * v.spatial;
                for (std::int64_t s = 0; s < v.spatial; ++s) {
                    const double xh = (static_cast<double>(xi[static_cast<std::size_t>(row + s)]) - mean) * inv_sigma;
                    const double gv = static_cast<double>(gi[static_cast<std::size_t>(row + s)]);
                    dg += gv * xh;
                    db += gv;
                }
            }
            out.ggamma.set(c, dg);
            out.gbeta.set(c, db);
        });

        // dx per (sample, group): (1/sigma) * (dxh - mean(dxh) - xhat * mean(dxh*xhat))
        parallel_for(v.n * groups, [&](std::int64_t ng) {
            const std::int64_t n = ng / groups, g = ng % groups;
            const std::int64_t base = (n * v.c + g * cg) * v.spatial;
            double mean = 0.0;
            for (std::int64_t i = 0; i < slice; ++i) mean += static_cast<double>(xi[static_cast<std::size_t>(base + i)]);
            mean /= static_cast<double>(slice);
            double var = 0.0;
            for (std::int64_t i = 0; i < slice; ++i) {
                const double d = static_cast<double>(xi[static_cast<std::size_t>(base + i)]) - mean;
                var += d * d;
            }
            var /= static_cast<double>(slice);
            const double inv_sigma = 1.0 / std::sqrt(var + eps);

            double s1 = 0.0, s2 = 0.0; // sum(dxh), sum(dxh * xhat)
            for (std::int64_t c = 0; c < cg; ++c) {
                const double gc = static_cast<double>(ga[static_cast<std::size_t>(g * cg + c)]);
                const std::int64_t row = base + c * v.spatial;
                for (std::int64_t s = 0; s < v.spatial; ++s) {
                    const double xh = (static_cast<double>(xi[static_cast<std::size_t>(row + s)]) - mean) * inv_sigma;
                    const double dxh = static_cast<double>(gi[static_cast<std::size_t>(row + s)]) * gc;
                    s1 += dxh;
                    s2 += dxh * xh;
                }
            }
            const double m1 = s1 / static_cast<double>(slice);
            const double m2 = s2 / static_cast<double>(slice);
            for (std::int64_t c = 0; c < cg; ++c) {
                const double gc = static_cast<double>(ga[static_cast<std::size_t>(g * cg + c)]);
                const std::int64_t row = base + c * v.spatial;
                for (std::int64_t s = 0; s < v.spatial; ++s) {
                    const double xh = (static_cast<double>(xi[static_cast<std::size_t>(row + s)]) - mean) * inv_sigma;
                    const double dxh = static_cast<double>(gi[static_cast<std::size_t>(row + s)]) * gc;
                    gxo[static_cast<std::size_t>(row + s)] = static_cast<T>((dxh - m1 - xh * m2) * inv_sigma);
                }
            }
        });
    };
    if (x.dtype() == DType::F32) run(float{}); else run(double{});
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) { return binary_op(a, b, "add", [](double x, double y) { return x + y; }); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary_op(a, b, "sub", [](double x, double y) { return x - y; }); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary_op(a, b, "mul", [](double x, double y) { return x * y; }); }
Tensor div(const Tensor& a, const Tensor& b) { return binary_op(a, b, "div", [](double x, double y) { return x / y; }); }

Tensor scale(const Tensor& a, double alpha) {
    return unary_op(a, "scale", [alpha](double v) { return alpha * v; });
}

Tensor add_scalar(const Tensor& a, double alpha) {
    return unary_op(a, "add_scalar", [alpha](double v) { return v + alpha; });
}

Tensor sum_per_channel(const Tensor& x) {
    require_float(x, "sum_per_channel");
    const auto v = nc_view(x, "sum_per_channel");
    Tensor out = Tensor::zeros(Shape{v.c}, x.dtype());
    auto run = [&](auto tag) {
        using T = decltype(tag);
        auto xi = in_span<T>(x);
        parallel_for(v.c, [&](std::int64_t c) {
            double s = 0.0;
            for (std::int64_t n = 0; n < v.n; ++n) {
                const std::int64_t row = (n * v.c + c) * v.spatial;
                for (std::int64_t i = 0; i < v.spatial; ++i) s += static_cast<double>(xi[static_cast<std::size_t>(row + i)]);
            }
            out.set(c, s);
        });
    };
    if (x.dtype() == DType::F32) run(float{}); else run(double{});
    return out;
}

Tensor sum_all(const Tensor& x) {
    require_float(x, "sum_all");
    constexpr std::int64_t kBlock = 65536;
    const std::int64_t n = x.numel();
    const std::int64_t blocks = (n + kBlock - 1) / kBlock;
    std::vector<double> partial(static_cast<std::size_t>(blocks), 0.0);
    auto run = [&](auto tag) {
        using T = decltype(tag);
        auto xi = in_span<T>(x);
        parallel_for(blocks, [&](std::int64_t b) {
            const std::int64_t lo = b * kBlock, hi = std::min(n, lo + kBlock);
            double s = 0.0;
            for (std::int64_t i = lo; i < hi; ++i) s += static_cast<double>(xi[static_cast<std::size_t>(i)]);
            partial[static_cast<std::size_t>(b)] = s;
        });
    };
    if (x.dtype() == DType::F32) run(float{}); else run(double{});
    double total = 0.0;
    for (double p : partial) total += p;
    Tensor out = Tensor::zeros(Shape{1}, x.dtype());
    out.set(0, total);
    return out;
}

Tensor broadcast_per_channel(const Tensor& g, const Shape& shape) {
    require_float(g, "broadcast_per_channel");
    Tensor out = Tensor::zeros(shape, g.dtype());
    const auto v = nc_view(out, "broadcast_per_channel");
    if (g.numel() != v.c) throw std::invalid_argument("broadcast_per_channel: size mismatch");
    parallel_for(v.n * v.c, [&](std::int64_t nc) {
        const double val = g.get(nc % v.c);
        const std::int64_t row = nc * v.spatial;
        for (std::int64_t i = 0; i < v.spatial; ++i) out.set(row + i, val);
    });
    return out;
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    require_float(a, "concat_channels");
    if (a.dtype() != b.dtype()) throw std::invalid_argument("concat_channels: dtype mismatch");
    if (a.ndim() != b.ndim() || a.ndim() < 2)
        throw std::invalid_argument("concat_channels: rank mismatch");
    for (int i = 0; i < a.ndim(); ++i)
        if (i != 1 && a.dim(i) != b.dim(i))
            throw std::invalid_argument("concat_channels: non-channel dims must match");
    const auto va = nc_view(a, "concat_channels");
    const auto vb = nc_view(b, "concat_channels");
    Shape shape = a.shape();
    shape[1] = va.c + vb.c;
    Tensor out = Tensor::zeros(shape, a.dtype());
    const std::size_t esz = dtype_size(a.dtype());
    auto* dst = out.bytes().data();
    const auto* pa = a.bytes().data();
    const auto* pb = b.bytes().data();
    const std::size_t rowA = static_cast<std::size_t>(va.c * va.spatial) * esz;
    const std::size_t rowB = static_cast<std::size_t>(vb.c * vb.spatial) * esz;
    for (std::int64_t n = 0; n < va.n; ++n) {
        std::memcpy(dst + static_cast<std::size_t>(n) * (rowA + rowB), pa + static_cast<std::size_t>(n) * rowA, rowA);
        std::memcpy(dst + static_cast<std::size_t>(n) * (rowA + rowB) + rowA, pb + static_cast<std::size_t>(n) * rowB, rowB);
    }
    return out;
}

Tensor slice_channels(const Tensor& x, std::int64_t c0, std::int64_t c1) {
    const auto v = nc_view(x, "slice_channels");
    if (c0 < 0 || c1 > v.c || c0 >= c1) throw std::invalid_argument("slice_channels: bad range");
    Shape shape = x.shape();
    shape[1] = c1 - c0;
    Tensor out = Tensor::zeros(shape, x.dtype());
    const std::size_t esz = dtype_size(x.dtype());
    const std::size_t chunk = static_cast<std::size_t>((c1 - c0) * v.spatial) * esz;
    for (std::int64_t n = 0; n < v.n; ++n) {
        const auto* src = x.bytes().data() + static_cast<std::size_t>((n * v.c + c0) * v.spatial) * esz;
        std::memcpy(out.bytes().data() + static_cast<std::size_t>(n) * chunk, src, chunk);
    }
    return out;
}

double scalar_value(const Tensor& t) {
    if (t.numel() != 1) throw std::invalid_argument("scalar_value: tensor has " + std::to_string(t.numel()) + " elements");
    return t.get(0);
}

} // namespace lka
