#include "lka/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lka/ops.hpp"
#include "lka/parallel.hpp"

namespace lka {

namespace {

struct VolView {
    std::int64_t n, c, H, W, D;
    std::int64_t spatial() const { return H * W * D; }
};

VolView vol_view(const Tensor& t, const char* op) {
    if (t.ndim() != 5)
        throw std::invalid_argument(std::string(op) + ": expected [N,C,H,W,D], got " + shape_str(t.shape()));
    return {t.dim(0), t.dim(1), t.dim(2), t.dim(3), t.dim(4)};
}

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * (i / sigma) * (i / sigma));
        k[static_cast<std::size_t>(i + radius)] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

// Separable 1D convolution along `axis` of a [H,W,D] field, zero padded.
void blur_axis(std::vector<float>& field, const VolView& v, int axis, const std::vector<double>& k) {
    const int radius = static_cast<int>(k.size() / 2);
    const std::int64_t dims[3] = {v.H, v.W, v.D};
    const std::int64_t strides[3] = {v.W * v.D, v.D, 1};
    std::vector<float> out(field.size());
    parallel_for(v.spatial(), [&](std::int64_t i) {
        const std::int64_t h = i / (v.W * v.D), w = (i / v.D) % v.W, d = i % v.D;
        const std::int64_t pos[3] = {h, w, d};
        double acc = 0.0;
        for (int t = -radius; t <= radius; ++t) {
            const std::int64_t p = pos[axis] + t;
            if (p < 0 || p >= dims[axis]) continue;
            acc += k[static_cast<std::size_t>(t + radius)] *
                   field[static_cast<std::size_t>(i + (p - pos[axis]) * strides[axis])];
        }
        out[static_cast<std::size_t>(i)] = static_cast<float>(acc);
    });
    field.swap(out);
}

float sample_trilinear(const float* vol, const VolView& v, double h, double w, double d) {
    // zero outside the volume
    if (h <= -1.0 || h >= static_cast<double>(v.H) || w <= -1.0 || w >= static_cast<double>(v.W) ||
        d <= -1.0 || d >= static_cast<double>(v.D))
        return 0.0f;
    const auto h0 = static_cast<std::int64_t>(std::floor(h));
    const auto w0 = static_cast<std::int64_t>(std::floor(w));
    const auto d0 = static_cast<std::int64_t>(std::floor(d));
    const double fh = h - h0, fw = w - w0, fd = d - d0;
    double acc = 0.0;
    for (int dh = 0; dh <= 1; ++dh)
        for (int dw = 0; dw <= 1; ++dw)
            for (int dd = 0; dd <= 1; ++dd) {
                const std::int64_t hh = h0 + dh, ww = w0 + dw, ddx = d0 + dd;
                if (hh < 0 || hh >= v.H || ww < 0 || ww >= v.W || ddx < 0 || ddx >= v.D) continue;
                const double wgt = (dh ? fh : 1.0 - fh) * (dw ? fw : 1.0 - fw) * (dd ? fd : 1.0 - fd);
                acc += wgt * vol[(hh * v.W + ww) * v.D + ddx];
            }
    return static_cast<float>(acc);
}

std::uint8_t sample_nearest_u8(const std::uint8_t* vol, const VolView& v, double h, double w, double d) {
    const auto hh = static_cast<std::int64_t>(std::llround(h));
    const auto ww = static_cast<std::int64_t>(std::llround(w));
    const auto dd = static_cast<std::int64_t>(std::llround(d));
    if (hh < 0 || hh >= v.H || ww < 0 || ww >= v.W || dd < 0 || dd >= v.D) return 0;
    return vol[(hh * v.W + ww) * v.D + dd];
}

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 identity3() { return {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}; }

Mat3 matmul(const Mat3& a, const Mat3& b) {
    Mat3 r{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k) s += a[i][k] * b[k][j];
            r[i][j] = s;
        }
    return r;
}

// Rotation by `rad` about the given volume axis (mixing the other two).
Mat3 rotation_about_axis(int axis, double rad) {
    const double c = std::cos(rad), s = std::sin(rad);
    Mat3 r = identity3();
    const int u = (axis + 1) % 3, v = (axis + 2) % 3;
    r[u][u] = c;
    r[u][v] = -s;
    r[v][u] = s;
    r[v][v] = c;
    return r;
}

} // namespace

void AugmentConfig::validate() const {
    auto check = [](const MethodCfg& m, const char* name) {
        if (m.probability < 0.0 || m.probability > 1.0)
            throw std::invalid_argument(std::string("AugmentConfig: bad probability for ") + name);
        if (!(m.lo < m.hi)) throw std::invalid_argument(std::string("AugmentConfig: bad range for ") + name);
    };
    check(brightness, "brightness");
    check(contrast, "contrast");
    check(gaussian_noise, "gaussian_noise");
    check(gaussian_blur, "gaussian_blur");
    check(gamma, "gamma");
    check(scaling, "scaling");
    check(rotation, "rotation");
    check(elastic, "elastic");
    if (flip_probability < 0.0 || flip_probability > 1.0)
        throw std::invalid_argument("AugmentConfig: bad flip probability");
}

AugPlan sample_plan(const AugmentConfig& config, Rng& rng) {
    config.validate();
    AugPlan plan;
    if (rng.bernoulli(config.brightness.probability))
        plan.brightness_factor = rng.uniform(config.brightness.lo, config.brightness.hi);
    if (rng.bernoulli(config.contrast.probability))
        plan.contrast_factor = rng.uniform(config.contrast.lo, config.contrast.hi);
    if (rng.bernoulli(config.gaussian_noise.probability)) {
        plan.noise_variance = rng.uniform(config.gaussian_noise.lo, config.gaussian_noise.hi);
        plan.noise_seed = rng.split(1).seed();
    }
    if (rng.bernoulli(config.gaussian_blur.probability))
        plan.blur_sigma = rng.uniform(config.gaussian_blur.lo, config.gaussian_blur.hi);
    if (rng.bernoulli(config.gamma.probability))
        plan.gamma = rng.uniform(config.gamma.lo, config.gamma.hi);
    if (rng.bernoulli(config.scaling.probability))
        plan.scale_factor = rng.uniform(config.scaling.lo, config.scaling.hi);
    if (rng.bernoulli(config.rotation.probability)) {
        std::array<double, 3> ang{};
        for (auto& a : ang) a = rng.uniform(config.rotation.lo, config.rotation.hi);
        plan.rotation_deg = ang;
    }
    if (rng.bernoulli(config.elastic.probability)) {
        plan.elastic_alpha = rng.uniform(config.elastic.lo, config.elastic.hi);
        plan.elastic_seed = rng.split(2).seed();
    }
    if (rng.bernoulli(config.flip_probability)) {
        for (auto& f : plan.flip_axes) f = rng.bernoulli(0.5);
    }
    return plan;
}

Tensor apply_intensity(const Tensor& image, const AugPlan& plan) {
    if (image.dtype() != DType::F32)
        throw std::invalid_argument("apply_intensity: float32 image expected");
    const VolView v = vol_view(image, "apply_intensity");
    Tensor out = image;

    if (plan.brightness_factor) out = scale(out, *plan.brightness_factor);

    if (plan.contrast_factor) {
        const double f = *plan.contrast_factor;
        auto data = out.f32();
        for (std::int64_t nc = 0; nc < v.n * v.c; ++nc) {
            float* ch = data.data() + nc * v.spatial();
            double mean = 0.0;
            float mn = ch[0], mx = ch[0];
            for (std::int64_t i = 0; i < v.spatial(); ++i) {
                mean += ch[i];
                mn = std::min(mn, ch[i]);
                mx = std::max(mx, ch[i]);
            }
            mean /= static_cast<double>(v.spatial());
            for (std::int64_t i = 0; i < v.spatial(); ++i)
                ch[i] = std::clamp(static_cast<float>(mean + (ch[i] - mean) * f), mn, mx);
        }
    }

    if (plan.noise_variance) {
        Rng noise_rng(plan.noise_seed);
        const double sd = std::sqrt(*plan.noise_variance);
        auto data = out.f32();
        for (auto& x : data) x += static_cast<float>(sd * noise_rng.normal());
    }

    if (plan.blur_sigma) {
        const auto kernel = gaussian_kernel(*plan.blur_sigma);
        auto data = out.f32();
        for (std::int64_t nc = 0; nc < v.n * v.c; ++nc) {
            std::vector<float> field(data.begin() + nc * v.spatial(), data.begin() + (nc + 1) * v.spatial());
            for (int axis = 0; axis < 3; ++axis) blur_axis(field, v, axis, kernel);
            std::copy(field.begin(), field.end(), data.begin() + nc * v.spatial());
        }
    }

    if (plan.gamma) {
        const double g = *plan.gamma;
        auto data = out.f32();
        for (std::int64_t nc = 0; nc < v.n * v.c; ++nc) {
            float* ch = data.data() + nc * v.spatial();
            float mn = ch[0], mx = ch[0];
            for (std::int64_t i = 0; i < v.spatial(); ++i) {
                mn = std::min(mn, ch[i]);
                mx = std::max(mx, ch[i]);
            }
            const double range = static_cast<double>(mx) - mn;
            if (range <= 0.0) continue;
            for (std::int64_t i = 0; i < v.spatial(); ++i)
                ch[i] = static_cast<float>(mn + std::pow((ch[i] - mn) / range, g) * range);
        }
    }
    return out;
}

std::pair<Tensor, Tensor> apply_spatial(const Tensor& image, const Tensor& labels, const AugPlan& plan) {
    if (image.dtype() != DType::F32) throw std::invalid_argument("apply_spatial: float32 image expected");
    if (labels.dtype() != DType::U8) throw std::invalid_argument("apply_spatial: uint8 labels expected");
    const VolView vi = vol_view(image, "apply_spatial");
    const VolView vl = vol_view(labels, "apply_spatial");
    if (vi.H != vl.H || vi.W != vl.W || vi.D != vl.D || vi.n != vl.n)
        throw std::invalid_argument("apply_spatial: image/label spatial shapes differ");

    Tensor img = image;
    Tensor lab = labels;

    // Pass 1: affine (scaling about the center, then rotations about the
    // last, middle, first axis). Output voxel o maps back to
    // src = S^-1 R^-1 (o - c) + c.
    if (plan.scale_factor || plan.rotation_deg) {
        Mat3 inv = identity3();
        if (plan.rotation_deg) {
            const auto& deg = *plan.rotation_deg;
            // forward is Rx(a0) * Ry(a1) * Rz(a2); inverse composes negated
            // angles in reverse order
            const double rz = -deg[0] * std::numbers::pi / 180.0;
            const double ry = -deg[1] * std::numbers::pi / 180.0;
            const double rx = -deg[2] * std::numbers::pi / 180.0;
            inv = matmul(matmul(rotation_about_axis(2, rz), rotation_about_axis(1, ry)),
                         rotation_about_axis(0, rx));
        }
        const double invf = plan.scale_factor ? 1.0 / *plan.scale_factor : 1.0;

        const double ch = (vi.H - 1) / 2.0, cw = (vi.W - 1) / 2.0, cd = (vi.D - 1) / 2.0;
        Tensor img2 = Tensor::zeros_like(img);
        Tensor lab2 = Tensor::zeros_like(lab);
        auto src_img = img.f32();
        auto dst_img = img2.f32();
        auto src_lab = lab.u8();
        auto dst_lab = lab2.u8();
        parallel_for(vi.spatial(), [&](std::int64_t i) {
            const double oh = static_cast<double>(i / (vi.W * vi.D)) - ch;
            const double ow = static_cast<double>((i / vi.D) % vi.W) - cw;
            const double od = static_cast<double>(i % vi.D) - cd;
            const double rh = inv[0][0] * oh + inv[0][1] * ow + inv[0][2] * od;
            const double rw = inv[1][0] * oh + inv[1][1] * ow + inv[1][2] * od;
            const double rd = inv[2][0] * oh + inv[2][1] * ow + inv[2][2] * od;
            const double sh = rh * invf + ch, sw = rw * invf + cw, sd = rd * invf + cd;
            for (std::int64_t nc = 0; nc < vi.n * vi.c; ++nc)
                dst_img[static_cast<std::size_t>(nc * vi.spatial() + i)] =
                    sample_trilinear(src_img.data() + nc * vi.spatial(), vi, sh, sw, sd);
            for (std::int64_t nc = 0; nc < vl.n * vl.c; ++nc)
                dst_lab[static_cast<std::size_t>(nc * vl.spatial() + i)] =
                    sample_nearest_u8(src_lab.data() + nc * vl.spatial(), vl, sh, sw, sd);
        });
        img = std::move(img2);
        lab = std::move(lab2);
    }

    // Pass 2: elastic displacement field, src = o + u(o).
    if (plan.elastic_alpha) {
        const double alpha = *plan.elastic_alpha;
        const double sigma = 3.0 * alpha;
        Rng field_rng(plan.elastic_seed);
        std::array<std::vector<float>, 3> fields;
        for (auto& f : fields) {
            f.resize(static_cast<std::size_t>(vi.spatial()));
            for (auto& x : f) x = static_cast<float>(field_rng.normal());
        }
        const auto kernel = gaussian_kernel(sigma);
        for (auto& f : fields) {
            for (int axis = 0; axis < 3; ++axis) blur_axis(f, vi, axis, kernel);
            float mx = 0.0f;
            for (float x : f) mx = std::max(mx, std::abs(x));
            if (mx > 0.0f)
                for (auto& x : f) x = static_cast<float>(x / mx * alpha);
        }

        Tensor img2 = Tensor::zeros_like(img);
        Tensor lab2 = Tensor::zeros_like(lab);
        auto src_img = img.f32();
        auto dst_img = img2.f32();
        auto src_lab = lab.u8();
        auto dst_lab = lab2.u8();
        parallel_for(vi.spatial(), [&](std::int64_t i) {
            const double oh = static_cast<double>(i / (vi.W * vi.D));
            const double ow = static_cast<double>((i / vi.D) % vi.W);
            const double od = static_cast<double>(i % vi.D);
            const double sh = oh + fields[0][static_cast<std::size_t>(i)];
            const double sw = ow + fields[1][static_cast<std::size_t>(i)];
            const double sd = od + fields[2][static_cast<std::size_t>(i)];
            for (std::int64_t nc = 0; nc < vi.n * vi.c; ++nc)
                dst_img[static_cast<std::size_t>(nc * vi.spatial() + i)] =
                    sample_trilinear(src_img.data() + nc * vi.spatial(), vi, sh, sw, sd);
            for (std::int64_t nc = 0; nc < vl.n * vl.c; ++nc)
                dst_lab[static_cast<std::size_t>(nc * vl.spatial() + i)] =
                    sample_nearest_u8(src_lab.data() + nc * vl.spatial(), vl, sh, sw, sd);
        });
        img = std::move(img2);
        lab = std::move(lab2);
    }

    // Pass 3: exact flips.
    if (plan.flip_axes[0] || plan.flip_axes[1] || plan.flip_axes[2]) {
        Tensor img2 = Tensor::zeros_like(img);
        Tensor lab2 = Tensor::zeros_like(lab);
        auto src_img = img.f32();
        auto dst_img = img2.f32();
        auto src_lab = lab.u8();
        auto dst_lab = lab2.u8();
        parallel_for(vi.spatial(), [&](std::int64_t i) {
            const std::int64_t h = i / (vi.W * vi.D), w = (i / vi.D) % vi.W, d = i % vi.D;
            const std::int64_t sh = plan.flip_axes[0] ? vi.H - 1 - h : h;
            const std::int64_t sw = plan.flip_axes[1] ? vi.W - 1 - w : w;
            const std::int64_t sd = plan.flip_axes[2] ? vi.D - 1 - d : d;
            const std::int64_t src = (sh * vi.W + sw) * vi.D + sd;
            for (std::int64_t nc = 0; nc < vi.n * vi.c; ++nc)
                dst_img[static_cast<std::size_t>(nc * vi.spatial() + i)] =
                    src_img[static_cast<std::size_t>(nc * vi.spatial() + src)];
            for (std::int64_t nc = 0; nc < vl.n * vl.c; ++nc)
                dst_lab[static_cast<std::size_t>(nc * vl.spatial() + i)] =
                    src_lab[static_cast<std::size_t>(nc * vl.spatial() + src)];
        });
        img = std::move(img2);
        lab = std::move(lab2);
    }

    return {std::move(img), std::move(lab)};
}

std::pair<Tensor, Tensor> augment_pair(const Tensor& image, const Tensor& labels, const AugmentConfig& config,
                                       Rng& rng, AugPlan* plan_out) {
    AugPlan plan = sample_plan(config, rng);
    Tensor img = apply_intensity(image, plan);
    auto out = apply_spatial(img, labels, plan);
    if (plan_out) *plan_out = plan;
    return out;
}

} // namespace lka
