#include "lka/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lka/parallel.hpp"

namespace lka {

namespace {

struct MaskView {
    std::array<std::int64_t, 3> dims{};
    std::vector<std::uint8_t> in; // flat membership
    std::vector<std::array<std::int64_t, 3>> voxels;
};

MaskView mask_view(const Tensor& mask, const char* op) {
    std::array<std::int64_t, 3> dims;
    if (mask.ndim() == 3) {
        dims = {mask.dim(0), mask.dim(1), mask.dim(2)};
    } else if (mask.ndim() == 5 && mask.dim(0) == 1 && mask.dim(1) == 1) {
        dims = {mask.dim(2), mask.dim(3), mask.dim(4)};
    } else {
        throw std::invalid_argument(std::string(op) + ": mask must be [H,W,D] or [1,1,H,W,D]");
    }
    MaskView v;
    v.dims = dims;
    const std::int64_t total = dims[0] * dims[1] * dims[2];
    v.in.resize(static_cast<std::size_t>(total), 0);
    for (std::int64_t i = 0; i < total; ++i) {
        if (mask.get(i) != 0.0) {
            v.in[static_cast<std::size_t>(i)] = 1;
            const std::int64_t h = i / (dims[1] * dims[2]);
            const std::int64_t w = (i / dims[2]) % dims[1];
            const std::int64_t d = i % dims[2];
            v.voxels.push_back({h, w, d});
        }
    }
    return v;
}

std::vector<std::array<std::int64_t, 3>> boundary_voxels(const MaskView& m) {
    std::vector<std::array<std::int64_t, 3>> out;
    const auto [H, W, D] = m.dims;
    auto member = [&](std::int64_t h, std::int64_t w, std::int64_t d) {
        if (h < 0 || h >= H || w < 0 || w >= W || d < 0 || d >= D) return false;
        return m.in[static_cast<std::size_t>((h * W + w) * D + d)] != 0;
    };
    for (const auto& v : m.voxels) {
        const auto [h, w, d] = v;
        if (!member(h - 1, w, d) || !member(h + 1, w, d) || !member(h, w - 1, d) || !member(h, w + 1, d) ||
            !member(h, w, d - 1) || !member(h, w, d + 1))
            out.push_back(v);
    }
    return out;
}

double sq_dist(const std::array<std::int64_t, 3>& a, const std::array<std::int64_t, 3>& b,
               const std::array<double, 3>& sp) {
    const double dh = (a[0] - b[0]) * sp[0];
    const double dw = (a[1] - b[1]) * sp[1];
    const double dd = (a[2] - b[2]) * sp[2];
    return dh * dh + dw * dw + dd * dd;
}

// Distances from every voxel of `from` to the set `to`, resolved against
// `to_boundary` with a membership shortcut.
void directed_distances(const MaskView& from, const MaskView& to,
                        const std::vector<std::array<std::int64_t, 3>>& to_boundary,
                        const std::array<double, 3>& sp, std::vector<double>& out, std::size_t offset) {
    const auto [H, W, D] = to.dims;
    (void)H;
    parallel_for(static_cast<std::int64_t>(from.voxels.size()), [&](std::int64_t i) {
        const auto& v = from.voxels[static_cast<std::size_t>(i)];
        double best;
        if (to.in[static_cast<std::size_t>((v[0] * W + v[1]) * D + v[2])]) {
            best = 0.0;
        } else {
            best = std::numeric_limits<double>::infinity();
            for (const auto& b : to_boundary) best = std::min(best, sq_dist(v, b, sp));
            best = std::sqrt(best);
        }
        out[offset + static_cast<std::size_t>(i)] = best;
    });
}

void check_spacing(const std::array<double, 3>& sp) {
    for (double s : sp)
        if (!(s > 0.0)) throw std::invalid_argument("hd95: spacing must be positive");
}

double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-12;
    constexpr double kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

double betai(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double bt =
        std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x));
    if (x < (a + 1.0) / (a + b + 2.0)) return bt * betacf(a, b, x) / a;
    return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

} // namespace

double dice_score(const Tensor& pred_mask, const Tensor& gt_mask) {
    if (!same_shape(pred_mask, gt_mask)) throw std::invalid_argument("dice_score: shape mismatch");
    std::int64_t inter = 0, np = 0, ng = 0;
    for (std::int64_t i = 0; i < pred_mask.numel(); ++i) {
        const bool p = pred_mask.get(i) != 0.0;
        const bool g = gt_mask.get(i) != 0.0;
        inter += (p && g) ? 1 : 0;
        np += p ? 1 : 0;
        ng += g ? 1 : 0;
    }
    if (np + ng == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(np + ng);
}

double percentile_linear(std::vector<double> values, double q) {
    if (values.empty()) throw std::invalid_argument("percentile: empty");
    std::sort(values.begin(), values.end());
    const double rank = q / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(rank);
    if (lo + 1 >= values.size()) return values.back();
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + frac * (values[lo + 1] - values[lo]);
}

double hd95(const Tensor& pred_mask, const Tensor& gt_mask, std::array<double, 3> spacing) {
    if (!same_shape(pred_mask, gt_mask)) throw std::invalid_argument("hd95: shape mismatch");
    check_spacing(spacing);
    const MaskView a = mask_view(pred_mask, "hd95");
    const MaskView b = mask_view(gt_mask, "hd95");
    if (a.voxels.empty() || b.voxels.empty()) throw std::invalid_argument("hd95: empty mask");

    const auto bnd_a = boundary_voxels(a);
    const auto bnd_b = boundary_voxels(b);
    std::vector<double> dists(a.voxels.size() + b.voxels.size());
    directed_distances(a, b, bnd_b, spacing, dists, 0);
    directed_distances(b, a, bnd_a, spacing, dists, a.voxels.size());
    return percentile_linear(std::move(dists), 95.0);
}

double hd95_oracle(const Tensor& pred_mask, const Tensor& gt_mask, std::array<double, 3> spacing) {
    if (!same_shape(pred_mask, gt_mask)) throw std::invalid_argument("hd95_oracle: shape mismatch");
    check_spacing(spacing);
    const MaskView a = mask_view(pred_mask, "hd95_oracle");
    const MaskView b = mask_view(gt_mask, "hd95_oracle");
    if (a.voxels.empty() || b.voxels.empty()) throw std::invalid_argument("hd95_oracle: empty mask");

    std::vector<double> dists;
    dists.reserve(a.voxels.size() + b.voxels.size());
    for (const auto& x : a.voxels) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& y : b.voxels) best = std::min(best, sq_dist(x, y, spacing));
        dists.push_back(std::sqrt(best));
    }
    for (const auto& y : b.voxels) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& x : a.voxels) best = std::min(best, sq_dist(y, x, spacing));
        dists.push_back(std::sqrt(best));
    }
    return percentile_linear(std::move(dists), 95.0);
}

CaseReport evaluate_case(const Tensor& pred_labels, const Tensor& gt_labels, std::span<const int> classes,
                         const std::optional<PenaltyRule>& penalty, std::array<double, 3> spacing) {
    if (!same_shape(pred_labels, gt_labels)) throw std::invalid_argument("evaluate_case: shape mismatch");
    CaseReport report;
    for (int cls : classes) {
        if (cls < 0 || cls > 255) throw std::invalid_argument("evaluate_case: unknown class id " + std::to_string(cls));
        Tensor pm = Tensor::zeros(pred_labels.shape(), DType::U8);
        Tensor gm = Tensor::zeros(gt_labels.shape(), DType::U8);
        std::int64_t np = 0, ng = 0;
        for (std::int64_t i = 0; i < pred_labels.numel(); ++i) {
            if (static_cast<int>(pred_labels.get(i)) == cls) {
                pm.set(i, 1);
                ++np;
            }
            if (static_cast<int>(gt_labels.get(i)) == cls) {
                gm.set(i, 1);
                ++ng;
            }
        }
        ClassResult r;
        r.cls = cls;
        r.empty_gt = ng == 0;
        r.empty_pred = np == 0;
        if (ng == 0 && np == 0) {
            r.dice = 1.0;
            r.hd95 = 0.0;
        } else if (ng == 0 || np == 0) {
            r.dice = 0.0;
            if (penalty) {
                r.dice = penalty->dice;
                r.hd95 = penalty->hd95;
                r.penalty_applied = true;
            } else {
                r.has_hd95 = false;
            }
        } else {
            r.dice = dice_score(pm, gm);
            r.hd95 = hd95(pm, gm, spacing);
        }
        report.classes.push_back(r);
    }
    return report;
}

double student_t_two_sided_p(double t, int dof) {
    if (dof < 1) throw std::invalid_argument("student_t_two_sided_p: dof must be >= 1");
    const double nu = dof;
    return betai(nu / 2.0, 0.5, nu / (nu + t * t));
}

TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("paired_t_test: length mismatch");
    const int n = static_cast<int>(a.size());
    if (n < 2) throw std::invalid_argument("paired_t_test: need n >= 2");

    double mean = 0.0;
    for (int i = 0; i < n; ++i) mean += a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)];
    mean /= n;
    double ss = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)] - mean;
        ss += d * d;
    }
    const double sd = std::sqrt(ss / (n - 1));

    TTestResult res;
    res.n = n;
    if (sd == 0.0) {
        res.zero_variance = true;
        res.t = 0.0;
        res.p = std::numeric_limits<double>::quiet_NaN();
        return res;
    }
    res.t = mean / (sd / std::sqrt(static_cast<double>(n)));
    res.p = student_t_two_sided_p(res.t, n - 1);
    return res;
}

} // namespace lka
