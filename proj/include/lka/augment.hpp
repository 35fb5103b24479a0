#pragma once

#include <array>
#include <optional>

#include "lka/rng.hpp"
#include "lka/tensor.hpp"

namespace lka {

struct MethodCfg {
    double probability = 0.0;
    double lo = 0.0;
    double hi = 1.0;
};

/// On-the-fly augmentation settings: per-method trigger probability and
/// parameter range. Defaults: brightness 30% U(0.7,1.3); contrast 15%
/// U(0.6,1.4); noise 15% variance U(0,1); blur 20% sigma U(0.5,1.5); gamma
/// 15% U(0.7,1.5); scaling 30% U(0.65,1.6); rotation 30% U(-30,30) degrees;
/// elastic 30% alpha U(5,10) with smoothing sigma = 3*alpha; flipping 50%.
struct AugmentConfig {
    MethodCfg brightness{0.30, 0.7, 1.3};
    MethodCfg contrast{0.15, 0.6, 1.4};
    MethodCfg gaussian_noise{0.15, 0.0, 1.0}; // variance range
    MethodCfg gaussian_blur{0.20, 0.5, 1.5};  // kernel sigma range
    MethodCfg gamma{0.15, 0.7, 1.5};
    MethodCfg scaling{0.30, 0.65, 1.6};
    MethodCfg rotation{0.30, -30.0, 30.0}; // degrees
    MethodCfg elastic{0.30, 5.0, 10.0};    // alpha range (voxels)
    double flip_probability = 0.50;

    void validate() const;
};

struct AugPlan {
    std::optional<double> brightness_factor;
    std::optional<double> contrast_factor;
    std::optional<double> noise_variance;
    std::optional<double> blur_sigma;
    std::optional<double> gamma;
    std::optional<double> scale_factor;
    /// Per-axis angles in degrees, applied about the volume center in the
    /// fixed order last axis, middle axis, first axis.
    std::optional<std::array<double, 3>> rotation_deg;
    std::optional<double> elastic_alpha;
    std::array<bool, 3> flip_axes{false, false, false};
    std::uint64_t noise_seed = 0;
    std::uint64_t elastic_seed = 0;

    bool any_spatial() const {
        return scale_factor || rotation_deg || elastic_alpha || flip_axes[0] || flip_axes[1] || flip_axes[2];
    }
};

/// Independent Bernoulli per method (Table order), parameters drawn for the
/// selected ones; field seeds derived by stream splitting.
AugPlan sample_plan(const AugmentConfig& config, Rng& rng);

/// Intensity pipeline on the image only, in order: brightness (x*f),
/// contrast (recentered scaling clipped to the per-channel original range),
/// additive Gaussian noise (std = sqrt(variance)), separable Gaussian blur
/// (truncated at 4 sigma, kernel normalized), gamma on per-channel
/// [0,1]-normalized intensities.
Tensor apply_intensity(const Tensor& image, const AugPlan& plan);

/// Spatial pipeline on image + labels: one affine resampling pass
/// (scaling about the center then rotations), one elastic pass (white noise
/// smoothed by sigma = 3*alpha, rescaled to max amplitude alpha), then exact
/// axis flips. Image samples trilinearly (0 outside), labels
/// nearest-neighbor (background 0 outside). Shapes are preserved.
std::pair<Tensor, Tensor> apply_spatial(const Tensor& image, const Tensor& labels, const AugPlan& plan);

/// sample_plan + apply_intensity + apply_spatial.
std::pair<Tensor, Tensor> augment_pair(const Tensor& image, const Tensor& labels, const AugmentConfig& config,
                                       Rng& rng, AugPlan* plan_out = nullptr);

} // namespace lka
