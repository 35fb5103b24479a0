#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "lka/tensor.hpp"

namespace lka {

/// 2|X∩Y| / (|X|+|Y|) on binary masks (nonzero = member). Both empty -> 1,
/// exactly one empty -> 0.
double dice_score(const Tensor& pred_mask, const Tensor& gt_mask);

/// 95th percentile (linear interpolation between closest ranks) of the pooled
/// directed voxel-to-set distances in both directions, Euclidean under the
/// given voxel spacing. Both masks must be nonempty.
///
/// The fast path iterates every mask voxel but resolves each minimum against
/// the other mask's 6-neighborhood boundary, with a membership shortcut for
/// overlapping voxels; this is exactly equivalent to the all-pairs
/// definition (nearest member from an outside point lies on the boundary).
double hd95(const Tensor& pred_mask, const Tensor& gt_mask, std::array<double, 3> spacing = {1, 1, 1});

/// All-pairs reference: full mask against full mask, plain loops.
double hd95_oracle(const Tensor& pred_mask, const Tensor& gt_mask, std::array<double, 3> spacing = {1, 1, 1});

/// Linear-interpolation percentile (inclusive): rank q/100 * (n-1).
double percentile_linear(std::vector<double> values, double q);

struct PenaltyRule {
    double dice = 0.0;
    double hd95 = 373.13;
};

struct ClassResult {
    int cls = 0;
    double dice = 0.0;
    double hd95 = 0.0;
    bool has_hd95 = true; // false when undefined (one empty mask, no penalty)
    bool empty_gt = false;
    bool empty_pred = false;
    bool penalty_applied = false;
};

struct CaseReport {
    std::vector<ClassResult> classes;
};

/// Per-class binarized evaluation of one labeled volume pair.
CaseReport evaluate_case(const Tensor& pred_labels, const Tensor& gt_labels, std::span<const int> classes,
                         const std::optional<PenaltyRule>& penalty = std::nullopt,
                         std::array<double, 3> spacing = {1, 1, 1});

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    int n = 0;
    bool zero_variance = false; // p undefined when set
};

/// Two-sided paired t-test; sd uses the n-1 denominator; p from the
/// regularized incomplete beta (continued fraction, err < 1e-8).
TTestResult paired_t_test(std::span<const double> a, std::span<const double> b);

double student_t_two_sided_p(double t, int dof);

} // namespace lka
