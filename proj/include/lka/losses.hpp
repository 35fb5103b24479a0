#pragma once

#include "lka/autodiff.hpp"

namespace lka {

/// Expand an integer label volume [N,1,spatial...] (or [N,spatial...]) into
/// one-hot [N,num_classes,spatial...].
Tensor one_hot(const Tensor& labels, int num_classes, DType dtype = DType::F32);

/// Per-class weight max(0, 1 - N_fg/N_bg) with N_bg = voxels not of that
/// class; 1 for absent classes, 0 when a class fills the whole volume.
Tensor class_weights(const Tensor& labels, int num_classes);

/// Weighted soft Dice: sum_c w_c * (1 - (2*sum(p*g)+s)/(sum p + sum g + s))
/// normalized by sum_c w_c. Empty `weights` means uniform.
ad::Var soft_dice_loss(ad::Tape& t, ad::Var probs, const Tensor& target_onehot, const Tensor& weights,
                       double smooth = 1e-5);
double soft_dice_loss_value(const Tensor& probs, const Tensor& target_onehot, const Tensor& weights,
                            double smooth = 1e-5);

/// Mean BCE on logits plus unweighted soft Dice on sigmoid(logits), both
/// terms with weight 1. Targets are multi-label {0,1}.
ad::Var bce_dice_loss(ad::Tape& t, ad::Var logits, const Tensor& target, double smooth = 1e-5);
double bce_dice_loss_value(const Tensor& logits, const Tensor& target, double smooth = 1e-5);

/// Nearest-neighbor label downsampling by 2^k along every spatial axis.
Tensor downsample_labels(const Tensor& labels, int k);

} // namespace lka
