#pragma once

#include <array>

#include "mtln/grid.hpp"
#include "mtln/tensor.hpp"

namespace mtln {

/// Functional form of the boundary weight map.
enum class WeightForm {
  /// 1 + w0 exp(-d^2 / (2 sigma^2)): largest on the boundary.
  kGaussian,
  /// 1 + w0 exp(d / (2 sigma^2)), as typeset in the original formula. Grows
  /// with distance; kept only for comparison runs.
  kPrinted,
};

/// Weights and constants of the compound objective.
struct LossConfig {
  double alpha_seg = 1.0;      // weight of the segmentation loss
  double alpha_ellipse = 2.0;  // weight of the ellipse-parameter MSE
  double omega0 = 30.0;        // weight-map amplitude
  double sigma = 10.0;         // weight-map width in pixels
  double p_clip = 1e-7;
  double dice_smooth = 1e-6;
  WeightForm weight_form = WeightForm::kGaussian;

  /// Throws ConfigError when an invariant is violated.
  void validate() const;
};

using WeightMap = Grid<float>;

/// Per-pixel loss weights from the distance to the ground-truth boundary.
WeightMap boundary_weight_map(const BinaryMask& gt_mask, double omega0, double sigma,
                              WeightForm form = WeightForm::kGaussian);

/// Single-pixel weight for a boundary distance d.
double boundary_weight(double distance, double omega0, double sigma, WeightForm form = WeightForm::kGaussian);

/// Mean over pixels of w * -log(clamp(p_c)), where p_c = sigmoid(logit) on
/// foreground pixels and 1 - sigmoid(logit) on background pixels.
/// seg_logits is 1 x 1 x H x W.
Tensor weighted_cross_entropy(Tape& tape, const Tensor& seg_logits, const BinaryMask& gt_mask, const WeightMap& w,
                              double p_clip);

/// 1 - (2 sum(p g) + s) / (sum(p) + sum(g) + s).
Tensor soft_dice_loss(Tape& tape, const Tensor& seg_probs, const BinaryMask& gt_mask, double dice_smooth);

/// Weighted cross-entropy plus the (unweighted) soft Dice loss of the
/// sigmoid probabilities.
Tensor segmentation_loss(Tape& tape, const Tensor& seg_logits, const BinaryMask& gt_mask, const WeightMap& w,
                         const LossConfig& config);

/// Mean squared error over the five normalized ellipse parameters.
Tensor ellipse_param_mse(Tape& tape, const Tensor& pred, const std::array<float, 5>& gt);
Tensor ellipse_param_mse(Tape& tape, const Tensor& pred, const Tensor& gt);

/// alpha_seg * seg_loss + alpha_ellipse * ellipse_loss.
Tensor total_loss(Tape& tape, const Tensor& seg_loss, const Tensor& ellipse_loss, const LossConfig& config);

}  // namespace mtln
