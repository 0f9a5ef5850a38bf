#include "mtln/loss.hpp"

#include <algorithm>
#include <cmath>

#include "mtln/ellipse.hpp"
#include "mtln/error.hpp"
#include "mtln/ops.hpp"

namespace mtln {

namespace {

void require_mask_matches(const Tensor& t, const BinaryMask& mask, const char* op) {
  if (t.rank() != 4 || t.dim(0) != 1 || t.dim(1) != 1 || t.dim(2) != mask.height || t.dim(3) != mask.width) {
    throw ShapeError(std::string(op) + ": tensor " + to_string(t.dims()) + " does not match mask " +
                     std::to_string(mask.height) + "x" + std::to_string(mask.width));
  }
}

}  // namespace

void LossConfig::validate() const {
  if (!(alpha_seg >= 0.0) || !(alpha_ellipse >= 0.0)) throw ConfigError("loss weights must be non-negative");
  if (!(omega0 >= 0.0)) throw ConfigError("omega0 must be non-negative");
  if (!(sigma > 0.0)) throw ConfigError("sigma must be positive");
  if (!(p_clip > 0.0 && p_clip < 0.5)) throw ConfigError("p_clip must lie in (0, 0.5)");
  if (!(dice_smooth >= 0.0)) throw ConfigError("dice_smooth must be non-negative");
}

double boundary_weight(double distance, double omega0, double sigma, WeightForm form) {
  const double two_sigma_sq = 2.0 * sigma * sigma;
  if (form == WeightForm::kPrinted) return 1.0 + omega0 * std::exp(distance / two_sigma_sq);
  return 1.0 + omega0 * std::exp(-(distance * distance) / two_sigma_sq);
}

WeightMap boundary_weight_map(const BinaryMask& gt_mask, double omega0, double sigma, WeightForm form) {
  if (!(sigma > 0.0)) throw InvalidArgument("boundary_weight_map: sigma must be positive");
  if (!(omega0 >= 0.0)) throw InvalidArgument("boundary_weight_map: omega0 must be non-negative");
  const auto distance = boundary_distance_map(gt_mask);
  WeightMap w(gt_mask.height, gt_mask.width, 1.0f);
  for (std::size_t i = 0; i < w.size(); ++i) {
    w.pixels[i] = static_cast<float>(boundary_weight(distance.pixels[i], omega0, sigma, form));
  }
  return w;
}

Tensor weighted_cross_entropy(Tape& tape, const Tensor& seg_logits, const BinaryMask& gt_mask, const WeightMap& w,
                              double p_clip) {
  require_mask_matches(seg_logits, gt_mask, "weighted_cross_entropy");
  if (!w.same_extent(gt_mask)) throw ShapeError("weighted_cross_entropy: weight map extent mismatch");
  const auto z = seg_logits.values();
  const std::size_t n = z.size();
  std::vector<float> dz(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(z[i])));
    const bool fg = gt_mask.pixels[i] != 0;
    const double pc = fg ? p : 1.0 - p;
    const double clamped = std::clamp(pc, p_clip, 1.0 - p_clip);
    acc += w.pixels[i] * -std::log(clamped);
    // d(-log p_c)/dz = p - g inside the clamp range, 0 where the clamp is active.
    const bool active = pc > p_clip && pc < 1.0 - p_clip;
    dz[i] = active ? static_cast<float>(w.pixels[i] * (p - (fg ? 1.0 : 0.0)) / static_cast<double>(n)) : 0.0f;
  }
  const float value = static_cast<float>(acc / static_cast<double>(n));
  require_finite({&value, 1}, "weighted_cross_entropy");
  return tape.record(Tensor({1}, {value}), {seg_logits},
                     [seg_logits, dz = std::move(dz)](std::span<const float> gout) {
                       auto g = seg_logits.grad_buffer();
                       for (std::size_t i = 0; i < dz.size(); ++i) g[i] += gout[0] * dz[i];
                     });
}

Tensor soft_dice_loss(Tape& tape, const Tensor& seg_probs, const BinaryMask& gt_mask, double dice_smooth) {
  require_mask_matches(seg_probs, gt_mask, "soft_dice_loss");
  const auto p = seg_probs.values();
  double inter = 0.0;
  double sum_p = 0.0;
  double sum_g = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!(p[i] >= 0.0f && p[i] <= 1.0f)) throw InvalidArgument("soft_dice_loss: probabilities must lie in [0, 1]");
    const double g = gt_mask.pixels[i] ? 1.0 : 0.0;
    inter += p[i] * g;
    sum_p += p[i];
    sum_g += g;
  }
  const double num = 2.0 * inter + dice_smooth;
  const double den = sum_p + sum_g + dice_smooth;
  const double value = den > 0.0 ? std::clamp(1.0 - num / den, 0.0, 1.0) : 0.0;
  return tape.record(Tensor({1}, {static_cast<float>(value)}), {seg_probs},
                     [seg_probs, gt_mask, num, den](std::span<const float> gout) {
                       if (!(den > 0.0)) return;
                       auto g = seg_probs.grad_buffer();
                       const double inv_den_sq = 1.0 / (den * den);
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         const double gi = gt_mask.pixels[i] ? 1.0 : 0.0;
                         const double d = -(2.0 * gi * den - num) * inv_den_sq;
                         g[i] += static_cast<float>(gout[0] * d);
                       }
                     });
}

Tensor segmentation_loss(Tape& tape, const Tensor& seg_logits, const BinaryMask& gt_mask, const WeightMap& w,
                         const LossConfig& config) {
  const Tensor ce = weighted_cross_entropy(tape, seg_logits, gt_mask, w, config.p_clip);
  const Tensor probs = ops::sigmoid(tape, seg_logits);
  const Tensor dice = soft_dice_loss(tape, probs, gt_mask, config.dice_smooth);
  return ops::add(tape, ce, dice);
}

Tensor ellipse_param_mse(Tape& tape, const Tensor& pred, const std::array<float, 5>& gt) {
  return ellipse_param_mse(tape, pred, Tensor({5}, std::vector<float>(gt.begin(), gt.end())));
}

Tensor ellipse_param_mse(Tape& tape, const Tensor& pred, const Tensor& gt) {
  if (pred.size() != gt.size() || pred.size() == 0) {
    throw ShapeError("ellipse_param_mse: length mismatch " + to_string(pred.dims()) + " vs " + to_string(gt.dims()));
  }
  const auto p = pred.values();
  const auto q = gt.values();
  const std::size_t n = p.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(p[i]) - static_cast<double>(q[i]);
    acc += d * d;
  }
  const float value = static_cast<float>(acc / static_cast<double>(n));
  require_finite({&value, 1}, "ellipse_param_mse");
  return tape.record(Tensor({1}, {value}), {pred, gt}, [pred, gt, n](std::span<const float> gout) {
    const auto p = pred.values();
    const auto q = gt.values();
    const float k = 2.0f * gout[0] / static_cast<float>(n);
    if (pred.tracked()) {
      auto g = pred.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += k * (p[i] - q[i]);
    }
    if (gt.tracked()) {
      auto g = gt.grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] -= k * (p[i] - q[i]);
    }
  });
}

Tensor total_loss(Tape& tape, const Tensor& seg_loss, const Tensor& ellipse_loss, const LossConfig& config) {
  const Tensor a = ops::scale(tape, seg_loss, static_cast<float>(config.alpha_seg));
  const Tensor b = ops::scale(tape, ellipse_loss, static_cast<float>(config.alpha_ellipse));
  return ops::add(tape, a, b);
}

}  // namespace mtln
