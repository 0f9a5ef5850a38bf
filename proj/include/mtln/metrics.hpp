#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "mtln/ellipse.hpp"
#include "mtln/grid.hpp"

namespace mtln {

/// Which pixel sets the Hausdorff distance compares.
enum class HausdorffMode {
  kContour,  // boundary pixels of each mask
  kRegion,   // all foreground pixels
};

/// Evaluation of one case. When `failed` is set the prediction produced no
/// usable mask and the numeric fields other than hc_gt_mm are meaningless.
struct MetricsReport {
  std::string case_id;
  double dsc = 0.0;
  double hc_pred_mm = 0.0;
  double hc_gt_mm = 0.0;
  double df_mm = 0.0;
  double adf_mm = 0.0;
  double hd_px = 0.0;
  double hd_mm = 0.0;
  bool failed = false;
};

/// 2 |A n B| / (|A| + |B|); 1 when both masks are empty.
double dice_score(const BinaryMask& seg, const BinaryMask& gt);

/// Largest distance from a point of `from` to its nearest point of `to`.
double directed_hausdorff(const std::vector<std::pair<int, int>>& from, const std::vector<std::pair<int, int>>& to);

/// Symmetric Hausdorff distance in pixels. Both masks must be non-empty.
double hausdorff_distance(const BinaryMask& seg, const BinaryMask& gt, HausdorffMode mode = HausdorffMode::kContour);

struct CircumferenceDifference {
  double df = 0.0;
  double adf = 0.0;
};

/// Signed and absolute difference predicted - ground truth.
CircumferenceDifference circumference_differences(double hc_pred_mm, double hc_gt_mm);

/// Thresholds probabilities at 0.5.
BinaryMask threshold_mask(const Grid<float>& probs, float threshold = 0.5f);

/// Full metric set for one prediction. HC of the prediction comes from an
/// ellipse fitted to the thresholded mask; HC of the ground truth from
/// gt_ellipse (pixel units).
MetricsReport evaluate_case(const std::string& case_id, const Grid<float>& seg_probs, const BinaryMask& gt_mask,
                            const EllipseParams& gt_ellipse, double pixel_size_mm,
                            HausdorffMode mode = HausdorffMode::kContour);

/// Mean and sample standard deviation of one metric over non-failed cases.
struct MetricSummary {
  double mean = 0.0;
  double std = 0.0;
};

struct SummaryReport {
  std::size_t cases = 0;
  std::size_t failed = 0;
  MetricSummary dsc, df_mm, adf_mm, hd_px, hd_mm;
};

SummaryReport summarize(const std::vector<MetricsReport>& reports);

/// Writes the per-case CSV (header included).
void write_metrics_csv(std::ostream& os, const std::vector<MetricsReport>& reports);

/// "metric: mean ± std" lines, DSC in percent.
std::string format_summary(const SummaryReport& summary);

inline constexpr const char* kMetricsCsvHeader = "case_id,dsc,hc_pred_mm,hc_gt_mm,df_mm,adf_mm,hd_px,hd_mm,failed";

}  // namespace mtln
