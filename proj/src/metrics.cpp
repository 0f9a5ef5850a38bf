#include "mtln/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "mtln/error.hpp"

namespace mtln {

namespace {

std::vector<std::pair<int, int>> foreground_pixels(const BinaryMask& mask) {
  std::vector<std::pair<int, int>> out;
  for (int row = 0; row < mask.height; ++row) {
    for (int col = 0; col < mask.width; ++col) {
      if (mask(row, col)) out.emplace_back(row, col);
    }
  }
  return out;
}

// Contour pixels, or every pixel for masks without a contour (full frame).
std::vector<std::pair<int, int>> point_set(const BinaryMask& mask, HausdorffMode mode) {
  if (mode == HausdorffMode::kContour) {
    auto contour = boundary_pixels(mask);
    if (!contour.empty()) return contour;
  }
  return foreground_pixels(mask);
}

MetricSummary mean_std(const std::vector<double>& v) {
  MetricSummary s;
  if (v.empty()) return s;
  double acc = 0.0;
  for (double x : v) acc += x;
  s.mean = acc / static_cast<double>(v.size());
  if (v.size() > 1) {
    double sq = 0.0;
    for (double x : v) sq += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(sq / static_cast<double>(v.size() - 1));
  }
  return s;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

double dice_score(const BinaryMask& seg, const BinaryMask& gt) {
  if (!seg.same_extent(gt)) throw ShapeError("dice_score: mask dimensions differ");
  std::size_t inter = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    const bool s = seg.pixels[i] != 0;
    const bool g = gt.pixels[i] != 0;
    inter += s && g;
    total += static_cast<std::size_t>(s) + static_cast<std::size_t>(g);
  }
  if (total == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(total);
}

double directed_hausdorff(const std::vector<std::pair<int, int>>& from, const std::vector<std::pair<int, int>>& to) {
  if (from.empty() || to.empty()) throw InvalidArgument("directed_hausdorff: empty point set");
  long long worst = 0;
  for (auto [r0, c0] : from) {
    long long best = std::numeric_limits<long long>::max();
    for (auto [r1, c1] : to) {
      const long long dr = r0 - r1;
      const long long dc = c0 - c1;
      const long long d = dr * dr + dc * dc;
      if (d < best) {
        best = d;
        // Cannot raise the running maximum any more.
        if (best <= worst) break;
      }
    }
    worst = std::max(worst, best);
  }
  return std::sqrt(static_cast<double>(worst));
}

double hausdorff_distance(const BinaryMask& seg, const BinaryMask& gt, HausdorffMode mode) {
  if (!seg.same_extent(gt)) throw ShapeError("hausdorff_distance: mask dimensions differ");
  if (foreground_count(seg) == 0 || foreground_count(gt) == 0) {
    throw InvalidArgument("hausdorff_distance: both masks must be non-empty");
  }
  const auto s = point_set(seg, mode);
  const auto g = point_set(gt, mode);
  return std::max(directed_hausdorff(s, g), directed_hausdorff(g, s));
}

CircumferenceDifference circumference_differences(double hc_pred_mm, double hc_gt_mm) {
  if (!(hc_pred_mm > 0.0) || !(hc_gt_mm > 0.0)) {
    throw InvalidArgument("circumference_differences: circumferences must be positive");
  }
  const double df = hc_pred_mm - hc_gt_mm;
  return {df, std::abs(df)};
}

BinaryMask threshold_mask(const Grid<float>& probs, float threshold) {
  BinaryMask out(probs.height, probs.width, 0);
  for (std::size_t i = 0; i < probs.size(); ++i) out.pixels[i] = probs.pixels[i] >= threshold ? 1 : 0;
  return out;
}

MetricsReport evaluate_case(const std::string& case_id, const Grid<float>& seg_probs, const BinaryMask& gt_mask,
                            const EllipseParams& gt_ellipse, double pixel_size_mm, HausdorffMode mode) {
  if (!seg_probs.same_extent(gt_mask)) throw ShapeError("evaluate_case: prediction and ground truth differ in size");
  if (!(pixel_size_mm > 0.0)) throw InvalidArgument("evaluate_case: pixel size must be positive");
  MetricsReport r;
  r.case_id = case_id;
  r.hc_gt_mm = circumference_mm(gt_ellipse, pixel_size_mm);
  const BinaryMask seg = threshold_mask(seg_probs);
  r.dsc = dice_score(seg, gt_mask);
  if (foreground_count(seg) == 0 || foreground_count(gt_mask) == 0) {
    r.failed = true;
    return r;
  }
  try {
    const EllipseParams fitted = fit_ellipse(seg);
    r.hc_pred_mm = circumference_mm(fitted, pixel_size_mm);
  } catch (const InvalidArgument&) {
    r.failed = true;
    return r;
  }
  const auto diff = circumference_differences(r.hc_pred_mm, r.hc_gt_mm);
  r.df_mm = diff.df;
  r.adf_mm = diff.adf;
  r.hd_px = hausdorff_distance(seg, gt_mask, mode);
  r.hd_mm = r.hd_px * pixel_size_mm;
  return r;
}

SummaryReport summarize(const std::vector<MetricsReport>& reports) {
  SummaryReport s;
  s.cases = reports.size();
  std::vector<double> dsc, df, adf, hdp, hdm;
  for (const auto& r : reports) {
    if (r.failed) {
      ++s.failed;
      continue;
    }
    dsc.push_back(r.dsc);
    df.push_back(r.df_mm);
    adf.push_back(r.adf_mm);
    hdp.push_back(r.hd_px);
    hdm.push_back(r.hd_mm);
  }
  s.dsc = mean_std(dsc);
  s.df_mm = mean_std(df);
  s.adf_mm = mean_std(adf);
  s.hd_px = mean_std(hdp);
  s.hd_mm = mean_std(hdm);
  return s;
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricsReport>& reports) {
  os << kMetricsCsvHeader << '\n';
  for (const auto& r : reports) {
    os << r.case_id << ',' << fmt(r.dsc) << ',' << fmt(r.hc_pred_mm) << ',' << fmt(r.hc_gt_mm) << ','
       << fmt(r.df_mm) << ',' << fmt(r.adf_mm) << ',' << fmt(r.hd_px) << ',' << fmt(r.hd_mm) << ','
       << (r.failed ? 1 : 0) << '\n';
  }
}

std::string format_summary(const SummaryReport& s) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "cases: %zu (failed: %zu)\n"
                "DSC %%: %.2f ± %.2f\n"
                "DF (mm): %.2f ± %.2f\n"
                "ADF (mm): %.2f ± %.2f\n"
                "HD (px): %.2f ± %.2f\n"
                "HD (mm): %.2f ± %.2f\n",
                s.cases, s.failed, 100.0 * s.dsc.mean, 100.0 * s.dsc.std, s.df_mm.mean, s.df_mm.std, s.adf_mm.mean,
                s.adf_mm.std, s.hd_px.mean, s.hd_px.std, s.hd_mm.mean, s.hd_mm.std);
  return buf;
}

}  // namespace mtln
