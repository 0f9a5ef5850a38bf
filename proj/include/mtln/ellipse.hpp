#pragma once

#include <array>
#include <utility>

#include "mtln/grid.hpp"

namespace mtln {

/// Center, semi-axes and orientation of an ellipse.
///
/// theta is the angle of the major axis measured from +x towards +y (image
/// rows grow downwards). This is the same angle as between the minor axis and
/// the y axis. Canonical form: a >= b > 0 and theta in [0, pi).
struct EllipseParams {
  double cx = 0.0;
  double cy = 0.0;
  double a = 1.0;
  double b = 1.0;
  double theta = 0.0;

  bool operator==(const EllipseParams&) const = default;
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Wraps theta into [0, pi) and swaps axes (rotating by pi/2) so that a >= b.
EllipseParams canonicalize(EllipseParams e);
bool is_canonical(const EllipseParams& e);

/// Point at eccentric anomaly t: center + R(theta) (a cos t, b sin t).
Point2 ellipse_point(const EllipseParams& e, double t);

/// Left-hand side of the implicit equation in the ellipse frame:
/// (u / a)^2 + (v / b)^2 where (u, v) is p expressed relative to the axes.
double implicit_value(const EllipseParams& e, Point2 p);

/// Pixels whose centers satisfy implicit_value <= 1. Axes must be >= 1 px.
BinaryMask rasterize_ellipse(const EllipseParams& e, int height, int width);

/// Second-moment fit: centroid, and axes 2 sqrt(lambda) from the eigenvalues
/// of the foreground coordinate covariance. Needs >= 5 foreground pixels that
/// do not all lie on one line.
EllipseParams fit_ellipse(const BinaryMask& mask);

/// Ramanujan's second approximation to the perimeter.
double ellipse_perimeter(const EllipseParams& e);

/// Perimeter of a pixel-unit ellipse converted to millimetres.
double circumference_mm(const EllipseParams& e, double pixel_size_mm);

/// Foreground pixels with at least one 4-neighbour inside the frame that is
/// background. Returned as (row, col).
std::vector<std::pair<int, int>> boundary_pixels(const BinaryMask& mask);

/// Exact Euclidean distance from every pixel to the nearest boundary pixel.
Grid<float> boundary_distance_map(const BinaryMask& mask);

/// Parameters scaled into network targets: cx/W, cy/H, a/W, b/H, theta/pi.
std::array<float, 5> normalize(const EllipseParams& e, int height, int width);
EllipseParams denormalize(const std::array<float, 5>& v, int height, int width);

/// Image of the ellipse under the affine map p -> o' + A (p - o), with A the
/// 2x2 matrix {{a00, a01}, {a10, a11}}. Returned canonical.
EllipseParams transform_ellipse(const EllipseParams& e, const std::array<double, 4>& matrix, Point2 origin,
                                Point2 new_origin);

}  // namespace mtln
