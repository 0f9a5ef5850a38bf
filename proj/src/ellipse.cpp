#include "mtln/ellipse.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "mtln/error.hpp"

namespace mtln {

namespace {

constexpr double kPi = std::numbers::pi;

double wrap_angle(double theta) {
  double t = std::fmod(theta, kPi);
  if (t < 0.0) t += kPi;
  if (t >= kPi) t -= kPi;
  return t;
}

struct SymEigen {
  double major = 0.0;
  double minor = 0.0;
  double angle = 0.0;
};

// Eigen-decomposition of [[p, q], [q, r]]; angle of the major eigenvector.
SymEigen sym_eigen(double p, double q, double r) {
  const double mean = 0.5 * (p + r);
  const double half_diff = 0.5 * (p - r);
  const double radius = std::hypot(half_diff, q);
  return {mean + radius, mean - radius, wrap_angle(0.5 * std::atan2(2.0 * q, p - r))};
}

// Squared 1-D distance transform of a sampled function (lower envelope of
// parabolas). f holds 0 at sites and +inf elsewhere on the first pass.
void squared_edt_1d(const std::vector<double>& f, std::vector<double>& d, std::vector<int>& v,
                    std::vector<double>& z) {
  const int n = static_cast<int>(f.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == inf) continue;
    while (k >= 0) {
      const double s = ((f[q] + q * static_cast<double>(q)) - (f[v[k]] + v[k] * static_cast<double>(v[k]))) /
                       (2.0 * (q - v[k]));
      if (s <= z[k]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[k] = q;
    z[k] = k == 0 ? -inf : ((f[q] + q * static_cast<double>(q)) -
                            (f[v[k - 1]] + v[k - 1] * static_cast<double>(v[k - 1]))) /
                               (2.0 * (q - v[k - 1]));
    z[k + 1] = inf;
  }
  if (k < 0) {
    for (int q = 0; q < n; ++q) d[q] = inf;
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    while (z[j + 1] < q) ++j;
    const double diff = q - v[j];
    d[q] = diff * diff + f[v[j]];
  }
}

}  // namespace

EllipseParams canonicalize(EllipseParams e) {
  if (!(e.a > 0.0) || !(e.b > 0.0)) throw InvalidArgument("ellipse axes must be positive");
  if (e.a < e.b) {
    std::swap(e.a, e.b);
    e.theta += kPi / 2.0;
  }
  e.theta = wrap_angle(e.theta);
  return e;
}

bool is_canonical(const EllipseParams& e) {
  return e.a >= e.b && e.b > 0.0 && e.theta >= 0.0 && e.theta < kPi;
}

Point2 ellipse_point(const EllipseParams& e, double t) {
  const double u = e.a * std::cos(t);
  const double v = e.b * std::sin(t);
  const double c = std::cos(e.theta);
  const double s = std::sin(e.theta);
  return {e.cx + c * u - s * v, e.cy + s * u + c * v};
}

double implicit_value(const EllipseParams& e, Point2 p) {
  const double dx = p.x - e.cx;
  const double dy = p.y - e.cy;
  const double c = std::cos(e.theta);
  const double s = std::sin(e.theta);
  const double u = (dx * c + dy * s) / e.a;
  const double v = (-dx * s + dy * c) / e.b;
  return u * u + v * v;
}

BinaryMask rasterize_ellipse(const EllipseParams& e, int height, int width) {
  if (e.a < 1.0 || e.b < 1.0) throw InvalidArgument("rasterize_ellipse: semi-axes must be at least 1 px");
  if (height <= 0 || width <= 0) throw ShapeError("rasterize_ellipse: empty frame");
  BinaryMask mask(height, width, 0);
  const double c = std::cos(e.theta);
  const double s = std::sin(e.theta);
  for (int row = 0; row < height; ++row) {
    const double dy = row - e.cy;
    for (int col = 0; col < width; ++col) {
      const double dx = col - e.cx;
      const double u = (dx * c + dy * s) / e.a;
      const double v = (-dx * s + dy * c) / e.b;
      mask(row, col) = (u * u + v * v) <= 1.0 ? 1 : 0;
    }
  }
  return mask;
}

EllipseParams fit_ellipse(const BinaryMask& mask) {
  double n = 0.0;
  double sx = 0.0;
  double sy = 0.0;
  for (int row = 0; row < mask.height; ++row) {
    for (int col = 0; col < mask.width; ++col) {
      if (!mask(row, col)) continue;
      n += 1.0;
      sx += col;
      sy += row;
    }
  }
  if (n < 5.0) throw InvalidArgument("fit_ellipse: mask needs at least 5 foreground pixels");
  const double mx = sx / n;
  const double my = sy / n;
  double sxx = 0.0;
  double syy = 0.0;
  double sxy = 0.0;
  for (int row = 0; row < mask.height; ++row) {
    for (int col = 0; col < mask.width; ++col) {
      if (!mask(row, col)) continue;
      const double dx = col - mx;
      const double dy = row - my;
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
    }
  }
  const SymEigen eig = sym_eigen(sxx / n, sxy / n, syy / n);
  if (!(eig.minor > 1e-9)) throw InvalidArgument("fit_ellipse: foreground pixels are collinear");
  return canonicalize({mx, my, 2.0 * std::sqrt(eig.major), 2.0 * std::sqrt(eig.minor), eig.angle});
}

double ellipse_perimeter(const EllipseParams& e) {
  if (!(e.a > 0.0) || !(e.b > 0.0)) throw InvalidArgument("ellipse_perimeter: axes must be positive");
  const double ratio = (e.a - e.b) / (e.a + e.b);
  const double h = ratio * ratio;
  return kPi * (e.a + e.b) * (1.0 + 3.0 * h / (10.0 + std::sqrt(4.0 - 3.0 * h)));
}

double circumference_mm(const EllipseParams& e, double pixel_size_mm) {
  if (!(pixel_size_mm > 0.0)) throw InvalidArgument("circumference_mm: pixel size must be positive");
  return ellipse_perimeter(e) * pixel_size_mm;
}

std::vector<std::pair<int, int>> boundary_pixels(const BinaryMask& mask) {
  std::vector<std::pair<int, int>> out;
  constexpr int kDr[4] = {-1, 1, 0, 0};
  constexpr int kDc[4] = {0, 0, -1, 1};
  for (int row = 0; row < mask.height; ++row) {
    for (int col = 0; col < mask.width; ++col) {
      if (!mask(row, col)) continue;
      for (int k = 0; k < 4; ++k) {
        const int r = row + kDr[k];
        const int c = col + kDc[k];
        if (mask.contains(r, c) && !mask(r, c)) {
          out.emplace_back(row, col);
          break;
        }
      }
    }
  }
  return out;
}

Grid<float> boundary_distance_map(const BinaryMask& mask) {
  const auto sites = boundary_pixels(mask);
  if (sites.empty()) throw InvalidArgument("boundary_distance_map: mask has no boundary (empty or full)");
  const int h = mask.height;
  const int w = mask.width;
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> sq(static_cast<std::size_t>(h) * w, inf);
  for (auto [r, c] : sites) sq[static_cast<std::size_t>(r) * w + c] = 0.0;

  const int n = std::max(h, w);
  std::vector<double> f(n), d(n), z(n + 1);
  std::vector<int> v(n);
  // Columns first, then rows over the partial result.
  f.resize(h);
  d.resize(h);
  for (int col = 0; col < w; ++col) {
    for (int row = 0; row < h; ++row) f[row] = sq[static_cast<std::size_t>(row) * w + col];
    squared_edt_1d(f, d, v, z);
    for (int row = 0; row < h; ++row) sq[static_cast<std::size_t>(row) * w + col] = d[row];
  }
  f.resize(w);
  d.resize(w);
  for (int row = 0; row < h; ++row) {
    for (int col = 0; col < w; ++col) f[col] = sq[static_cast<std::size_t>(row) * w + col];
    squared_edt_1d(f, d, v, z);
    for (int col = 0; col < w; ++col) sq[static_cast<std::size_t>(row) * w + col] = d[col];
  }

  Grid<float> out(h, w, 0.0f);
  for (std::size_t i = 0; i < sq.size(); ++i) out.pixels[i] = static_cast<float>(std::sqrt(sq[i]));
  return out;
}

std::array<float, 5> normalize(const EllipseParams& e, int height, int width) {
  return {static_cast<float>(e.cx / width), static_cast<float>(e.cy / height), static_cast<float>(e.a / width),
          static_cast<float>(e.b / height), static_cast<float>(e.theta / kPi)};
}

EllipseParams denormalize(const std::array<float, 5>& v, int height, int width) {
  EllipseParams e{static_cast<double>(v[0]) * width, static_cast<double>(v[1]) * height,
                  static_cast<double>(v[2]) * width, static_cast<double>(v[3]) * height,
                  static_cast<double>(v[4]) * kPi};
  // A regression head may emit non-positive axes; clamp to a sub-pixel floor.
  e.a = std::max(e.a, 1e-3);
  e.b = std::max(e.b, 1e-3);
  return canonicalize(e);
}

EllipseParams transform_ellipse(const EllipseParams& e, const std::array<double, 4>& m, Point2 origin,
                                Point2 new_origin) {
  const double c = std::cos(e.theta);
  const double s = std::sin(e.theta);
  // Columns of the shape matrix R(theta) diag(a, b), mapped through m.
  const double p00 = m[0] * c * e.a + m[1] * s * e.a;
  const double p10 = m[2] * c * e.a + m[3] * s * e.a;
  const double p01 = -m[0] * s * e.b + m[1] * c * e.b;
  const double p11 = -m[2] * s * e.b + m[3] * c * e.b;
  const SymEigen eig = sym_eigen(p00 * p00 + p01 * p01, p00 * p10 + p01 * p11, p10 * p10 + p11 * p11);
  if (!(eig.minor > 0.0)) throw InvalidArgument("transform_ellipse: singular transform");
  const double dx = e.cx - origin.x;
  const double dy = e.cy - origin.y;
  EllipseParams out{new_origin.x + m[0] * dx + m[1] * dy, new_origin.y + m[2] * dx + m[3] * dy,
                    std::sqrt(eig.major), std::sqrt(eig.minor), eig.angle};
  return canonicalize(out);
}

}  // namespace mtln
