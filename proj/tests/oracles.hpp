#pragma once

// Independent double-precision reference implementations used as test oracles.
// Nothing here calls into the library's numeric code.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mtln/grid.hpp"
#include "mtln/nn.hpp"
#include "mtln/random.hpp"
#include "mtln/tensor.hpp"

namespace oracle {

// ---------------------------------------------------------------------------
// Dense NCHW arrays in double

struct Array {
  std::vector<int> dims;
  std::vector<double> v;

  Array() = default;
  explicit Array(std::vector<int> d, double fill = 0.0) : dims(std::move(d)) {
    std::size_t n = 1;
    for (int x : dims) n *= static_cast<std::size_t>(x);
    v.assign(n, fill);
  }
  int c() const { return dims[1]; }
  int h() const { return dims[2]; }
  int w() const { return dims[3]; }
  double& at(int ch, int r, int col) { return v[(static_cast<std::size_t>(ch) * h() + r) * w() + col]; }
  double at(int ch, int r, int col) const { return v[(static_cast<std::size_t>(ch) * h() + r) * w() + col]; }
};

inline Array from_tensor(const mtln::Tensor& t) {
  Array a(std::vector<int>(t.dims().begin(), t.dims().end()));
  const auto vals = t.values();
  for (std::size_t i = 0; i < a.v.size(); ++i) a.v[i] = vals[i];
  return a;
}

/// Cross-correlation with zero "same" padding (pad = k / 2) or no padding.
inline Array conv2d(const Array& x, const Array& k, const Array& b, int stride, bool same = true) {
  const int kk = k.dims[2];
  const int pad = same ? kk / 2 : 0;
  const int oh = (x.h() + 2 * pad - kk) / stride + 1;
  const int ow = (x.w() + 2 * pad - kk) / stride + 1;
  const int oc = k.dims[0];
  const int ic = k.dims[1];
  Array y({1, oc, oh, ow});
  for (int o = 0; o < oc; ++o) {
    for (int r = 0; r < oh; ++r) {
      for (int c = 0; c < ow; ++c) {
        double s = b.v[o];
        for (int i = 0; i < ic; ++i) {
          for (int u = 0; u < kk; ++u) {
            for (int q = 0; q < kk; ++q) {
              const int rr = r * stride + u - pad;
              const int cc = c * stride + q - pad;
              if (rr < 0 || cc < 0 || rr >= x.h() || cc >= x.w()) continue;
              s += x.at(i, rr, cc) * k.v[((static_cast<std::size_t>(o) * ic + i) * kk + u) * kk + q];
            }
          }
        }
        y.at(o, r, c) = s;
      }
    }
  }
  return y;
}

inline Array relu(Array x) {
  for (auto& e : x.v) e = e > 0.0 ? e : 0.0;
  return x;
}

inline Array add(Array x, const Array& y) {
  for (std::size_t i = 0; i < x.v.size(); ++i) x.v[i] += y.v[i];
  return x;
}

inline Array avgpool2(const Array& x) {
  Array y({1, x.c(), x.h() / 2, x.w() / 2});
  for (int ch = 0; ch < x.c(); ++ch)
    for (int r = 0; r < y.h(); ++r)
      for (int c = 0; c < y.w(); ++c)
        y.at(ch, r, c) = 0.25 * (x.at(ch, 2 * r, 2 * c) + x.at(ch, 2 * r, 2 * c + 1) + x.at(ch, 2 * r + 1, 2 * c) +
                                 x.at(ch, 2 * r + 1, 2 * c + 1));
  return y;
}

inline Array maxpool2(const Array& x) {
  Array y({1, x.c(), x.h() / 2, x.w() / 2});
  for (int ch = 0; ch < x.c(); ++ch)
    for (int r = 0; r < y.h(); ++r)
      for (int c = 0; c < y.w(); ++c)
        y.at(ch, r, c) = std::max({x.at(ch, 2 * r, 2 * c), x.at(ch, 2 * r, 2 * c + 1), x.at(ch, 2 * r + 1, 2 * c),
                                   x.at(ch, 2 * r + 1, 2 * c + 1)});
  return y;
}

inline Array upsample2(const Array& x) {
  Array y({1, x.c(), x.h() * 2, x.w() * 2});
  for (int ch = 0; ch < y.c(); ++ch)
    for (int r = 0; r < y.h(); ++r)
      for (int c = 0; c < y.w(); ++c) y.at(ch, r, c) = x.at(ch, r / 2, c / 2);
  return y;
}

inline Array concat(const Array& a, const Array& b) {
  Array y({1, a.c() + b.c(), a.h(), a.w()});
  std::copy(a.v.begin(), a.v.end(), y.v.begin());
  std::copy(b.v.begin(), b.v.end(), y.v.begin() + static_cast<std::ptrdiff_t>(a.v.size()));
  return y;
}

inline std::vector<double> global_avg_pool(const Array& x) {
  std::vector<double> out(static_cast<std::size_t>(x.c()), 0.0);
  const double area = static_cast<double>(x.h()) * x.w();
  for (int ch = 0; ch < x.c(); ++ch) {
    double s = 0.0;
    for (int r = 0; r < x.h(); ++r)
      for (int c = 0; c < x.w(); ++c) s += x.at(ch, r, c);
    out[static_cast<std::size_t>(ch)] = s / area;
  }
  return out;
}

/// y = W x + b with W stored row-major {out, in}.
inline std::vector<double> fully_connected(const std::vector<double>& x, const Array& w, const Array& b) {
  const int out = w.dims[0];
  const int in = w.dims[1];
  std::vector<double> y(static_cast<std::size_t>(out));
  for (int o = 0; o < out; ++o) {
    double s = b.v[static_cast<std::size_t>(o)];
    for (int i = 0; i < in; ++i) s += w.v[static_cast<std::size_t>(o) * in + i] * x[static_cast<std::size_t>(i)];
    y[static_cast<std::size_t>(o)] = s;
  }
  return y;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// ---------------------------------------------------------------------------
// Whole-network reference

using Params = std::map<std::string, Array>;

inline Params from_model(const mtln::ModelParams& params) {
  Params p;
  for (const auto& [name, t] : params) p.emplace(name, from_tensor(t));
  return p;
}

struct NetOutput {
  Array logits;
  std::vector<double> ellipse;
};

/// Written from the architecture description: stem, stride-2 projection
/// residual encoders with the pooled image appended before stages 2 and 3,
/// upsample + skip decoders, 1x1 logit conv, pooled or flattened FC head.
inline NetOutput mtln_forward(const Params& p, const mtln::NetworkConfig& cfg, const Array& image, bool head = true) {
  auto P = [&](const std::string& n) -> const Array& { return p.at(n); };
  std::vector<Array> pyramid{image};
  pyramid.push_back(avgpool2(image));
  pyramid.push_back(avgpool2(pyramid.back()));

  std::vector<Array> feats;
  feats.push_back(relu(conv2d(image, P("stem.w"), P("stem.b"), 1)));
  Array x = feats.back();
  for (int k = 1; k <= cfg.stages; ++k) {
    if (k == 2 || k == 3) x = concat(x, pyramid[static_cast<std::size_t>(k - 1)]);
    const std::string e = "enc" + std::to_string(k);
    Array h = relu(conv2d(x, P(e + ".conv1.w"), P(e + ".conv1.b"), 2));
    h = conv2d(h, P(e + ".conv2.w"), P(e + ".conv2.b"), 1);
    x = relu(add(h, conv2d(x, P(e + ".proj.w"), P(e + ".proj.b"), 2)));
    feats.push_back(x);
  }
  const Array bottleneck = x;
  for (int k = cfg.stages; k >= 1; --k) {
    const std::string d = "dec" + std::to_string(k);
    Array h = concat(upsample2(x), feats[static_cast<std::size_t>(k - 1)]);
    h = relu(conv2d(h, P(d + ".conv1.w"), P(d + ".conv1.b"), 1));
    x = conv2d(h, P(d + ".conv2.w"), P(d + ".conv2.b"), 1);
  }
  NetOutput out;
  out.logits = conv2d(x, P("seg.w"), P("seg.b"), 1);
  if (head) {
    std::vector<double> h = cfg.bridge == mtln::BridgeMode::kGlobalAvgPool ? global_avg_pool(bottleneck) : bottleneck.v;
    const int layers = static_cast<int>(cfg.fc_hidden.size()) + 1;
    for (int l = 1; l <= layers; ++l) {
      const std::string f = "fc" + std::to_string(l);
      h = fully_connected(h, P(f + ".w"), P(f + ".b"));
      if (l < layers)
        for (auto& e : h) e = e > 0.0 ? e : 0.0;
    }
    out.ellipse = h;
  }
  return out;
}

struct LossTerms {
  double ce = 0.0;
  double dice = 0.0;
  double mse = 0.0;
};

/// Pixel-mean weighted cross-entropy with clamped probabilities, soft Dice and
/// five-parameter MSE.
inline LossTerms loss_terms(const std::vector<double>& logits, const std::vector<std::uint8_t>& mask,
                            const std::vector<float>& weights, const std::vector<double>& pred,
                            const std::vector<double>& target, double p_clip = 1e-7, double smooth = 1e-6) {
  LossTerms t;
  double inter = 0.0;
  double psum = 0.0;
  double gsum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = sigmoid(logits[i]);
    const double g = mask[i] ? 1.0 : 0.0;
    const double pc = std::clamp(g > 0.0 ? p : 1.0 - p, p_clip, 1.0 - p_clip);
    t.ce += weights[i] * -std::log(pc);
    inter += p * g;
    psum += p;
    gsum += g;
  }
  t.ce /= static_cast<double>(logits.size());
  t.dice = 1.0 - (2.0 * inter + smooth) / (psum + gsum + smooth);
  for (std::size_t i = 0; i < pred.size(); ++i) t.mse += (pred[i] - target[i]) * (pred[i] - target[i]);
  if (!pred.empty()) t.mse /= static_cast<double>(pred.size());
  return t;
}

// ---------------------------------------------------------------------------
// Finite differences

/// Central difference of f along every coordinate of x.
inline std::vector<double> numeric_gradient(const std::function<double(const std::vector<double>&)>& f,
                                            std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double up = f(x);
    x[i] = orig - h;
    const double down = f(x);
    x[i] = orig;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

/// |a - n| / max(|a|, |n|, floor).
inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradientAgreement {
  std::size_t coordinates = 0;
  std::size_t within = 0;
  double worst = 0.0;
  double aggregate = 0.0;  // ||a - n|| / max(||a||, ||n||)

  double fraction() const { return coordinates ? static_cast<double>(within) / coordinates : 1.0; }
};

inline GradientAgreement compare_gradients(std::span<const float> analytic, const std::vector<double>& numeric,
                                           double tol = 1e-3, double floor = 1e-6) {
  GradientAgreement r;
  double diff = 0.0;
  double na = 0.0;
  double nn = 0.0;
  for (std::size_t i = 0; i < numeric.size(); ++i) {
    const double a = analytic.empty() ? 0.0 : analytic[i];
    const double e = relative_error(a, numeric[i], floor);
    r.worst = std::max(r.worst, e);
    if (e < tol) ++r.within;
    ++r.coordinates;
    diff += (a - numeric[i]) * (a - numeric[i]);
    na += a * a;
    nn += numeric[i] * numeric[i];
  }
  const double denom = std::sqrt(std::max(na, nn));
  r.aggregate = denom > 0.0 ? std::sqrt(diff) / denom : 0.0;
  return r;
}

inline void merge(GradientAgreement& into, const GradientAgreement& from) {
  // Aggregate errors combine by worst case.
  into.coordinates += from.coordinates;
  into.within += from.within;
  into.worst = std::max(into.worst, from.worst);
  into.aggregate = std::max(into.aggregate, from.aggregate);
}

// ---------------------------------------------------------------------------
// Geometry and metrics oracles

/// Foreground pixels with at least one in-frame 4-neighbour in the background.
inline std::vector<std::pair<int, int>> contour(const mtln::BinaryMask& m) {
  std::vector<std::pair<int, int>> out;
  for (int r = 0; r < m.height; ++r) {
    for (int c = 0; c < m.width; ++c) {
      if (!m(r, c)) continue;
      const bool edge = (r > 0 && !m(r - 1, c)) || (r + 1 < m.height && !m(r + 1, c)) ||
                        (c > 0 && !m(r, c - 1)) || (c + 1 < m.width && !m(r, c + 1));
      if (edge) out.emplace_back(r, c);
    }
  }
  return out;
}

inline std::vector<double> brute_distance_map(const mtln::BinaryMask& m) {
  const auto b = contour(m);
  std::vector<double> d(m.size());
  for (int r = 0; r < m.height; ++r) {
    for (int c = 0; c < m.width; ++c) {
      double best = INFINITY;
      for (auto [br, bc] : b) best = std::min(best, std::hypot(r - br, c - bc));
      d[static_cast<std::size_t>(r) * m.width + c] = best;
    }
  }
  return d;
}

inline double brute_dice(const mtln::BinaryMask& a, const mtln::BinaryMask& b) {
  long inter = 0;
  long sa = 0;
  long sb = 0;
  for (int r = 0; r < a.height; ++r) {
    for (int c = 0; c < a.width; ++c) {
      sa += a(r, c) ? 1 : 0;
      sb += b(r, c) ? 1 : 0;
      inter += (a(r, c) && b(r, c)) ? 1 : 0;
    }
  }
  if (sa + sb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(sa + sb);
}

/// Exhaustive symmetric Hausdorff distance between two point sets.
inline double brute_hausdorff(const std::vector<std::pair<int, int>>& a, const std::vector<std::pair<int, int>>& b) {
  auto directed = [](const auto& from, const auto& to) {
    double worst = 0.0;
    for (auto [r, c] : from) {
      double best = INFINITY;
      for (auto [r2, c2] : to) best = std::min(best, std::sqrt(double((r - r2) * (r - r2) + (c - c2) * (c - c2))));
      worst = std::max(worst, best);
    }
    return worst;
  };
  return std::max(directed(a, b), directed(b, a));
}

/// Arc length of the ellipse x = a cos t, y = b sin t by adaptive Simpson.
inline double arc_length(double a, double b, double tol = 1e-12) {
  auto f = [&](double t) { return std::sqrt(a * a * std::sin(t) * std::sin(t) + b * b * std::cos(t) * std::cos(t)); };
  std::function<double(double, double, double, double, double, double, int)> rec =
      [&](double lo, double hi, double flo, double fmid, double fhi, double whole, int depth) {
        const double mid = 0.5 * (lo + hi);
        const double lm = 0.5 * (lo + mid);
        const double rm = 0.5 * (mid + hi);
        const double flm = f(lm);
        const double frm = f(rm);
        const double left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
        const double right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
        if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol) return left + right + (left + right - whole) / 15.0;
        return rec(lo, mid, flo, flm, fmid, left, depth - 1) + rec(mid, hi, fmid, frm, fhi, right, depth - 1);
      };
  const double lo = 0.0;
  const double hi = std::numbers::pi / 2.0;
  const double flo = f(lo);
  const double fhi = f(hi);
  const double fmid = f(0.5 * (lo + hi));
  const double whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
  return 4.0 * rec(lo, hi, flo, fmid, fhi, whole, 40);
}

inline mtln::BinaryMask random_mask(mtln::Rng& rng, int h, int w, double density) {
  mtln::BinaryMask m(h, w, 0);
  for (auto& p : m.pixels) p = mtln::uniform01(rng) < density ? 1 : 0;
  return m;
}

}  // namespace oracle
