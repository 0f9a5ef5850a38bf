#include "mtln/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "mtln/error.hpp"
#include "mtln/kernels.hpp"

namespace mtln::ops {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + to_string(t.dims()));
  }
}

Tensor make_output(Dims dims, std::vector<float> values, const char* op) {
  require_finite(values, op);
  return Tensor(std::move(dims), std::move(values));
}

}  // namespace

int conv_output_extent(int in_extent, int kernel, int stride, Padding padding) {
  const int pad = padding == Padding::kSame ? (kernel - 1) / 2 : 0;
  const int span = in_extent + 2 * pad - kernel;
  if (span < 0) return 0;
  return span / stride + 1;
}

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernel, const Tensor& bias, Conv2dOptions options) {
  require_rank(input, 4, "conv2d");
  require_rank(kernel, 4, "conv2d");
  require_rank(bias, 1, "conv2d");
  if (options.stride != 1 && options.stride != 2) {
    throw InvalidArgument("conv2d: stride must be 1 or 2, got " + std::to_string(options.stride));
  }
  const int k = kernel.dim(2);
  if (kernel.dim(3) != k) throw ShapeError("conv2d: kernel must be square, got " + to_string(kernel.dims()));
  if (k % 2 == 0) throw ShapeError("conv2d: kernel size must be odd, got " + std::to_string(k));
  if (kernel.dim(1) != input.dim(1)) {
    throw ShapeError("conv2d: input has " + std::to_string(input.dim(1)) + " channels, kernel expects " +
                     std::to_string(kernel.dim(1)));
  }
  if (bias.dim(0) != kernel.dim(0)) throw ShapeError("conv2d: bias length does not match output channels");

  kernels::ConvGeometry g;
  g.batch = input.dim(0);
  g.in_channels = input.dim(1);
  g.in_height = input.dim(2);
  g.in_width = input.dim(3);
  g.out_channels = kernel.dim(0);
  g.kernel = k;
  g.stride = options.stride;
  g.pad = options.padding == Padding::kSame ? (k - 1) / 2 : 0;
  g.out_height = conv_output_extent(g.in_height, k, g.stride, options.padding);
  g.out_width = conv_output_extent(g.in_width, k, g.stride, options.padding);
  if (g.out_height <= 0 || g.out_width <= 0) throw ShapeError("conv2d: input smaller than kernel");

  const auto& table = kernels::active();
  Dims out_dims{g.batch, g.out_channels, g.out_height, g.out_width};
  std::vector<float> out(element_count(out_dims));
  table.conv2d_forward(g, input.values().data(), kernel.values().data(), bias.values().data(), out.data());

  return tape.record(make_output(std::move(out_dims), std::move(out), "conv2d"), {input, kernel, bias},
                     [g, input, kernel, bias, &table](std::span<const float> gout) {
                       if (input.tracked()) {
                         table.conv2d_backward_input(g, gout.data(), kernel.values().data(),
                                                     input.grad_buffer().data());
                       }
                       if (kernel.tracked() || bias.tracked()) {
                         std::vector<float> gw;
                         std::vector<float> gb;
                         float* gw_ptr = nullptr;
                         float* gb_ptr = nullptr;
                         if (kernel.tracked()) {
                           gw_ptr = kernel.grad_buffer().data();
                         } else {
                           gw.assign(kernel.size(), 0.0f);
                           gw_ptr = gw.data();
                         }
                         if (bias.tracked()) {
                           gb_ptr = bias.grad_buffer().data();
                         } else {
                           gb.assign(bias.size(), 0.0f);
                           gb_ptr = gb.data();
                         }
                         table.conv2d_backward_weight(g, gout.data(), input.values().data(), gw_ptr, gb_ptr);
                       }
                     });
}

Tensor maxpool2(Tape& tape, const Tensor& input) {
  require_rank(input, 4, "maxpool2");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0 || w % 2 != 0) throw ShapeError("maxpool2: spatial dims must be even, got " + to_string(input.dims()));
  const int oh = h / 2, ow = w / 2;
  Dims out_dims{n, c, oh, ow};
  std::vector<float> out(element_count(out_dims));
  std::vector<std::size_t> argmax(out.size());
  const auto x = input.values();
  std::size_t o = 0;
  for (int p = 0; p < n * c; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * h * w;
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx, ++o) {
        const std::size_t top = base + static_cast<std::size_t>(2 * y) * w + 2 * xx;
        const std::size_t cand[4] = {top, top + 1, top + w, top + w + 1};
        std::size_t best = cand[0];
        for (int i = 1; i < 4; ++i) {
          if (x[cand[i]] > x[best]) best = cand[i];
        }
        out[o] = x[best];
        argmax[o] = best;
      }
    }
  }
  return tape.record(make_output(std::move(out_dims), std::move(out), "maxpool2"), {input},
                     [input, argmax = std::move(argmax)](std::span<const float> gout) {
                       auto gin = input.grad_buffer();
                       for (std::size_t i = 0; i < gout.size(); ++i) gin[argmax[i]] += gout[i];
                     });
}

Tensor avgpool2(Tape& tape, const Tensor& input) {
  require_rank(input, 4, "avgpool2");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h % 2 != 0 || w % 2 != 0) throw ShapeError("avgpool2: spatial dims must be even, got " + to_string(input.dims()));
  const int oh = h / 2, ow = w / 2;
  Dims out_dims{n, c, oh, ow};
  std::vector<float> out(element_count(out_dims));
  const auto x = input.values();
  std::size_t o = 0;
  for (int p = 0; p < n * c; ++p) {
    const std::size_t base = static_cast<std::size_t>(p) * h * w;
    for (int y = 0; y < oh; ++y) {
      for (int xx = 0; xx < ow; ++xx, ++o) {
        const std::size_t top = base + static_cast<std::size_t>(2 * y) * w + 2 * xx;
        out[o] = 0.25f * ((x[top] + x[top + 1]) + (x[top + w] + x[top + w + 1]));
      }
    }
  }
  return tape.record(make_output(std::move(out_dims), std::move(out), "avgpool2"), {input},
                     [input, n, c, h, w](std::span<const float> gout) {
                       auto gin = input.grad_buffer();
                       const int oh = h / 2, ow = w / 2;
                       std::size_t o = 0;
                       for (int p = 0; p < n * c; ++p) {
                         const std::size_t base = static_cast<std::size_t>(p) * h * w;
                         for (int y = 0; y < oh; ++y) {
                           for (int xx = 0; xx < ow; ++xx, ++o) {
                             const std::size_t top = base + static_cast<std::size_t>(2 * y) * w + 2 * xx;
                             const float g = 0.25f * gout[o];
                             gin[top] += g;
                             gin[top + 1] += g;
                             gin[top + w] += g;
                             gin[top + w + 1] += g;
                           }
                         }
                       }
                     });
}

Tensor upsample2_nearest(Tape& tape, const Tensor& input) {
  require_rank(input, 4, "upsample2_nearest");
  const int n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int oh = 2 * h, ow = 2 * w;
  Dims out_dims{n, c, oh, ow};
  std::vector<float> out(element_count(out_dims));
  const auto x = input.values();
  for (int p = 0; p < n * c; ++p) {
    const float* src = x.data() + static_cast<std::size_t>(p) * h * w;
    float* dst = out.data() + static_cast<std::size_t>(p) * oh * ow;
    for (int y = 0; y < oh; ++y) {
      const float* row = src + static_cast<std::size_t>(y / 2) * w;
      float* drow = dst + static_cast<std::size_t>(y) * ow;
      for (int xx = 0; xx < ow; ++xx) drow[xx] = row[xx / 2];
    }
  }
  return tape.record(make_output(std::move(out_dims), std::move(out), "upsample2_nearest"), {input},
                     [input, n, c, h, w](std::span<const float> gout) {
                       auto gin = input.grad_buffer();
                       const int oh = 2 * h, ow = 2 * w;
                       for (int p = 0; p < n * c; ++p) {
                         const float* src = gout.data() + static_cast<std::size_t>(p) * oh * ow;
                         float* dst = gin.data() + static_cast<std::size_t>(p) * h * w;
                         for (int y = 0; y < h; ++y) {
                           const float* r0 = src + static_cast<std::size_t>(2 * y) * ow;
                           const float* r1 = r0 + ow;
                           for (int xx = 0; xx < w; ++xx) {
                             dst[static_cast<std::size_t>(y) * w + xx] +=
                                 (r0[2 * xx] + r0[2 * xx + 1]) + (r1[2 * xx] + r1[2 * xx + 1]);
                           }
                         }
                       }
                     });
}

Tensor concat_channels(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank(a, 4, "concat_channels");
  require_rank(b, 4, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw ShapeError("concat_channels: " + to_string(a.dims()) + " and " + to_string(b.dims()) +
                     " disagree on N, H or W");
  }
  const int n = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  const std::size_t plane = static_cast<std::size_t>(a.dim(2)) * a.dim(3);
  Dims out_dims{n, ca + cb, a.dim(2), a.dim(3)};
  std::vector<float> out(element_count(out_dims));
  const auto av = a.values();
  const auto bv = b.values();
  for (int i = 0; i < n; ++i) {
    float* dst = out.data() + static_cast<std::size_t>(i) * (ca + cb) * plane;
    std::copy_n(av.data() + static_cast<std::size_t>(i) * ca * plane, ca * plane, dst);
    std::copy_n(bv.data() + static_cast<std::size_t>(i) * cb * plane, cb * plane, dst + ca * plane);
  }
  return tape.record(make_output(std::move(out_dims), std::move(out), "concat_channels"), {a, b},
                     [a, b, n, ca, cb, plane](std::span<const float> gout) {
                       for (int i = 0; i < n; ++i) {
                         const float* src = gout.data() + static_cast<std::size_t>(i) * (ca + cb) * plane;
                         if (a.tracked()) {
                           float* ga = a.grad_buffer().data() + static_cast<std::size_t>(i) * ca * plane;
                           for (std::size_t j = 0; j < ca * plane; ++j) ga[j] += src[j];
                         }
                         if (b.tracked()) {
                           float* gb = b.grad_buffer().data() + static_cast<std::size_t>(i) * cb * plane;
                           for (std::size_t j = 0; j < cb * plane; ++j) gb[j] += src[ca * plane + j];
                         }
                       }
                     });
}

Tensor slice_channels(Tape& tape, const Tensor& input, int begin, int end) {
  require_rank(input, 4, "slice_channels");
  const int n = input.dim(0), c = input.dim(1);
  if (begin < 0 || end > c || begin >= end) throw ShapeError("slice_channels: bad channel range");
  const std::size_t plane = static_cast<std::size_t>(input.dim(2)) * input.dim(3);
  const int cs = end - begin;
  Dims out_dims{n, cs, input.dim(2), input.dim(3)};
  std::vector<float> out(element_count(out_dims));
  const auto x = input.values();
  for (int i = 0; i < n; ++i) {
    std::copy_n(x.data() + (static_cast<std::size_t>(i) * c + begin) * plane, cs * plane,
                out.data() + static_cast<std::size_t>(i) * cs * plane);
  }
  return tape.record(make_output(std::move(out_dims), std::move(out), "slice_channels"), {input},
                     [input, n, c, cs, begin, plane](std::span<const float> gout) {
                       auto gin = input.grad_buffer();
                       for (int i = 0; i < n; ++i) {
                         float* dst = gin.data() + (static_cast<std::size_t>(i) * c + begin) * plane;
                         const float* src = gout.data() + static_cast<std::size_t>(i) * cs * plane;
                         for (std::size_t j = 0; j < cs * plane; ++j) dst[j] += src[j];
                       }
                     });
}

Tensor relu(Tape& tape, const Tensor& x) {
  const auto xv = x.values();
  std::vector<float> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] > 0.0f ? xv[i] : 0.0f;
  return tape.record(make_output(x.dims(), std::move(out), "relu"), {x}, [x](std::span<const float> gout) {
    auto gin = x.grad_buffer();
    const auto xv = x.values();
    for (std::size_t i = 0; i < gout.size(); ++i) {
      if (xv[i] > 0.0f) gin[i] += gout[i];
    }
  });
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
  const auto xv = x.values();
  std::vector<float> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = 1.0f / (1.0f + std::exp(-xv[i]));
  Tensor y = make_output(x.dims(), std::move(out), "sigmoid");
  const Tensor saved = y.detached();
  return tape.record(y, {x}, [x, saved](std::span<const float> gout) {
    auto gin = x.grad_buffer();
    const auto s = saved.values();
    for (std::size_t i = 0; i < gout.size(); ++i) gin[i] += gout[i] * s[i] * (1.0f - s[i]);
  });
}

Tensor add(Tape& tape, const Tensor& x, const Tensor& y) {
  if (x.dims() != y.dims()) throw ShapeError("add: " + to_string(x.dims()) + " vs " + to_string(y.dims()));
  const auto xv = x.values();
  const auto yv = y.values();
  std::vector<float> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] + yv[i];
  return tape.record(make_output(x.dims(), std::move(out), "add"), {x, y}, [x, y](std::span<const float> gout) {
    for (const Tensor* t : {&x, &y}) {
      if (!t->tracked()) continue;
      auto g = t->grad_buffer();
      for (std::size_t i = 0; i < gout.size(); ++i) g[i] += gout[i];
    }
  });
}

Tensor mul(Tape& tape, const Tensor& x, const Tensor& y) {
  if (x.dims() != y.dims()) throw ShapeError("mul: " + to_string(x.dims()) + " vs " + to_string(y.dims()));
  const auto xv = x.values();
  const auto yv = y.values();
  std::vector<float> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] * yv[i];
  return tape.record(make_output(x.dims(), std::move(out), "mul"), {x, y}, [x, y](std::span<const float> gout) {
    if (x.tracked()) {
      auto g = x.grad_buffer();
      const auto yv = y.values();
      for (std::size_t i = 0; i < gout.size(); ++i) g[i] += gout[i] * yv[i];
    }
    if (y.tracked()) {
      auto g = y.grad_buffer();
      const auto xv = x.values();
      for (std::size_t i = 0; i < gout.size(); ++i) g[i] += gout[i] * xv[i];
    }
  });
}

Tensor scale(Tape& tape, const Tensor& x, float factor) {
  const auto xv = x.values();
  std::vector<float> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = factor * xv[i];
  return tape.record(make_output(x.dims(), std::move(out), "scale"), {x}, [x, factor](std::span<const float> gout) {
    auto g = x.grad_buffer();
    for (std::size_t i = 0; i < gout.size(); ++i) g[i] += factor * gout[i];
  });
}

Tensor sum(Tape& tape, const Tensor& x) {
  double acc = 0.0;
  for (float v : x.values()) acc += v;
  return tape.record(make_output({1}, {static_cast<float>(acc)}, "sum"), {x}, [x](std::span<const float> gout) {
    auto g = x.grad_buffer();
    for (auto& v : g) v += gout[0];
  });
}

Tensor fully_connected(Tape& tape, const Tensor& x, const Tensor& weights, const Tensor& bias) {
  require_rank(weights, 2, "fully_connected");
  require_rank(bias, 1, "fully_connected");
  if (x.rank() != 1 && x.rank() != 2) throw ShapeError("fully_connected: input must be rank 1 or 2");
  const int rows = weights.dim(0), cols = weights.dim(1);
  const int in = x.dims().back();
  const int batch = x.rank() == 2 ? x.dim(0) : 1;
  if (in != cols) {
    throw ShapeError("fully_connected: input length " + std::to_string(in) + " vs weight columns " +
                     std::to_string(cols));
  }
  if (bias.dim(0) != rows) throw ShapeError("fully_connected: bias length does not match weight rows");
  const auto& table = kernels::active();
  Dims out_dims = x.rank() == 2 ? Dims{batch, rows} : Dims{rows};
  std::vector<float> out(element_count(out_dims));
  for (int n = 0; n < batch; ++n) {
    table.matvec(rows, cols, weights.values().data(), x.values().data() + static_cast<std::size_t>(n) * cols,
                 bias.values().data(), out.data() + static_cast<std::size_t>(n) * rows);
  }
  return tape.record(make_output(std::move(out_dims), std::move(out), "fully_connected"), {x, weights, bias},
                     [x, weights, bias, rows, cols, batch, &table](std::span<const float> gout) {
                       for (int n = 0; n < batch; ++n) {
                         const float* gy = gout.data() + static_cast<std::size_t>(n) * rows;
                         const float* xn = x.values().data() + static_cast<std::size_t>(n) * cols;
                         if (x.tracked()) {
                           table.matvec_transposed_acc(rows, cols, weights.values().data(), gy,
                                                       x.grad_buffer().data() + static_cast<std::size_t>(n) * cols);
                         }
                         if (weights.tracked()) table.outer_acc(rows, cols, gy, xn, weights.grad_buffer().data());
                         if (bias.tracked()) {
                           auto gb = bias.grad_buffer();
                           for (int r = 0; r < rows; ++r) gb[r] += gy[r];
                         }
                       }
                     });
}

Tensor global_avg_pool(Tape& tape, const Tensor& input) {
  require_rank(input, 4, "global_avg_pool");
  const int n = input.dim(0), c = input.dim(1);
  const std::size_t plane = static_cast<std::size_t>(input.dim(2)) * input.dim(3);
  if (plane == 0) throw ShapeError("global_avg_pool: empty spatial extent");
  std::vector<float> out(static_cast<std::size_t>(n) * c);
  const auto x = input.values();
  for (std::size_t p = 0; p < out.size(); ++p) {
    double acc = 0.0;
    for (std::size_t j = 0; j < plane; ++j) acc += x[p * plane + j];
    out[p] = static_cast<float>(acc / static_cast<double>(plane));
  }
  return tape.record(make_output({n, c}, std::move(out), "global_avg_pool"), {input},
                     [input, plane](std::span<const float> gout) {
                       auto gin = input.grad_buffer();
                       const float inv = 1.0f / static_cast<float>(plane);
                       for (std::size_t p = 0; p < gout.size(); ++p) {
                         const float g = gout[p] * inv;
                         for (std::size_t j = 0; j < plane; ++j) gin[p * plane + j] += g;
                       }
                     });
}

Tensor reshape(Tape& tape, const Tensor& x, Dims dims) {
  if (element_count(dims) != x.size()) {
    throw ShapeError("reshape: cannot view " + to_string(x.dims()) + " as " + to_string(dims));
  }
  std::vector<float> out(x.values().begin(), x.values().end());
  return tape.record(Tensor(std::move(dims), std::move(out)), {x}, [x](std::span<const float> gout) {
    auto gin = x.grad_buffer();
    for (std::size_t i = 0; i < gout.size(); ++i) gin[i] += gout[i];
  });
}

Tensor flatten(Tape& tape, const Tensor& input) {
  require_rank(input, 4, "flatten");
  const int n = input.dim(0);
  return reshape(tape, input, {n, static_cast<int>(input.size() / static_cast<std::size_t>(n))});
}

}  // namespace mtln::ops
