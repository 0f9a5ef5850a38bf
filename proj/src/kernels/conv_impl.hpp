#pragma once

// Loop nests shared by every instruction set. The row primitives are supplied
// by a policy type so that each translation unit inlines its own versions:
//
//   axpy(n, a, x, y)        y[i] += a * x[i]
//   axpy_s2(n, a, x, y)     y[i] += a * x[2 i]
//   scatter_s2(n, a, x, y)  y[2 i] += a * x[i]
//   dot(n, x, y)            sum x[i] * y[i]
//   dot_s2(n, x, y)         sum x[2 i] * y[i]

#include <algorithm>
#include <cstddef>

#include "mtln/kernels.hpp"

namespace mtln::kernels::detail {

// Range of output columns [lo, hi) whose input column ox * stride + offset
// lies inside [0, in_extent).
inline void valid_range(int offset, int stride, int in_extent, int out_extent, int& lo, int& hi) {
  lo = 0;
  if (offset < 0) lo = (-offset + stride - 1) / stride;
  const int last = in_extent - 1 - offset;
  hi = last < 0 ? 0 : last / stride + 1;
  hi = std::min(hi, out_extent);
  if (lo > hi) lo = hi;
}

template <class Ops>
void conv2d_forward(const ConvGeometry& g, const float* input, const float* weight, const float* bias,
                    float* output) {
  const std::size_t in_plane = static_cast<std::size_t>(g.in_height) * g.in_width;
  const std::size_t out_plane = static_cast<std::size_t>(g.out_height) * g.out_width;
  const int kk = g.kernel * g.kernel;
  for (int n = 0; n < g.batch; ++n) {
    const float* in_n = input + static_cast<std::size_t>(n) * g.in_channels * in_plane;
    float* out_n = output + static_cast<std::size_t>(n) * g.out_channels * out_plane;
    for (int oc = 0; oc < g.out_channels; ++oc) {
      float* out_c = out_n + oc * out_plane;
      std::fill(out_c, out_c + out_plane, bias[oc]);
      for (int ic = 0; ic < g.in_channels; ++ic) {
        const float* in_c = in_n + ic * in_plane;
        const float* w = weight + (static_cast<std::size_t>(oc) * g.in_channels + ic) * kk;
        for (int kh = 0; kh < g.kernel; ++kh) {
          for (int kw = 0; kw < g.kernel; ++kw) {
            const float wv = w[kh * g.kernel + kw];
            if (wv == 0.0f) continue;
            const int col_offset = kw - g.pad;
            int lo = 0;
            int hi = 0;
            valid_range(col_offset, g.stride, g.in_width, g.out_width, lo, hi);
            if (lo >= hi) continue;
            for (int oy = 0; oy < g.out_height; ++oy) {
              const int iy = oy * g.stride + kh - g.pad;
              if (iy < 0 || iy >= g.in_height) continue;
              const float* src = in_c + static_cast<std::size_t>(iy) * g.in_width + lo * g.stride + col_offset;
              float* dst = out_c + static_cast<std::size_t>(oy) * g.out_width + lo;
              if (g.stride == 1) {
                Ops::axpy(hi - lo, wv, src, dst);
              } else {
                Ops::axpy_s2(hi - lo, wv, src, dst);
              }
            }
          }
        }
      }
    }
  }
}

template <class Ops>
void conv2d_backward_input(const ConvGeometry& g, const float* grad_output, const float* weight,
                           float* grad_input) {
  const std::size_t in_plane = static_cast<std::size_t>(g.in_height) * g.in_width;
  const std::size_t out_plane = static_cast<std::size_t>(g.out_height) * g.out_width;
  const int kk = g.kernel * g.kernel;
  for (int n = 0; n < g.batch; ++n) {
    const float* gout_n = grad_output + static_cast<std::size_t>(n) * g.out_channels * out_plane;
    float* gin_n = grad_input + static_cast<std::size_t>(n) * g.in_channels * in_plane;
    for (int ic = 0; ic < g.in_channels; ++ic) {
      float* gin_c = gin_n + ic * in_plane;
      for (int oc = 0; oc < g.out_channels; ++oc) {
        const float* gout_c = gout_n + oc * out_plane;
        const float* w = weight + (static_cast<std::size_t>(oc) * g.in_channels + ic) * kk;
        for (int kh = 0; kh < g.kernel; ++kh) {
          for (int kw = 0; kw < g.kernel; ++kw) {
            const float wv = w[kh * g.kernel + kw];
            if (wv == 0.0f) continue;
            const int col_offset = kw - g.pad;
            int lo = 0;
            int hi = 0;
            valid_range(col_offset, g.stride, g.in_width, g.out_width, lo, hi);
            if (lo >= hi) continue;
            for (int oy = 0; oy < g.out_height; ++oy) {
              const int iy = oy * g.stride + kh - g.pad;
              if (iy < 0 || iy >= g.in_height) continue;
              const float* src = gout_c + static_cast<std::size_t>(oy) * g.out_width + lo;
              float* dst = gin_c + static_cast<std::size_t>(iy) * g.in_width + lo * g.stride + col_offset;
              if (g.stride == 1) {
                Ops::axpy(hi - lo, wv, src, dst);
              } else {
                Ops::scatter_s2(hi - lo, wv, src, dst);
              }
            }
          }
        }
      }
    }
  }
}

template <class Ops>
void conv2d_backward_weight(const ConvGeometry& g, const float* grad_output, const float* input,
                            float* grad_weight, float* grad_bias) {
  const std::size_t in_plane = static_cast<std::size_t>(g.in_height) * g.in_width;
  const std::size_t out_plane = static_cast<std::size_t>(g.out_height) * g.out_width;
  const int kk = g.kernel * g.kernel;
  for (int n = 0; n < g.batch; ++n) {
    const float* gout_n = grad_output + static_cast<std::size_t>(n) * g.out_channels * out_plane;
    const float* in_n = input + static_cast<std::size_t>(n) * g.in_channels * in_plane;
    for (int oc = 0; oc < g.out_channels; ++oc) {
      const float* gout_c = gout_n + oc * out_plane;
      float bias_sum = 0.0f;
      for (std::size_t i = 0; i < out_plane; ++i) bias_sum += gout_c[i];
      grad_bias[oc] += bias_sum;
      for (int ic = 0; ic < g.in_channels; ++ic) {
        const float* in_c = in_n + ic * in_plane;
        float* gw = grad_weight + (static_cast<std::size_t>(oc) * g.in_channels + ic) * kk;
        for (int kh = 0; kh < g.kernel; ++kh) {
          for (int kw = 0; kw < g.kernel; ++kw) {
            const int col_offset = kw - g.pad;
            int lo = 0;
            int hi = 0;
            valid_range(col_offset, g.stride, g.in_width, g.out_width, lo, hi);
            if (lo >= hi) continue;
            float acc = 0.0f;
            for (int oy = 0; oy < g.out_height; ++oy) {
              const int iy = oy * g.stride + kh - g.pad;
              if (iy < 0 || iy >= g.in_height) continue;
              const float* gsrc = gout_c + static_cast<std::size_t>(oy) * g.out_width + lo;
              const float* isrc = in_c + static_cast<std::size_t>(iy) * g.in_width + lo * g.stride + col_offset;
              acc += g.stride == 1 ? Ops::dot(hi - lo, isrc, gsrc) : Ops::dot_s2(hi - lo, isrc, gsrc);
            }
            gw[kh * g.kernel + kw] += acc;
          }
        }
      }
    }
  }
}

template <class Ops>
void matvec(int rows, int cols, const float* weight, const float* x, const float* bias, float* y) {
  for (int r = 0; r < rows; ++r) {
    y[r] = bias[r] + Ops::dot(cols, weight + static_cast<std::size_t>(r) * cols, x);
  }
}

template <class Ops>
void matvec_transposed_acc(int rows, int cols, const float* weight, const float* grad_y, float* grad_x) {
  for (int r = 0; r < rows; ++r) {
    if (grad_y[r] == 0.0f) continue;
    Ops::axpy(cols, grad_y[r], weight + static_cast<std::size_t>(r) * cols, grad_x);
  }
}

template <class Ops>
void outer_acc(int rows, int cols, const float* grad_y, const float* x, float* grad_weight) {
  for (int r = 0; r < rows; ++r) {
    if (grad_y[r] == 0.0f) continue;
    Ops::axpy(cols, grad_y[r], x, grad_weight + static_cast<std::size_t>(r) * cols);
  }
}

template <class Ops>
KernelTable make_table(std::string_view name) {
  return KernelTable{
      name,
      &conv2d_forward<Ops>,
      &conv2d_backward_input<Ops>,
      &conv2d_backward_weight<Ops>,
      &matvec<Ops>,
      &matvec_transposed_acc<Ops>,
      &outer_acc<Ops>,
  };
}

}  // namespace mtln::kernels::detail
