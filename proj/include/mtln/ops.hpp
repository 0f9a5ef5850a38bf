#pragma once

#include "mtln/tensor.hpp"

namespace mtln::ops {

enum class Padding { kSame, kValid };

struct Conv2dOptions {
  int stride = 1;
  Padding padding = Padding::kSame;
};

/// Output extent of a convolution along one axis.
int conv_output_extent(int in_extent, int kernel, int stride, Padding padding);

/// Cross-correlation of an NCHW input with an O x I x K x K kernel plus a
/// per-output-channel bias. K must be odd, stride 1 or 2.
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernel, const Tensor& bias,
              Conv2dOptions options = {});

/// 2x2 max pooling, stride 2. Gradient goes to the first maximum of each block
/// in row-major order.
Tensor maxpool2(Tape& tape, const Tensor& input);

/// 2x2 average pooling, stride 2.
Tensor avgpool2(Tape& tape, const Tensor& input);

/// Nearest-neighbour 2x upsampling.
Tensor upsample2_nearest(Tape& tape, const Tensor& input);

/// Concatenates along the channel axis; `a` first.
Tensor concat_channels(Tape& tape, const Tensor& a, const Tensor& b);

/// Channels [begin, end) of an NCHW tensor.
Tensor slice_channels(Tape& tape, const Tensor& input, int begin, int end);

/// max(0, x); the derivative at 0 is taken as 0.
Tensor relu(Tape& tape, const Tensor& x);
Tensor sigmoid(Tape& tape, const Tensor& x);
Tensor add(Tape& tape, const Tensor& x, const Tensor& y);
Tensor mul(Tape& tape, const Tensor& x, const Tensor& y);
Tensor scale(Tape& tape, const Tensor& x, float factor);

/// Sum of all elements as a 1-element tensor.
Tensor sum(Tape& tape, const Tensor& x);

/// y = W x + b for x of dims {in} or {N, in}; W is {out, in}, b is {out}.
Tensor fully_connected(Tape& tape, const Tensor& x, const Tensor& weights, const Tensor& bias);

/// Per-channel spatial mean: NCHW -> {N, C}.
Tensor global_avg_pool(Tape& tape, const Tensor& input);

/// Same values under new dims with an equal element count.
Tensor reshape(Tape& tape, const Tensor& x, Dims dims);

/// NCHW -> {N, C*H*W}.
Tensor flatten(Tape& tape, const Tensor& input);

}  // namespace mtln::ops
