#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mtln/tensor.hpp"

namespace mtln {

/// How bottleneck features reach the ellipse regression head.
enum class BridgeMode {
  kGlobalAvgPool,  // per-channel spatial mean
  kFlatten,        // all bottleneck activations
};

/// Shape of the multi-task encoder/decoder.
///
/// Layout for stages = n, widths = {w1, ..., wn}:
///   stem      3x3 conv, 1 -> w1 channels, full resolution
///   enc k     stride-2 residual block, output wk channels at H / 2^k;
///             the input image average-pooled to the same resolution is
///             appended as one extra channel before enc 2 and enc 3
///   dec k     upsample + skip concat, k = n .. 1; the skip of dec 1 is the stem
///   seg       1x1 conv to one logit channel
///   fc 1..m+1 ellipse head on the bottleneck, hidden sizes fc_hidden, 5 outputs
struct NetworkConfig {
  int height = 128;
  int width = 128;
  std::vector<int> widths{8, 16, 32, 64};
  int stages = 4;
  std::vector<int> fc_hidden{128, 64};
  BridgeMode bridge = BridgeMode::kGlobalAvgPool;
  std::uint64_t seed = 0;

  /// Throws ConfigError on invalid combinations.
  void validate() const;

  /// Channels entering encoder stage k (1-based), multi-scale channel included.
  int encoder_input_channels(int stage) const;
  int bottleneck_features() const;
};

inline constexpr int kEllipseOutputs = 5;

/// Parameter path -> tensor. Ordered, so iteration order is stable.
using ModelParams = std::map<std::string, Tensor>;

/// Names and dims of every parameter for a configuration.
std::map<std::string, Dims> parameter_shapes(const NetworkConfig& config);

/// Total scalar parameter count.
std::size_t parameter_count(const ModelParams& params);

/// Initializes all parameters: kernels and FC weights He-uniform on
/// [-sqrt(6 / fan_in), sqrt(6 / fan_in)], biases zero. Each tensor draws from
/// its own stream derived from (config.seed, name). All returned tensors are
/// tracked leaves.
ModelParams build_mtln(const NetworkConfig& config);

struct ResBlockParams {
  Tensor conv1_w, conv1_b;
  Tensor conv2_w, conv2_b;
  Tensor proj_w, proj_b;  // undefined for an identity shortcut
};

/// relu(conv(relu(conv(x, stride))) + shortcut(x)).
Tensor res_block(Tape& tape, const Tensor& x, const ResBlockParams& p, int stride);

struct DecoderParams {
  Tensor conv1_w, conv1_b;
  Tensor conv2_w, conv2_b;
};

/// conv(relu(conv(concat(upsample2(x), skip)))).
Tensor decoder_block(Tape& tape, const Tensor& x, const Tensor& skip, const DecoderParams& p);

struct ForwardOptions {
  /// Evaluate the ellipse head. Off for the single-task network.
  bool ellipse_head = true;
};

struct MtlnOutput {
  Tensor seg_logits;    // 1 x 1 x H x W, before the sigmoid
  Tensor ellipse_pred;  // {5}; undefined when the head is off
};

/// Full network forward pass for a 1 x 1 x H x W image.
MtlnOutput forward_mtln(Tape& tape, const ModelParams& params, const NetworkConfig& config, const Tensor& image,
                        ForwardOptions options = {});

/// Looks up a parameter by name, throwing when absent.
const Tensor& param(const ModelParams& params, const std::string& name);

}  // namespace mtln
