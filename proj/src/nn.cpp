#include "mtln/nn.hpp"

#include <cmath>

#include "mtln/error.hpp"
#include "mtln/ops.hpp"
#include "mtln/random.hpp"

namespace mtln {

namespace {

std::string enc(int k, const char* leaf) { return "enc" + std::to_string(k) + "." + leaf; }
std::string dec(int k, const char* leaf) { return "dec" + std::to_string(k) + "." + leaf; }
std::string fc(int k, const char* leaf) { return "fc" + std::to_string(k) + "." + leaf; }

bool receives_scale_input(int stage) { return stage == 2 || stage == 3; }

bool is_bias(const std::string& name) { return name.size() >= 2 && name.compare(name.size() - 2, 2, ".b") == 0; }

int fan_in(const Dims& dims) {
  int n = 1;
  for (std::size_t i = 1; i < dims.size(); ++i) n *= dims[i];
  return n;
}

ResBlockParams encoder_params(const ModelParams& p, int k) {
  return {param(p, enc(k, "conv1.w")), param(p, enc(k, "conv1.b")), param(p, enc(k, "conv2.w")),
          param(p, enc(k, "conv2.b")), param(p, enc(k, "proj.w")),  param(p, enc(k, "proj.b"))};
}

DecoderParams decoder_params(const ModelParams& p, int k) {
  return {param(p, dec(k, "conv1.w")), param(p, dec(k, "conv1.b")), param(p, dec(k, "conv2.w")),
          param(p, dec(k, "conv2.b"))};
}

}  // namespace

void NetworkConfig::validate() const {
  if (stages < 1) throw ConfigError("network: stages must be >= 1");
  if (static_cast<int>(widths.size()) != stages) {
    throw ConfigError("network: widths has " + std::to_string(widths.size()) + " entries for " +
                      std::to_string(stages) + " stages");
  }
  for (int w : widths) {
    if (w < 1) throw ConfigError("network: channel widths must be positive");
  }
  for (int h : fc_hidden) {
    if (h < 1) throw ConfigError("network: FC hidden sizes must be positive");
  }
  const int factor = 1 << stages;
  if (height < factor || width < factor || height % factor != 0 || width % factor != 0) {
    throw ConfigError("network: input " + std::to_string(height) + "x" + std::to_string(width) +
                      " is not divisible by 2^" + std::to_string(stages));
  }
}

int NetworkConfig::encoder_input_channels(int stage) const {
  const int base = stage == 1 ? widths[0] : widths[stage - 2];
  return base + (receives_scale_input(stage) ? 1 : 0);
}

int NetworkConfig::bottleneck_features() const {
  const int c = widths[stages - 1];
  if (bridge == BridgeMode::kGlobalAvgPool) return c;
  return c * (height >> stages) * (width >> stages);
}

std::map<std::string, Dims> parameter_shapes(const NetworkConfig& config) {
  config.validate();
  std::map<std::string, Dims> shapes;
  const auto& w = config.widths;
  const int n = config.stages;
  shapes["stem.w"] = {w[0], 1, 3, 3};
  shapes["stem.b"] = {w[0]};
  for (int k = 1; k <= n; ++k) {
    const int in = config.encoder_input_channels(k);
    const int out = w[k - 1];
    shapes[enc(k, "conv1.w")] = {out, in, 3, 3};
    shapes[enc(k, "conv1.b")] = {out};
    shapes[enc(k, "conv2.w")] = {out, out, 3, 3};
    shapes[enc(k, "conv2.b")] = {out};
    shapes[enc(k, "proj.w")] = {out, in, 1, 1};
    shapes[enc(k, "proj.b")] = {out};
  }
  int x_channels = w[n - 1];
  for (int k = n; k >= 1; --k) {
    const int skip = k == 1 ? w[0] : w[k - 2];
    shapes[dec(k, "conv1.w")] = {skip, x_channels + skip, 3, 3};
    shapes[dec(k, "conv1.b")] = {skip};
    shapes[dec(k, "conv2.w")] = {skip, skip, 3, 3};
    shapes[dec(k, "conv2.b")] = {skip};
    x_channels = skip;
  }
  shapes["seg.w"] = {1, w[0], 1, 1};
  shapes["seg.b"] = {1};
  int in = config.bottleneck_features();
  int layer = 1;
  for (int h : config.fc_hidden) {
    shapes[fc(layer, "w")] = {h, in};
    shapes[fc(layer, "b")] = {h};
    in = h;
    ++layer;
  }
  shapes[fc(layer, "w")] = {kEllipseOutputs, in};
  shapes[fc(layer, "b")] = {kEllipseOutputs};
  return shapes;
}

std::size_t parameter_count(const ModelParams& params) {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.size();
  return n;
}

ModelParams build_mtln(const NetworkConfig& config) {
  ModelParams params;
  for (const auto& [name, dims] : parameter_shapes(config)) {
    std::vector<float> values(element_count(dims), 0.0f);
    if (!is_bias(name)) {
      Rng rng(derive_seed(config.seed, name));
      const double bound = std::sqrt(6.0 / fan_in(dims));
      for (auto& v : values) v = static_cast<float>(uniform(rng, -bound, bound));
    }
    params.emplace(name, Tensor(dims, std::move(values), true));
  }
  return params;
}

const Tensor& param(const ModelParams& params, const std::string& name) {
  const auto it = params.find(name);
  if (it == params.end()) throw Error("missing model parameter '" + name + "'");
  return it->second;
}

Tensor res_block(Tape& tape, const Tensor& x, const ResBlockParams& p, int stride) {
  if (stride != 1 && stride != 2) throw InvalidArgument("res_block: stride must be 1 or 2");
  Tensor h = ops::relu(tape, ops::conv2d(tape, x, p.conv1_w, p.conv1_b, {stride}));
  h = ops::conv2d(tape, h, p.conv2_w, p.conv2_b, {1});
  Tensor shortcut = x;
  if (p.proj_w.defined()) {
    shortcut = ops::conv2d(tape, x, p.proj_w, p.proj_b, {stride});
  } else if (stride != 1 || x.dim(1) != h.dim(1)) {
    throw ShapeError("res_block: identity shortcut needs stride 1 and matching channels");
  }
  return ops::relu(tape, ops::add(tape, h, shortcut));
}

Tensor decoder_block(Tape& tape, const Tensor& x, const Tensor& skip, const DecoderParams& p) {
  const Tensor up = ops::upsample2_nearest(tape, x);
  if (skip.rank() != 4 || up.dim(2) != skip.dim(2) || up.dim(3) != skip.dim(3)) {
    throw ShapeError("decoder_block: upsampled input " + to_string(up.dims()) + " does not match skip " +
                     to_string(skip.dims()));
  }
  Tensor h = ops::concat_channels(tape, up, skip);
  h = ops::relu(tape, ops::conv2d(tape, h, p.conv1_w, p.conv1_b));
  return ops::conv2d(tape, h, p.conv2_w, p.conv2_b);
}

MtlnOutput forward_mtln(Tape& tape, const ModelParams& params, const NetworkConfig& config, const Tensor& image,
                        ForwardOptions options) {
  if (image.rank() != 4 || image.dim(0) != 1 || image.dim(1) != 1 || image.dim(2) != config.height ||
      image.dim(3) != config.width) {
    throw ShapeError("forward_mtln: expected image 1x1x" + std::to_string(config.height) + "x" +
                     std::to_string(config.width) + ", got " + to_string(image.dims()));
  }
  const int n = config.stages;

  // Input pyramid: scales[s] is the image at 1 / 2^s resolution.
  std::vector<Tensor> scales{image};
  for (int s = 1; s <= std::min(2, n - 1); ++s) scales.push_back(ops::avgpool2(tape, scales.back()));

  const Tensor stem = ops::relu(tape, ops::conv2d(tape, image, param(params, "stem.w"), param(params, "stem.b")));
  std::vector<Tensor> features{stem};  // features[k] = output of encoder stage k
  Tensor x = stem;
  for (int k = 1; k <= n; ++k) {
    if (receives_scale_input(k)) x = ops::concat_channels(tape, x, scales[k - 1]);
    x = res_block(tape, x, encoder_params(params, k), 2);
    features.push_back(x);
  }
  const Tensor bottleneck = x;

  for (int k = n; k >= 1; --k) x = decoder_block(tape, x, features[k - 1], decoder_params(params, k));

  MtlnOutput out;
  out.seg_logits =
      ops::conv2d(tape, x, param(params, "seg.w"), param(params, "seg.b"), {1, ops::Padding::kSame});

  if (options.ellipse_head) {
    Tensor h = config.bridge == BridgeMode::kGlobalAvgPool ? ops::global_avg_pool(tape, bottleneck)
                                                           : ops::flatten(tape, bottleneck);
    const int layers = static_cast<int>(config.fc_hidden.size()) + 1;
    for (int l = 1; l <= layers; ++l) {
      h = ops::fully_connected(tape, h, param(params, fc(l, "w")), param(params, fc(l, "b")));
      if (l < layers) h = ops::relu(tape, h);
    }
    out.ellipse_pred = ops::reshape(tape, h, {kEllipseOutputs});
  }
  return out;
}

}  // namespace mtln
