#pragma once

// Finite-difference gradient checks: the library's f32 backward pass against
// central differences of the double-precision oracles.

#include <functional>
#include <string>
#include <vector>

#include "mtln/data.hpp"
#include "mtln/loss.hpp"
#include "mtln/nn.hpp"
#include "mtln/ops.hpp"
#include "mtln/train.hpp"
#include "oracles.hpp"

namespace gradcheck {

using mtln::Dims;
using mtln::Tape;
using mtln::Tensor;

inline constexpr double kStep = 1e-6;
inline constexpr double kTolerance = 1e-3;
// Gradients smaller than this are compared absolutely.
inline constexpr double kFloor = 1e-6;

using LibraryFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;
using ReferenceFn = std::function<std::vector<double>(const std::vector<oracle::Array>&)>;

struct OpCase {
  std::string name;
  std::vector<Dims> inputs;
  LibraryFn library;
  ReferenceFn reference;
};

inline oracle::Array array_of(const Dims& dims, const std::vector<double>& v) {
  oracle::Array a(std::vector<int>(dims.begin(), dims.end()));
  a.v = v;
  return a;
}

inline std::vector<double> random_values(mtln::Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = mtln::uniform(rng, lo, hi);
  return v;
}

inline std::vector<float> to_float(const std::vector<double>& v) { return {v.begin(), v.end()}; }

/// Checks d/dx of sum(r * op(x)) for every input of one op.
inline oracle::GradientAgreement check_op(const OpCase& op, std::uint64_t seed) {
  mtln::Rng rng(mtln::derive_seed(seed, op.name));
  std::vector<std::vector<double>> values;
  std::vector<Tensor> leaves;
  for (const auto& d : op.inputs) {
    values.push_back(random_values(rng, mtln::element_count(d)));
    // Round to f32 so both sides see the same point.
    for (auto& x : values.back()) x = static_cast<float>(x);
    leaves.emplace_back(d, to_float(values.back()), true);
  }

  Tape tape;
  const Tensor out = op.library(tape, leaves);
  const std::vector<double> r = random_values(rng, out.size());
  const Tensor loss = mtln::ops::sum(tape, mtln::ops::mul(tape, out, Tensor(out.dims(), to_float(r))));
  tape.backward(loss);

  oracle::GradientAgreement total;
  for (std::size_t k = 0; k < leaves.size(); ++k) {
    auto f = [&](const std::vector<double>& xk) {
      std::vector<oracle::Array> args;
      for (std::size_t j = 0; j < leaves.size(); ++j) args.push_back(array_of(op.inputs[j], j == k ? xk : values[j]));
      const std::vector<double> y = op.reference(args);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
      return s;
    };
    const auto numeric = oracle::numeric_gradient(f, values[k], kStep);
    oracle::merge(total, oracle::compare_gradients(leaves[k].grad(), numeric, kTolerance, kFloor));
  }
  return total;
}

inline std::vector<double> flat(const oracle::Array& a) { return a.v; }

/// One case per differentiable op, losses included.
inline std::vector<OpCase> op_cases() {
  namespace ops = mtln::ops;
  using A = std::vector<oracle::Array>;
  using V = const std::vector<Tensor>&;
  std::vector<OpCase> cases;

  cases.push_back({"conv2d 3x3 stride 1", {{1, 3, 6, 6}, {4, 3, 3, 3}, {4}},
                   [](Tape& t, V x) { return ops::conv2d(t, x[0], x[1], x[2]); },
                   [](const A& a) { return flat(oracle::conv2d(a[0], a[1], a[2], 1)); }});
  cases.push_back({"conv2d 3x3 stride 2", {{1, 3, 6, 6}, {4, 3, 3, 3}, {4}},
                   [](Tape& t, V x) { return ops::conv2d(t, x[0], x[1], x[2], {2}); },
                   [](const A& a) { return flat(oracle::conv2d(a[0], a[1], a[2], 2)); }});
  cases.push_back({"conv2d 3x3 stride 2 odd extent", {{1, 2, 7, 5}, {3, 2, 3, 3}, {3}},
                   [](Tape& t, V x) { return ops::conv2d(t, x[0], x[1], x[2], {2}); },
                   [](const A& a) { return flat(oracle::conv2d(a[0], a[1], a[2], 2)); }});
  cases.push_back({"conv2d 1x1 stride 2", {{1, 3, 6, 6}, {5, 3, 1, 1}, {5}},
                   [](Tape& t, V x) { return ops::conv2d(t, x[0], x[1], x[2], {2}); },
                   [](const A& a) { return flat(oracle::conv2d(a[0], a[1], a[2], 2)); }});
  cases.push_back({"conv2d 5x5 valid", {{1, 2, 9, 8}, {3, 2, 5, 5}, {3}},
                   [](Tape& t, V x) { return ops::conv2d(t, x[0], x[1], x[2], {1, ops::Padding::kValid}); },
                   [](const A& a) { return flat(oracle::conv2d(a[0], a[1], a[2], 1, false)); }});
  cases.push_back({"conv2d batch 2", {{2, 2, 5, 5}, {3, 2, 3, 3}, {3}},
                   [](Tape& t, V x) { return ops::conv2d(t, x[0], x[1], x[2]); },
                   [](const A& a) {
                     // Two independent images.
                     std::vector<double> out;
                     for (int n = 0; n < 2; ++n) {
                       oracle::Array img({1, 2, 5, 5});
                       std::copy_n(a[0].v.begin() + n * 50, 50, img.v.begin());
                       const auto y = oracle::conv2d(img, a[1], a[2], 1);
                       out.insert(out.end(), y.v.begin(), y.v.end());
                     }
                     return out;
                   }});
  cases.push_back({"maxpool2", {{1, 3, 6, 4}}, [](Tape& t, V x) { return ops::maxpool2(t, x[0]); },
                   [](const A& a) { return flat(oracle::maxpool2(a[0])); }});
  cases.push_back({"avgpool2", {{1, 3, 6, 4}}, [](Tape& t, V x) { return ops::avgpool2(t, x[0]); },
                   [](const A& a) { return flat(oracle::avgpool2(a[0])); }});
  cases.push_back({"upsample2_nearest", {{1, 2, 3, 4}}, [](Tape& t, V x) { return ops::upsample2_nearest(t, x[0]); },
                   [](const A& a) { return flat(oracle::upsample2(a[0])); }});
  cases.push_back({"concat_channels", {{1, 3, 4, 4}, {1, 2, 4, 4}},
                   [](Tape& t, V x) { return ops::concat_channels(t, x[0], x[1]); },
                   [](const A& a) { return flat(oracle::concat(a[0], a[1])); }});
  cases.push_back({"slice_channels", {{1, 5, 3, 3}}, [](Tape& t, V x) { return ops::slice_channels(t, x[0], 1, 4); },
                   [](const A& a) { return std::vector<double>(a[0].v.begin() + 9, a[0].v.begin() + 36); }});
  cases.push_back({"relu", {{1, 2, 4, 4}}, [](Tape& t, V x) { return ops::relu(t, x[0]); },
                   [](const A& a) { return flat(oracle::relu(a[0])); }});
  cases.push_back({"sigmoid", {{1, 2, 4, 4}}, [](Tape& t, V x) { return ops::sigmoid(t, x[0]); },
                   [](const A& a) {
                     std::vector<double> y = a[0].v;
                     for (auto& e : y) e = oracle::sigmoid(e);
                     return y;
                   }});
  cases.push_back({"add", {{1, 2, 3, 3}, {1, 2, 3, 3}}, [](Tape& t, V x) { return ops::add(t, x[0], x[1]); },
                   [](const A& a) { return flat(oracle::add(a[0], a[1])); }});
  cases.push_back({"mul", {{2, 7}, {2, 7}}, [](Tape& t, V x) { return ops::mul(t, x[0], x[1]); },
                   [](const A& a) {
                     std::vector<double> y(a[0].v.size());
                     for (std::size_t i = 0; i < y.size(); ++i) y[i] = a[0].v[i] * a[1].v[i];
                     return y;
                   }});
  cases.push_back({"scale", {{11}}, [](Tape& t, V x) { return ops::scale(t, x[0], -2.5f); },
                   [](const A& a) {
                     std::vector<double> y = a[0].v;
                     for (auto& e : y) e *= -2.5;
                     return y;
                   }});
  cases.push_back({"sum", {{3, 5}}, [](Tape& t, V x) { return ops::sum(t, x[0]); },
                   [](const A& a) {
                     double s = 0.0;
                     for (double e : a[0].v) s += e;
                     return std::vector<double>{s};
                   }});
  cases.push_back({"fully_connected vector", {{6}, {4, 6}, {4}},
                   [](Tape& t, V x) { return ops::fully_connected(t, x[0], x[1], x[2]); },
                   [](const A& a) { return oracle::fully_connected(a[0].v, a[1], a[2]); }});
  cases.push_back({"fully_connected batch", {{2, 6}, {4, 6}, {4}},
                   [](Tape& t, V x) { return ops::fully_connected(t, x[0], x[1], x[2]); },
                   [](const A& a) {
                     std::vector<double> out;
                     for (int n = 0; n < 2; ++n) {
                       const std::vector<double> xn(a[0].v.begin() + n * 6, a[0].v.begin() + (n + 1) * 6);
                       const auto y = oracle::fully_connected(xn, a[1], a[2]);
                       out.insert(out.end(), y.begin(), y.end());
                     }
                     return out;
                   }});
  cases.push_back({"global_avg_pool", {{1, 3, 4, 6}}, [](Tape& t, V x) { return ops::global_avg_pool(t, x[0]); },
                   [](const A& a) { return oracle::global_avg_pool(a[0]); }});
  cases.push_back({"flatten", {{1, 2, 3, 4}}, [](Tape& t, V x) { return ops::flatten(t, x[0]); },
                   [](const A& a) { return a[0].v; }});
  cases.push_back({"reshape", {{2, 6}}, [](Tape& t, V x) { return ops::reshape(t, x[0], {3, 4}); },
                   [](const A& a) { return a[0].v; }});

  // Losses, on a fixed 6x6 mask with a boundary weight map.
  static const mtln::BinaryMask mask = [] {
    mtln::BinaryMask m(6, 6, 0);
    for (int r = 1; r < 5; ++r)
      for (int c = 2; c < 5; ++c) m(r, c) = 1;
    return m;
  }();
  static const mtln::WeightMap weights = mtln::boundary_weight_map(mask, 30.0, 2.0);
  cases.push_back({"weighted_cross_entropy", {{1, 1, 6, 6}},
                   [](Tape& t, V x) { return mtln::weighted_cross_entropy(t, x[0], mask, weights, 1e-7); },
                   [](const A& a) {
                     return std::vector<double>{oracle::loss_terms(a[0].v, mask.pixels, weights.pixels, {}, {}).ce};
                   }});
  cases.push_back({"soft_dice_loss", {{1, 1, 6, 6}},
                   [](Tape& t, V x) { return mtln::soft_dice_loss(t, mtln::ops::sigmoid(t, x[0]), mask, 1e-6); },
                   [](const A& a) {
                     return std::vector<double>{oracle::loss_terms(a[0].v, mask.pixels, weights.pixels, {}, {}).dice};
                   }});
  cases.push_back({"ellipse_param_mse", {{5}, {5}},
                   [](Tape& t, V x) { return mtln::ellipse_param_mse(t, x[0], x[1]); },
                   [](const A& a) {
                     double s = 0.0;
                     for (int i = 0; i < 5; ++i) s += (a[0].v[i] - a[1].v[i]) * (a[0].v[i] - a[1].v[i]);
                     return std::vector<double>{s / 5.0};
                   }});
  cases.push_back({"total_loss", {{1}, {1}},
                   [](Tape& t, V x) { return mtln::total_loss(t, x[0], x[1], mtln::LossConfig{}); },
                   [](const A& a) { return std::vector<double>{1.0 * a[0].v[0] + 2.0 * a[1].v[0]}; }});
  return cases;
}

/// The 2-stage network used by the end-to-end check.
inline mtln::NetworkConfig small_network(std::uint64_t seed) {
  mtln::NetworkConfig c;
  c.height = 16;
  c.width = 16;
  c.stages = 2;
  c.widths = {4, 8};
  c.fc_hidden = {8};
  c.seed = seed;
  return c;
}

/// Gradient of L_T with respect to every parameter of a freshly initialized
/// 2-stage network on a 16x16 phantom crop.
inline oracle::GradientAgreement check_network(std::uint64_t seed) {
  mtln::TrainConfig cfg;
  cfg.network = small_network(seed);
  const mtln::Sample sample =
      mtln::resize_sample(mtln::generate_phantom(mtln::derive_seed(seed, "fd-sample"), 64, 64), 16, 16);
  const mtln::PreparedSample prep = mtln::prepare_sample(sample, cfg);
  mtln::ModelParams params = mtln::build_mtln(cfg.network);
  // Non-zero biases so that bias paths are exercised.
  {
    mtln::Rng rng(mtln::derive_seed(seed, "fd-bias"));
    for (auto& [name, t] : params) {
      if (name.size() > 2 && name.substr(name.size() - 2) == ".b") {
        t = Tensor(t.dims(), to_float(random_values(rng, t.size(), -0.1, 0.1)), true);
      }
    }
  }

  Tape tape;
  const auto loss = mtln::compute_loss(tape, params, cfg, prep);
  tape.backward(loss.total);

  const oracle::Array image = oracle::from_tensor(prep.image);
  const std::vector<double> target(prep.target.begin(), prep.target.end());
  oracle::Params ref = oracle::from_model(params);
  oracle::GradientAgreement total;
  for (const auto& [name, t] : params) {
    auto f = [&](const std::vector<double>& v) {
      const std::vector<double> saved = ref[name].v;
      ref[name].v = v;
      const auto out = oracle::mtln_forward(ref, cfg.network, image);
      ref[name].v = saved;
      const auto terms = oracle::loss_terms(out.logits.v, prep.mask.pixels, prep.weights.pixels, out.ellipse, target);
      return cfg.loss.alpha_seg * (terms.ce + terms.dice) + cfg.loss.alpha_ellipse * terms.mse;
    };
    const auto numeric = oracle::numeric_gradient(f, ref[name].v, kStep);
    oracle::merge(total, oracle::compare_gradients(t.grad(), numeric, kTolerance, kFloor));
  }
  return total;
}

}  // namespace gradcheck
