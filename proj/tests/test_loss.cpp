#include <doctest.h>

#include <cmath>

#include "mtln/ellipse.hpp"
#include "mtln/error.hpp"
#include "mtln/loss.hpp"
#include "mtln/ops.hpp"
#include "mtln/random.hpp"
#include "oracles.hpp"

using namespace mtln;

namespace {

BinaryMask block_mask(int h, int w, int r0, int r1, int c0, int c1) {
  BinaryMask m(h, w, 0);
  for (int r = r0; r < r1; ++r)
    for (int c = c0; c < c1; ++c) m(r, c) = 1;
  return m;
}

Tensor logits_of(const BinaryMask& m, float fg, float bg) {
  std::vector<float> v(m.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = m.pixels[i] ? fg : bg;
  return Tensor({1, 1, m.height, m.width}, std::move(v));
}

Tensor probs_of(const BinaryMask& m) {
  std::vector<float> v(m.pixels.begin(), m.pixels.end());
  return Tensor({1, 1, m.height, m.width}, std::move(v));
}

float eval(const std::function<Tensor(Tape&)>& f) {
  Tape tape(false);
  return f(tape).item();
}

}  // namespace

TEST_SUITE("loss") {
  TEST_CASE("weight is 1 + omega0 on the boundary and about 19.195 ten pixels away") {
    CHECK(boundary_weight(0.0, 30.0, 10.0) == doctest::Approx(31.0));
    CHECK(boundary_weight(10.0, 30.0, 10.0) == doctest::Approx(1.0 + 30.0 * std::exp(-0.5)));
    CHECK(boundary_weight(10.0, 30.0, 10.0) == doctest::Approx(19.195).epsilon(1e-4));
    CHECK(boundary_weight(1e4, 30.0, 10.0) == doctest::Approx(1.0));
    CHECK(boundary_weight(0.0, 30.0, 10.0, WeightForm::kPrinted) == doctest::Approx(31.0));
    CHECK(boundary_weight(20.0, 30.0, 10.0, WeightForm::kPrinted) > boundary_weight(0.0, 30.0, 10.0, WeightForm::kPrinted));
  }

  TEST_CASE("weight map peaks on the boundary and follows the distance map") {
    const BinaryMask m = rasterize_ellipse({32.0, 30.0, 18.0, 11.0, 0.4}, 64, 64);
    const WeightMap w = boundary_weight_map(m, 30.0, 3.0);
    const auto d = oracle::brute_distance_map(m);
    for (std::size_t i = 0; i < w.size(); ++i) {
      CHECK(w.pixels[i] >= 1.0f);
      CHECK(w.pixels[i] == doctest::Approx(1.0 + 30.0 * std::exp(-d[i] * d[i] / 18.0)).epsilon(1e-5));
    }
    for (const auto& [r, c] : oracle::contour(m)) CHECK(w(r, c) == doctest::Approx(31.0));
  }

  TEST_CASE("weight map needs a boundary") {
    CHECK_THROWS(boundary_weight_map(BinaryMask(8, 8, 0), 30.0, 10.0));
    CHECK_THROWS(boundary_weight_map(BinaryMask(8, 8, 1), 30.0, 10.0));
    CHECK_THROWS_AS(boundary_weight_map(block_mask(8, 8, 2, 5, 2, 5), 30.0, 0.0), InvalidArgument);
  }

  TEST_CASE("cross-entropy examples") {
    const BinaryMask m = block_mask(6, 6, 1, 4, 2, 5);
    const WeightMap ones(6, 6, 1.0f);
    CHECK(eval([&](Tape& t) { return weighted_cross_entropy(t, logits_of(m, 0, 0), m, ones, 1e-7); }) ==
          doctest::Approx(std::log(2.0)).epsilon(1e-6));
    CHECK(eval([&](Tape& t) { return weighted_cross_entropy(t, logits_of(m, 20, -20), m, ones, 1e-7); }) < 1e-6);
    // Saturated wrong prediction is capped at -log(p_clip).
    const float capped = eval([&](Tape& t) { return weighted_cross_entropy(t, logits_of(m, -80, 80), m, ones, 1e-7); });
    CHECK(std::isfinite(capped));
    CHECK(capped == doctest::Approx(-std::log(1e-7)).epsilon(1e-4));
  }

  TEST_CASE("cross-entropy gradient vanishes where the clamp is active") {
    const BinaryMask m = block_mask(4, 4, 1, 3, 1, 3);
    const WeightMap ones(4, 4, 1.0f);
    const Tensor x = logits_of(m, -80, 80).as_leaf();
    Tape tape;
    tape.backward(weighted_cross_entropy(tape, x, m, ones, 1e-7));
    for (float g : x.grad()) CHECK(g == 0.0f);
  }

  TEST_CASE("cross-entropy rejects mismatched shapes") {
    const BinaryMask m = block_mask(6, 6, 1, 4, 2, 5);
    Tape tape(false);
    CHECK_THROWS_AS(weighted_cross_entropy(tape, Tensor::zeros({1, 1, 6, 5}), m, WeightMap(6, 6, 1.0f), 1e-7),
                    ShapeError);
    CHECK_THROWS_AS(weighted_cross_entropy(tape, Tensor::zeros({1, 1, 6, 6}), m, WeightMap(5, 6, 1.0f), 1e-7),
                    ShapeError);
  }

  TEST_CASE("soft Dice examples") {
    const BinaryMask g = block_mask(4, 4, 1, 3, 1, 3);
    CHECK(eval([&](Tape& t) { return soft_dice_loss(t, probs_of(g), g, 1e-6); }) == doctest::Approx(0.0).epsilon(1e-6));
    BinaryMask inv = g;
    for (auto& v : inv.pixels) v = v ? 0 : 1;
    CHECK(eval([&](Tape& t) { return soft_dice_loss(t, probs_of(inv), g, 1e-6); }) == doctest::Approx(1.0).epsilon(1e-6));
    // Prediction covers two of the four foreground pixels.
    BinaryMask s(4, 4, 0);
    s(1, 1) = s(1, 2) = 1;
    CHECK(eval([&](Tape& t) { return soft_dice_loss(t, probs_of(s), g, 0.0); }) == doctest::Approx(1.0 / 3.0));
    CHECK_THROWS_AS(eval([&](Tape& t) { return soft_dice_loss(t, Tensor::filled({1, 1, 4, 4}, 1.5f), g, 1e-6); }),
                    InvalidArgument);
  }

  TEST_CASE("ellipse MSE examples") {
    const std::array<float, 5> gt{0.5f, 0.5f, 0.3f, 0.2f, 0.1f};
    const Tensor same({5}, {gt.begin(), gt.end()});
    CHECK(eval([&](Tape& t) { return ellipse_param_mse(t, same, gt); }) == 0.0f);
    const Tensor off({5}, {0.5f, 2.5f, 0.3f, 0.2f, 0.1f});
    CHECK(eval([&](Tape& t) { return ellipse_param_mse(t, off, gt); }) == doctest::Approx(0.8));
    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
      std::vector<float> p(5), q(5);
      for (int k = 0; k < 5; ++k) {
        p[k] = static_cast<float>(uniform(rng, -1, 1));
        q[k] = static_cast<float>(uniform(rng, -1, 1));
      }
      CHECK(eval([&](Tape& t) { return ellipse_param_mse(t, Tensor({5}, p), Tensor({5}, q)); }) ==
            eval([&](Tape& t) { return ellipse_param_mse(t, Tensor({5}, q), Tensor({5}, p)); }));
    }
    CHECK_THROWS_AS(eval([&](Tape& t) { return ellipse_param_mse(t, Tensor::zeros({4}), Tensor::zeros({5})); }),
                    ShapeError);
  }

  TEST_CASE("total loss with the default weights") {
    const LossConfig cfg;
    CHECK(cfg.alpha_seg == 1.0);
    CHECK(cfg.alpha_ellipse == 2.0);
    CHECK(cfg.omega0 == 30.0);
    CHECK(cfg.sigma == 10.0);
    CHECK(eval([&](Tape& t) { return total_loss(t, Tensor::scalar(0.5f), Tensor::scalar(0.25f), cfg); }) ==
          doctest::Approx(1.0));
    CHECK(eval([&](Tape& t) { return total_loss(t, Tensor::scalar(0.0f), Tensor::scalar(0.0f), cfg); }) == 0.0f);
    LossConfig single = cfg;
    single.alpha_ellipse = 0.0;
    CHECK(eval([&](Tape& t) { return total_loss(t, Tensor::scalar(0.5f), Tensor::scalar(7.0f), single); }) ==
          doctest::Approx(0.5));
  }

  TEST_CASE("loss config validation") {
    LossConfig c;
    CHECK_NOTHROW(c.validate());
    c.alpha_seg = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.sigma = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.p_clip = 0.5;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.omega0 = -0.1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("segmentation loss matches the double-precision reference") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
      const BinaryMask m = oracle::random_mask(rng, 12, 10, 0.4);
      if (foreground_count(m) == 0 || foreground_count(m) == m.size()) continue;
      LossConfig cfg;
      cfg.sigma = 2.0;
      const WeightMap w = boundary_weight_map(m, cfg.omega0, cfg.sigma);
      std::vector<float> v(m.size());
      for (auto& x : v) x = static_cast<float>(uniform(rng, -6, 6));
      const Tensor logits({1, 1, 12, 10}, v);
      const double got = eval([&](Tape& t) { return segmentation_loss(t, logits, m, w, cfg); });
      const auto ref = oracle::loss_terms({v.begin(), v.end()}, m.pixels, w.pixels, {}, {});
      CHECK(got == doctest::Approx(ref.ce + ref.dice).epsilon(1e-5));
    }
  }

  TEST_CASE("with omega0 = 0 and alpha2 = 0 the total is mean cross-entropy plus Dice") {
    Rng rng(6);
    const BinaryMask m = block_mask(8, 8, 2, 6, 1, 5);
    LossConfig cfg;
    cfg.omega0 = 0.0;
    cfg.alpha_ellipse = 0.0;
    const WeightMap w = boundary_weight_map(m, cfg.omega0, cfg.sigma);
    for (float x : w.pixels) CHECK(x == 1.0f);
    std::vector<float> v(m.size());
    for (auto& x : v) x = static_cast<float>(uniform(rng, -3, 3));
    const Tensor logits({1, 1, 8, 8}, v);
    double ce = 0.0, inter = 0.0, ps = 0.0, gs = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(v[i])));
      ce += m.pixels[i] ? -std::log(p) : -std::log(1.0 - p);
      inter += p * m.pixels[i];
      ps += p;
      gs += m.pixels[i];
    }
    const double want = ce / 64.0 + 1.0 - (2.0 * inter + 1e-6) / (ps + gs + 1e-6);
    const double got = eval([&](Tape& t) {
      return total_loss(t, segmentation_loss(t, logits, m, w, cfg), Tensor::scalar(3.0f), cfg);
    });
    CHECK(got == doctest::Approx(want).epsilon(1e-5));
  }

  TEST_CASE("larger omega0 increases the loss when boundary pixels are wrong") {
    const BinaryMask m = block_mask(10, 10, 2, 8, 2, 8);
    const auto edge = oracle::contour(m);
    std::vector<float> v(m.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = m.pixels[i] ? 4.0f : -4.0f;
    for (const auto& [r, c] : edge) v[static_cast<std::size_t>(r) * 10 + c] = -4.0f;
    const Tensor logits({1, 1, 10, 10}, v);
    double previous = -1.0;
    for (double omega0 : {0.0, 1.0, 5.0, 30.0, 100.0}) {
      LossConfig cfg;
      cfg.omega0 = omega0;
      cfg.sigma = 1.0;
      const WeightMap w = boundary_weight_map(m, omega0, cfg.sigma);
      const double l = eval([&](Tape& t) { return segmentation_loss(t, logits, m, w, cfg); });
      CHECK(l > previous);
      previous = l;
    }
  }

  TEST_CASE("losses stay finite and in range for arbitrary finite logits") {
    Rng rng(7);
    const BinaryMask m = block_mask(8, 8, 1, 6, 2, 7);
    const LossConfig cfg;
    const WeightMap w = boundary_weight_map(m, cfg.omega0, cfg.sigma);
    for (int trial = 0; trial < 200; ++trial) {
      const double scale = std::pow(10.0, uniform(rng, -2, 4));
      std::vector<float> v(m.size());
      for (auto& x : v) x = static_cast<float>(uniform(rng, -scale, scale));
      const Tensor logits({1, 1, 8, 8}, v);
      Tape tape(false);
      const Tensor probs = ops::sigmoid(tape, logits);
      const float dice = soft_dice_loss(tape, probs, m, cfg.dice_smooth).item();
      CHECK(dice >= 0.0f);
      CHECK(dice <= 1.0f);
      const float seg = segmentation_loss(tape, logits, m, w, cfg).item();
      CHECK(std::isfinite(seg));
      CHECK(seg >= 0.0f);
    }
  }
}
