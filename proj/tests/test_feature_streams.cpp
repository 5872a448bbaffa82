#include <doctest.h>

#include <cmath>

#include "gazekit/feature_streams.hpp"
#include "gazekit/rng.hpp"

using namespace gazekit;

namespace {

Tensor random_eye_image(int h, int w, Rng& rng) {
  Tensor t = Tensor::zeros({3, h, w});
  for (auto& v : t.values()) v = rng.uniform(0.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("pad_to_square: square input has no padding") {
  Rng rng(1);
  Tensor img = random_eye_image(64, 64, rng);
  Tensor out = pad_to_square(img, 114, 32);
  CHECK(out.shape() == Shape{3, 32, 32});
  // No cell holds the fill value band: compare against a plain resize.
  Tensor plain = resize_bilinear(img, 32, 32);
  CHECK(out.values() == plain.values());
}

TEST_CASE("pad_to_square: 224x112 input gets 56-column bands of 114/255") {
  Tensor img = Tensor::full({3, 224, 112}, 0.9);
  Tensor out = pad_to_square(img, 114, 224);
  CHECK(out.shape() == Shape{3, 224, 224});
  const double fill = 114.0 / 255.0;
  for (int x = 0; x < 56; ++x) {
    CHECK(out(0, 100, x) == doctest::Approx(fill));
    CHECK(out(0, 100, 223 - x) == doctest::Approx(fill));
  }
  for (int x = 56; x < 168; ++x) CHECK(out(0, 100, x) == doctest::Approx(0.9));
}

TEST_CASE("pad_to_square preserves content aspect ratio within one pixel") {
  Rng rng(2);
  // 3:1 landscape crop; the resized content must stay 3:1.
  Tensor img = random_eye_image(30, 90, rng);
  Tensor out = pad_to_square(img, 114, 60);
  // Independent rescale oracle: longest side 90 -> 60, so height -> 20.
  const int expect_h = int(std::lround(30.0 * 60.0 / 90.0));
  CHECK(expect_h == 20);
  const double fill = 114.0 / 255.0;
  int content_rows = 0;
  for (int y = 0; y < 60; ++y) {
    bool is_fill = true;
    for (int x = 0; x < 60 && is_fill; ++x) is_fill = out(1, y, x) == doctest::Approx(fill);
    if (!is_fill) ++content_rows;
  }
  CHECK(std::abs(content_rows - expect_h) <= 1);
}

TEST_CASE("gaussian_weight_map normalization and symmetry") {
  const GaussianWeightMap g = gaussian_weight_map({3.0, 3.0}, 7, 7, 1.2);
  double total = 0.0;
  for (double v : g.weights.values()) {
    CHECK(v > 0.0);
    total += v;
  }
  CHECK(std::fabs(total - 1.0) <= 1e-9);
  // Center on an odd grid: 4-fold symmetry.
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 7; ++x) {
      CHECK(g.weights(6 - y, x) == doctest::Approx(g.weights(y, x)).epsilon(1e-12));
      CHECK(g.weights(y, 6 - x) == doctest::Approx(g.weights(y, x)).epsilon(1e-12));
    }
  // Argmax at the cell nearest the center.
  double best = -1.0;
  int best_x = -1, best_y = -1;
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 7; ++x)
      if (g.weights(y, x) > best) {
        best = g.weights(y, x);
        best_x = x;
        best_y = y;
      }
  CHECK(best_x == 3);
  CHECK(best_y == 3);

  CHECK_THROWS_AS(gaussian_weight_map({1.0, 1.0}, 7, 7, 0.0), ValueError);
}

TEST_CASE("gaussian_weight_map flattens as sigma grows") {
  const GaussianWeightMap g = gaussian_weight_map({3.0, 3.0}, 7, 7, 100.0);
  double lo = 1e9, hi = -1e9;
  for (double v : g.weights.values()) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(hi / lo < 1.01);
}

TEST_CASE("gaussian weights decrease monotonically away from the center") {
  const GaussianWeightMap g = gaussian_weight_map({2.0, 4.0}, 9, 9, 1.7);
  for (int x = 2; x < 8; ++x) CHECK(g.weights(4, x + 1) <= g.weights(4, x));
  for (int x = 2; x > 0; --x) CHECK(g.weights(4, x - 1) <= g.weights(4, x));
  for (int y = 4; y < 8; ++y) CHECK(g.weights(y + 1, 2) <= g.weights(y, 2));
}

TEST_CASE("project_iris_to_map corner cases") {
  const auto mid = project_iris_to_map({0.5, 0.5}, 7, 7);
  CHECK(mid[0] == doctest::Approx(3.0));
  CHECK(mid[1] == doctest::Approx(3.0));
  const auto origin = project_iris_to_map({0.0, 0.0}, 7, 7);
  CHECK(origin[0] == 0.0);
  CHECK(origin[1] == 0.0);
  const auto far = project_iris_to_map({1.0, 1.0}, 7, 7);
  CHECK(far[0] == doctest::Approx(6.0));
  CHECK(far[1] == doctest::Approx(6.0));
  CHECK_THROWS_AS(project_iris_to_map({1.2, 0.5}, 7, 7), ValueError);
}

TEST_CASE("conjugate iris inference") {
  EyeObservation left;
  left.side = EyeSide::Left;
  left.valid = true;
  left.iris_center_norm = {0.3, 0.5};

  const EyeObservation right = infer_conjugate_iris(left);
  CHECK(right.side == EyeSide::Right);
  CHECK(right.iris_center_norm[0] == 0.3);
  CHECK(right.iris_center_norm[1] == 0.5);
  CHECK(right.valid);
  CHECK(right.inferred);

  CHECK_THROWS_AS(infer_conjugate_iris(right), ValueError);

  EyeObservation invalid;
  CHECK_THROWS_AS(infer_conjugate_iris(invalid), ValueError);
}

TEST_CASE("gate_iris_validity cases") {
  Rng rng(5);
  EyeObservation left, right;
  left.side = EyeSide::Left;
  right.side = EyeSide::Right;
  left.eye_image = random_eye_image(8, 10, rng);
  right.eye_image = random_eye_image(8, 10, rng);

  SUBCASE("both valid passes through") {
    left.valid = right.valid = true;
    left.iris_center_norm = {0.2, 0.3};
    right.iris_center_norm = {0.7, 0.4};
    const IrisGate g = gate_iris_validity(left, right);
    CHECK(g.gate == 1.0);
    CHECK(g.ic == std::array<double, 4>{0.2, 0.3, 0.7, 0.4});
  }

  SUBCASE("single valid eye fills the other by the conjugate rule") {
    left.valid = true;
    left.iris_center_norm = {0.31, 0.62};
    const IrisGate g = gate_iris_validity(left, right);
    CHECK(g.gate == 1.0);
    CHECK(g.right.inferred);
    CHECK(g.ic == std::array<double, 4>{0.31, 0.62, 0.31, 0.62});
    CHECK(g.right.eye_image.values() == right.eye_image.values());

    // The fused vector does not depend on which eye was detected.
    EyeObservation l2 = left, r2 = right;
    l2.valid = false;
    r2.valid = true;
    r2.iris_center_norm = {0.31, 0.62};
    const IrisGate g2 = gate_iris_validity(l2, r2);
    CHECK(g2.ic == g.ic);
  }

  SUBCASE("neither valid neutralizes") {
    const IrisGate g = gate_iris_validity(left, right);
    CHECK(g.gate == 0.0);
    CHECK(g.ic == std::array<double, 4>{0.5, 0.5, 0.5, 0.5});
  }

  SUBCASE("missing crop forces gate 0") {
    left.valid = right.valid = true;
    right.crop_missing = true;
    const IrisGate g = gate_iris_validity(left, right);
    CHECK(g.gate == 0.0);
  }
}

TEST_CASE("iris weighted embedding matches pooling oracles") {
  // Scene-shaped miniature: its 7x7 stage-4 map has a unique center cell.
  const EncoderConfig cfg = EncoderConfig::miniature_scene();
  Rng rng(6);
  ParamSet ps;
  register_encoder_params(ps, "eye", cfg, rng, false);
  NormStats stats;

  EyeObservation obs;
  obs.valid = true;
  obs.side = EyeSide::Left;
  obs.eye_image = random_eye_image(20, 28, rng);
  obs.iris_center_norm = {0.5, 0.5};

  // Recreate the encoder output for oracle comparisons.
  const Tensor fmap = encode_spatial(
      nullptr, normalize_channels(pad_to_square(obs.eye_image, 114, cfg.input_h), stats), cfg, ps,
      "eye");
  const int h4 = fmap.dim(1), w4 = fmap.dim(2);

  SUBCASE("huge sigma reduces to GAP scaled by 1/(H*W)") {
    const Tensor e = iris_weighted_eye_embedding(nullptr, obs, cfg, ps, "eye", stats, 1e6);
    const Tensor gap = global_avg_pool(nullptr, fmap);
    for (int c = 0; c < e.dim(0); ++c)
      CHECK(e(c) == doctest::Approx(gap(c) / (h4 * w4)).epsilon(1e-9));
  }

  SUBCASE("tiny sigma indexes the center cell") {
    const Tensor e = iris_weighted_eye_embedding(nullptr, obs, cfg, ps, "eye", stats, 1e-3);
    const auto center = project_iris_to_map(obs.iris_center_norm, h4, w4);
    const int cx = int(std::lround(center[0])), cy = int(std::lround(center[1]));
    for (int c = 0; c < e.dim(0); ++c)
      CHECK(e(c) == doctest::Approx(fmap(c, cy, cx) / (h4 * w4)).epsilon(1e-9));
  }

  SUBCASE("invalid observation without gating is rejected") {
    obs.valid = false;
    CHECK_THROWS_AS(iris_weighted_eye_embedding(nullptr, obs, cfg, ps, "eye", stats, 1.2),
                    ValueError);
  }
}

TEST_CASE("zero feature map yields zero embedding") {
  // Zero out every parameter: conv outputs collapse to zero maps.
  const EncoderConfig cfg = EncoderConfig::miniature();
  Rng rng(7);
  ParamSet ps;
  register_encoder_params(ps, "eye", cfg, rng, false);
  for (auto& [name, t] : ps.entries())
    std::fill(t.values().begin(), t.values().end(), 0.0);
  NormStats stats;
  EyeObservation obs;
  obs.valid = true;
  obs.eye_image = random_eye_image(16, 16, rng);
  const Tensor e = iris_weighted_eye_embedding(nullptr, obs, cfg, ps, "eye", stats, 1.2);
  for (double v : e.values()) CHECK(v == 0.0);
}

TEST_CASE("scene token flattening, centers, and round trip") {
  Rng rng(8);
  Tensor map = Tensor::zeros({5, 7, 7});
  for (auto& v : map.values()) v = rng.uniform(-1.0, 1.0);
  const SceneTokens st = scene_tokens(nullptr, map);

  CHECK(st.tokens.shape() == Shape{49, 5});
  CHECK(st.augmented.shape() == Shape{49, 6});

  // Token 1 (k=0) is cell (1,1) with center (1/14, 1/14).
  CHECK(st.centers(0, 0) == doctest::Approx(1.0 / 14.0));
  CHECK(st.centers(0, 1) == doctest::Approx(1.0 / 14.0));
  // Token 25 (k=24) is the middle cell (4,4) centered at (0.5, 0.5).
  CHECK(st.centers(24, 0) == doctest::Approx(0.5));
  CHECK(st.centers(24, 1) == doctest::Approx(0.5));
  // Mean of all centers is the image center.
  double mx = 0.0, my = 0.0;
  for (int k = 0; k < 49; ++k) {
    mx += st.centers(k, 0);
    my += st.centers(k, 1);
  }
  CHECK(mx / 49.0 == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(my / 49.0 == doctest::Approx(0.5).epsilon(1e-12));
  // Centers stay strictly inside the unit square.
  for (int k = 0; k < 49; ++k) {
    CHECK(st.centers(k, 0) > 0.0);
    CHECK(st.centers(k, 0) < 1.0);
  }

  // t_k = map(:, r, c) with k = 7r + c; augmented rows append x only.
  for (int r = 0; r < 7; ++r)
    for (int c = 0; c < 7; ++c) {
      const int k = 7 * r + c;
      for (int ch = 0; ch < 5; ++ch) {
        CHECK(st.tokens(k, ch) == map(ch, r, c));
        CHECK(st.augmented(k, ch) == map(ch, r, c));
      }
      CHECK(st.augmented(k, 5) == doctest::Approx((c + 0.5) / 7.0));
    }

  const Tensor back = tokens_to_map(st.tokens, 7, 7);
  CHECK(back.values() == map.values());

  CHECK_THROWS_AS(scene_tokens(nullptr, Tensor::zeros({5, 6, 7})), ShapeError);
}

TEST_CASE("scene token gradient flows through the flattening") {
  Rng rng(9);
  Tensor map = Tensor::zeros({3, 7, 7}, true);
  for (auto& v : map.values()) v = rng.uniform(-1.0, 1.0);
  Tensor probe = Tensor::zeros({49, 4});
  for (auto& v : probe.values()) v = rng.uniform(-1.0, 1.0);
  const double err = finite_diff_check(
      [&](Tape* t) {
        const SceneTokens st = scene_tokens(t, map);
        return sum(t, mul(t, st.augmented, probe));
      },
      std::vector<Tensor>{map});
  CHECK(err <= 1e-6);
}
