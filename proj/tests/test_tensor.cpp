#include <doctest.h>

#include <cmath>
#include <vector>

#include "gazekit/rng.hpp"
#include "gazekit/tensor.hpp"

using namespace gazekit;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape), requires_grad);
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("tensor basics and invariants") {
  Tensor t = Tensor::of({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t(1, 2) == 6.0);
  CHECK_FALSE(t.requires_grad());
  CHECK_THROWS_AS(t.grad(), ValueError);

  t.set_requires_grad(true);
  CHECK(t.grad().size() == 6);

  CHECK_THROWS_AS(Tensor::of({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({0, 3}), ShapeError);
}

TEST_CASE("matmul identity and forced arithmetic") {
  Tensor a = Tensor::of({2, 2}, {1, 2, 3, 4});
  Tensor eye = Tensor::of({2, 2}, {1, 0, 0, 1});
  Tensor ai = matmul(nullptr, a, eye);
  CHECK(ai.values() == a.values());

  Tensor ones = Tensor::of({2, 1}, {1, 1});
  Tensor r = matmul(nullptr, a, ones);
  CHECK(r(0, 0) == 3.0);
  CHECK(r(1, 0) == 7.0);

  CHECK_THROWS_AS(matmul(nullptr, a, Tensor::of({3, 1}, {1, 1, 1})), ShapeError);
}

TEST_CASE("matmul gradient vs central finite differences") {
  Rng rng(42);
  Tensor a = random_tensor({5, 4}, rng);
  Tensor b = random_tensor({4, 3}, rng);
  const double err = finite_diff_check(
      [&](Tape* t) { return sum(t, matmul(t, a, b)); }, std::vector<Tensor>{a, b});
  CHECK(err <= 1e-6);
}

TEST_CASE("conv2d identity kernel leaves input unchanged") {
  Rng rng(7);
  Tensor x = random_tensor({3, 4, 5}, rng, false);
  Tensor w = Tensor::zeros({3, 3, 1, 1});
  for (int c = 0; c < 3; ++c) w.values()[std::size_t(c) * 3 + c] = 1.0;
  Tensor y = conv2d(nullptr, x, w, 1, 0);
  CHECK(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.values().size(); ++i) CHECK(y.values()[i] == x.values()[i]);
}

TEST_CASE("conv2d all-ones 3x3 on all-ones 5x5") {
  Tensor x = Tensor::full({1, 5, 5}, 1.0);
  Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
  Tensor y = conv2d(nullptr, x, w, 1, 0);
  CHECK(y.shape() == Shape{1, 3, 3});
  for (double v : y.values()) CHECK(v == doctest::Approx(9.0));
}

TEST_CASE("conv2d rejects vanishing output extents") {
  Tensor x = Tensor::full({1, 2, 2}, 1.0);
  Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
  CHECK_THROWS_AS(conv2d(nullptr, x, w, 1, 0), ShapeError);
  CHECK_THROWS_AS(conv2d(nullptr, x, w, 0, 1), ValueError);
}

TEST_CASE("conv2d gradient vs finite differences, strides and padding") {
  Rng rng(11);
  for (int stride = 1; stride <= 2; ++stride)
    for (int pad = 0; pad <= 1; ++pad) {
      Tensor x = random_tensor({2, 5, 6}, rng);
      Tensor w = random_tensor({3, 2, 3, 3}, rng);
      const double err = finite_diff_check(
          [&](Tape* t) { return sum(t, conv2d(t, x, w, stride, pad)); },
          std::vector<Tensor>{x, w});
      CHECK(err <= 1e-5);
    }
}

TEST_CASE("softmax simplex and limits") {
  Tensor equal = Tensor::full({49}, 0.37);
  Tensor s = softmax(nullptr, equal);
  double total = 0.0;
  for (double v : s.values()) {
    CHECK(v == doctest::Approx(1.0 / 49.0).epsilon(1e-12));
    total += v;
  }
  CHECK(std::fabs(total - 1.0) <= 1e-9);

  Tensor extreme = softmax(nullptr, Tensor::of({2}, {0.0, 60.0}));
  CHECK(extreme(0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(extreme(1) == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    Tensor x = random_tensor({12}, rng, false, -30.0, 30.0);
    Tensor y = softmax(nullptr, x);
    double sum01 = 0.0;
    for (double v : y.values()) {
      CHECK(v >= 0.0);
      sum01 += v;
    }
    CHECK(std::fabs(sum01 - 1.0) <= 1e-9);
  }
}

TEST_CASE("softmax gradient vs finite differences") {
  Rng rng(5);
  Tensor x = random_tensor({9}, rng);
  Tensor probe = random_tensor({9}, rng, false);
  const double err = finite_diff_check(
      [&](Tape* t) { return dot(t, softmax(t, x), probe); }, std::vector<Tensor>{x});
  CHECK(err <= 1e-6);
}

TEST_CASE("layer_norm contract") {
  Tensor gain = Tensor::full({3}, 1.0);
  Tensor bias = Tensor::zeros({3});

  Tensor constant = layer_norm(nullptr, Tensor::full({3}, 4.2), gain, bias);
  for (double v : constant.values()) CHECK(v == doctest::Approx(0.0).epsilon(1e-12));

  Tensor y = layer_norm(nullptr, Tensor::of({3}, {1, 2, 3}), gain, bias);
  double mu = 0.0;
  for (double v : y.values()) mu += v;
  mu /= 3.0;
  CHECK(std::fabs(mu) <= 1e-7);
  double var = 0.0;
  for (double v : y.values()) var += (v - mu) * (v - mu);
  var /= 3.0;
  // Unit variance up to the eps attenuation var/(var+eps).
  const double input_var = 2.0 / 3.0;
  const double expected = input_var / (input_var + 1e-5);
  CHECK(std::fabs(var - expected) <= 1e-5);
  CHECK(std::fabs(var - 1.0) <= 1e-4);

  CHECK_THROWS_AS(layer_norm(nullptr, Tensor::scalar(1.0), Tensor::scalar(1.0),
                             Tensor::scalar(0.0)),
                  ShapeError);
}

TEST_CASE("layer_norm gradient vs finite differences") {
  Rng rng(13);
  Tensor x = random_tensor({7}, rng);
  Tensor gain = random_tensor({7}, rng, true, 0.5, 1.5);
  Tensor bias = random_tensor({7}, rng);
  Tensor probe = random_tensor({7}, rng, false);
  const double err = finite_diff_check(
      [&](Tape* t) { return dot(t, layer_norm(t, x, gain, bias), probe); },
      std::vector<Tensor>{x, gain, bias});
  CHECK(err <= 1e-6);
}

TEST_CASE("layer_norm_channels matches per-position vector layer_norm") {
  Rng rng(17);
  Tensor x = random_tensor({4, 3, 2}, rng, false);
  Tensor gain = random_tensor({4}, rng, false, 0.5, 1.5);
  Tensor bias = random_tensor({4}, rng, false);
  Tensor y = layer_norm_channels(nullptr, x, gain, bias);
  for (int h = 0; h < 3; ++h)
    for (int w = 0; w < 2; ++w) {
      std::vector<double> col(4);
      for (int c = 0; c < 4; ++c) col[std::size_t(c)] = x(c, h, w);
      Tensor ref = layer_norm(nullptr, Tensor::of({4}, col), gain, bias);
      for (int c = 0; c < 4; ++c) CHECK(y(c, h, w) == doctest::Approx(ref(c)).epsilon(1e-12));
    }

  Tensor xg = random_tensor({4, 2, 2}, rng);
  Tensor gg = random_tensor({4}, rng, true, 0.5, 1.5);
  Tensor bg = random_tensor({4}, rng);
  const double err = finite_diff_check(
      [&](Tape* t) { return sum(t, tanh(t, layer_norm_channels(t, xg, gg, bg))); },
      std::vector<Tensor>{xg, gg, bg});
  CHECK(err <= 1e-5);
}

TEST_CASE("global_avg_pool") {
  Tensor c = Tensor::full({3, 4, 4}, 2.5);
  Tensor g = global_avg_pool(nullptr, c);
  for (double v : g.values()) CHECK(v == doctest::Approx(2.5));

  Tensor x = Tensor::of({1, 2, 2}, {1, 3, 5, 7});
  CHECK(global_avg_pool(nullptr, x)(0) == doctest::Approx(4.0));

  // Gradient is uniform 1/(H*W) at every position.
  Tensor xr = Tensor::of({2, 2, 3}, std::vector<double>(12, 1.0), true);
  Tape tape;
  Tensor out = sum(&tape, global_avg_pool(&tape, xr));
  tape.backward(out);
  for (double gv : xr.grad()) CHECK(gv == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("elementwise suite values") {
  Tensor n = l2_normalize(nullptr, Tensor::of({3}, {3, 4, 0}));
  CHECK(n(0) == doctest::Approx(0.6));
  CHECK(n(1) == doctest::Approx(0.8));
  CHECK(n(2) == doctest::Approx(0.0));
  CHECK_THROWS_AS(l2_normalize(nullptr, Tensor::of({2}, {1e-13, 0.0})), NumericError);

  Tensor c = clip01(nullptr, Tensor::of({2}, {-0.2, 0.5}));
  CHECK(c(0) == 0.0);
  CHECK(c(1) == 0.5);

  Rng rng(23);
  Tensor x = random_tensor({6}, rng);
  const double err = finite_diff_check(
      [&](Tape* t) { return sum(t, tanh(t, x)); }, std::vector<Tensor>{x});
  CHECK(err <= 1e-8);
}

TEST_CASE("clip01 gradient: identity inside, zero outside") {
  Tensor x = Tensor::of({3}, {-0.5, 0.5, 1.5}, true);
  Tape tape;
  Tensor y = sum(&tape, clip01(&tape, x));
  tape.backward(y);
  CHECK(x.grad()[0] == 0.0);
  CHECK(x.grad()[1] == 1.0);
  CHECK(x.grad()[2] == 0.0);
}

TEST_CASE("finite_diff_check on exact quadratic") {
  Tensor x = Tensor::of({2}, {1, 2}, true);
  const double err = finite_diff_check(
      [&](Tape* t) { return dot(t, x, x); }, std::vector<Tensor>{x});
  CHECK(err <= 1e-9);
  // Analytic gradient of sum(x^2) is 2x.
  CHECK(x.grad()[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(x.grad()[1] == doctest::Approx(4.0).epsilon(1e-12));
}

TEST_CASE("finite_diff_check on constant function") {
  Tensor x = Tensor::of({3}, {1, 2, 3}, true);
  Tensor k = Tensor::scalar(5.0);
  const double err = finite_diff_check(
      [&](Tape* t) { return add(t, scale(t, sum(t, x), 0.0), k); }, std::vector<Tensor>{x});
  CHECK(err == 0.0);
  for (double g : x.grad()) CHECK(g == 0.0);
}

TEST_CASE("tape accumulates gradients at fan-out") {
  // y = sum(x*x) + 3*sum(x): x is consumed by two branches.
  Tensor x = Tensor::of({4}, {0.3, -0.7, 1.1, 0.05}, true);
  const double err = finite_diff_check(
      [&](Tape* t) { return add(t, dot(t, x, x), scale(t, sum(t, x), 3.0)); },
      std::vector<Tensor>{x});
  CHECK(err <= 1e-8);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(x.grad()[i] == doctest::Approx(2.0 * x.values()[i] + 3.0).epsilon(1e-12));
}

TEST_CASE("every differentiable op passes 20 random gradient checks") {
  Rng rng(101);
  for (int trial = 0; trial < 20; ++trial) {
    {
      Tensor a = random_tensor({3, 4}, rng);
      Tensor b = random_tensor({4, 2}, rng);
      CHECK(finite_diff_check([&](Tape* t) { return sum(t, matmul(t, a, b)); },
                              std::vector<Tensor>{a, b}) <= 1e-4);
    }
    {
      Tensor x = random_tensor({2, 4, 4}, rng);
      Tensor w = random_tensor({2, 2, 3, 3}, rng);
      CHECK(finite_diff_check([&](Tape* t) { return sum(t, conv2d(t, x, w, 1, 1)); },
                              std::vector<Tensor>{x, w}) <= 1e-4);
    }
    {
      Tensor x = random_tensor({6}, rng);
      Tensor probe = random_tensor({6}, rng, false);
      CHECK(finite_diff_check([&](Tape* t) { return dot(t, softmax(t, x), probe); },
                              std::vector<Tensor>{x}) <= 1e-4);
    }
    {
      Tensor x = random_tensor({5}, rng);
      Tensor g = random_tensor({5}, rng, true, 0.5, 1.5);
      Tensor b = random_tensor({5}, rng);
      CHECK(finite_diff_check([&](Tape* t) { return sum(t, layer_norm(t, x, g, b)); },
                              std::vector<Tensor>{x, g, b}) <= 1e-4);
    }
    {
      Tensor x = random_tensor({3, 3, 3}, rng);
      CHECK(finite_diff_check([&](Tape* t) { return sum(t, global_avg_pool(t, x)); },
                              std::vector<Tensor>{x}) <= 1e-4);
    }
    {
      Tensor x = random_tensor({4}, rng, true, 0.3, 2.0);
      Tensor probe = random_tensor({4}, rng, false);
      CHECK(finite_diff_check([&](Tape* t) { return dot(t, l2_normalize(t, x), probe); },
                              std::vector<Tensor>{x}) <= 1e-4);
    }
    {
      Tensor a = random_tensor({5}, rng);
      Tensor b = random_tensor({5}, rng);
      CHECK(finite_diff_check(
                [&](Tape* t) {
                  Tensor parts[] = {relu(t, a), tanh(t, b), mul(t, a, b)};
                  return norm2(t, concat(t, parts));
                },
                std::vector<Tensor>{a, b}) <= 1e-4);
    }
    {
      Tensor x = random_tensor({4}, rng, true, -2.0, 2.0);
      Tensor s = random_tensor({1}, rng, true, 0.2, 1.0);
      CHECK(finite_diff_check([&](Tape* t) { return sum(t, abs(t, scale_by(t, x, s))); },
                              std::vector<Tensor>{x, s}) <= 1e-4);
    }
  }
}

TEST_CASE("forward execution is deterministic") {
  Rng rng1(55), rng2(55);
  Tensor a1 = random_tensor({8, 8}, rng1, false);
  Tensor a2 = random_tensor({8, 8}, rng2, false);
  REQUIRE(a1.values() == a2.values());
  Tensor y1 = softmax(nullptr, matvec(nullptr, a1, Tensor::full({8}, 0.5)));
  Tensor y2 = softmax(nullptr, matvec(nullptr, a2, Tensor::full({8}, 0.5)));
  CHECK(y1.values() == y2.values());
}

TEST_CASE("tape replays nodes exactly once") {
  Tensor x = Tensor::of({2}, {1.0, 2.0}, true);
  Tape tape;
  Tensor y = sum(&tape, mul(&tape, x, x));
  CHECK(tape.node_count() == 2);
  tape.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(2.0));
  CHECK(x.grad()[1] == doctest::Approx(4.0));
}
