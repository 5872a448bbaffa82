#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "gazekit/homography.hpp"
#include "gazekit/rng.hpp"

using namespace gazekit;

namespace {

Homography random_homography(Rng& rng) {
  // Identity plus a moderate projective perturbation; keeps test points away
  // from the horizon.
  Homography h;
  h.h = {1.0 + rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2),  rng.uniform(-40.0, 40.0),
         rng.uniform(-0.2, 0.2),       1.0 + rng.uniform(-0.2, 0.2), rng.uniform(-40.0, 40.0),
         rng.uniform(-1e-4, 1e-4),     rng.uniform(-1e-4, 1e-4),     1.0};
  return h;
}

std::vector<Correspondence> synthesize_pairs(const Homography& h, int n, Rng& rng) {
  std::vector<Correspondence> pairs;
  pairs.reserve(std::size_t(n));
  for (int i = 0; i < n; ++i) {
    Correspondence c;
    c.id = "m" + std::to_string(i);
    c.src = {rng.uniform(0.0, 640.0), rng.uniform(0.0, 480.0)};
    c.dst = apply_homography(h, c.src);
    pairs.push_back(std::move(c));
  }
  return pairs;
}

double action_distance(const Homography& a, const Homography& b, Rng& rng) {
  double worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const Vec2 p{rng.uniform(0.0, 640.0), rng.uniform(0.0, 480.0)};
    const Vec2 qa = apply_homography(a, p);
    const Vec2 qb = apply_homography(b, p);
    worst = std::max(worst, std::hypot(qa.x - qb.x, qa.y - qb.y));
  }
  return worst;
}

}  // namespace

TEST_CASE("four exact corners under a translation recover the translation") {
  const Homography gt = Homography::translation(17.0, -4.5);
  std::vector<Correspondence> pairs;
  for (const auto& [x, y] :
       std::vector<std::pair<double, double>>{{0, 0}, {1, 0}, {1, 1}, {0, 1}}) {
    Correspondence c;
    c.src = {x, y};
    c.dst = apply_homography(gt, c.src);
    pairs.push_back(c);
  }
  const Homography h = estimate_homography(pairs);
  const auto [mean_err, max_err] = reprojection_error(h, pairs);
  CHECK(max_err < 1e-9);
  CHECK(h.h[2] == doctest::Approx(17.0).epsilon(1e-9));
  CHECK(h.h[5] == doctest::Approx(-4.5).epsilon(1e-9));
}

TEST_CASE("20 noiseless points recover a random homography to 1e-6") {
  Rng rng(2024);
  for (int trial = 0; trial < 5; ++trial) {
    const Homography gt = random_homography(rng);
    const auto pairs = synthesize_pairs(gt, 20, rng);
    const Homography h = estimate_homography(pairs);
    for (int i = 0; i < 9; ++i)
      CHECK(std::fabs(h.h[std::size_t(i)] - gt.h[std::size_t(i)] / gt.h[8]) <= 1e-6);
  }
}

TEST_CASE("degenerate configurations are rejected") {
  std::vector<Correspondence> collinear;
  for (double x : {0.0, 1.0, 2.0, 3.0}) {
    Correspondence c;
    c.src = {x, 2.0 * x + 1.0};  // all on one line
    c.dst = {x + 5.0, 2.0 * x + 1.0};
    collinear.push_back(c);
  }
  CHECK_THROWS_AS(estimate_homography(collinear), GeometryError);

  std::vector<Correspondence> three(collinear.begin(), collinear.begin() + 3);
  CHECK_THROWS_AS(estimate_homography(three), ValueError);
}

TEST_CASE("apply_homography identity, translation, and matrix oracle") {
  const Vec2 p{3.5, -2.0};
  const Vec2 q = apply_homography(Homography::identity(), p);
  CHECK(q.x == p.x);
  CHECK(q.y == p.y);

  const Vec2 t = apply_homography(Homography::translation(2.0, 3.0), p);
  CHECK(t.x == doctest::Approx(5.5));
  CHECK(t.y == doctest::Approx(1.0));

  Rng rng(7);
  const Homography h = random_homography(rng);
  for (int i = 0; i < 20; ++i) {
    const Vec2 a{rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0)};
    // Direct homogeneous multiply, written out independently.
    const double w = h.h[6] * a.x + h.h[7] * a.y + h.h[8];
    const double ex = (h.h[0] * a.x + h.h[1] * a.y + h.h[2]) / w;
    const double ey = (h.h[3] * a.x + h.h[4] * a.y + h.h[5]) / w;
    const Vec2 got = apply_homography(h, a);
    CHECK(got.x == doctest::Approx(ex).epsilon(1e-12));
    CHECK(got.y == doctest::Approx(ey).epsilon(1e-12));
  }

  Homography horizon;
  horizon.h = {1, 0, 0, 0, 1, 0, 0, -1, 0};  // denominator vanishes at y=0
  CHECK_THROWS_AS(apply_homography(horizon, Vec2{1.0, 0.0}), GeometryError);
}

TEST_CASE("composition matches sequential application") {
  Rng rng(11);
  const Homography h1 = random_homography(rng);
  const Homography h2 = random_homography(rng);
  const Homography h21 = compose(h2, h1);
  for (int i = 0; i < 30; ++i) {
    const Vec2 p{rng.uniform(0.0, 200.0), rng.uniform(0.0, 200.0)};
    const Vec2 seq = apply_homography(h2, apply_homography(h1, p));
    const Vec2 one = apply_homography(h21, p);
    CHECK(std::hypot(seq.x - one.x, seq.y - one.y) <= 1e-9);
  }
}

TEST_CASE("inverse round trip") {
  Rng rng(13);
  const Homography h = random_homography(rng);
  const Homography hi = inverse(h);
  for (int i = 0; i < 20; ++i) {
    const Vec2 p{rng.uniform(0.0, 300.0), rng.uniform(0.0, 300.0)};
    const Vec2 back = apply_homography(hi, apply_homography(h, p));
    CHECK(std::hypot(back.x - p.x, back.y - p.y) <= 1e-9);
  }
}

TEST_CASE("scale invariance of the estimator") {
  Rng rng(17);
  const Homography gt = random_homography(rng);
  const auto pairs = synthesize_pairs(gt, 12, rng);
  const Homography h = estimate_homography(pairs);

  const double s = 3.7;
  std::vector<Correspondence> scaled = pairs;
  for (auto& c : scaled) {
    c.src = {c.src.x * s, c.src.y * s};
    c.dst = {c.dst.x * s, c.dst.y * s};
  }
  const Homography hs = estimate_homography(scaled);

  // hs should equal S h S^-1 in action.
  Rng probe(18);
  for (int i = 0; i < 30; ++i) {
    const Vec2 p{probe.uniform(0.0, 640.0), probe.uniform(0.0, 480.0)};
    const Vec2 via_h = apply_homography(h, {p.x / s, p.y / s});
    const Vec2 expect{via_h.x * s, via_h.y * s};
    const Vec2 got = apply_homography(hs, p);
    CHECK(std::hypot(got.x - expect.x, got.y - expect.y) <= 1e-6);
  }
}

TEST_CASE("reprojection error statistics") {
  const Homography id = Homography::identity();
  std::vector<Correspondence> pairs;
  for (int i = 0; i < 5; ++i) {
    Correspondence c;
    c.src = {double(i * 10), double(i * 3)};
    c.dst = c.src;
    pairs.push_back(c);
  }
  auto [mean0, max0] = reprojection_error(id, pairs);
  CHECK(mean0 == 0.0);
  CHECK(max0 == 0.0);

  pairs[2].dst.x += 5.0;  // single 5px perturbation
  auto [mean1, max1] = reprojection_error(id, pairs);
  CHECK(max1 == doctest::Approx(5.0).epsilon(1e-9));
  CHECK(mean1 == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(mean1 >= 1.0 - 1e-12);
}

TEST_CASE("ransac survives outliers") {
  Rng rng(23);
  const Homography gt = random_homography(rng);
  auto pairs = synthesize_pairs(gt, 30, rng);
  for (std::size_t i = 0; i < 6; ++i) {
    pairs[i * 5].dst.x += rng.uniform(50.0, 120.0);
    pairs[i * 5].dst.y -= rng.uniform(50.0, 120.0);
  }
  const RansacResult res = estimate_homography_ransac(pairs, 3.0, 1000, 77);
  CHECK(res.inliers.size() == 24);
  Rng probe(5);
  CHECK(action_distance(res.h, gt, probe) <= 1e-6);

  // Determinism under fixed seed.
  const RansacResult res2 = estimate_homography_ransac(pairs, 3.0, 1000, 77);
  CHECK(res2.h.h == res.h.h);
}

TEST_CASE("transform_gaze_chain flags out-of-frame points without clamping") {
  const MappedGaze inside = transform_gaze_chain({100.0, 50.0}, Homography::identity(), 1280, 720);
  CHECK(inside.in_frame);
  CHECK(inside.p.x == 100.0);

  const MappedGaze outside =
      transform_gaze_chain({100.0, 50.0}, Homography::translation(1300.0, 0.0), 1280, 720);
  CHECK_FALSE(outside.in_frame);
  CHECK(outside.p.x == doctest::Approx(1400.0));
}

TEST_CASE("synthetic gaze mapping chain stays below 1e-6 px") {
  Rng rng(31);
  const Homography gt = random_homography(rng);
  const auto pairs = synthesize_pairs(gt, 25, rng);
  const Homography h = estimate_homography(pairs);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Vec2 gaze{rng.uniform(0.0, 640.0), rng.uniform(0.0, 480.0)};
    const Vec2 expect = apply_homography(gt, gaze);
    const MappedGaze got = transform_gaze_chain(gaze, h, 1280, 720);
    worst = std::max(worst, std::hypot(got.p.x - expect.x, got.p.y - expect.y));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("correspondence csv and homography json round trips") {
  const auto dir = std::filesystem::temp_directory_path() / "gazekit_homog_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "markers.csv").string();
  {
    std::ofstream f(path);
    f << "marker_id,src_x,src_y,dst_x,dst_y\n";
    f << "tag36_0,10.5,20.25,110.5,220.25\n";
    f << "tag36_1,0,0,100,200\n";
    f << "tag36_2,5,1,105,201\n";
    f << "tag36_3,8,9,108,209\n";
  }
  const auto pairs = read_correspondences_csv(path);
  REQUIRE(pairs.size() == 4);
  CHECK(pairs[0].id == "tag36_0");
  CHECK(pairs[0].src.x == doctest::Approx(10.5));
  CHECK(pairs[3].dst.y == doctest::Approx(209.0));

  {
    std::ofstream f(path, std::ios::app);
    f << "bad,row\n";
  }
  CHECK_THROWS_AS(read_correspondences_csv(path), ParseError);

  Rng rng(3);
  const Homography h = random_homography(rng);
  const Homography back = homography_from_json(homography_to_json(h));
  for (int i = 0; i < 9; ++i)
    CHECK(back.h[std::size_t(i)] == doctest::Approx(h.h[std::size_t(i)]).epsilon(1e-12));
  std::filesystem::remove_all(dir);
}
