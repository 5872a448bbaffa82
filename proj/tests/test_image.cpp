#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "gazekit/image.hpp"
#include "gazekit/rng.hpp"

using namespace gazekit;

TEST_CASE("ppm round trip is bit exact") {
  Rng rng(99);
  Image img = Image::filled(13, 7, 0);
  for (auto& b : img.rgb) b = std::uint8_t(rng.uniform_int(256));
  const auto bytes = encode_ppm(img);
  const Image back = decode_ppm(bytes);
  CHECK(back.width == img.width);
  CHECK(back.height == img.height);
  CHECK(back.rgb == img.rgb);
  CHECK(encode_ppm(back) == bytes);
}

TEST_CASE("ppm decode rejects malformed input") {
  CHECK_THROWS_AS(decode_ppm({'P', '5', '\n'}), ParseError);
  const std::string truncated = "P6\n4 4\n255\n";
  CHECK_THROWS_AS(decode_ppm(std::vector<std::uint8_t>(truncated.begin(), truncated.end())),
                  ParseError);
  const std::string bad_maxval = "P6\n1 1\n65535\nxxxxxx";
  CHECK_THROWS_AS(decode_ppm(std::vector<std::uint8_t>(bad_maxval.begin(), bad_maxval.end())),
                  ParseError);
}

TEST_CASE("ppm decode handles comments and whitespace") {
  std::string s = "P6 # binary\n# a comment line\n 2\t1 \n255\nabcdef";
  const Image img = decode_ppm(std::vector<std::uint8_t>(s.begin(), s.end()));
  CHECK(img.width == 2);
  CHECK(img.height == 1);
  CHECK(img.at(0, 0, 0) == 'a');
  CHECK(img.at(1, 0, 2) == 'f');
}

TEST_CASE("resize of a constant image is constant") {
  Tensor t = Tensor::full({3, 10, 6}, 0.25);
  Tensor r = resize_bilinear(t, 4, 4);
  for (double v : r.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("bilinear downscale preserves a linear ramp") {
  const int ih = 32, iw = 48, oh = 8, ow = 12;
  Tensor src = Tensor::zeros({3, ih, iw});
  auto ramp = [](double x, double y) { return 0.01 * x + 0.02 * y + 0.1; };
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < ih; ++y)
      for (int x = 0; x < iw; ++x)
        src.values()[(std::size_t(c) * ih + y) * iw + x] = ramp(x, y);
  Tensor dst = resize_bilinear(src, oh, ow);
  // Pixel-center mapping keeps linear functions linear; compare against the
  // analytically resampled ramp.
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const double fx = (x + 0.5) * (double(iw) / ow) - 0.5;
      const double fy = (y + 0.5) * (double(ih) / oh) - 0.5;
      CHECK(std::fabs(dst(0, y, x) - ramp(fx, fy)) <= 1e-3);
    }
}

TEST_CASE("normalization arithmetic") {
  Image gray = Image::filled(4, 4, 128);
  NormStats stats;
  stats.mean = {0.5, 0.5, 0.5};
  stats.std = {0.5, 0.5, 0.5};
  Tensor t = normalize_channels(image_to_tensor01(gray), stats);
  for (double v : t.values()) CHECK(v == doctest::Approx(128.0 / 255.0 * 2.0 - 1.0).epsilon(1e-9));
  CHECK(t.values()[0] == doctest::Approx(0.00392156862745).epsilon(1e-6));
}

TEST_CASE("decode determinism: same file, same tensor") {
  const auto dir = std::filesystem::temp_directory_path() / "gazekit_img_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "probe.ppm").string();
  Rng rng(3);
  Image img = Image::filled(9, 5, 0);
  for (auto& b : img.rgb) b = std::uint8_t(rng.uniform_int(256));
  write_ppm(path, img);
  NormStats stats;
  Tensor a = decode_and_normalize(path, 7, 7, stats);
  Tensor b = decode_and_normalize(path, 7, 7, stats);
  CHECK(a.values() == b.values());
  std::filesystem::remove_all(dir);
}

TEST_CASE("draw_circle marks a ring of the requested radius") {
  Image img = Image::filled(101, 101, 0);
  draw_circle(img, 50.0, 50.0, 20.0, {0, 255, 0});
  double max_d = 0.0, min_d = 1e9;
  int marked = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      if (img.at(x, y, 1) == 255) {
        const double d = std::hypot(x - 50.0, y - 50.0);
        max_d = std::max(max_d, d);
        min_d = std::min(min_d, d);
        ++marked;
      }
  CHECK(marked > 0);
  CHECK(max_d <= 20.0);
  CHECK(min_d >= 18.0);
}
