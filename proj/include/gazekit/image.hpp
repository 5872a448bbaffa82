#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "gazekit/tensor.hpp"

namespace gazekit {

// Interleaved 8-bit RGB raster.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // 3 * width * height, row-major

  std::uint8_t& at(int x, int y, int c) {
    return rgb[(std::size_t(y) * width + x) * 3 + std::size_t(c)];
  }
  std::uint8_t at(int x, int y, int c) const {
    return rgb[(std::size_t(y) * width + x) * 3 + std::size_t(c)];
  }
  static Image filled(int width, int height, std::uint8_t value);
};

// Binary PPM (P6), maxval 255 only. Bit-exact round trip.
Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);
Image decode_ppm(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_ppm(const Image& img);

struct NormStats {
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> std{0.229, 0.224, 0.225};
};

// Image as a 3xHxW tensor of [0,1] intensities.
Tensor image_to_tensor01(const Image& img);

// Bilinear resampling with pixel-center alignment, channels-planar doubles.
Tensor resize_bilinear(const Tensor& t, int out_h, int out_w);

// Channel-wise (x - mean) / std.
Tensor normalize_channels(const Tensor& t, const NormStats& stats);

// Decoded, resized and normalized in one step.
Tensor decode_and_normalize(const std::string& path, int target_h, int target_w,
                            const NormStats& stats);

// Ring of outer radius r (thickness ~2px) for prediction/ground-truth overlays.
void draw_circle(Image& img, double cx, double cy, double radius,
                 std::array<std::uint8_t, 3> color);

}  // namespace gazekit
