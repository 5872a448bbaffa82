#include "gazekit/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gazekit/errors.hpp"

namespace gazekit {

Image Image::filled(int width, int height, std::uint8_t value) {
  if (width < 1 || height < 1) throw ValueError("Image::filled: empty image");
  Image img;
  img.width = width;
  img.height = height;
  img.rgb.assign(std::size_t(width) * height * 3, value);
  return img;
}

namespace {

// PPM token reader: skips whitespace and '#' comments.
std::string next_token(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
  while (pos < bytes.size()) {
    const char c = char(bytes[pos]);
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    tok.push_back(char(bytes[pos]));
    ++pos;
  }
  return tok;
}

int parse_dim(const std::string& tok, const char* what) {
  if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
    throw ParseError(std::string("ppm: malformed ") + what + " '" + tok + "'");
  return std::stoi(tok);
}

}  // namespace

Image decode_ppm(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  if (next_token(bytes, pos) != "P6") throw ParseError("ppm: expected magic 'P6'");
  const int w = parse_dim(next_token(bytes, pos), "width");
  const int h = parse_dim(next_token(bytes, pos), "height");
  const int maxval = parse_dim(next_token(bytes, pos), "maxval");
  if (w < 1 || h < 1) throw ParseError("ppm: non-positive dimensions");
  if (maxval != 255) throw ParseError("ppm: only maxval 255 is supported");
  if (pos >= bytes.size()) throw ParseError("ppm: truncated header");
  ++pos;  // single whitespace byte after maxval
  const std::size_t need = std::size_t(w) * h * 3;
  if (bytes.size() - pos < need) throw ParseError("ppm: truncated pixel data");
  Image img;
  img.width = w;
  img.height = h;
  img.rgb.assign(bytes.begin() + std::ptrdiff_t(pos), bytes.begin() + std::ptrdiff_t(pos + need));
  return img;
}

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  if (img.width < 1 || img.height < 1) throw ValueError("ppm: empty image");
  std::string header =
      "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.rgb.begin(), img.rgb.end());
  return out;
}

Image read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open image: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  try {
    return decode_ppm(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_ppm(const std::string& path, const Image& img) {
  const auto bytes = encode_ppm(img);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!f) throw IoError("write failed: " + path);
}

Tensor image_to_tensor01(const Image& img) {
  if (img.width < 1 || img.height < 1) throw ValueError("image_to_tensor01: empty image");
  Tensor t = Tensor::zeros({3, img.height, img.width});
  auto& v = t.values();
  const std::size_t plane = std::size_t(img.width) * img.height;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c)
        v[std::size_t(c) * plane + std::size_t(y) * img.width + x] = img.at(x, y, c) / 255.0;
  return t;
}

Tensor resize_bilinear(const Tensor& t, int out_h, int out_w) {
  if (t.rank() != 3) throw ShapeError("resize_bilinear: expects CxHxW");
  if (out_h < 1 || out_w < 1) throw ValueError("resize_bilinear: empty target");
  const int c = t.dim(0), ih = t.dim(1), iw = t.dim(2);
  if (ih == out_h && iw == out_w) {
    Tensor copy = Tensor::zeros(t.shape());
    copy.values() = t.values();
    return copy;
  }
  Tensor out = Tensor::zeros({c, out_h, out_w});
  const double sy = double(ih) / out_h;
  const double sx = double(iw) / out_w;
  for (int oy = 0; oy < out_h; ++oy) {
    const double fy = std::clamp((oy + 0.5) * sy - 0.5, 0.0, double(ih - 1));
    const int y0 = int(fy);
    const int y1 = std::min(y0 + 1, ih - 1);
    const double wy = fy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      const double fx = std::clamp((ox + 0.5) * sx - 0.5, 0.0, double(iw - 1));
      const int x0 = int(fx);
      const int x1 = std::min(x0 + 1, iw - 1);
      const double wx = fx - x0;
      for (int ci = 0; ci < c; ++ci) {
        const double v00 = t(ci, y0, x0), v01 = t(ci, y0, x1);
        const double v10 = t(ci, y1, x0), v11 = t(ci, y1, x1);
        const double top = v00 + (v01 - v00) * wx;
        const double bot = v10 + (v11 - v10) * wx;
        out.values()[(std::size_t(ci) * out_h + oy) * out_w + ox] = top + (bot - top) * wy;
      }
    }
  }
  return out;
}

Tensor normalize_channels(const Tensor& t, const NormStats& stats) {
  if (t.rank() != 3 || t.dim(0) != 3) throw ShapeError("normalize_channels: expects 3xHxW");
  Tensor out = Tensor::zeros(t.shape());
  const std::size_t plane = std::size_t(t.dim(1)) * t.dim(2);
  for (int c = 0; c < 3; ++c) {
    const double m = stats.mean[std::size_t(c)];
    const double s = stats.std[std::size_t(c)];
    const double* src = t.values().data() + c * plane;
    double* dst = out.values().data() + c * plane;
    for (std::size_t i = 0; i < plane; ++i) dst[i] = (src[i] - m) / s;
  }
  return out;
}

Tensor decode_and_normalize(const std::string& path, int target_h, int target_w,
                            const NormStats& stats) {
  const Image img = read_ppm(path);
  return normalize_channels(resize_bilinear(image_to_tensor01(img), target_h, target_w), stats);
}

void draw_circle(Image& img, double cx, double cy, double radius,
                 std::array<std::uint8_t, 3> color) {
  const int x0 = std::max(0, int(std::floor(cx - radius - 1)));
  const int x1 = std::min(img.width - 1, int(std::ceil(cx + radius + 1)));
  const int y0 = std::max(0, int(std::floor(cy - radius - 1)));
  const int y1 = std::min(img.height - 1, int(std::ceil(cy + radius + 1)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double d = std::hypot(x - cx, y - cy);
      if (d <= radius && d >= radius - 2.0)
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = color[std::size_t(c)];
    }
}

}  // namespace gazekit
