#include "gazekit/synth.hpp"

#include <cmath>
#include <filesystem>

#include "gazekit/rng.hpp"

namespace gazekit {

namespace {

struct DriverLook {
  std::array<double, 3> skin;
  EyeBox left, right;
};

DriverLook driver_look(std::uint64_t seed, int driver_idx, const SynthConfig& cfg) {
  Rng rng = Rng(seed).fork("driver." + std::to_string(driver_idx));
  DriverLook look;
  look.skin = {rng.uniform(135.0, 195.0), rng.uniform(100.0, 160.0), rng.uniform(80.0, 140.0)};
  const double s = cfg.face_size;
  const double bw = 0.24 * s, bh = 0.14 * s;
  const double jitter = 0.02 * s;
  look.left = {0.30 * s - bw / 2 + rng.uniform(-jitter, jitter),
               0.40 * s - bh / 2 + rng.uniform(-jitter, jitter), bw, bh};
  look.right = {0.70 * s - bw / 2 + rng.uniform(-jitter, jitter),
                0.40 * s - bh / 2 + rng.uniform(-jitter, jitter), bw, bh};
  return look;
}

std::uint8_t clamp_u8(double v) {
  return std::uint8_t(std::clamp(v, 0.0, 255.0));
}

void draw_scene(Image& img, std::array<double, 2> pog, Rng& rng, const SynthConfig& cfg) {
  const int s = cfg.scene_size;
  // Structured background: a few cosine waves plus speckle.
  std::array<double, 3> fx{}, fy{}, ph{}, amp{};
  for (int k = 0; k < 3; ++k) {
    fx[std::size_t(k)] = rng.uniform(0.5, 3.0) / s;
    fy[std::size_t(k)] = rng.uniform(0.5, 3.0) / s;
    ph[std::size_t(k)] = rng.uniform(0.0, 6.28318);
    amp[std::size_t(k)] = rng.uniform(8.0, 22.0);
  }
  const double cx = pog[0] * s;
  const double cy = pog[1] * s;
  const double sigma = cfg.blob_sigma_frac * s;
  for (int y = 0; y < s; ++y)
    for (int x = 0; x < s; ++x) {
      double base = 80.0;
      for (int k = 0; k < 3; ++k)
        base += amp[std::size_t(k)] *
                std::cos(6.28318 * (fx[std::size_t(k)] * x + fy[std::size_t(k)] * y) +
                         ph[std::size_t(k)]);
      base += cfg.noise_amp * (rng.uniform() - 0.5);
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      const double blob = 150.0 * std::exp(-d2 / (2.0 * sigma * sigma));
      img.at(x, y, 0) = clamp_u8(base * 0.9 + blob);
      img.at(x, y, 1) = clamp_u8(base + blob);
      img.at(x, y, 2) = clamp_u8(base * 1.1 + blob * 0.9);
    }
}

void draw_face(Image& img, const DriverLook& look, std::array<double, 2> iris_norm,
               const SynthConfig& cfg) {
  for (int y = 0; y < cfg.face_size; ++y)
    for (int x = 0; x < cfg.face_size; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = clamp_u8(look.skin[std::size_t(c)]);

  for (const EyeBox* box : {&look.left, &look.right}) {
    const int x0 = int(box->x), y0 = int(box->y);
    const int x1 = int(box->x + box->w), y1 = int(box->y + box->h);
    for (int y = y0; y <= y1 && y < img.height; ++y)
      for (int x = x0; x <= x1 && x < img.width; ++x)
        for (int c = 0; c < 3; ++c) img.at(x, y, c) = 235;
    const double ix = box->x + iris_norm[0] * box->w;
    const double iy = box->y + iris_norm[1] * box->h;
    const double radius = 0.22 * box->h;
    for (int y = std::max(0, int(iy - radius - 1)); y <= int(iy + radius + 1) && y < img.height;
         ++y)
      for (int x = std::max(0, int(ix - radius - 1)); x <= int(ix + radius + 1) && x < img.width;
           ++x)
        if (std::hypot(x - ix, y - iy) <= radius) {
          img.at(x, y, 0) = 45;
          img.at(x, y, 1) = 38;
          img.at(x, y, 2) = 60;
        }
  }
}

std::string zero_pad(int v, int width) {
  std::string s = std::to_string(v);
  while (int(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

}  // namespace

std::array<double, 2> recover_pog_from_iris(std::array<double, 2> iris_center_norm,
                                            const SynthConfig& cfg) {
  return {0.5 + (iris_center_norm[0] - 0.5) / cfg.iris_gain,
          0.5 + (iris_center_norm[1] - 0.5) / cfg.iris_gain};
}

std::array<double, 2> project_gaze_vec(const std::array<double, 3>& g, const SynthConfig& cfg) {
  if (g[2] <= 0.0) throw ValueError("project_gaze_vec: gaze must point forward");
  return {0.5 + g[0] / g[2] / cfg.focal_x, 0.5 + g[1] / g[2] / cfg.focal_y};
}

std::vector<SyntheticSample> generate_synthetic(std::uint64_t seed, int n,
                                                const SynthConfig& cfg) {
  if (n < 1) throw ValueError("generate_synthetic: n must be >= 1");
  if (cfg.n_drivers < 1 || cfg.iris_gain <= 0.0 || cfg.iris_gain > 1.0)
    throw ValueError("generate_synthetic: bad config");

  std::vector<DriverLook> looks;
  looks.reserve(std::size_t(cfg.n_drivers));
  for (int d = 0; d < cfg.n_drivers; ++d) looks.push_back(driver_look(seed, d, cfg));

  std::vector<SyntheticSample> out;
  out.reserve(std::size_t(n));
  for (int i = 0; i < n; ++i) {
    Rng rng = Rng(seed).fork("sample." + std::to_string(i));
    const int driver = int(std::int64_t(i) * cfg.n_drivers / n);

    SyntheticSample s;
    s.pog_true = {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)};

    bool left_valid = true, right_valid = true;
    const double r = rng.uniform();
    if (r < cfg.frac_both_iris_invalid) {
      left_valid = right_valid = false;
    } else if (r < cfg.frac_both_iris_invalid + cfg.frac_one_iris_invalid) {
      (rng.uniform() < 0.5 ? left_valid : right_valid) = false;
    }

    const std::array<double, 2> iris_norm{0.5 + cfg.iris_gain * (s.pog_true[0] - 0.5),
                                          0.5 + cfg.iris_gain * (s.pog_true[1] - 0.5)};

    s.scene = Image::filled(cfg.scene_size, cfg.scene_size, 0);
    draw_scene(s.scene, s.pog_true, rng, cfg);
    s.face = Image::filled(cfg.face_size, cfg.face_size, 0);
    const DriverLook& look = looks[std::size_t(driver)];
    draw_face(s.face, look, iris_norm, cfg);

    SampleRecord& rec = s.record;
    rec.driver_id = "synth_" + zero_pad(driver, 3);
    rec.face_path = "images/face_" + zero_pad(i, 5) + ".ppm";
    rec.scene_path = "images/scene_" + zero_pad(i, 5) + ".ppm";
    rec.eye_box_left = look.left;
    rec.eye_box_right = look.right;
    if (left_valid)
      rec.iris_left_px = {{look.left.x + iris_norm[0] * look.left.w,
                           look.left.y + iris_norm[1] * look.left.h}};
    if (right_valid)
      rec.iris_right_px = {{look.right.x + iris_norm[0] * look.right.w,
                            look.right.y + iris_norm[1] * look.right.h}};
    rec.gaze_norm = s.pog_true;
    std::array<double, 3> g{(s.pog_true[0] - 0.5) * cfg.focal_x,
                            (s.pog_true[1] - 0.5) * cfg.focal_y, 1.0};
    const double gn = std::sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2]);
    rec.gaze_vec = {{g[0] / gn, g[1] / gn, g[2] / gn}};
    rec.timestamp = 0.2 * i;

    out.push_back(std::move(s));
  }
  return out;
}

void write_synthetic_dataset(const std::string& dir, std::span<const SyntheticSample> samples) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "images");
  std::vector<SampleRecord> records;
  records.reserve(samples.size());
  for (const auto& s : samples) {
    write_ppm((fs::path(dir) / s.record.face_path).string(), s.face);
    write_ppm((fs::path(dir) / s.record.scene_path).string(), s.scene);
    records.push_back(s.record);
  }
  save_manifest((fs::path(dir) / "manifest.jsonl").string(), records);
}

}  // namespace gazekit
