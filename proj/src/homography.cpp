#include "gazekit/homography.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "gazekit/rng.hpp"

namespace gazekit {

Homography Homography::translation(double tx, double ty) {
  Homography t;
  t.h = {1, 0, tx, 0, 1, ty, 0, 0, 1};
  return t;
}

double Homography::det() const {
  const auto& m = h;
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

namespace {

struct NormXform {
  // Similarity p' = s * (p - centroid).
  double s = 1.0;
  Vec2 c;
  Vec2 apply(Vec2 p) const { return {s * (p.x - c.x), s * (p.y - c.y)}; }
};

NormXform hartley_normalization(std::span<const Correspondence> pairs, bool use_dst) {
  NormXform t;
  for (const auto& p : pairs) {
    const Vec2 v = use_dst ? p.dst : p.src;
    t.c.x += v.x;
    t.c.y += v.y;
  }
  t.c.x /= double(pairs.size());
  t.c.y /= double(pairs.size());
  double mean_dist = 0.0;
  for (const auto& p : pairs) {
    const Vec2 v = use_dst ? p.dst : p.src;
    mean_dist += std::hypot(v.x - t.c.x, v.y - t.c.y);
  }
  mean_dist /= double(pairs.size());
  t.s = mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;
  return t;
}

Homography normalize_scale(Homography h) {
  const double w = h.h[8];
  if (std::fabs(w) > 1e-10) {
    for (auto& v : h.h) v /= w;
  }
  return h;
}

}  // namespace

Homography estimate_homography(std::span<const Correspondence> pairs) {
  if (pairs.size() < 4)
    throw ValueError("estimate_homography: need at least 4 correspondences, got " +
                     std::to_string(pairs.size()));

  const NormXform ts = hartley_normalization(pairs, false);
  const NormXform td = hartley_normalization(pairs, true);

  const auto n = std::ptrdiff_t(pairs.size());
  Eigen::MatrixXd a(2 * n, 9);
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const Vec2 s = ts.apply(pairs[std::size_t(i)].src);
    const Vec2 d = td.apply(pairs[std::size_t(i)].dst);
    a.row(2 * i) << -s.x, -s.y, -1, 0, 0, 0, d.x * s.x, d.x * s.y, d.x;
    a.row(2 * i + 1) << 0, 0, 0, -s.x, -s.y, -1, d.y * s.x, d.y * s.y, d.y;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // A second vanishing singular value means the solution is not unique
  // (e.g. 3 collinear source points).
  if (sv(0) <= 0.0 || sv(7) / sv(0) < 1e-9)
    throw GeometryError("estimate_homography: degenerate point configuration");

  const Eigen::VectorXd hn = svd.matrixV().col(8);
  Eigen::Matrix3d hm;
  hm << hn(0), hn(1), hn(2), hn(3), hn(4), hn(5), hn(6), hn(7), hn(8);

  Eigen::Matrix3d ms, md_inv;
  ms << ts.s, 0, -ts.s * ts.c.x, 0, ts.s, -ts.s * ts.c.y, 0, 0, 1;
  md_inv << 1.0 / td.s, 0, td.c.x, 0, 1.0 / td.s, td.c.y, 0, 0, 1;
  const Eigen::Matrix3d full = md_inv * hm * ms;

  Homography out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out.h[std::size_t(r) * 3 + std::size_t(c)] = full(r, c);
  out = normalize_scale(out);
  if (std::fabs(out.det()) < 1e-12)
    throw GeometryError("estimate_homography: singular result");
  return out;
}

Vec2 apply_homography(const Homography& h, Vec2 p) {
  const auto& m = h.h;
  const double den = m[6] * p.x + m[7] * p.y + m[8];
  if (std::fabs(den) <= 1e-12)
    throw GeometryError("apply_homography: point maps to the horizon");
  return {(m[0] * p.x + m[1] * p.y + m[2]) / den, (m[3] * p.x + m[4] * p.y + m[5]) / den};
}

Homography compose(const Homography& h2, const Homography& h1) {
  Homography out;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k)
        acc += h2.h[std::size_t(r) * 3 + std::size_t(k)] * h1.h[std::size_t(k) * 3 + std::size_t(c)];
      out.h[std::size_t(r) * 3 + std::size_t(c)] = acc;
    }
  return out;
}

Homography inverse(const Homography& h) {
  const double d = h.det();
  if (std::fabs(d) < 1e-14) throw GeometryError("inverse: singular homography");
  const auto& m = h.h;
  Homography out;
  out.h = {(m[4] * m[8] - m[5] * m[7]) / d, (m[2] * m[7] - m[1] * m[8]) / d,
           (m[1] * m[5] - m[2] * m[4]) / d, (m[5] * m[6] - m[3] * m[8]) / d,
           (m[0] * m[8] - m[2] * m[6]) / d, (m[2] * m[3] - m[0] * m[5]) / d,
           (m[3] * m[7] - m[4] * m[6]) / d, (m[1] * m[6] - m[0] * m[7]) / d,
           (m[0] * m[4] - m[1] * m[3]) / d};
  return normalize_scale(out);
}

std::pair<double, double> reprojection_error(const Homography& h,
                                             std::span<const Correspondence> pairs) {
  if (pairs.empty()) throw ValueError("reprojection_error: no correspondences");
  double total = 0.0, worst = 0.0;
  for (const auto& p : pairs) {
    const Vec2 q = apply_homography(h, p.src);
    const double e = std::hypot(q.x - p.dst.x, q.y - p.dst.y);
    total += e;
    worst = std::max(worst, e);
  }
  return {total / double(pairs.size()), worst};
}

RansacResult estimate_homography_ransac(std::span<const Correspondence> pairs,
                                        double inlier_threshold_px, int iterations,
                                        std::uint64_t seed) {
  if (pairs.size() < 4)
    throw ValueError("estimate_homography_ransac: need at least 4 correspondences");
  Rng rng(seed);
  RansacResult best;
  best.iterations = iterations;

  std::vector<Correspondence> sample(4);
  for (int it = 0; it < iterations; ++it) {
    std::array<std::size_t, 4> idx{};
    for (int k = 0; k < 4;) {
      const auto cand = std::size_t(rng.uniform_int(std::int64_t(pairs.size())));
      bool dup = false;
      for (int j = 0; j < k; ++j) dup = dup || idx[std::size_t(j)] == cand;
      if (!dup) idx[std::size_t(k++)] = cand;
    }
    for (int k = 0; k < 4; ++k) sample[std::size_t(k)] = pairs[idx[std::size_t(k)]];

    Homography h;
    try {
      h = estimate_homography(sample);
    } catch (const GeometryError&) {
      continue;
    }
    std::vector<std::size_t> inliers;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      try {
        const Vec2 q = apply_homography(h, pairs[i].src);
        if (std::hypot(q.x - pairs[i].dst.x, q.y - pairs[i].dst.y) < inlier_threshold_px)
          inliers.push_back(i);
      } catch (const GeometryError&) {
      }
    }
    if (inliers.size() > best.inliers.size()) {
      best.h = h;
      best.inliers = std::move(inliers);
    }
  }
  if (best.inliers.size() < 4)
    throw GeometryError("estimate_homography_ransac: no model with 4 inliers found");

  std::vector<Correspondence> consensus;
  consensus.reserve(best.inliers.size());
  for (std::size_t i : best.inliers) consensus.push_back(pairs[i]);
  best.h = estimate_homography(consensus);
  return best;
}

MappedGaze transform_gaze_chain(Vec2 gaze_ref, const Homography& ref_to_scene, int frame_w,
                                int frame_h) {
  MappedGaze out;
  out.p = apply_homography(ref_to_scene, gaze_ref);
  out.in_frame = out.p.x >= 0.0 && out.p.x <= double(frame_w) && out.p.y >= 0.0 &&
                 out.p.y <= double(frame_h);
  return out;
}

std::vector<Correspondence> read_correspondences_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open correspondences: " + path);
  std::string line;
  if (!std::getline(f, line)) throw ParseError(path + ": empty file");
  auto strip = [](std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
    return s;
  };
  if (strip(line) != "marker_id,src_x,src_y,dst_x,dst_y")
    throw ParseError(path + ": expected header marker_id,src_x,src_y,dst_x,dst_y");
  std::vector<Correspondence> out;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    line = strip(line);
    if (line.empty()) continue;
    std::istringstream ss(line);
    Correspondence c;
    std::string field;
    try {
      std::getline(ss, c.id, ',');
      std::getline(ss, field, ',');
      c.src.x = std::stod(field);
      std::getline(ss, field, ',');
      c.src.y = std::stod(field);
      std::getline(ss, field, ',');
      c.dst.x = std::stod(field);
      std::getline(ss, field, ',');
      c.dst.y = std::stod(field);
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": malformed row '" + line + "'");
    }
    if (!std::isfinite(c.src.x) || !std::isfinite(c.src.y) || !std::isfinite(c.dst.x) ||
        !std::isfinite(c.dst.y))
      throw ParseError(path + ":" + std::to_string(lineno) + ": non-finite coordinate");
    out.push_back(std::move(c));
  }
  return out;
}

std::string homography_to_json(const Homography& h) {
  nlohmann::json j;
  j["h"] = h.h;
  return j.dump(2);
}

Homography homography_from_json(const std::string& json_text) {
  const auto j = nlohmann::json::parse(json_text, nullptr, false);
  if (j.is_discarded() || !j.contains("h") || !j["h"].is_array() || j["h"].size() != 9)
    throw ParseError("homography json: expected {\"h\": [9 values]}");
  Homography h;
  for (std::size_t i = 0; i < 9; ++i) h.h[i] = j["h"][i].get<double>();
  return h;
}

}  // namespace gazekit
