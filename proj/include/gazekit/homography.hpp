#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "gazekit/errors.hpp"

namespace gazekit {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

// Point pair between the fixed reference image and the scene camera image,
// e.g. from dashboard marker detections.
struct Correspondence {
  Vec2 src;
  Vec2 dst;
  std::string id;
};

// 3x3 planar projective map, row-major, normalized so h[8] == 1 whenever that
// entry is well-conditioned.
struct Homography {
  std::array<double, 9> h{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Homography identity() { return Homography{}; }
  static Homography translation(double tx, double ty);
  double det() const;
};

// Least-squares projective fit via the normalized direct linear transform
// (Hartley normalization, smallest right singular vector of the 2n x 9 system).
// Throws ValueError for < 4 pairs and GeometryError for degenerate inputs.
Homography estimate_homography(std::span<const Correspondence> pairs);

Vec2 apply_homography(const Homography& h, Vec2 p);

Homography compose(const Homography& h2, const Homography& h1);  // h2 after h1
Homography inverse(const Homography& h);

// (mean, max) Euclidean residual of apply(h, src) against dst.
std::pair<double, double> reprojection_error(const Homography& h,
                                             std::span<const Correspondence> pairs);

struct RansacResult {
  Homography h;
  std::vector<std::size_t> inliers;
  int iterations = 0;
};

// Seeded RANSAC around the DLT; refits on the final inlier set.
RansacResult estimate_homography_ransac(std::span<const Correspondence> pairs,
                                        double inlier_threshold_px = 3.0, int iterations = 1000,
                                        std::uint64_t seed = 1);

struct MappedGaze {
  Vec2 p;
  bool in_frame = true;
};

// Maps a gaze point already expressed in reference-image coordinates into the
// scene camera frame; flags out-of-frame results without clamping.
MappedGaze transform_gaze_chain(Vec2 gaze_ref, const Homography& ref_to_scene, int frame_w,
                                int frame_h);

// CSV with header marker_id,src_x,src_y,dst_x,dst_y.
std::vector<Correspondence> read_correspondences_csv(const std::string& path);

// 9 decimal values, row-major, under key "h".
std::string homography_to_json(const Homography& h);
Homography homography_from_json(const std::string& json_text);

}  // namespace gazekit
