#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace gazekit {

// acos(clip(g_hat . g, -1, 1)) in degrees.
double angular_error_deg(const std::array<double, 3>& g_hat, const std::array<double, 3>& g);

// Euclidean distance in pixels between normalized points scaled to the image.
double pixel_error(std::array<double, 2> p_hat, std::array<double, 2> p, int w_img, int h_img);

double image_diagonal(int w_img, int h_img);

inline constexpr std::array<double, 7> kDefaultThresholdsPx{50, 100, 105, 125, 150, 200, 500};

struct CumulativeRow {
  double threshold_px = 0.0;
  std::int64_t count = 0;
  double accuracy_pct = 0.0;
};

// Strict comparison (< threshold), matching the "<50" style row labels.
std::vector<CumulativeRow> cumulative_accuracy(std::span<const double> errors_px,
                                               std::span<const double> thresholds_px);

// Seven equal horizontal ranges of a 1280px-wide frame, printed as the
// rounded integer edges.
inline constexpr std::array<double, 8> kSpatialEdgesPx{0, 183, 366, 549, 732, 915, 1098, 1280};

struct SpatialBinRow {
  double x_lo = 0.0;
  double x_hi = 0.0;
  std::optional<double> mpe;  // absent when the bin is empty
  std::optional<double> sd;
  std::int64_t count = 0;
  double share_pct = 0.0;
};

// samples are (ground-truth x in px, pixel error).
std::vector<SpatialBinRow> spatial_bin_errors(
    std::span<const std::pair<double, double>> samples, std::span<const double> edges);

struct Heatmap {
  int cell = 5;
  int cols = 0;
  int rows = 0;
  std::vector<std::int64_t> counts;  // rows x cols, row-major
  std::int64_t total = 0;
};

// Gaze density over cell x cell pixel bins; boundary points clamp into the
// final row/column.
Heatmap gaze_density_heatmap(std::span<const std::pair<double, double>> points_px, int cell,
                             int w_img, int h_img);

// Deterministic pairwise summation; the reduction order is fixed regardless
// of how samples were produced.
double pairwise_sum(std::span<const double> xs);
double mean_of(std::span<const double> xs);
double population_sd(std::span<const double> xs);
double median_of(std::vector<double> xs);  // copies, sorts

struct EvalReport {
  double mpe_px = 0.0;
  double sd_px = 0.0;
  double median_px = 0.0;
  std::optional<double> mae_deg;
  double normalized_error_pct = 0.0;
  std::vector<CumulativeRow> cumulative;
  std::vector<SpatialBinRow> spatial_bins;
  std::int64_t sample_size = 0;
  int image_w = 1280;
  int image_h = 720;
};

EvalReport build_eval_report(std::span<const double> errors_px,
                             std::span<const std::pair<double, double>> spatial_samples,
                             std::optional<double> mae_deg, int w_img, int h_img);

std::string eval_report_to_json(const EvalReport& r);
// Writes summary.csv, cumulative.csv, spatial_bins.csv, report.json.
void write_eval_report(const EvalReport& r, const std::string& dir);

}  // namespace gazekit
