#include "gazekit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "gazekit/errors.hpp"

namespace gazekit {

double angular_error_deg(const std::array<double, 3>& g_hat, const std::array<double, 3>& g) {
  double d = g_hat[0] * g[0] + g_hat[1] * g[1] + g_hat[2] * g[2];
  d = std::clamp(d, -1.0, 1.0);
  return std::acos(d) * 180.0 / M_PI;
}

double pixel_error(std::array<double, 2> p_hat, std::array<double, 2> p, int w_img, int h_img) {
  if (w_img < 1 || h_img < 1) throw ValueError("pixel_error: image dims must be positive");
  const double dx = (p_hat[0] - p[0]) * w_img;
  const double dy = (p_hat[1] - p[1]) * h_img;
  return std::hypot(dx, dy);
}

double image_diagonal(int w_img, int h_img) {
  return std::sqrt(double(w_img) * w_img + double(h_img) * h_img);
}

std::vector<CumulativeRow> cumulative_accuracy(std::span<const double> errors_px,
                                               std::span<const double> thresholds_px) {
  if (errors_px.empty()) throw ValueError("cumulative_accuracy: no errors given");
  std::vector<CumulativeRow> out;
  out.reserve(thresholds_px.size());
  for (double t : thresholds_px) {
    CumulativeRow row;
    row.threshold_px = t;
    for (double e : errors_px)
      if (e < t) ++row.count;
    row.accuracy_pct = 100.0 * double(row.count) / double(errors_px.size());
    out.push_back(row);
  }
  return out;
}

std::vector<SpatialBinRow> spatial_bin_errors(
    std::span<const std::pair<double, double>> samples, std::span<const double> edges) {
  if (edges.size() < 2) throw ValueError("spatial_bin_errors: need at least one bin");
  const std::size_t bins = edges.size() - 1;
  std::vector<std::vector<double>> grouped(bins);
  for (const auto& [x, err] : samples) {
    // Last bin is closed on the right so border points are kept.
    std::size_t b = bins - 1;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i)
      if (x >= edges[i] && x < edges[i + 1]) {
        b = i;
        break;
      }
    grouped[b].push_back(err);
  }
  std::vector<SpatialBinRow> out(bins);
  for (std::size_t i = 0; i < bins; ++i) {
    out[i].x_lo = edges[i];
    out[i].x_hi = edges[i + 1];
    out[i].count = std::int64_t(grouped[i].size());
    out[i].share_pct =
        samples.empty() ? 0.0 : 100.0 * double(grouped[i].size()) / double(samples.size());
    if (!grouped[i].empty()) {
      out[i].mpe = mean_of(grouped[i]);
      out[i].sd = population_sd(grouped[i]);
    }
  }
  return out;
}

Heatmap gaze_density_heatmap(std::span<const std::pair<double, double>> points_px, int cell,
                             int w_img, int h_img) {
  if (cell < 1) throw ValueError("gaze_density_heatmap: cell must be >= 1");
  if (w_img < 1 || h_img < 1) throw ValueError("gaze_density_heatmap: empty image");
  Heatmap hm;
  hm.cell = cell;
  hm.cols = (w_img + cell - 1) / cell;
  hm.rows = (h_img + cell - 1) / cell;
  hm.counts.assign(std::size_t(hm.cols) * hm.rows, 0);
  for (const auto& [x, y] : points_px) {
    if (x < 0.0 || y < 0.0 || x > double(w_img) || y > double(h_img)) continue;
    const int cx = std::min(hm.cols - 1, int(x) / cell);
    const int cy = std::min(hm.rows - 1, int(y) / cell);
    ++hm.counts[std::size_t(cy) * hm.cols + cx];
    ++hm.total;
  }
  return hm;
}

double pairwise_sum(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  if (xs.size() <= 8) {
    double acc = 0.0;
    for (double v : xs) acc += v;
    return acc;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

double mean_of(std::span<const double> xs) {
  if (xs.empty()) throw ValueError("mean_of: empty input");
  return pairwise_sum(xs) / double(xs.size());
}

double population_sd(std::span<const double> xs) {
  const double mu = mean_of(xs);
  std::vector<double> sq(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - mu) * (xs[i] - mu);
  return std::sqrt(pairwise_sum(sq) / double(xs.size()));
}

double median_of(std::vector<double> xs) {
  if (xs.empty()) throw ValueError("median_of: empty input");
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

EvalReport build_eval_report(std::span<const double> errors_px,
                             std::span<const std::pair<double, double>> spatial_samples,
                             std::optional<double> mae_deg, int w_img, int h_img) {
  if (errors_px.empty()) throw ValueError("build_eval_report: no samples");
  EvalReport r;
  r.sample_size = std::int64_t(errors_px.size());
  r.image_w = w_img;
  r.image_h = h_img;
  r.mpe_px = mean_of(errors_px);
  r.sd_px = population_sd(errors_px);
  r.median_px = median_of(std::vector<double>(errors_px.begin(), errors_px.end()));
  r.mae_deg = mae_deg;
  r.normalized_error_pct = 100.0 * r.mpe_px / image_diagonal(w_img, h_img);
  r.cumulative = cumulative_accuracy(errors_px, kDefaultThresholdsPx);
  r.spatial_bins = spatial_bin_errors(spatial_samples, kSpatialEdgesPx);
  return r;
}

std::string eval_report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["mpe_px"] = r.mpe_px;
  j["sd_px"] = r.sd_px;
  j["median_px"] = r.median_px;
  if (r.mae_deg)
    j["mae_deg"] = *r.mae_deg;
  else
    j["mae_deg"] = nullptr;
  j["normalized_error_pct"] = r.normalized_error_pct;
  j["sample_size"] = r.sample_size;
  j["image_w"] = r.image_w;
  j["image_h"] = r.image_h;
  j["cumulative"] = nlohmann::json::array();
  for (const auto& row : r.cumulative)
    j["cumulative"].push_back(
        {{"threshold", row.threshold_px}, {"count", row.count}, {"accuracy", row.accuracy_pct}});
  j["spatial_bins"] = nlohmann::json::array();
  for (const auto& b : r.spatial_bins) {
    nlohmann::json jb{{"x_lo", b.x_lo},   {"x_hi", b.x_hi},
                      {"count", b.count}, {"share_pct", b.share_pct}};
    jb["mpe"] = b.mpe ? nlohmann::json(*b.mpe) : nlohmann::json(nullptr);
    jb["sd"] = b.sd ? nlohmann::json(*b.sd) : nlohmann::json(nullptr);
    j["spatial_bins"].push_back(jb);
  }
  return j.dump(2);
}

namespace {

std::string fmt2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

}  // namespace

void write_eval_report(const EvalReport& r, const std::string& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir + "/summary.csv");
    if (!f) throw IoError("cannot write summary.csv in " + dir);
    f << "mpe_px,sd_px,median_px,mae_deg,normalized_error_pct,sample_size\n";
    f << fmt2(r.mpe_px) << "," << fmt2(r.sd_px) << "," << fmt2(r.median_px) << ","
      << (r.mae_deg ? fmt2(*r.mae_deg) : std::string()) << "," << fmt2(r.normalized_error_pct)
      << "," << r.sample_size << "\n";
  }
  {
    std::ofstream f(dir + "/cumulative.csv");
    if (!f) throw IoError("cannot write cumulative.csv in " + dir);
    f << "threshold,count,accuracy\n";
    for (const auto& row : r.cumulative)
      f << row.threshold_px << "," << row.count << "," << fmt2(row.accuracy_pct) << "\n";
  }
  {
    std::ofstream f(dir + "/spatial_bins.csv");
    if (!f) throw IoError("cannot write spatial_bins.csv in " + dir);
    f << "x_lo,x_hi,mpe,sd,count,share_pct\n";
    for (const auto& b : r.spatial_bins)
      f << b.x_lo << "," << b.x_hi << "," << (b.mpe ? fmt2(*b.mpe) : std::string()) << ","
        << (b.sd ? fmt2(*b.sd) : std::string()) << "," << b.count << "," << fmt2(b.share_pct)
        << "\n";
  }
  {
    std::ofstream f(dir + "/report.json");
    if (!f) throw IoError("cannot write report.json in " + dir);
    f << eval_report_to_json(r) << "\n";
  }
}

}  // namespace gazekit
