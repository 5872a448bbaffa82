#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "gazekit/checkpoint.hpp"
#include "gazekit/config.hpp"
#include "gazekit/homography.hpp"
#include "gazekit/metrics.hpp"
#include "gazekit/synth.hpp"
#include "gazekit/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace gazekit;

namespace {

// Exit-code contract: 0 success, 2 input/validation, 3 numerical abort,
// 4 geometric/protocol failure, 5 gradcheck failure.
constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitGeometry = 4;
constexpr int kExitGradcheck = 5;

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const GeometryError*>(&e)) return kExitGeometry;
  if (dynamic_cast<const ProtocolError*>(&e)) return kExitGeometry;
  return kExitInput;
}

// run.json: enough to reproduce the run (command, resolved config, seed,
// artifact paths). Written atomically, no timestamps, so reruns are
// byte-identical.
void write_run_manifest(const std::string& dir, const std::string& command, const json& config,
                        std::uint64_t seed, const std::vector<std::string>& artifacts,
                        int exit_status) {
  try {
    fs::create_directories(dir);
    json j;
    j["command"] = command;
    j["config"] = config;
    j["seed"] = seed;
    j["artifacts"] = artifacts;
    j["exit_status"] = exit_status;
    const fs::path final_path = fs::path(dir) / "run.json";
    const fs::path tmp_path = fs::path(dir) / "run.json.tmp";
    {
      std::ofstream f(tmp_path);
      f << j.dump(2) << "\n";
    }
    fs::rename(tmp_path, final_path);
  } catch (const std::exception& e) {
    std::cerr << "warning: could not write run manifest: " << e.what() << "\n";
  }
}

TrainConfig config_from_file_or_default(const std::string& path) {
  if (path.empty()) return train_config_from_json(json::object());
  return load_train_config(path);
}

std::vector<LoadedSample> prepare_all(std::span<const SampleRecord> records,
                                      const std::string& base_dir, const ModelConfig& mc) {
  std::vector<LoadedSample> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(prepare_sample(r, base_dir, mc));
  return out;
}

int cmd_synth(int n, std::uint64_t seed, const std::string& out_dir,
              const std::string& config_path) {
  json synth_json = json::object();
  if (!config_path.empty()) {
    std::ifstream f(config_path);
    if (!f) throw IoError("cannot open config: " + config_path);
    const json j = json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ParseError("config: invalid JSON in " + config_path);
    if (j.contains("synth")) synth_json = j["synth"];
  }
  const SynthConfig sc = synth_config_from_json(synth_json);
  const auto samples = generate_synthetic(seed, n, sc);
  write_synthetic_dataset(out_dir, samples);

  int with_gaps = 0;
  for (const auto& s : samples)
    if (!s.record.iris_left_px || !s.record.iris_right_px) ++with_gaps;
  std::cout << "wrote " << samples.size() << " samples (" << with_gaps
            << " with missing iris detections) to " << out_dir << "\n";

  write_run_manifest(out_dir, "synth", synth_config_to_json(sc), seed,
                     {"manifest.jsonl", "images/"}, kExitOk);
  return kExitOk;
}

int cmd_train(const std::string& manifest_path, const std::string& config_path,
              const std::string& out_ckpt, const std::string& resume_path, int epochs_override,
              std::int64_t seed_override) {
  TrainConfig cfg;
  TrainState state;
  std::vector<std::string> train_drivers;

  const auto records = load_manifest(manifest_path);
  if (records.empty()) throw ValueError("train: manifest is empty");

  if (!resume_path.empty()) {
    LoadedCheckpoint lc = load_checkpoint(resume_path);
    cfg = lc.config;
    state = std::move(lc.state);
    train_drivers = lc.train_drivers;
  } else {
    cfg = config_from_file_or_default(config_path);
    if (seed_override >= 0) cfg.seed = std::uint64_t(seed_override);
    state = make_train_state(cfg);
  }
  if (epochs_override > 0) cfg.epochs = epochs_override;

  const SplitResult split = apply_split(records, cfg.split, cfg.seed);
  for (const auto& w : split.warnings) std::cerr << "warning: " << w << "\n";
  if (train_drivers.empty()) train_drivers = drivers_in_order(split.train);

  const std::string base_dir = fs::path(manifest_path).parent_path().string();
  const auto train_set = prepare_all(split.train, base_dir, cfg.model);
  const auto val_set = prepare_all(split.val, base_dir, cfg.model);

  const auto curve = train(state, train_set, val_set, cfg);

  const fs::path ckpt_path(out_ckpt);
  const std::string out_dir =
      ckpt_path.parent_path().empty() ? "." : ckpt_path.parent_path().string();
  fs::create_directories(out_dir);
  save_checkpoint(out_ckpt, state, cfg, train_drivers);
  const std::string curve_path = (fs::path(out_dir) / "loss_curve.csv").string();
  // On resume, extend the existing curve file.
  std::vector<LossCurveRow> all_rows;
  if (!resume_path.empty() && fs::exists(curve_path)) {
    std::ifstream f(curve_path);
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
      LossCurveRow r;
      if (std::sscanf(line.c_str(), "%d,", &r.epoch) != 1) continue;
      const auto c1 = line.find(',');
      const auto c2 = line.find(',', c1 + 1);
      const auto c3 = line.find(',', c2 + 1);
      r.split = line.substr(c1 + 1, c2 - c1 - 1);
      r.loss_dir = std::stod(line.substr(c2 + 1, c3 - c2 - 1));
      r.loss_pog = std::stod(line.substr(c3 + 1));
      if (r.epoch < (curve.empty() ? state.next_epoch : curve.front().epoch))
        all_rows.push_back(r);
    }
  }
  all_rows.insert(all_rows.end(), curve.begin(), curve.end());
  write_loss_curve_csv(curve_path, all_rows);

  double final_dir = 0.0, final_pog = 0.0;
  for (auto it = curve.rbegin(); it != curve.rend(); ++it)
    if (it->split == "train") {
      final_dir = it->loss_dir;
      final_pog = it->loss_pog;
      break;
    }
  std::cout << "trained " << train_set.size() << " samples to epoch " << cfg.epochs
            << "; final train loss dir=" << final_dir << " pog=" << final_pog << "\n";
  std::cout << "checkpoint: " << out_ckpt << "\n";

  write_run_manifest(out_dir, "train", train_config_to_json(cfg), cfg.seed,
                     {out_ckpt, curve_path}, kExitOk);
  return kExitOk;
}

int cmd_eval(const std::string& manifest_path, const std::string& ckpt_path,
             const std::string& out_dir, const std::string& which_split,
             bool allow_train_overlap) {
  LoadedCheckpoint lc = load_checkpoint(ckpt_path);
  const auto records = load_manifest(manifest_path);
  if (records.empty()) throw ValueError("eval: manifest is empty");

  std::vector<SampleRecord> chosen;
  if (which_split == "all") {
    chosen = records;
  } else {
    const SplitResult split = apply_split(records, lc.config.split, lc.config.seed);
    if (which_split == "train")
      chosen = split.train;
    else if (which_split == "val")
      chosen = split.val;
    else if (which_split == "test")
      chosen = split.test;
    else
      throw ValueError("eval: unknown split '" + which_split + "'");
  }
  if (chosen.empty()) throw ValueError("eval: selected split is empty");

  const std::string base_dir = fs::path(manifest_path).parent_path().string();
  const auto samples = prepare_all(chosen, base_dir, lc.config.model);

  const std::vector<std::string>* guard = nullptr;
  if (!allow_train_overlap && which_split != "train") guard = &lc.train_drivers;
  const EvalReport report = evaluate(samples, lc.state.model, lc.config.eval_image_w,
                                     lc.config.eval_image_h, guard);
  write_eval_report(report, out_dir);

  std::cout << "samples: " << report.sample_size << "\n";
  std::cout << "mpe_px: " << report.mpe_px << "  sd_px: " << report.sd_px
            << "  median_px: " << report.median_px << "\n";
  std::cout << "normalized_error_pct: " << report.normalized_error_pct << "\n";
  if (report.mae_deg) std::cout << "mae_deg: " << *report.mae_deg << "\n";

  write_run_manifest(out_dir, "eval", train_config_to_json(lc.config), lc.config.seed,
                     {"summary.csv", "cumulative.csv", "spatial_bins.csv", "report.json"},
                     kExitOk);
  return kExitOk;
}

int cmd_infer(const std::string& face_path, const std::string& scene_path,
              const std::string& annotations_path, const std::string& ckpt_path,
              const std::string& overlay_path, const std::string& out_dir) {
  LoadedCheckpoint lc = load_checkpoint(ckpt_path);

  SampleRecord rec;
  rec.driver_id = "infer";
  rec.face_path = face_path;
  rec.scene_path = scene_path;
  bool have_gt = false;
  if (!annotations_path.empty()) {
    std::ifstream f(annotations_path);
    if (!f) throw IoError("cannot open annotations: " + annotations_path);
    const json j = json::parse(f, nullptr, false);
    if (j.is_discarded()) throw ParseError("annotations: invalid JSON");
    auto read_box = [](const json& b) {
      return EyeBox{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                    b[3].get<double>()};
    };
    if (j.contains("eye_boxes")) {
      if (j["eye_boxes"].contains("left")) rec.eye_box_left = read_box(j["eye_boxes"]["left"]);
      if (j["eye_boxes"].contains("right")) rec.eye_box_right = read_box(j["eye_boxes"]["right"]);
    }
    if (j.contains("iris_centers")) {
      const auto& ic = j["iris_centers"];
      if (ic.contains("left"))
        rec.iris_left_px = {{ic["left"][0].get<double>(), ic["left"][1].get<double>()}};
      if (ic.contains("right"))
        rec.iris_right_px = {{ic["right"][0].get<double>(), ic["right"][1].get<double>()}};
    }
    if (j.contains("gaze_norm")) {
      rec.gaze_norm = {j["gaze_norm"][0].get<double>(), j["gaze_norm"][1].get<double>()};
      have_gt = true;
    }
  }

  const Image face = read_ppm(face_path);
  Image scene = read_ppm(scene_path);
  const LoadedSample sample = prepare_from_images(rec, face, scene, lc.config.model);
  const ForwardResult fwd = lc.state.model.forward(nullptr, sample);

  const bool has_pog = fwd.pog.p_final.defined();
  json out;
  if (has_pog) {
    out["pog_norm"] = {fwd.pog.p_final(0), fwd.pog.p_final(1)};
    out["pog_px"] = {fwd.pog.p_final(0) * scene.width, fwd.pog.p_final(1) * scene.height};
    json alpha = json::array();
    for (int i = 0; i < fwd.pog.alpha.dim(0); ++i) alpha.push_back(fwd.pog.alpha(i));
    out["alpha"] = alpha;
  } else {
    out["pog_norm"] = nullptr;
    out["pog_px"] = nullptr;
    out["alpha"] = nullptr;
  }
  if (fwd.pog.g_hat.defined())
    out["direction"] = {fwd.pog.g_hat(0), fwd.pog.g_hat(1), fwd.pog.g_hat(2)};
  else
    out["direction"] = nullptr;
  out["iris_gate"] = fwd.gate;
  std::cout << out.dump(2) << "\n";

  std::vector<std::string> artifacts;
  if (!overlay_path.empty()) {
    if (!has_pog) throw ValueError("infer: --overlay requires a checkpoint with the PoG head");
    if (have_gt)
      draw_circle(scene, rec.gaze_norm[0] * scene.width, rec.gaze_norm[1] * scene.height, 20.0,
                  {0, 255, 0});
    draw_circle(scene, fwd.pog.p_final(0) * scene.width, fwd.pog.p_final(1) * scene.height, 20.0,
                {255, 0, 0});
    write_ppm(overlay_path, scene);
    artifacts.push_back(overlay_path);
  }

  write_run_manifest(out_dir, "infer", train_config_to_json(lc.config), lc.config.seed,
                     artifacts, kExitOk);
  return kExitOk;
}

int cmd_map_gaze(const std::string& corr_path, const std::string& gaze_path,
                 const std::string& out_path, bool use_ransac, int frame_w, int frame_h,
                 std::uint64_t seed) {
  const auto pairs = read_correspondences_csv(corr_path);
  Homography h;
  if (use_ransac) {
    const RansacResult rr = estimate_homography_ransac(pairs, 3.0, 1000, seed);
    h = rr.h;
    std::cout << "ransac inliers: " << rr.inliers.size() << "/" << pairs.size() << "\n";
  } else {
    h = estimate_homography(pairs);
  }
  const auto [mean_err, max_err] = reprojection_error(h, pairs);
  std::cout << "reprojection mean=" << mean_err << " max=" << max_err << " px\n";

  std::ifstream gf(gaze_path);
  if (!gf) throw IoError("cannot open gaze csv: " + gaze_path);
  std::string line;
  if (!std::getline(gf, line)) throw ParseError(gaze_path + ": empty file");

  const fs::path out(out_path);
  const std::string out_dir = out.parent_path().empty() ? "." : out.parent_path().string();
  fs::create_directories(out_dir);
  std::ofstream of(out_path, std::ios::trunc);
  if (!of) throw IoError("cannot write: " + out_path);
  of.precision(17);
  of << "x,y,in_frame\n";
  int lineno = 1;
  while (std::getline(gf, line)) {
    ++lineno;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw ParseError(gaze_path + ":" + std::to_string(lineno) + ": expected x,y");
    Vec2 p;
    try {
      p.x = std::stod(line.substr(0, comma));
      p.y = std::stod(line.substr(comma + 1));
    } catch (const std::exception&) {
      throw ParseError(gaze_path + ":" + std::to_string(lineno) + ": malformed row");
    }
    const MappedGaze mapped = transform_gaze_chain(p, h, frame_w, frame_h);
    of << mapped.p.x << "," << mapped.p.y << "," << (mapped.in_frame ? 1 : 0) << "\n";
  }

  const std::string sidecar = out_path + ".homography.json";
  std::ofstream hs(sidecar, std::ios::trunc);
  hs << homography_to_json(h) << "\n";

  json cfg;
  cfg["correspondences"] = corr_path;
  cfg["ransac"] = use_ransac;
  cfg["frame"] = {frame_w, frame_h};
  write_run_manifest(out_dir, "map-gaze", cfg, seed, {out_path, sidecar}, kExitOk);
  return kExitOk;
}

int cmd_gradcheck(const std::string& config_path, std::uint64_t seed, int coords,
                  const std::string& out_dir) {
  TrainConfig cfg;
  if (config_path.empty()) {
    cfg = train_config_from_json(json::object());
    cfg.model = ModelConfig::miniature();
  } else {
    cfg = load_train_config(config_path);
  }
  cfg.seed = seed;

  GazeModel model = GazeModel::init(cfg.model, cfg.seed);

  // A couple of synthetic probes; require at least one with both irises so
  // the iris branch is exercised.
  SynthConfig sc;
  sc.n_drivers = 2;
  const auto raw = generate_synthetic(seed, 8, sc);
  std::vector<LoadedSample> samples;
  for (const auto& s : raw) {
    if (s.record.iris_left_px && s.record.iris_right_px)
      samples.push_back(prepare_synthetic(s, cfg.model));
    if (samples.size() == 2) break;
  }
  if (samples.empty()) throw ValueError("gradcheck: no usable probe samples");

  auto f = [&](Tape* tape) {
    Tensor total;
    for (const auto& s : samples) {
      const ForwardResult fwd = model.forward(tape, s);
      const SampleLoss l = model.sample_loss(tape, fwd, s, cfg.loss);
      total = total.defined() ? add(tape, total, l.total) : l.total;
    }
    return scale(tape, total, 1.0 / double(samples.size()));
  };

  GradCheckOptions opt;
  opt.coords_per_param = coords;
  opt.seed = seed + 1;
  opt.tol = 1e-4;
  auto report = finite_diff_check_named(f, model.params.entries(), opt);

  // Negative-control hook: pretend one group's backward is broken.
  if (const char* corrupt = std::getenv("GAZEKIT_GRADCHECK_CORRUPT")) {
    for (auto& pc : report)
      if (pc.name == corrupt) pc.max_rel_err += 1.0;
  }

  bool all_ok = true;
  std::printf("%-28s %8s %12s  %s\n", "parameter group", "coords", "max rel err", "status");
  for (const auto& pc : report) {
    const bool ok = pc.passed(opt.tol);
    all_ok = all_ok && ok;
    std::printf("%-28s %8d %12.3e  %s\n", pc.name.c_str(), pc.coords_checked, pc.max_rel_err,
                ok ? "ok" : "FAIL");
    if (!ok)
      std::printf("  worst coordinate %lld: analytic %.8e vs numeric %.8e\n",
                  (long long)pc.worst_index, pc.analytic, pc.numeric);
  }
  std::printf("%zu parameter groups, tolerance %.1e: %s\n", report.size(), opt.tol,
              all_ok ? "all ok" : "FAILURES");

  write_run_manifest(out_dir, "gradcheck", train_config_to_json(cfg), seed, {},
                     all_ok ? kExitOk : kExitGradcheck);
  return all_ok ? kExitOk : kExitGradcheck;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"driver point-of-gaze estimation toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  int synth_n = 100;
  std::uint64_t synth_seed = 1;
  std::string synth_out, synth_config;
  synth->add_option("--n", synth_n, "number of samples")->required();
  synth->add_option("--seed", synth_seed, "root seed");
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--config", synth_config, "config file with a synth section");

  // train
  auto* tr = app.add_subcommand("train", "train a model on a manifest");
  std::string tr_manifest, tr_config, tr_out, tr_resume;
  int tr_epochs = 0;
  std::int64_t tr_seed = -1;
  tr->add_option("--manifest", tr_manifest, "manifest.jsonl")->required();
  tr->add_option("--config", tr_config, "training config (JSON)");
  tr->add_option("--out", tr_out, "checkpoint output path")->required();
  tr->add_option("--resume", tr_resume, "resume from this checkpoint");
  tr->add_option("--epochs", tr_epochs, "override the target epoch count");
  tr->add_option("--seed", tr_seed, "override the config seed");

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_manifest, ev_ckpt, ev_out, ev_split = "all";
  bool ev_allow_overlap = false;
  ev->add_option("--manifest", ev_manifest, "manifest.jsonl")->required();
  ev->add_option("--ckpt", ev_ckpt, "checkpoint path")->required();
  ev->add_option("--out", ev_out, "report output directory")->required();
  ev->add_option("--split", ev_split, "all|train|val|test (per the checkpoint's split)");
  ev->add_flag("--allow-train-overlap", ev_allow_overlap,
               "skip the split-contamination guard");

  // infer
  auto* in = app.add_subcommand("infer", "run one sample through the model");
  std::string in_face, in_scene, in_ann, in_ckpt, in_overlay, in_out = ".";
  in->add_option("--face", in_face, "face image (PPM)")->required();
  in->add_option("--scene", in_scene, "scene image (PPM)")->required();
  in->add_option("--annotations", in_ann, "JSON with eye boxes / iris centers / gaze_norm");
  in->add_option("--ckpt", in_ckpt, "checkpoint path")->required();
  in->add_option("--overlay", in_overlay, "write overlay PPM here");
  in->add_option("--out", in_out, "run manifest directory");

  // map-gaze
  auto* mg = app.add_subcommand("map-gaze", "map gaze points through a marker homography");
  std::string mg_corr, mg_gaze, mg_out;
  bool mg_ransac = false;
  int mg_w = 1280, mg_h = 720;
  std::uint64_t mg_seed = 1;
  mg->add_option("--correspondences", mg_corr, "marker CSV")->required();
  mg->add_option("--gaze", mg_gaze, "gaze CSV (x,y)")->required();
  mg->add_option("--out", mg_out, "output CSV")->required();
  mg->add_flag("--ransac", mg_ransac, "robust estimation");
  mg->add_option("--frame-w", mg_w, "scene frame width");
  mg->add_option("--frame-h", mg_h, "scene frame height");
  mg->add_option("--seed", mg_seed, "ransac seed");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference audit of every parameter group");
  std::string gc_config, gc_out = ".";
  std::uint64_t gc_seed = 1;
  int gc_coords = 3;
  gc->add_option("--config", gc_config, "training config (defaults to the miniature preset)");
  gc->add_option("--seed", gc_seed, "root seed");
  gc->add_option("--coords", gc_coords, "sampled coordinates per parameter group");
  gc->add_option("--out", gc_out, "run manifest directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitInput;
  }

  try {
    if (*synth) {
      if (synth_n < 1) throw ValueError("synth: --n must be >= 1");
      return cmd_synth(synth_n, synth_seed, synth_out, synth_config);
    }
    if (*tr) return cmd_train(tr_manifest, tr_config, tr_out, tr_resume, tr_epochs, tr_seed);
    if (*ev) return cmd_eval(ev_manifest, ev_ckpt, ev_out, ev_split, ev_allow_overlap);
    if (*in) return cmd_infer(in_face, in_scene, in_ann, in_ckpt, in_overlay, in_out);
    if (*mg) return cmd_map_gaze(mg_corr, mg_gaze, mg_out, mg_ransac, mg_w, mg_h, mg_seed);
    if (*gc) return cmd_gradcheck(gc_config, gc_seed, gc_coords, gc_out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
  return kExitInput;
}
