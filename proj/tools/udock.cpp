// Command-line entry point: dataset generation, deformation, training,
// detection, scoring and pose estimation as subcommands over one JSON config.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "udock/config.hpp"
#include "udock/deform.hpp"
#include "udock/detector.hpp"
#include "udock/errors.hpp"
#include "udock/eval.hpp"
#include "udock/pipeline.hpp"
#include "udock/pnp.hpp"

namespace {

using namespace udock;
using nlohmann::json;

RunConfig load_config_or_defaults(const std::string& path) {
  if (path.empty()) {
    RunConfig cfg;
    cfg.validate();
    return cfg;
  }
  return RunConfig::load(path);
}

json pose_to_json(const Pose& pose, double rmse) {
  json r = json::array();
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) r.push_back(pose.rotation(row, col));
  json out;
  out["R"] = r;
  out["T"] = {pose.translation.x(), pose.translation.y(), pose.translation.z()};
  try {
    const Vector3d e = pose.euler_deg();
    out["euler"] = {e.x(), e.y(), e.z()};
  } catch (const GimbalLock&) {
    out["euler"] = nullptr;
  }
  out["rmse"] = rmse;
  return out;
}

int cmd_gen(const std::string& config_path, const std::string& out_dir,
            int n_fg, int n_bg) {
  const RunConfig cfg = load_config_or_defaults(config_path);
  const DatasetManifest manifest = generate_dataset(
      n_fg, n_bg, cfg.pose_range, cfg.layout(), cfg.intrinsics, cfg.render,
      cfg.background, out_dir);
  cfg.save(out_dir + "/run.json");
  std::cout << "wrote " << manifest.samples.size() << " samples to " << out_dir
            << "\n";
  return 0;
}

int cmd_deform(const std::string& config_path, const std::string& manifest_path,
               const std::string& out_dir, const std::string& op, double param,
               int count, std::uint64_t seed) {
  const RunConfig cfg = load_config_or_defaults(config_path);
  const DatasetManifest manifest = read_manifest(manifest_path);
  const std::string in_dir =
      std::filesystem::path(manifest_path).parent_path().string();
  std::filesystem::create_directories(out_dir);

  DatasetManifest derived = manifest;
  for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
    const SampleRecord& rec = manifest.samples[i];
    const ImageBuffer img = read_pnm(in_dir + "/" + rec.path);
    const std::uint64_t sample_seed = mix_seed(seed, i);
    ImageBuffer out;
    if (op == "blur") {
      out = deform::gaussian_blur(img, param);
    } else if (op == "hue") {
      out = deform::hsv_shift(img, deform::HsvChannel::H, param);
    } else if (op == "sat") {
      out = deform::hsv_shift(img, deform::HsvChannel::S, param);
    } else if (op == "val") {
      out = deform::hsv_shift(img, deform::HsvChannel::V, param);
    } else if (op == "gamma") {
      out = deform::gamma_contrast(img, param);
    } else if (op == "illum") {
      // constant-light model around unity; param sets the coefficient spread
      deform::IlluminationModel model;
      model.mean.assign(model.coefficient_count(), 0.0);
      model.mean.back() = 1.0;
      model.variance.assign(model.coefficient_count(), param * param);
      out = deform::apply_illumination(img, model, sample_seed);
    } else if (op == "mirror") {
      if (rec.label != "foreground") {
        out = img;
      } else {
        try {
          out = deform::make_mirror_sample(img, rec.box, sample_seed);
        } catch (const NoRoomAbove&) {
          out = img;  // station too close to the top; keep the original
        }
      }
    } else if (op == "noisy") {
      out = rec.label == "foreground"
                ? deform::make_noisy_luminary_sample(img, rec.box, count,
                                                     sample_seed)
                : img;
    } else {
      throw ConfigInvalid("unknown deform op: " + op);
    }
    write_pnm(out, out_dir + "/" + rec.path);
    derived.samples[i].deform = DeformNote{op, param, sample_seed};
  }
  write_manifest(derived, out_dir + "/manifest.jsonl");
  cfg.save(out_dir + "/run.json");
  std::cout << "deformed " << derived.samples.size() << " samples to "
            << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& manifest_path,
              const std::string& checkpoint_path, const std::string& curve_path) {
  const RunConfig cfg = load_config_or_defaults(config_path);
  const DatasetManifest manifest = read_manifest(manifest_path);
  const std::string data_dir =
      std::filesystem::path(manifest_path).parent_path().string();
  detector::TinyNet net(cfg.net_config());
  Rng init_rng(mix_seed(cfg.seed, 0xd1ce));
  net.init_params(init_rng);
  const auto curve =
      detector::train(net, manifest, data_dir, cfg.loss_weights, cfg.train);
  net.save(checkpoint_path);
  if (!curve_path.empty()) detector::write_loss_curve_csv(curve, curve_path);
  if (!curve.empty())
    std::cout << "final loss " << curve.back().total << " after "
              << curve.size() << " epochs\n";
  return 0;
}

int cmd_detect(const std::string& config_path, const std::string& manifest_path,
               const std::string& checkpoint_path, const std::string& out_path) {
  const RunConfig cfg = load_config_or_defaults(config_path);
  const DatasetManifest manifest = read_manifest(manifest_path);
  const std::string data_dir =
      std::filesystem::path(manifest_path).parent_path().string();
  const detector::TinyNet net = detector::TinyNet::load(checkpoint_path);
  std::ofstream out(out_path);
  if (!out) throw IoFailure("cannot open for write: " + out_path);
  out.precision(17);
  for (const SampleRecord& rec : manifest.samples) {
    const ImageBuffer img = read_pnm(data_dir + "/" + rec.path);
    const detector::ForwardResult fwd = net.forward(img);
    const detector::Detection det =
        decode_prediction(fwd.pred, img.width, img.height);
    json j;
    j["id"] = rec.id;
    j["label"] = rec.label;
    j["box"] = {det.box_norm.x, det.box_norm.y, det.box_norm.w, det.box_norm.h};
    j["confidence"] = det.confidence;
    if (rec.label == "foreground")
      j["gt_box"] = {rec.box.x, rec.box.y, rec.box.w, rec.box.h};
    out << j.dump() << "\n";
  }
  std::cout << "wrote detections for " << manifest.samples.size()
            << " samples to " << out_path << "\n";
  return 0;
}

std::vector<eval::ScoredDetection> read_detections(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoFailure("cannot open for read: " + path);
  std::vector<eval::ScoredDetection> dets;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    eval::ScoredDetection d;
    d.id = j.at("id").get<std::string>();
    const auto& b = j.at("box");
    d.predicted_box = {b.at(0).get<double>(), b.at(1).get<double>(),
                       b.at(2).get<double>(), b.at(3).get<double>()};
    d.confidence = j.at("confidence").get<double>();
    if (j.contains("gt_box")) {
      const auto& g = j.at("gt_box");
      d.gt_box = Box{g.at(0).get<double>(), g.at(1).get<double>(),
                     g.at(2).get<double>(), g.at(3).get<double>()};
    }
    dets.push_back(std::move(d));
  }
  return dets;
}

int cmd_eval(const std::string& detections_path, const std::string& csv_path,
             const std::string& summary_path, double iou_threshold) {
  const auto dets = read_detections(detections_path);
  const eval::RocCurve curve = eval::roc_curve(dets, iou_threshold);
  if (!csv_path.empty()) eval::write_roc_csv(curve, csv_path);
  if (!summary_path.empty()) eval::write_roc_summary_json(curve, summary_path);
  std::cout << "AUC " << curve.auc << " over " << curve.n_pos << " positive / "
            << curve.n_neg << " negative samples\n";
  return 0;
}

int cmd_landmarks(const std::string& patch_path, double window_frac,
                  double t_percent, int min_area, int k) {
  const ImageBuffer patch = read_pnm(patch_path);
  const auto mask = landmarks::adaptive_threshold(patch, window_frac, t_percent);
  const auto comps = landmarks::connected_components(mask, min_area);
  const auto set = landmarks::consolidate_landmarks(comps, k);
  json j;
  j["observation"] =
      set.observation == landmarks::Observation::Full ? "full" : "partial";
  json cents = json::array();
  for (const Vector2d& c : set.centroids) cents.push_back({c.x(), c.y()});
  j["centroids"] = cents;
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_pose(const std::string& config_path, const std::string& corr_path,
             const std::string& image_path, const std::string& box_csv) {
  if (!corr_path.empty()) {
    std::ifstream f(corr_path);
    if (!f) throw IoFailure("cannot open for read: " + corr_path);
    json j;
    f >> j;
    CameraIntrinsics intr;
    const json& ji = j.at("intrinsics");
    intr.k_x = ji.at("k_x").get<double>();
    intr.k_y = ji.at("k_y").get<double>();
    intr.k_theta = ji.value("k_theta", 0.0);
    intr.u_0 = ji.at("u_0").get<double>();
    intr.v_0 = ji.at("v_0").get<double>();
    intr.image_width = ji.value("width", static_cast<int>(2 * intr.u_0 + 1));
    intr.image_height = ji.value("height", static_cast<int>(2 * intr.v_0 + 1));
    std::vector<pnp::Correspondence> corr;
    for (const auto& p : j.at("points")) {
      pnp::Correspondence c;
      c.point_mm = {p.at("P").at(0).get<double>(), p.at("P").at(1).get<double>(),
                    p.at("P").at(2).get<double>()};
      c.pixel = {p.at("p").at(0).get<double>(), p.at("p").at(1).get<double>()};
      corr.push_back(c);
    }
    const pnp::PnpSolution sol = pnp::rpnp_solve(corr, intr);
    std::cout << pose_to_json(sol.pose, sol.reprojection_rmse).dump() << "\n";
    return 0;
  }

  const RunConfig cfg = load_config_or_defaults(config_path);
  const ImageBuffer img = read_pnm(image_path);
  Box box{0.0, 0.0, 1.0, 1.0};
  if (!box_csv.empty()) {
    if (std::sscanf(box_csv.c_str(), "%lf,%lf,%lf,%lf", &box.x, &box.y, &box.w,
                    &box.h) != 4)
      throw ConfigInvalid("--box expects x,y,w,h normalized");
  }
  const pipeline::PatchPoseResult res = pipeline::estimate_pose_from_box(
      img, box, cfg.intrinsics, cfg.layout(), cfg.landmarks);
  if (!res.solution) {
    json j;
    j["observation"] = "partial";
    j["centroid_count"] = res.centroids.size();
    std::cout << j.dump() << "\n";
    return 2;
  }
  std::cout << pose_to_json(res.solution->pose, res.solution->reprojection_rmse)
                   .dump()
            << "\n";
  return 0;
}

int cmd_bench_pnp(const std::string& config_path, const std::string& out_path,
                  int workers) {
  const RunConfig cfg = load_config_or_defaults(config_path);
  const LandmarkLayout layout = cfg.layout();
  const BenchSection& bench = cfg.bench;

  std::ofstream out(out_path);
  if (!out) throw IoFailure("cannot open for write: " + out_path);
  out << "# schema_version=1\n";
  out << "sigma,mean_orientation_deg,median_orientation_deg,mean_position_mm,"
         "median_position_mm\n";
  out.precision(17);

  for (std::size_t level = 0; level < bench.noise_sigmas.size(); ++level) {
    const double sigma = bench.noise_sigmas[level];
    std::vector<std::pair<Pose, Pose>> trials(bench.trials);
    auto run_range = [&](int begin, int end) {
      for (int t = begin; t < end; ++t) {
        Rng rng(mix_seed(mix_seed(bench.seed, level), static_cast<std::uint64_t>(t)));
        const Pose truth = sample_full_observation_pose(
            bench.pose_range, layout, bench.intrinsics, rng);
        std::vector<pnp::Correspondence> corr;
        corr.reserve(layout.count);
        for (const Vector3d& p : layout.points) {
          Vector2d px = project(p, bench.intrinsics, truth);
          if (sigma > 0.0)
            px += Vector2d(rng.normal(0.0, sigma), rng.normal(0.0, sigma));
          corr.push_back({p, px});
        }
        const pnp::PnpSolution sol = pnp::rpnp_solve(corr, bench.intrinsics);
        trials[t] = {sol.pose, truth};
      }
    };
    if (workers <= 1) {
      run_range(0, bench.trials);
    } else {
      std::vector<std::thread> pool;
      const int chunk = (bench.trials + workers - 1) / workers;
      for (int w = 0; w < workers; ++w) {
        const int begin = w * chunk;
        const int end = std::min(bench.trials, begin + chunk);
        if (begin < end) pool.emplace_back(run_range, begin, end);
      }
      for (std::thread& th : pool) th.join();
    }
    const eval::PoseErrorStats stats = eval::pose_errors(trials);
    out << sigma << "," << stats.mean_orientation_deg << ","
        << stats.median_orientation_deg << "," << stats.mean_position_mm << ","
        << stats.median_position_mm << "\n";
    std::cout << "sigma " << sigma << ": mean orientation "
              << stats.mean_orientation_deg << " deg, mean position "
              << stats.mean_position_mm << " mm\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"synthetic underwater docking toolkit"};
  app.require_subcommand(1);

  std::string config_path, out_dir, manifest_path, checkpoint_path, curve_path;
  std::string detections_path, csv_path, summary_path, patch_path, corr_path;
  std::string image_path, box_csv, op;
  int n_fg = 50, n_bg = 50, count = 3, workers = 1, min_area = 3, k = 8;
  double param = 1.0, iou_threshold = 0.5, window_frac = 0.5;
  double t_percent = 100.0;
  std::uint64_t seed = 1;

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("--config", config_path, "config JSON");
  gen->add_option("--out", out_dir, "output directory")->required();
  gen->add_option("--n-fg", n_fg, "foreground samples");
  gen->add_option("--n-bg", n_bg, "background samples");

  auto* def = app.add_subcommand("deform", "derive a deformed dataset");
  def->add_option("--config", config_path, "config JSON");
  def->add_option("--op", op, "blur|hue|sat|val|gamma|illum|mirror|noisy")
      ->required();
  def->add_option("--param", param, "deformation parameter");
  def->add_option("--count", count, "distractor count for noisy");
  def->add_option("--seed", seed, "deformation seed");
  def->add_option("--manifest", manifest_path, "input manifest")->required();
  def->add_option("--out", out_dir, "output directory")->required();

  auto* train = app.add_subcommand("train", "train the grid detector");
  train->add_option("--config", config_path, "config JSON");
  train->add_option("--manifest", manifest_path, "training manifest")->required();
  train->add_option("--checkpoint", checkpoint_path, "output checkpoint")
      ->required();
  train->add_option("--curve", curve_path, "loss curve CSV");

  auto* detect = app.add_subcommand("detect", "run the detector over a manifest");
  detect->add_option("--config", config_path, "config JSON");
  detect->add_option("--manifest", manifest_path, "manifest")->required();
  detect->add_option("--checkpoint", checkpoint_path, "checkpoint")->required();
  detect->add_option("--out", detections_path, "detections JSONL")->required();

  auto* ev = app.add_subcommand("eval", "score detections (ROC / AUC)");
  ev->add_option("--detections", detections_path, "detections JSONL")
      ->required();
  ev->add_option("--out-csv", csv_path, "ROC CSV");
  ev->add_option("--out-summary", summary_path, "summary JSON");
  ev->add_option("--iou-threshold", iou_threshold, "correctness threshold");

  auto* lm = app.add_subcommand("landmarks", "extract landmark centroids");
  lm->add_option("--patch", patch_path, "patch image (PGM/PPM)")->required();
  lm->add_option("--window-frac", window_frac, "local window fraction");
  lm->add_option("--t-percent", t_percent, "threshold percent");
  lm->add_option("--min-area", min_area, "component area floor");
  lm->add_option("--k", k, "landmark count");

  auto* pose = app.add_subcommand("pose", "estimate a pose");
  pose->add_option("--config", config_path, "config JSON");
  pose->add_option("--correspondences", corr_path,
                   "JSON {intrinsics, points:[{P:[3], p:[2]}]}");
  pose->add_option("--image", image_path, "scene image (PGM/PPM)");
  pose->add_option("--box", box_csv, "normalized detection box x,y,w,h");

  auto* bench = app.add_subcommand("bench-pnp", "solver noise sweep");
  bench->add_option("--config", config_path, "config JSON");
  bench->add_option("--out", csv_path, "output CSV")->required();
  bench->add_option("--workers", workers, "worker threads (default 1)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen(config_path, out_dir, n_fg, n_bg);
    if (def->parsed())
      return cmd_deform(config_path, manifest_path, out_dir, op, param, count,
                        seed);
    if (train->parsed())
      return cmd_train(config_path, manifest_path, checkpoint_path, curve_path);
    if (detect->parsed())
      return cmd_detect(config_path, manifest_path, checkpoint_path,
                        detections_path);
    if (ev->parsed())
      return cmd_eval(detections_path, csv_path, summary_path, iou_threshold);
    if (lm->parsed())
      return cmd_landmarks(patch_path, window_frac, t_percent, min_area, k);
    if (pose->parsed())
      return cmd_pose(config_path, corr_path, image_path, box_csv);
    if (bench->parsed()) return cmd_bench_pnp(config_path, csv_path, workers);
  } catch (const udock::Error& e) {
    json err;
    err["error"] = e.kind();
    err["message"] = e.what();
    std::cerr << err.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    json err;
    err["error"] = "exception";
    err["message"] = e.what();
    std::cerr << err.dump() << "\n";
    return 1;
  }
  return 0;
}
