#include "udock/config.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "udock/errors.hpp"

namespace udock {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key))
      throw ConfigInvalid("unknown key '" + key + "' in " + where);
  }
}

template <typename T>
void maybe(const json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

CameraIntrinsics parse_intrinsics(const json& j, const std::string& where,
                                  CameraIntrinsics defaults) {
  reject_unknown(j, {"k_x", "k_y", "k_theta", "u_0", "v_0", "width", "height"},
                 where);
  CameraIntrinsics intr = defaults;
  maybe(j, "k_x", intr.k_x);
  maybe(j, "k_y", intr.k_y);
  maybe(j, "k_theta", intr.k_theta);
  maybe(j, "u_0", intr.u_0);
  maybe(j, "v_0", intr.v_0);
  maybe(j, "width", intr.image_width);
  maybe(j, "height", intr.image_height);
  return intr;
}

PoseRange parse_pose_range(const json& j, const std::string& where,
                           PoseRange defaults) {
  reject_unknown(j,
                 {"yaw_deg", "pitch_deg", "roll_deg", "dist_min_mm",
                  "dist_max_mm", "lateral_frac"},
                 where);
  PoseRange range = defaults;
  maybe(j, "yaw_deg", range.yaw_deg);
  maybe(j, "pitch_deg", range.pitch_deg);
  maybe(j, "roll_deg", range.roll_deg);
  maybe(j, "dist_min_mm", range.dist_min_mm);
  maybe(j, "dist_max_mm", range.dist_max_mm);
  maybe(j, "lateral_frac", range.lateral_frac);
  return range;
}

json intrinsics_to_json(const CameraIntrinsics& intr) {
  return {{"k_x", intr.k_x},          {"k_y", intr.k_y},
          {"k_theta", intr.k_theta},  {"u_0", intr.u_0},
          {"v_0", intr.v_0},          {"width", intr.image_width},
          {"height", intr.image_height}};
}

json pose_range_to_json(const PoseRange& r) {
  return {{"yaw_deg", r.yaw_deg},         {"pitch_deg", r.pitch_deg},
          {"roll_deg", r.roll_deg},       {"dist_min_mm", r.dist_min_mm},
          {"dist_max_mm", r.dist_max_mm}, {"lateral_frac", r.lateral_frac}};
}

}  // namespace

detector::NetConfig RunConfig::net_config() const {
  detector::NetConfig cfg;
  cfg.input_size = image_size;
  cfg.in_channels = image_channels;
  cfg.conv_filters = net_conv_filters;
  cfg.fc_sizes = net_fc_sizes;
  cfg.g = grid_g;
  cfg.b = grid_b;
  return cfg;
}

void RunConfig::validate() const {
  if (schema_version != 1) throw ConfigInvalid("unsupported schema_version");
  if (image_size <= 0 || image_channels <= 0)
    throw ConfigInvalid("image: bad dimensions");
  if (grid_g <= 0 || grid_b <= 0) throw ConfigInvalid("grid: G and B must be positive");
  if (image_size % grid_g != 0)
    throw ConfigInvalid("grid: image size must be divisible by G");
  if (loss_weights.lambda_box < 0.0 || loss_weights.lambda_dock < 0.0 ||
      loss_weights.lambda_nodock < 0.0)
    throw ConfigInvalid("loss: weights must be nonnegative");
  try {
    intrinsics.validate();
    bench.intrinsics.validate();
    render.validate();
    layout();
    net_config().validate();
  } catch (const Error& e) {
    throw ConfigInvalid(e.what());
  }
  if (intrinsics.image_width != image_size ||
      intrinsics.image_height != image_size)
    throw ConfigInvalid("intrinsics: image dims must match image size");
  if (!(pose_range.dist_min_mm > 0.0) ||
      pose_range.dist_max_mm < pose_range.dist_min_mm)
    throw ConfigInvalid("pose_range: bad distance bounds");
  if (train.epochs < 0 || train.batch <= 0 || !(train.lr >= 0.0) ||
      !(train.lr_decay > 0.0) || train.lr_decay > 1.0)
    throw ConfigInvalid("train: bad hyperparameters");
  if (bench.trials <= 0) throw ConfigInvalid("bench: trials must be positive");
  for (double s : bench.noise_sigmas)
    if (s < 0.0) throw ConfigInvalid("bench: negative noise sigma");
  if (background.distractor_probability < 0.0 ||
      background.distractor_probability > 1.0 ||
      background.distractor_min < 0 ||
      background.distractor_max < background.distractor_min)
    throw ConfigInvalid("background: bad distractor settings");
  if (landmarks.window_frac <= 0.0 || landmarks.t_percent < 0.0 ||
      landmarks.min_area < 1 || landmarks.crop_margin < 0.0)
    throw ConfigInvalid("landmarks: bad settings");
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoFailure("cannot open config: " + path);
  json j;
  try {
    f >> j;
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("config parse error: ") + e.what());
  }
  RunConfig cfg;
  reject_unknown(j,
                 {"schema_version", "image", "grid", "loss", "intrinsics",
                  "layout", "render", "pose_range", "background", "net",
                  "train", "bench", "landmarks", "seed"},
                 "config");
  try {
    maybe(j, "schema_version", cfg.schema_version);
    maybe(j, "seed", cfg.seed);
    if (j.contains("image")) {
      const json& s = j["image"];
      reject_unknown(s, {"size", "channels"}, "image");
      maybe(s, "size", cfg.image_size);
      maybe(s, "channels", cfg.image_channels);
    }
    if (j.contains("grid")) {
      const json& s = j["grid"];
      reject_unknown(s, {"G", "B"}, "grid");
      maybe(s, "G", cfg.grid_g);
      maybe(s, "B", cfg.grid_b);
    }
    if (j.contains("loss")) {
      const json& s = j["loss"];
      reject_unknown(s, {"lambda_B", "lambda_d", "lambda_dbar"}, "loss");
      maybe(s, "lambda_B", cfg.loss_weights.lambda_box);
      maybe(s, "lambda_d", cfg.loss_weights.lambda_dock);
      maybe(s, "lambda_dbar", cfg.loss_weights.lambda_nodock);
    }
    // the scene camera defaults track the configured image size
    cfg.intrinsics.image_width = cfg.image_size;
    cfg.intrinsics.image_height = cfg.image_size;
    cfg.intrinsics.u_0 = cfg.image_size / 2.0;
    cfg.intrinsics.v_0 = cfg.image_size / 2.0;
    if (j.contains("intrinsics"))
      cfg.intrinsics = parse_intrinsics(j["intrinsics"], "intrinsics", cfg.intrinsics);
    if (j.contains("layout")) {
      const json& s = j["layout"];
      reject_unknown(s, {"count", "radius_mm"}, "layout");
      maybe(s, "count", cfg.layout_count);
      maybe(s, "radius_mm", cfg.layout_radius_mm);
    }
    if (j.contains("render")) {
      const json& s = j["render"];
      reject_unknown(s,
                     {"blob_sigma_px", "blob_peak", "background_level",
                      "background_noise_sigma", "seed"},
                     "render");
      maybe(s, "blob_sigma_px", cfg.render.blob_sigma_px);
      maybe(s, "blob_peak", cfg.render.blob_peak);
      maybe(s, "background_level", cfg.render.background_level);
      maybe(s, "background_noise_sigma", cfg.render.background_noise_sigma);
      maybe(s, "seed", cfg.render.rng_seed);
    }
    if (j.contains("pose_range"))
      cfg.pose_range = parse_pose_range(j["pose_range"], "pose_range", cfg.pose_range);
    if (j.contains("background")) {
      const json& s = j["background"];
      reject_unknown(
          s, {"distractor_probability", "distractor_min", "distractor_max"},
          "background");
      maybe(s, "distractor_probability", cfg.background.distractor_probability);
      maybe(s, "distractor_min", cfg.background.distractor_min);
      maybe(s, "distractor_max", cfg.background.distractor_max);
    }
    if (j.contains("net")) {
      const json& s = j["net"];
      reject_unknown(s, {"conv_filters", "fc_sizes"}, "net");
      maybe(s, "conv_filters", cfg.net_conv_filters);
      maybe(s, "fc_sizes", cfg.net_fc_sizes);
    }
    if (j.contains("train")) {
      const json& s = j["train"];
      reject_unknown(s, {"lr", "momentum", "epochs", "batch", "seed", "lr_decay"},
                     "train");
      maybe(s, "lr", cfg.train.lr);
      maybe(s, "momentum", cfg.train.momentum);
      maybe(s, "epochs", cfg.train.epochs);
      maybe(s, "batch", cfg.train.batch);
      maybe(s, "seed", cfg.train.seed);
      maybe(s, "lr_decay", cfg.train.lr_decay);
    }
    if (j.contains("bench")) {
      const json& s = j["bench"];
      reject_unknown(s, {"intrinsics", "noise_sigmas", "trials", "pose_range", "seed"},
                     "bench");
      if (s.contains("intrinsics"))
        cfg.bench.intrinsics =
            parse_intrinsics(s["intrinsics"], "bench.intrinsics", cfg.bench.intrinsics);
      maybe(s, "noise_sigmas", cfg.bench.noise_sigmas);
      maybe(s, "trials", cfg.bench.trials);
      if (s.contains("pose_range"))
        cfg.bench.pose_range =
            parse_pose_range(s["pose_range"], "bench.pose_range", cfg.bench.pose_range);
      maybe(s, "seed", cfg.bench.seed);
    }
    if (j.contains("landmarks")) {
      const json& s = j["landmarks"];
      reject_unknown(
          s, {"window_frac", "t_percent", "min_area", "crop_margin", "kmeans_seed"},
          "landmarks");
      maybe(s, "window_frac", cfg.landmarks.window_frac);
      maybe(s, "t_percent", cfg.landmarks.t_percent);
      maybe(s, "min_area", cfg.landmarks.min_area);
      maybe(s, "crop_margin", cfg.landmarks.crop_margin);
      maybe(s, "kmeans_seed", cfg.landmarks.kmeans_seed);
    }
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("config type error: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

std::string RunConfig::to_json_string() const {
  json j;
  j["schema_version"] = schema_version;
  j["seed"] = seed;
  j["image"] = {{"size", image_size}, {"channels", image_channels}};
  j["grid"] = {{"G", grid_g}, {"B", grid_b}};
  j["loss"] = {{"lambda_B", loss_weights.lambda_box},
               {"lambda_d", loss_weights.lambda_dock},
               {"lambda_dbar", loss_weights.lambda_nodock}};
  j["intrinsics"] = intrinsics_to_json(intrinsics);
  j["layout"] = {{"count", layout_count}, {"radius_mm", layout_radius_mm}};
  j["render"] = {{"blob_sigma_px", render.blob_sigma_px},
                 {"blob_peak", render.blob_peak},
                 {"background_level", render.background_level},
                 {"background_noise_sigma", render.background_noise_sigma},
                 {"seed", render.rng_seed}};
  j["pose_range"] = pose_range_to_json(pose_range);
  j["background"] = {{"distractor_probability", background.distractor_probability},
                     {"distractor_min", background.distractor_min},
                     {"distractor_max", background.distractor_max}};
  j["net"] = {{"conv_filters", net_conv_filters}, {"fc_sizes", net_fc_sizes}};
  j["train"] = {{"lr", train.lr},
                {"momentum", train.momentum},
                {"epochs", train.epochs},
                {"batch", train.batch},
                {"seed", train.seed},
                {"lr_decay", train.lr_decay}};
  j["bench"] = {{"intrinsics", intrinsics_to_json(bench.intrinsics)},
                {"noise_sigmas", bench.noise_sigmas},
                {"trials", bench.trials},
                {"pose_range", pose_range_to_json(bench.pose_range)},
                {"seed", bench.seed}};
  j["landmarks"] = {{"window_frac", landmarks.window_frac},
                    {"t_percent", landmarks.t_percent},
                    {"min_area", landmarks.min_area},
                    {"crop_margin", landmarks.crop_margin},
                    {"kmeans_seed", landmarks.kmeans_seed}};
  return j.dump(2);
}

void RunConfig::save(const std::string& path) const {
  std::ofstream f(path);
  if (!f) throw IoFailure("cannot open for write: " + path);
  f << to_json_string() << "\n";
  if (!f) throw IoFailure("write failed: " + path);
}

}  // namespace udock
