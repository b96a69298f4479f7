#include "udock/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "udock/errors.hpp"

namespace udock {

using nlohmann::json;

LandmarkLayout LandmarkLayout::make(int count, double radius_mm) {
  if (count < 3) throw PreconditionViolation("layout: count must be >= 3");
  if (!(radius_mm > 0.0)) throw PreconditionViolation("layout: radius <= 0");
  LandmarkLayout layout;
  layout.count = count;
  layout.radius_mm = radius_mm;
  layout.points.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double a = 2.0 * M_PI * i / count;
    layout.points.emplace_back(radius_mm * std::cos(a), radius_mm * std::sin(a),
                               0.0);
  }
  return layout;
}

void RenderSpec::validate() const {
  if (!(blob_peak > 0.0 && blob_peak <= 1.0))
    throw PreconditionViolation("render: blob_peak must be in (0,1]");
  if (!(blob_sigma_px > 0.0))
    throw PreconditionViolation("render: blob_sigma_px must be positive");
  if (!(background_level + 3.0 * background_noise_sigma < blob_peak))
    throw PreconditionViolation("render: background too bright for blobs");
}

namespace {

void add_blob(ImageBuffer& img, const Vector2d& center, double sigma,
              double peak) {
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  const int x0 = std::max(0, static_cast<int>(std::floor(center.x())) - radius);
  const int x1 = std::min(img.width - 1,
                          static_cast<int>(std::ceil(center.x())) + radius);
  const int y0 = std::max(0, static_cast<int>(std::floor(center.y())) - radius);
  const int y1 = std::min(img.height - 1,
                          static_cast<int>(std::ceil(center.y())) + radius);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - center.x();
      const double dy = y - center.y();
      double& v = img.at(x, y);
      v = std::min(1.0, v + peak * std::exp(-(dx * dx + dy * dy) * inv));
    }
  }
}

ImageBuffer noisy_background(int w, int h, const RenderSpec& spec, Rng& rng) {
  ImageBuffer img(w, h, 1, ColorSpace::Gray);
  for (double& v : img.data) {
    v = std::clamp(
        spec.background_level + spec.background_noise_sigma * rng.normal(), 0.0,
        1.0);
  }
  return img;
}

bool in_frame(const Vector2d& p, const CameraIntrinsics& intr) {
  return p.x() >= 0.0 && p.x() < intr.image_width && p.y() >= 0.0 &&
         p.y() < intr.image_height;
}

}  // namespace

RenderedScene render_scene(const LandmarkLayout& layout,
                           const CameraIntrinsics& intr, const Pose& pose,
                           const RenderSpec& spec, bool allow_partial) {
  intr.validate();
  spec.validate();
  std::vector<Vector2d> visible;
  int projectable = 0;
  for (const Vector3d& p : layout.points) {
    Vector2d px;
    try {
      px = project(p, intr, pose);
    } catch (const PointBehindCamera&) {
      continue;
    }
    ++projectable;
    if (in_frame(px, intr)) visible.push_back(px);
  }
  if (visible.empty()) throw NoLandmarkVisible();
  const bool partial = static_cast<int>(visible.size()) < layout.count;
  if (partial && !allow_partial)
    throw PreconditionViolation("render: partial observation not allowed");
  (void)projectable;

  Rng rng(spec.rng_seed);
  RenderedScene scene;
  scene.image = noisy_background(intr.image_width, intr.image_height, spec, rng);
  for (const Vector2d& c : visible) {
    add_blob(scene.image, c, spec.blob_sigma_px, spec.blob_peak);
  }

  double min_u = visible[0].x(), max_u = visible[0].x();
  double min_v = visible[0].y(), max_v = visible[0].y();
  for (const Vector2d& c : visible) {
    min_u = std::min(min_u, c.x());
    max_u = std::max(max_u, c.x());
    min_v = std::min(min_v, c.y());
    max_v = std::max(max_v, c.y());
  }
  const double pad = 2.0 * spec.blob_sigma_px;
  const double x0 = std::max(0.0, min_u - pad);
  const double y0 = std::max(0.0, min_v - pad);
  const double x1 = std::min<double>(intr.image_width, max_u + pad);
  const double y1 = std::min<double>(intr.image_height, max_v + pad);
  scene.truth.box = {x0 / intr.image_width, y0 / intr.image_height,
                     (x1 - x0) / intr.image_width,
                     (y1 - y0) / intr.image_height};
  scene.truth.pose = pose;
  scene.truth.centroids = std::move(visible);
  scene.truth.partial = partial;
  return scene;
}

Pose PoseRange::sample(Rng& rng) const {
  const double yaw = rng.uniform(-yaw_deg, yaw_deg);
  const double pitch = rng.uniform(-pitch_deg, pitch_deg);
  const double roll = rng.uniform(-roll_deg, roll_deg);
  const double z = rng.uniform(dist_min_mm, dist_max_mm);
  const double tx = rng.uniform(-lateral_frac, lateral_frac) * z;
  const double ty = rng.uniform(-lateral_frac, lateral_frac) * z;
  return Pose::from_euler_deg(yaw, pitch, roll, {tx, ty, z});
}

Pose sample_full_observation_pose(const PoseRange& range,
                                  const LandmarkLayout& layout,
                                  const CameraIntrinsics& intr, Rng& rng,
                                  int max_attempts) {
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    const Pose pose = range.sample(rng);
    bool ok = true;
    for (const Vector3d& p : layout.points) {
      try {
        if (!in_frame(project(p, intr, pose), intr)) {
          ok = false;
          break;
        }
      } catch (const PointBehindCamera&) {
        ok = false;
        break;
      }
    }
    if (ok) return pose;
  }
  throw PreconditionViolation(
      "pose sampler: no full observation in max_attempts; widen the ranges");
}

namespace {

json box_to_json(const Box& b) { return json::array({b.x, b.y, b.w, b.h}); }

Box box_from_json(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
          j.at(3).get<double>()};
}

json record_to_json(const SampleRecord& rec) {
  json j;
  j["id"] = rec.id;
  j["path"] = rec.path;
  j["label"] = rec.label;
  j["box"] = box_to_json(rec.box);
  if (rec.pose) {
    json r = json::array();
    for (int row = 0; row < 3; ++row)
      for (int col = 0; col < 3; ++col) r.push_back(rec.pose->rotation(row, col));
    j["pose"] = {{"R", r},
                 {"T", {rec.pose->translation.x(), rec.pose->translation.y(),
                        rec.pose->translation.z()}}};
  }
  json cents = json::array();
  for (const Vector2d& c : rec.centroids) cents.push_back({c.x(), c.y()});
  j["centroids"] = cents;
  j["partial"] = rec.partial;
  if (rec.deform) {
    j["deform"] = {{"op", rec.deform->op},
                   {"param", rec.deform->param},
                   {"seed", rec.deform->seed}};
  }
  return j;
}

SampleRecord record_from_json(const json& j) {
  SampleRecord rec;
  rec.id = j.at("id").get<std::string>();
  rec.path = j.at("path").get<std::string>();
  rec.label = j.at("label").get<std::string>();
  rec.box = box_from_json(j.at("box"));
  if (j.contains("pose")) {
    Pose pose;
    const auto& r = j.at("pose").at("R");
    for (int row = 0; row < 3; ++row)
      for (int col = 0; col < 3; ++col)
        pose.rotation(row, col) = r.at(row * 3 + col).get<double>();
    const auto& t = j.at("pose").at("T");
    pose.translation = {t.at(0).get<double>(), t.at(1).get<double>(),
                        t.at(2).get<double>()};
    rec.pose = pose;
  }
  for (const auto& c : j.at("centroids"))
    rec.centroids.emplace_back(c.at(0).get<double>(), c.at(1).get<double>());
  rec.partial = j.at("partial").get<bool>();
  if (j.contains("deform")) {
    DeformNote note;
    note.op = j["deform"].at("op").get<std::string>();
    note.param = j["deform"].at("param").get<double>();
    note.seed = j["deform"].at("seed").get<std::uint64_t>();
    rec.deform = note;
  }
  return rec;
}

}  // namespace

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoFailure("cannot open for write: " + path);
  for (const SampleRecord& rec : manifest.samples) {
    f << record_to_json(rec).dump() << "\n";
  }
  if (!f) throw IoFailure("write failed: " + path);
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoFailure("cannot open for read: " + path);
  DatasetManifest manifest;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    manifest.samples.push_back(record_from_json(json::parse(line)));
  }
  return manifest;
}

DatasetManifest generate_dataset(int n_fg, int n_bg, const PoseRange& range,
                                 const LandmarkLayout& layout,
                                 const CameraIntrinsics& intr,
                                 const RenderSpec& spec,
                                 const BackgroundSpec& background,
                                 const std::string& out_dir) {
  if (n_fg < 0 || n_bg < 0)
    throw PreconditionViolation("generate_dataset: negative counts");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoFailure("cannot create " + out_dir);

  DatasetManifest manifest;
  manifest.samples.reserve(static_cast<std::size_t>(n_fg) + n_bg);
  char name[64];

  for (int i = 0; i < n_fg; ++i) {
    RenderSpec per = spec;
    per.rng_seed = mix_seed(spec.rng_seed, static_cast<std::uint64_t>(i));
    Rng pose_rng(mix_seed(per.rng_seed, 0x5ce9e1));
    const Pose pose =
        sample_full_observation_pose(range, layout, intr, pose_rng);
    const RenderedScene scene = render_scene(layout, intr, pose, per);
    std::snprintf(name, sizeof(name), "fg_%05d.pgm", i);
    write_pnm(scene.image, out_dir + "/" + name);
    SampleRecord rec;
    std::snprintf(name, sizeof(name), "fg_%05d", i);
    rec.id = name;
    rec.path = std::string(name) + ".pgm";
    rec.label = "foreground";
    rec.box = scene.truth.box;
    rec.pose = scene.truth.pose;
    rec.centroids = scene.truth.centroids;
    rec.partial = scene.truth.partial;
    manifest.samples.push_back(std::move(rec));
  }

  for (int i = 0; i < n_bg; ++i) {
    const std::uint64_t seed =
        mix_seed(spec.rng_seed, static_cast<std::uint64_t>(n_fg + i));
    Rng rng(seed);
    ImageBuffer img =
        noisy_background(intr.image_width, intr.image_height, spec, rng);
    if (rng.uniform() < background.distractor_probability) {
      const int count =
          background.distractor_min +
          static_cast<int>(rng.below(static_cast<std::uint64_t>(
              background.distractor_max - background.distractor_min + 1)));
      for (int d = 0; d < count; ++d) {
        const Vector2d c(rng.uniform(0.0, intr.image_width),
                         rng.uniform(0.0, intr.image_height));
        add_blob(img, c, spec.blob_sigma_px, spec.blob_peak);
      }
    }
    std::snprintf(name, sizeof(name), "bg_%05d.pgm", i);
    write_pnm(img, out_dir + "/" + name);
    SampleRecord rec;
    std::snprintf(name, sizeof(name), "bg_%05d", i);
    rec.id = name;
    rec.path = std::string(name) + ".pgm";
    rec.label = "background";
    manifest.samples.push_back(std::move(rec));
  }

  write_manifest(manifest, out_dir + "/manifest.jsonl");
  return manifest;
}

}  // namespace udock
