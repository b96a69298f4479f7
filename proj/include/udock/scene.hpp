#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "udock/geometry.hpp"
#include "udock/image.hpp"
#include "udock/rng.hpp"

namespace udock {

/// Axis-aligned box, normalized to [0,1] image coordinates.
/// (x, y) is the top-left corner.
struct Box {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
};

/// Ring of light landmarks, coplanar on z_r = 0, uniformly spaced in angle
/// on a circle around the reference origin.
struct LandmarkLayout {
  int count = 8;
  double radius_mm = 600.0;
  std::vector<Vector3d> points;

  static LandmarkLayout make(int count = 8, double radius_mm = 600.0);
};

/// Controls for the synthetic light renderer.
struct RenderSpec {
  double blob_sigma_px = 1.5;
  double blob_peak = 0.85;
  double background_level = 0.08;
  double background_noise_sigma = 0.03;
  std::uint64_t rng_seed = 1;

  /// blob_peak in (0,1] and background_level + 3*noise_sigma < blob_peak.
  void validate() const;
};

struct GroundTruth {
  Box box;                          // normalized
  Pose pose;
  std::vector<Vector2d> centroids;  // pixel coordinates of visible landmarks
  bool partial = false;
};

struct RenderedScene {
  ImageBuffer image;
  GroundTruth truth;
};

/// Renders one Gaussian blob per visible landmark over a noisy background.
/// The ground-truth box is the tight bound of the projected centroids padded
/// by 2*blob_sigma_px. Deterministic for a fixed spec.rng_seed.
/// Throws NoLandmarkVisible when nothing projects into the image, and
/// PreconditionViolation when allow_partial is false but some landmark
/// falls outside the frame.
RenderedScene render_scene(const LandmarkLayout& layout,
                           const CameraIntrinsics& intr, const Pose& pose,
                           const RenderSpec& spec, bool allow_partial = false);

/// Sampling ranges for synthetic poses. Angles are half-ranges in degrees,
/// distances in millimetres along the optical axis; the lateral offset is a
/// fraction of the distance.
struct PoseRange {
  double yaw_deg = 40.0;
  double pitch_deg = 40.0;
  double roll_deg = 40.0;
  double dist_min_mm = 3000.0;
  double dist_max_mm = 15000.0;
  double lateral_frac = 0.10;

  Pose sample(Rng& rng) const;
};

/// Draws poses until every landmark projects inside the image.
/// Throws PreconditionViolation after max_attempts.
Pose sample_full_observation_pose(const PoseRange& range,
                                  const LandmarkLayout& layout,
                                  const CameraIntrinsics& intr, Rng& rng,
                                  int max_attempts = 1000);

struct DeformNote {
  std::string op;
  double param = 0.0;
  std::uint64_t seed = 0;
};

struct SampleRecord {
  std::string id;
  std::string path;
  std::string label;  // "foreground" | "background"
  Box box;
  std::optional<Pose> pose;
  std::vector<Vector2d> centroids;
  bool partial = false;
  std::optional<DeformNote> deform;  // set on derived datasets
};

struct DatasetManifest {
  std::vector<SampleRecord> samples;
};

/// Options for background (no station) samples.
struct BackgroundSpec {
  double distractor_probability = 0.5;  // chance a background gets blobs
  int distractor_min = 1;
  int distractor_max = 4;
};

/// Renders n_fg foreground and n_bg background images under out_dir and
/// returns the manifest (also written as <out_dir>/manifest.jsonl).
/// Per-sample seeds derive from (spec.rng_seed, sample index), so the output
/// is byte-stable for a fixed configuration.
DatasetManifest generate_dataset(int n_fg, int n_bg, const PoseRange& range,
                                 const LandmarkLayout& layout,
                                 const CameraIntrinsics& intr,
                                 const RenderSpec& spec,
                                 const BackgroundSpec& background,
                                 const std::string& out_dir);

/// Line-delimited JSON records:
/// {id, path, label, box:[x,y,w,h], pose:{R:[9],T:[3]}, centroids, partial}
void write_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest read_manifest(const std::string& path);

}  // namespace udock
