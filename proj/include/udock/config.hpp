#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "udock/detector.hpp"
#include "udock/geometry.hpp"
#include "udock/scene.hpp"

namespace udock {

/// Pose-bench section: a separate camera, noise levels and trial counts for
/// the solver noise sweep.
struct BenchSection {
  CameraIntrinsics intrinsics{2200.0, 2200.0, 0.0, 646.0, 482.0, 1292, 964};
  std::vector<double> noise_sigmas = {0.0, 3.0, 5.0};
  int trials = 1000;
  PoseRange pose_range{40.0, 40.0, 40.0, 3000.0, 5000.0, 0.10};
  std::uint64_t seed = 1;
};

/// Landmark-extraction knobs shared by the patch pipeline and the CLI.
/// The defaults differ from the textbook window/8 + 15%: light blobs sit on
/// an additive-noise background, where a 15% margin is well under one noise
/// sigma and floods the mask with speckle, while small windows get dominated
/// by the blob itself. A half-patch window with a 2x margin separates both.
struct LandmarkSection {
  double window_frac = 0.5;
  double t_percent = 100.0;
  int min_area = 3;
  double crop_margin = 0.25;  // fraction of box size added on each side
  std::uint64_t kmeans_seed = 1;
};

/// Whole-run configuration. JSON on disk; unknown keys are rejected and all
/// module preconditions are checked at load.
struct RunConfig {
  int schema_version = 1;
  int image_size = 112;
  int image_channels = 1;
  int grid_g = 7;
  int grid_b = 2;
  detector::LossWeights loss_weights;
  CameraIntrinsics intrinsics{140.0, 140.0, 0.0, 56.0, 56.0, 112, 112};
  int layout_count = 8;
  double layout_radius_mm = 600.0;
  RenderSpec render;
  PoseRange pose_range;
  BackgroundSpec background;
  std::vector<int> net_conv_filters = {8, 16, 32, 64};
  std::vector<int> net_fc_sizes = {256, 512};
  detector::SgdConfig train;
  BenchSection bench;
  LandmarkSection landmarks;
  std::uint64_t seed = 1;

  LandmarkLayout layout() const {
    return LandmarkLayout::make(layout_count, layout_radius_mm);
  }
  detector::NetConfig net_config() const;

  void validate() const;
  static RunConfig load(const std::string& path);
  void save(const std::string& path) const;
  std::string to_json_string() const;
};

}  // namespace udock
