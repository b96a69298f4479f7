#include "udock/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "udock/errors.hpp"

namespace udock::pipeline {

PatchCrop crop_box(const ImageBuffer& image, const Box& box_norm,
                   double margin_frac) {
  const double bx = box_norm.x * image.width;
  const double by = box_norm.y * image.height;
  const double bw = box_norm.w * image.width;
  const double bh = box_norm.h * image.height;
  const double mx = margin_frac * bw;
  const double my = margin_frac * bh;
  const int x0 = std::clamp(static_cast<int>(std::floor(bx - mx)), 0,
                            std::max(0, image.width - 1));
  const int y0 = std::clamp(static_cast<int>(std::floor(by - my)), 0,
                            std::max(0, image.height - 1));
  const int x1 = std::clamp(static_cast<int>(std::ceil(bx + bw + mx)), x0 + 1,
                            image.width);
  const int y1 = std::clamp(static_cast<int>(std::ceil(by + bh + my)), y0 + 1,
                            image.height);
  PatchCrop crop;
  crop.origin_x = x0;
  crop.origin_y = y0;
  crop.patch = ImageBuffer(x1 - x0, y1 - y0, image.channels, image.color_space);
  for (int c = 0; c < image.channels; ++c)
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x)
        crop.patch.at(x - x0, y - y0, c) = image.at(x, y, c);
  return crop;
}

PatchPoseResult estimate_pose_from_box(const ImageBuffer& image,
                                       const Box& box_norm,
                                       const CameraIntrinsics& intr,
                                       const LandmarkLayout& layout,
                                       const LandmarkSection& params) {
  const PatchCrop crop = crop_box(image, box_norm, params.crop_margin);
  const landmarks::BinaryMask mask = landmarks::adaptive_threshold(
      crop.patch, params.window_frac, params.t_percent);
  const landmarks::ComponentSet comps =
      landmarks::connected_components(mask, params.min_area);
  const landmarks::LandmarkSet set = landmarks::consolidate_landmarks(
      comps, layout.count, params.kmeans_seed);

  PatchPoseResult result;
  result.observation = set.observation;
  const Vector2d origin(crop.origin_x, crop.origin_y);
  for (const Vector2d& c : set.centroids) result.centroids.push_back(c + origin);
  if (set.observation != landmarks::Observation::Full) return result;

  landmarks::LandmarkSet image_set;
  image_set.observation = landmarks::Observation::Full;
  image_set.centroids = result.centroids;
  const auto candidates = landmarks::order_landmarks(image_set);

  double best_rmse = std::numeric_limits<double>::infinity();
  for (const auto& ordering : candidates) {
    std::vector<pnp::Correspondence> corr;
    corr.reserve(layout.count);
    for (int i = 0; i < layout.count; ++i)
      corr.push_back({layout.points[i], ordering[i]});
    try {
      pnp::PnpSolution sol = pnp::rpnp_solve(corr, intr);
      if (sol.reprojection_rmse < best_rmse) {
        best_rmse = sol.reprojection_rmse;
        result.solution = std::move(sol);
      }
    } catch (const Error&) {
      // a bad ordering may be degenerate; others still compete
    }
  }
  return result;
}

}  // namespace udock::pipeline
