#pragma once

#include <optional>

#include "udock/config.hpp"
#include "udock/landmarks.hpp"
#include "udock/pnp.hpp"
#include "udock/scene.hpp"

namespace udock::pipeline {

struct PatchCrop {
  ImageBuffer patch;
  int origin_x = 0;
  int origin_y = 0;
};

/// Cuts the detection box out of the image, padded by margin_frac of the box
/// size on each side and clamped to the frame.
PatchCrop crop_box(const ImageBuffer& image, const Box& box_norm,
                   double margin_frac);

struct PatchPoseResult {
  landmarks::Observation observation = landmarks::Observation::Partial;
  std::vector<Vector2d> centroids;  // full-image pixel coordinates
  std::optional<pnp::PnpSolution> solution;
};

/// Detection box -> crop -> segmentation -> components -> consolidation.
/// On a full observation the eight cyclic landmark orderings are solved and
/// the one with the least reprojection RMSE wins.
PatchPoseResult estimate_pose_from_box(const ImageBuffer& image,
                                       const Box& box_norm,
                                       const CameraIntrinsics& intr,
                                       const LandmarkLayout& layout,
                                       const LandmarkSection& params);

}  // namespace udock::pipeline
