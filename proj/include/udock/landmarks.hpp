#pragma once

#include <cstdint>
#include <vector>

#include "udock/geometry.hpp"
#include "udock/image.hpp"

namespace udock::landmarks {

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // row-major, 0/1

  bool at(int x, int y) const {
    return bits[static_cast<std::size_t>(y) * width + x] != 0;
  }
  void set(int x, int y, bool v) {
    bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0;
  }
};

struct Component {
  int pixel_count = 0;
  Vector2d centroid = Vector2d::Zero();  // subpixel, unweighted pixel mean
  int min_x = 0, min_y = 0, max_x = 0, max_y = 0;
};

struct ComponentSet {
  std::vector<Component> components;
};

enum class Observation { Full, Partial };

struct LandmarkSet {
  std::vector<Vector2d> centroids;
  Observation observation = Observation::Partial;
};

/// Integral-image local-mean segmentation on the first channel. A pixel is
/// foreground when it exceeds its window mean by t_percent. The window side
/// is window_frac of the larger patch dimension (at least 3 px) and windows
/// clamp at the border.
BinaryMask adaptive_threshold(const ImageBuffer& patch,
                              double window_frac = 0.5,
                              double t_percent = 100.0);

/// 8-connectivity labeling; components smaller than min_area are dropped.
ComponentSet connected_components(const BinaryMask& mask, int min_area = 3);

struct KMeansResult {
  std::vector<Vector2d> centers;
  std::vector<int> assignment;
  std::vector<double> objective_trace;  // weighted SSE after each update
};

/// Weighted k-means with k-means++ seeding; deterministic for a fixed seed.
/// Runs `restarts` seeded attempts and keeps the lowest objective.
KMeansResult kmeans_weighted(const std::vector<Vector2d>& points,
                             const std::vector<double>& weights, int k,
                             std::uint64_t seed, int max_iters = 50,
                             int restarts = 4);

/// Fewer than k components: Partial with the component centroids.
/// Exactly k: Full with the component centroids. More than k: Full with the
/// k-means cluster means of the component centroids weighted by area.
LandmarkSet consolidate_landmarks(const ComponentSet& comps, int k = 8,
                                  std::uint64_t seed = 1);

/// Angle-sorts a Full set around its mean, starting at the topmost point,
/// and returns all cyclic shifts as candidate orderings.
/// Throws PartialObservation unless the set is Full.
std::vector<std::vector<Vector2d>> order_landmarks(const LandmarkSet& set);

}  // namespace udock::landmarks
