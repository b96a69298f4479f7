#include "udock/landmarks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "udock/errors.hpp"
#include "udock/rng.hpp"

namespace udock::landmarks {

BinaryMask adaptive_threshold(const ImageBuffer& patch, double window_frac,
                              double t_percent) {
  if (patch.width <= 0 || patch.height <= 0 || patch.data.empty())
    throw EmptyPatch();
  const int w = patch.width, h = patch.height;
  int window = static_cast<int>(
      std::lround(window_frac * std::max(w, h)));
  window = std::max(window, 3);

  // integral image with a zero top/left border row
  std::vector<double> integral(static_cast<std::size_t>(w + 1) * (h + 1), 0.0);
  auto ii = [&](int x, int y) -> double& {
    return integral[static_cast<std::size_t>(y) * (w + 1) + x];
  };
  for (int y = 1; y <= h; ++y) {
    double row_sum = 0.0;
    for (int x = 1; x <= w; ++x) {
      row_sum += patch.at(x - 1, y - 1, 0);
      ii(x, y) = ii(x, y - 1) + row_sum;
    }
  }

  BinaryMask mask;
  mask.width = w;
  mask.height = h;
  mask.bits.assign(static_cast<std::size_t>(w) * h, 0);
  const int half = window / 2;
  const double factor = 1.0 + t_percent / 100.0;
  for (int y = 0; y < h; ++y) {
    const int y0 = std::max(0, y - half);
    const int y1 = std::min(h - 1, y + half);
    for (int x = 0; x < w; ++x) {
      const int x0 = std::max(0, x - half);
      const int x1 = std::min(w - 1, x + half);
      const double sum =
          ii(x1 + 1, y1 + 1) - ii(x0, y1 + 1) - ii(x1 + 1, y0) + ii(x0, y0);
      const double count = static_cast<double>(x1 - x0 + 1) * (y1 - y0 + 1);
      const double mean = sum / count;
      mask.set(x, y, patch.at(x, y, 0) > mean * factor);
    }
  }
  return mask;
}

ComponentSet connected_components(const BinaryMask& mask, int min_area) {
  const int w = mask.width, h = mask.height;
  std::vector<int> label(static_cast<std::size_t>(w) * h, -1);
  ComponentSet out;
  std::vector<std::pair<int, int>> stack;
  for (int sy = 0; sy < h; ++sy) {
    for (int sx = 0; sx < w; ++sx) {
      if (!mask.at(sx, sy) || label[static_cast<std::size_t>(sy) * w + sx] >= 0)
        continue;
      const int id = static_cast<int>(out.components.size());
      Component comp;
      comp.min_x = comp.max_x = sx;
      comp.min_y = comp.max_y = sy;
      double sum_x = 0.0, sum_y = 0.0;
      stack.clear();
      stack.emplace_back(sx, sy);
      label[static_cast<std::size_t>(sy) * w + sx] = id;
      while (!stack.empty()) {
        const auto [x, y] = stack.back();
        stack.pop_back();
        ++comp.pixel_count;
        sum_x += x;
        sum_y += y;
        comp.min_x = std::min(comp.min_x, x);
        comp.max_x = std::max(comp.max_x, x);
        comp.min_y = std::min(comp.min_y, y);
        comp.max_y = std::max(comp.max_y, y);
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
            auto& l = label[static_cast<std::size_t>(ny) * w + nx];
            if (mask.at(nx, ny) && l < 0) {
              l = id;
              stack.emplace_back(nx, ny);
            }
          }
        }
      }
      comp.centroid = {sum_x / comp.pixel_count, sum_y / comp.pixel_count};
      if (comp.pixel_count >= min_area) out.components.push_back(comp);
    }
  }
  return out;
}

namespace {

double sq_dist(const Vector2d& a, const Vector2d& b) {
  return (a - b).squaredNorm();
}

KMeansResult kmeans_single(const std::vector<Vector2d>& points,
                           const std::vector<double>& weights, int k,
                           Rng& rng, int max_iters) {
  const int n = static_cast<int>(points.size());
  KMeansResult result;
  result.centers.reserve(k);

  // k-means++ seeding over weighted points
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  {
    double total = std::accumulate(weights.begin(), weights.end(), 0.0);
    double pick = rng.uniform() * total;
    int first = n - 1;
    for (int i = 0; i < n; ++i) {
      pick -= weights[i];
      if (pick <= 0.0) {
        first = i;
        break;
      }
    }
    result.centers.push_back(points[first]);
  }
  while (static_cast<int>(result.centers.size()) < k) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], sq_dist(points[i], result.centers.back()));
      total += weights[i] * d2[i];
    }
    int next = -1;
    if (total > 0.0) {
      double pick = rng.uniform() * total;
      for (int i = 0; i < n; ++i) {
        pick -= weights[i] * d2[i];
        if (pick <= 0.0) {
          next = i;
          break;
        }
      }
    }
    if (next < 0) {
      // all mass already covered; fall back to an arbitrary point
      next = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
    }
    result.centers.push_back(points[next]);
  }

  result.assignment.assign(n, -1);
  for (int iter = 0; iter < max_iters; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int bestc = 0;
      double bestd = sq_dist(points[i], result.centers[0]);
      for (int c = 1; c < k; ++c) {
        const double d = sq_dist(points[i], result.centers[c]);
        if (d < bestd) {
          bestd = d;
          bestc = c;
        }
      }
      if (result.assignment[i] != bestc) {
        result.assignment[i] = bestc;
        changed = true;
      }
    }
    std::vector<Vector2d> sums(k, Vector2d::Zero());
    std::vector<double> mass(k, 0.0);
    for (int i = 0; i < n; ++i) {
      sums[result.assignment[i]] += weights[i] * points[i];
      mass[result.assignment[i]] += weights[i];
    }
    for (int c = 0; c < k; ++c) {
      if (mass[c] > 0.0) {
        result.centers[c] = sums[c] / mass[c];
      } else {
        // re-seed an empty cluster at the point farthest from its center
        int far_i = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          const double d = sq_dist(points[i], result.centers[result.assignment[i]]);
          if (d > far_d) {
            far_d = d;
            far_i = i;
          }
        }
        result.centers[c] = points[far_i];
        changed = true;
      }
    }
    double objective = 0.0;
    for (int i = 0; i < n; ++i)
      objective += weights[i] * sq_dist(points[i], result.centers[result.assignment[i]]);
    result.objective_trace.push_back(objective);
    if (!changed) break;
  }
  return result;
}

}  // namespace

KMeansResult kmeans_weighted(const std::vector<Vector2d>& points,
                             const std::vector<double>& weights, int k,
                             std::uint64_t seed, int max_iters, int restarts) {
  if (points.empty() || k <= 0 ||
      static_cast<int>(points.size()) < k || points.size() != weights.size())
    throw PreconditionViolation("kmeans: bad inputs");
  KMeansResult best;
  double best_obj = std::numeric_limits<double>::infinity();
  for (int r = 0; r < restarts; ++r) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(r)));
    KMeansResult run = kmeans_single(points, weights, k, rng, max_iters);
    const double obj = run.objective_trace.empty()
                           ? std::numeric_limits<double>::infinity()
                           : run.objective_trace.back();
    if (obj < best_obj) {
      best_obj = obj;
      best = std::move(run);
    }
  }
  return best;
}

LandmarkSet consolidate_landmarks(const ComponentSet& comps, int k,
                                  std::uint64_t seed) {
  LandmarkSet set;
  const int n = static_cast<int>(comps.components.size());
  if (n < k) {
    set.observation = Observation::Partial;
    for (const Component& c : comps.components) set.centroids.push_back(c.centroid);
    return set;
  }
  if (n == k) {
    set.observation = Observation::Full;
    for (const Component& c : comps.components) set.centroids.push_back(c.centroid);
    return set;
  }
  std::vector<Vector2d> points;
  std::vector<double> weights;
  points.reserve(n);
  weights.reserve(n);
  for (const Component& c : comps.components) {
    points.push_back(c.centroid);
    weights.push_back(static_cast<double>(c.pixel_count));
  }
  const KMeansResult km = kmeans_weighted(points, weights, k, seed);
  set.observation = Observation::Full;
  set.centroids = km.centers;
  return set;
}

std::vector<std::vector<Vector2d>> order_landmarks(const LandmarkSet& set) {
  if (set.observation != Observation::Full) throw PartialObservation();
  const int n = static_cast<int>(set.centroids.size());
  Vector2d mean = Vector2d::Zero();
  for (const Vector2d& c : set.centroids) mean += c;
  mean /= n;

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> angle(n);
  for (int i = 0; i < n; ++i) {
    const Vector2d d = set.centroids[i] - mean;
    angle[i] = std::atan2(d.y(), d.x());
  }
  std::sort(order.begin(), order.end(),
            [&](int a, int b) { return angle[a] < angle[b]; });

  // rotate so the topmost point (smallest v) leads
  int top_pos = 0;
  for (int i = 1; i < n; ++i) {
    if (set.centroids[order[i]].y() < set.centroids[order[top_pos]].y())
      top_pos = i;
  }
  std::rotate(order.begin(), order.begin() + top_pos, order.end());

  std::vector<std::vector<Vector2d>> candidates;
  candidates.reserve(n);
  for (int shift = 0; shift < n; ++shift) {
    std::vector<Vector2d> seq(n);
    for (int i = 0; i < n; ++i) seq[i] = set.centroids[order[(i + shift) % n]];
    candidates.push_back(std::move(seq));
  }
  return candidates;
}

}  // namespace udock::landmarks
