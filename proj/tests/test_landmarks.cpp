#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "udock/errors.hpp"
#include "udock/landmarks.hpp"
#include "udock/rng.hpp"
#include "udock/scene.hpp"

using namespace udock;
using namespace udock::landmarks;

namespace {

ImageBuffer uniform_patch(int w, int h, double value) {
  ImageBuffer img(w, h, 1);
  for (double& v : img.data) v = value;
  return img;
}

void paint_blob(ImageBuffer& img, double cx, double cy, double sigma,
                double peak) {
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      img.at(x, y) = std::min(1.0, img.at(x, y) +
                                       peak * std::exp(-d2 / (2 * sigma * sigma)));
    }
  }
}

/// Weighted SSE of the best partition of the points into exactly k clusters;
/// exhaustive over the two feasible shapes for n = k + 2 (one triple, or two
/// pairs). Small enough to enumerate directly.
double best_partition_sse(const std::vector<Vector2d>& pts,
                          const std::vector<double>& w, int k) {
  const int n = static_cast<int>(pts.size());
  REQUIRE(n == k + 2);
  auto pair_sse = [&](int i, int j) {
    const double mass = w[i] + w[j];
    const Vector2d mean = (w[i] * pts[i] + w[j] * pts[j]) / mass;
    return w[i] * (pts[i] - mean).squaredNorm() +
           w[j] * (pts[j] - mean).squaredNorm();
  };
  auto triple_sse = [&](int i, int j, int l) {
    const double mass = w[i] + w[j] + w[l];
    const Vector2d mean = (w[i] * pts[i] + w[j] * pts[j] + w[l] * pts[l]) / mass;
    return w[i] * (pts[i] - mean).squaredNorm() +
           w[j] * (pts[j] - mean).squaredNorm() +
           w[l] * (pts[l] - mean).squaredNorm();
  };
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int l = j + 1; l < n; ++l)
        best = std::min(best, triple_sse(i, j, l));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      for (int a = 0; a < n; ++a) {
        if (a == i || a == j) continue;
        for (int b = a + 1; b < n; ++b) {
          if (b == i || b == j) continue;
          best = std::min(best, pair_sse(i, j) + pair_sse(a, b));
        }
      }
  return best;
}

}  // namespace

TEST_SUITE("landmarks") {

TEST_CASE("uniform image thresholds to all background") {
  const BinaryMask mask = adaptive_threshold(uniform_patch(32, 32, 0.4));
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) CHECK_FALSE(mask.at(x, y));
}

TEST_CASE("a single bright blob leaves one component") {
  ImageBuffer img = uniform_patch(48, 48, 0.05);
  paint_blob(img, 24.0, 24.0, 2.0, 0.9);
  const BinaryMask mask = adaptive_threshold(img, 1.0 / 8.0, 15.0);
  CHECK(mask.at(24, 24));
  const ComponentSet comps = connected_components(mask);
  REQUIRE(comps.components.size() == 1);
  CHECK(comps.components[0].centroid.x() == doctest::Approx(24.0).epsilon(0.05));
  CHECK(comps.components[0].centroid.y() == doctest::Approx(24.0).epsilon(0.05));
}

TEST_CASE("1x1 patch evaluates against itself as background") {
  const BinaryMask mask = adaptive_threshold(uniform_patch(1, 1, 0.8));
  CHECK_FALSE(mask.at(0, 0));
}

TEST_CASE("empty patch is rejected") {
  ImageBuffer img;
  CHECK_THROWS_AS(adaptive_threshold(img), EmptyPatch);
}

TEST_CASE("empty mask yields zero components") {
  BinaryMask mask;
  mask.width = 8;
  mask.height = 8;
  mask.bits.assign(64, 0);
  CHECK(connected_components(mask).components.empty());
}

TEST_CASE("two disjoint squares yield two centered components") {
  BinaryMask mask;
  mask.width = 16;
  mask.height = 16;
  mask.bits.assign(256, 0);
  for (int y = 1; y <= 3; ++y)
    for (int x = 1; x <= 3; ++x) mask.set(x, y, true);
  for (int y = 10; y <= 12; ++y)
    for (int x = 11; x <= 13; ++x) mask.set(x, y, true);
  const ComponentSet comps = connected_components(mask);
  REQUIRE(comps.components.size() == 2);
  CHECK(comps.components[0].centroid.x() == doctest::Approx(2.0));
  CHECK(comps.components[0].centroid.y() == doctest::Approx(2.0));
  CHECK(comps.components[1].centroid.x() == doctest::Approx(12.0));
  CHECK(comps.components[1].centroid.y() == doctest::Approx(11.0));
  CHECK(comps.components[0].pixel_count == 9);
}

TEST_CASE("a diagonal gap still connects under 8-connectivity") {
  // two 2x2 blocks touching only at one corner
  BinaryMask mask;
  mask.width = 8;
  mask.height = 8;
  mask.bits.assign(64, 0);
  mask.set(1, 1, true);
  mask.set(2, 1, true);
  mask.set(1, 2, true);
  mask.set(2, 2, true);
  mask.set(3, 3, true);
  mask.set(4, 3, true);
  mask.set(3, 4, true);
  mask.set(4, 4, true);
  const ComponentSet comps = connected_components(mask, 1);
  CHECK(comps.components.size() == 1);
}

TEST_CASE("components below the area floor are dropped") {
  BinaryMask mask;
  mask.width = 8;
  mask.height = 8;
  mask.bits.assign(64, 0);
  mask.set(0, 0, true);  // salt noise
  for (int y = 4; y <= 5; ++y)
    for (int x = 4; x <= 5; ++x) mask.set(x, y, true);
  const ComponentSet comps = connected_components(mask, 3);
  REQUIRE(comps.components.size() == 1);
  CHECK(comps.components[0].pixel_count == 4);
}

TEST_CASE("eight components pass through as a full observation") {
  ComponentSet comps;
  for (int i = 0; i < 8; ++i) {
    Component c;
    c.centroid = {10.0 * i, 5.0};
    c.pixel_count = 7;
    comps.components.push_back(c);
  }
  const LandmarkSet set = consolidate_landmarks(comps, 8, 1);
  CHECK(set.observation == Observation::Full);
  REQUIRE(set.centroids.size() == 8);
  for (int i = 0; i < 8; ++i)
    CHECK((set.centroids[i] - comps.components[i].centroid).norm() == 0.0);
}

TEST_CASE("five components are a partial observation") {
  ComponentSet comps;
  for (int i = 0; i < 5; ++i) {
    Component c;
    c.centroid = {10.0 * i, 0.0};
    c.pixel_count = 6;
    comps.components.push_back(c);
  }
  const LandmarkSet set = consolidate_landmarks(comps, 8, 1);
  CHECK(set.observation == Observation::Partial);
  CHECK(set.centroids.size() == 5);
}

TEST_CASE("split lights merge back to eight clusters (exhaustive oracle)") {
  // two pairs 2 px apart plus six singletons spread far around a ring
  std::vector<Vector2d> pts;
  std::vector<double> weights;
  Rng rng(99);
  for (int i = 0; i < 6; ++i) {
    const double a = 2.0 * M_PI * i / 6.0;
    pts.emplace_back(100.0 + 60.0 * std::cos(a), 100.0 + 60.0 * std::sin(a));
    weights.push_back(8.0);
  }
  pts.emplace_back(100.0, 20.0);
  weights.push_back(5.0);
  pts.emplace_back(102.0, 20.0);
  weights.push_back(4.0);
  pts.emplace_back(40.0, 160.0);
  weights.push_back(6.0);
  pts.emplace_back(40.0, 158.0);
  weights.push_back(3.0);

  ComponentSet comps;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    Component c;
    c.centroid = pts[i];
    c.pixel_count = static_cast<int>(weights[i]);
    comps.components.push_back(c);
  }
  const LandmarkSet set = consolidate_landmarks(comps, 8, 7);
  CHECK(set.observation == Observation::Full);
  REQUIRE(set.centroids.size() == 8);

  const KMeansResult km = kmeans_weighted(pts, weights, 8, 7);
  const double oracle = best_partition_sse(pts, weights, 8);
  CHECK(km.objective_trace.back() == doctest::Approx(oracle).epsilon(1e-9));

  // the paired components merged: their weighted means appear as centroids
  const Vector2d merged_a = (5.0 * pts[6] + 4.0 * pts[7]) / 9.0;
  const Vector2d merged_b = (6.0 * pts[8] + 3.0 * pts[9]) / 9.0;
  for (const Vector2d& m : {merged_a, merged_b}) {
    double best = 1e9;
    for (const Vector2d& c : set.centroids) best = std::min(best, (c - m).norm());
    CHECK(best < 1e-9);
  }
}

TEST_CASE("k-means objective never increases across iterations") {
  Rng rng(123);
  std::vector<Vector2d> pts;
  std::vector<double> weights;
  for (int i = 0; i < 40; ++i) {
    pts.emplace_back(rng.uniform(0, 100), rng.uniform(0, 100));
    weights.push_back(rng.uniform(1, 10));
  }
  const KMeansResult km = kmeans_weighted(pts, weights, 6, 11, 50, 1);
  REQUIRE(!km.objective_trace.empty());
  for (std::size_t i = 1; i < km.objective_trace.size(); ++i)
    CHECK(km.objective_trace[i] <= km.objective_trace[i - 1] + 1e-12);
}

TEST_CASE("consolidation is deterministic per seed") {
  Rng rng(5);
  ComponentSet comps;
  for (int i = 0; i < 12; ++i) {
    Component c;
    c.centroid = {rng.uniform(0, 50), rng.uniform(0, 50)};
    c.pixel_count = 3 + static_cast<int>(rng.below(9));
    comps.components.push_back(c);
  }
  const LandmarkSet a = consolidate_landmarks(comps, 8, 21);
  const LandmarkSet b = consolidate_landmarks(comps, 8, 21);
  REQUIRE(a.centroids.size() == b.centroids.size());
  for (std::size_t i = 0; i < a.centroids.size(); ++i)
    CHECK((a.centroids[i] - b.centroids[i]).norm() == 0.0);
}

TEST_CASE("a perfect octagon yields eight angle-sorted cyclic candidates") {
  LandmarkSet set;
  set.observation = Observation::Full;
  for (int i = 0; i < 8; ++i) {
    const double a = 2.0 * M_PI * i / 8.0;
    set.centroids.emplace_back(50.0 + 20.0 * std::cos(a),
                               50.0 + 20.0 * std::sin(a));
  }
  const auto candidates = order_landmarks(set);
  REQUIRE(candidates.size() == 8);
  for (const auto& seq : candidates) {
    REQUIRE(seq.size() == 8);
    // consecutive angular steps all equal 2*pi/8 in traversal direction
    for (int i = 0; i < 8; ++i) {
      const Vector2d d0 = seq[i] - Vector2d(50, 50);
      const Vector2d d1 = seq[(i + 1) % 8] - Vector2d(50, 50);
      const double cross = d0.x() * d1.y() - d0.y() * d1.x();
      CHECK(cross > 0.0);  // consistent traversal
    }
  }
  // the first candidate starts at the topmost point (smallest v)
  double min_v = 1e9;
  for (const Vector2d& c : set.centroids) min_v = std::min(min_v, c.y());
  CHECK(candidates[0][0].y() == doctest::Approx(min_v));
}

TEST_CASE("rotating the octagon preserves the cyclic structure") {
  LandmarkSet set;
  set.observation = Observation::Full;
  const double rot = 17.0 * M_PI / 180.0;
  for (int i = 0; i < 8; ++i) {
    const double a = 2.0 * M_PI * i / 8.0 + rot;
    set.centroids.emplace_back(50.0 + 20.0 * std::cos(a),
                               50.0 + 20.0 * std::sin(a));
  }
  const auto candidates = order_landmarks(set);
  REQUIRE(candidates.size() == 8);
  // every candidate is a cyclic shift of candidate 0
  for (std::size_t shift = 0; shift < candidates.size(); ++shift) {
    for (int i = 0; i < 8; ++i) {
      const Vector2d expect = candidates[0][(i + shift) % 8];
      CHECK((candidates[shift][i] - expect).norm() < 1e-12);
    }
  }
}

TEST_CASE("noisy octagon keeps the true correspondence among candidates") {
  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vector2d> truth;
    for (int i = 0; i < 8; ++i) {
      const double a = 2.0 * M_PI * i / 8.0 + rng.uniform(0, 2 * M_PI / 8);
      truth.emplace_back(60.0 + 25.0 * std::cos(a), 60.0 + 25.0 * std::sin(a));
    }
    LandmarkSet set;
    set.observation = Observation::Full;
    for (const Vector2d& p : truth)
      set.centroids.emplace_back(p.x() + rng.normal(0, 1.0),
                                 p.y() + rng.normal(0, 1.0));
    const auto candidates = order_landmarks(set);
    bool found = false;
    for (const auto& seq : candidates) {
      double worst = 0.0;
      for (int i = 0; i < 8; ++i)
        worst = std::max(worst, (seq[i] - truth[i]).norm());
      if (worst < 4.0) found = true;  // ~4 sigma of the added noise
    }
    CHECK(found);
  }
}

TEST_CASE("partial observations cannot be ordered") {
  LandmarkSet set;
  set.observation = Observation::Partial;
  set.centroids = {{0.0, 0.0}, {1.0, 1.0}};
  CHECK_THROWS_AS(order_landmarks(set), PartialObservation);
}

}  // TEST_SUITE
