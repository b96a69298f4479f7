#pragma once

#include <vector>

#include "udock/geometry.hpp"

namespace udock::pnp {

/// One 2D-3D correspondence: reference-frame point in mm, image point in px.
struct Correspondence {
  Vector3d point_mm;
  Vector2d pixel;
};

/// Point triple sharing the rotation-axis edge (axis_a, axis_b) plus one
/// extra point. Distances in mm, view angles as cosines of the angles
/// between the unit rays through the image points.
struct SubsetTriple {
  int axis_a = 0;
  int axis_b = 0;
  int other = 0;
  double d_ab = 0.0;     // |P_a - P_b|
  double d_ao = 0.0;     // |P_a - P_other|
  double d_ob = 0.0;     // |P_other - P_b|
  double cos_ab = 0.0;   // rays a,b
  double cos_ao = 0.0;   // rays a,other
  double cos_ob = 0.0;   // rays other,b
};

/// h(x) = a x^4 + b x^3 + c x^2 + d x + e.
struct QuarticCoeffs {
  double a = 0.0, b = 0.0, c = 0.0, d = 0.0, e = 0.0;

  double eval(double x) const {
    return (((a * x + b) * x + c) * x + d) * x + e;
  }
};

/// Squared-sum cost H(x) = sum_j h_j(x)^2 (degree 8) and its exact
/// derivative (degree 7). Coefficients are stored highest degree first.
struct CostPolynomial {
  std::vector<double> h;        // degree 8, size 9
  std::vector<double> h_prime;  // degree 7, size 8
};

struct PnpSolution {
  Pose pose;
  double reprojection_rmse = 0.0;
  int candidate_count = 0;
  /// Reprojection RMSE of every examined stationary-point candidate, in
  /// examination order; the returned pose attains the minimum.
  std::vector<double> candidate_rmses;
};

/// Splits n >= 4 points into (n-2) triples sharing the edge with the longest
/// image-plane separation. Throws DegenerateGeometry on duplicate points.
std::vector<SubsetTriple> build_subsets(
    const std::vector<Correspondence>& correspondences,
    const CameraIntrinsics& intr);

/// Reduces the triple's two law-of-cosines constraints to a quartic in the
/// depth offset x of the second axis point (first axis depth normalized to 1,
/// second depth = cos_ab + x). Throws DegenerateGeometry for collinear or
/// zero-distance triples.
QuarticCoeffs subset_to_quartic(const SubsetTriple& triple);

CostPolynomial cost_polynomial(const std::vector<QuarticCoeffs>& quartics);

/// All real roots, ascending, repeated with multiplicity. Companion-matrix
/// eigenvalues polished by two Newton steps; complex pairs discarded when
/// |imag| > 1e-8 * max|coefficient|. Coefficients highest degree first.
/// Throws ZeroPolynomial when every coefficient is zero.
std::vector<double> real_roots(const std::vector<double>& coeffs);

/// Root-mean-square pixel distance between observations and reprojections.
double reprojection_rmse(const std::vector<Correspondence>& correspondences,
                         const CameraIntrinsics& intr, const Pose& pose);

/// Recovers the pose from n >= 4 correspondences: subset quartics, local
/// minima of the squared-sum cost, per-minimum candidate poses (axis-aligned
/// linear stage, depths onto the observed rays, orthogonal Procrustes with a
/// det=+1 guard), least reprojection RMSE wins.
PnpSolution rpnp_solve(const std::vector<Correspondence>& correspondences,
                       const CameraIntrinsics& intr);

}  // namespace udock::pnp
