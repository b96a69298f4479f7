#include "udock/pnp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

#include "udock/errors.hpp"

namespace udock::pnp {

namespace {

double eval_poly(const std::vector<double>& c, double x) {
  double v = 0.0;
  for (double coeff : c) v = v * x + coeff;
  return v;
}

std::vector<double> derivative(const std::vector<double>& c) {
  const int degree = static_cast<int>(c.size()) - 1;
  if (degree <= 0) return {0.0};
  std::vector<double> d(degree);
  for (int i = 0; i < degree; ++i) d[i] = c[i] * (degree - i);
  return d;
}

/// Completes a unit x-axis into a right-handed orthonormal basis. The branch
/// keeps the cross products away from parallel vectors.
Matrix3d complete_frame(const Vector3d& x_axis) {
  Vector3d y, z;
  if (std::abs(x_axis.y()) < std::abs(x_axis.z())) {
    z = x_axis.cross(Vector3d::UnitY()).normalized();
    y = z.cross(x_axis).normalized();
  } else {
    y = Vector3d::UnitZ().cross(x_axis).normalized();
    z = x_axis.cross(y).normalized();
  }
  Matrix3d m;
  m.col(0) = x_axis;
  m.col(1) = y;
  m.col(2) = z;
  return m;
}

/// Rigid alignment reference -> camera minimizing |R p + t - c|^2, with the
/// reflection forced out so det(R) = +1.
Pose procrustes(const std::vector<Vector3d>& ref,
                const std::vector<Vector3d>& cam) {
  const int n = static_cast<int>(ref.size());
  Vector3d ref_mean = Vector3d::Zero(), cam_mean = Vector3d::Zero();
  for (int i = 0; i < n; ++i) {
    ref_mean += ref[i];
    cam_mean += cam[i];
  }
  ref_mean /= n;
  cam_mean /= n;
  Matrix3d cross = Matrix3d::Zero();
  for (int i = 0; i < n; ++i)
    cross += (cam[i] - cam_mean) * (ref[i] - ref_mean).transpose();
  const Eigen::JacobiSVD<Matrix3d> svd(
      cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Matrix3d s = Matrix3d::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0)
    s(2, 2) = -1.0;
  Pose pose;
  pose.rotation = svd.matrixU() * s * svd.matrixV().transpose();
  pose.translation = cam_mean - pose.rotation * ref_mean;
  return pose;
}

struct NormalizedObservations {
  std::vector<Vector3d> rays;     // unit rays through the image points
  std::vector<Vector2d> normed;   // (X/Z, Y/Z) on the plane z=1
};

NormalizedObservations normalize_observations(
    const std::vector<Correspondence>& corr, const CameraIntrinsics& intr) {
  const Matrix3d k_inv = intr.matrix().inverse();
  NormalizedObservations out;
  out.rays.reserve(corr.size());
  out.normed.reserve(corr.size());
  for (const Correspondence& c : corr) {
    const Vector3d v = k_inv * Vector3d(c.pixel.x(), c.pixel.y(), 1.0);
    out.normed.emplace_back(v.x() / v.z(), v.y() / v.z());
    out.rays.push_back(v.normalized());
  }
  return out;
}

void check_correspondences(const std::vector<Correspondence>& corr) {
  if (corr.size() < 4)
    throw PreconditionViolation("rpnp: need at least 4 correspondences");
  for (const Correspondence& c : corr) {
    if (!c.point_mm.allFinite() || !c.pixel.allFinite())
      throw PreconditionViolation("rpnp: non-finite correspondence");
  }
  // collinearity: the points must span a 2D subspace
  Vector3d mean = Vector3d::Zero();
  for (const Correspondence& c : corr) mean += c.point_mm;
  mean /= static_cast<double>(corr.size());
  Matrix3d scatter = Matrix3d::Zero();
  double scale = 0.0;
  for (const Correspondence& c : corr) {
    const Vector3d d = c.point_mm - mean;
    scatter += d * d.transpose();
    scale = std::max(scale, d.squaredNorm());
  }
  const Eigen::SelfAdjointEigenSolver<Matrix3d> eig(scatter);
  if (scale <= 0.0 || eig.eigenvalues()(1) <= 1e-12 * scale)
    throw DegenerateGeometry("rpnp: 3D points are collinear");
}

}  // namespace

std::vector<SubsetTriple> build_subsets(
    const std::vector<Correspondence>& corr, const CameraIntrinsics& intr) {
  check_correspondences(corr);
  intr.validate();
  const int n = static_cast<int>(corr.size());

  int axis_a = 0, axis_b = 1;
  double best = -1.0;
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      const double sep = (corr[i].pixel - corr[j].pixel).norm();
      if (sep > best) {
        best = sep;
        axis_a = i;
        axis_b = j;
      }
    }
  }

  const NormalizedObservations obs = normalize_observations(corr, intr);
  std::vector<SubsetTriple> triples;
  triples.reserve(n - 2);
  for (int k = 0; k < n; ++k) {
    if (k == axis_a || k == axis_b) continue;
    SubsetTriple t;
    t.axis_a = axis_a;
    t.axis_b = axis_b;
    t.other = k;
    t.d_ab = (corr[axis_a].point_mm - corr[axis_b].point_mm).norm();
    t.d_ao = (corr[axis_a].point_mm - corr[k].point_mm).norm();
    t.d_ob = (corr[k].point_mm - corr[axis_b].point_mm).norm();
    if (!(t.d_ab > 0.0) || !(t.d_ao > 0.0) || !(t.d_ob > 0.0))
      throw DegenerateGeometry("build_subsets: zero pairwise distance");
    t.cos_ab = obs.rays[axis_a].dot(obs.rays[axis_b]);
    t.cos_ao = obs.rays[axis_a].dot(obs.rays[k]);
    t.cos_ob = obs.rays[k].dot(obs.rays[axis_b]);
    triples.push_back(t);
  }
  return triples;
}

QuarticCoeffs subset_to_quartic(const SubsetTriple& t) {
  if (!(t.d_ab > 0.0) || !(t.d_ao > 0.0) || !(t.d_ob > 0.0))
    throw DegenerateGeometry("subset_to_quartic: zero pairwise distance");
  // collinear 3D triple: the triangle inequality degenerates to equality
  const double longest = std::max({t.d_ab, t.d_ao, t.d_ob});
  const double perimeter_rest = t.d_ab + t.d_ao + t.d_ob - longest;
  if (perimeter_rest - longest <= 1e-12 * longest)
    throw DegenerateGeometry("subset_to_quartic: collinear triple");

  // With the depth of the first axis point normalized to 1, the second axis
  // depth is (cos_ab + x). Eliminating the third point's depth from its two
  // law-of-cosines constraints leaves this quartic in x.
  const double l1 = t.cos_ab;       // rays a,b
  const double l2 = t.cos_ao;       // rays a,other
  const double a5 = t.cos_ob;       // rays other,b
  const double c1_sq = 1.0 - l1 * l1;
  const double c2_sq = 1.0 - l2 * l2;
  const double a1 = (t.d_ao / t.d_ab) * (t.d_ao / t.d_ab);
  const double a2 = a1 * c1_sq - c2_sq;
  const double a3 = l2 * a5 - l1;
  const double a4 = l1 * a5 - l2;
  const double a6 =
      (t.d_ob * t.d_ob - t.d_ab * t.d_ab - t.d_ao * t.d_ao) /
      (2.0 * t.d_ab * t.d_ab);
  const double a7 = 1.0 - l1 * l1 - l2 * l2 + l1 * l2 * a5 + a6 * c1_sq;

  QuarticCoeffs q;
  q.a = a6 * a6 - a1 * a5 * a5;
  q.b = 2.0 * (a3 * a6 - a1 * a4 * a5);
  q.c = a3 * a3 + 2.0 * a6 * a7 - a1 * a4 * a4 - a2 * a5 * a5;
  q.d = 2.0 * (a3 * a7 - a2 * a4 * a5);
  q.e = a7 * a7 - a2 * a4 * a4;
  return q;
}

CostPolynomial cost_polynomial(const std::vector<QuarticCoeffs>& quartics) {
  if (quartics.empty())
    throw PreconditionViolation("cost_polynomial: no quartics");
  CostPolynomial cost;
  cost.h.assign(9, 0.0);
  for (const QuarticCoeffs& q : quartics) {
    const double c[5] = {q.a, q.b, q.c, q.d, q.e};
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j) cost.h[i + j] += c[i] * c[j];
  }
  cost.h_prime = derivative(cost.h);
  return cost;
}

std::vector<double> real_roots(const std::vector<double>& coeffs) {
  double max_abs = 0.0;
  for (double c : coeffs) max_abs = std::max(max_abs, std::abs(c));
  if (max_abs == 0.0) throw ZeroPolynomial();

  // trim negligible leading coefficients
  std::size_t first = 0;
  while (first < coeffs.size() &&
         std::abs(coeffs[first]) <= 1e-14 * max_abs)
    ++first;
  std::vector<double> p(coeffs.begin() + first, coeffs.end());
  if (p.size() <= 1) return {};
  const int degree = static_cast<int>(p.size()) - 1;

  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(degree, degree);
  for (int i = 1; i < degree; ++i) companion(i, i - 1) = 1.0;
  for (int i = 0; i < degree; ++i) companion(i, degree - 1) = -p[degree - i] / p[0];

  const Eigen::EigenSolver<Eigen::MatrixXd> eig(companion);
  const std::vector<double> dp = derivative(p);
  const std::vector<double> dpp = derivative(dp);
  const double imag_tol = 1e-8 * max_abs;

  std::vector<double> roots;
  for (int i = 0; i < degree; ++i) {
    const std::complex<double> r = eig.eigenvalues()(i);
    if (std::abs(r.imag()) > imag_tol) continue;
    double x = r.real();
    // Two polish steps; the p*p' form stays quadratic at repeated roots.
    for (int step = 0; step < 2; ++step) {
      const double f = eval_poly(p, x);
      const double f1 = eval_poly(dp, x);
      const double f2 = eval_poly(dpp, x);
      const double denom = f1 * f1 - f * f2;
      if (denom == 0.0) break;
      x -= f * f1 / denom;
    }
    roots.push_back(x);
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

double reprojection_rmse(const std::vector<Correspondence>& corr,
                         const CameraIntrinsics& intr, const Pose& pose) {
  if (corr.empty()) throw PreconditionViolation("reprojection_rmse: no points");
  double sum_sq = 0.0;
  for (const Correspondence& c : corr) {
    const Vector2d proj = project(c.point_mm, intr, pose);
    sum_sq += (proj - c.pixel).squaredNorm();
  }
  return std::sqrt(sum_sq / static_cast<double>(corr.size()));
}

PnpSolution rpnp_solve(const std::vector<Correspondence>& corr,
                       const CameraIntrinsics& intr) {
  const std::vector<SubsetTriple> triples = build_subsets(corr, intr);
  std::vector<QuarticCoeffs> quartics;
  quartics.reserve(triples.size());
  for (const SubsetTriple& t : triples) quartics.push_back(subset_to_quartic(t));
  const CostPolynomial cost = cost_polynomial(quartics);

  const int n = static_cast<int>(corr.size());
  const int axis_a = triples[0].axis_a;
  const int axis_b = triples[0].axis_b;
  const NormalizedObservations obs = normalize_observations(corr, intr);
  const Vector3d va = obs.rays[axis_a];
  const Vector3d vb = obs.rays[axis_b];
  const double cos_ab = va.dot(vb);

  // object frame: origin at the axis-edge midpoint, x-axis along the edge
  const Vector3d mid =
      0.5 * (corr[axis_a].point_mm + corr[axis_b].point_mm);
  const Vector3d edge = (corr[axis_b].point_mm - mid).normalized();
  const Matrix3d object_frame = complete_frame(edge);
  std::vector<Vector3d> object_pts(n);
  for (int i = 0; i < n; ++i)
    object_pts[i] = object_frame.transpose() * (corr[i].point_mm - mid);

  std::vector<Vector3d> reference_pts(n);
  for (int i = 0; i < n; ++i) reference_pts[i] = corr[i].point_mm;

  const std::vector<double> h_second = derivative(cost.h_prime);
  std::vector<double> stationary = real_roots(cost.h_prime);

  PnpSolution best;
  best.reprojection_rmse = std::numeric_limits<double>::infinity();
  for (double x : stationary) {
    // keep local minima; near-flat stationary points stay in as candidates
    if (eval_poly(h_second, x) < -1e-12) continue;
    // converge onto the stationary point of the cost
    for (int step = 0; step < 20; ++step) {
      const double f = eval_poly(cost.h_prime, x);
      const double f1 = eval_poly(h_second, x);
      if (f1 == 0.0) break;
      const double delta = f / f1;
      x -= delta;
      if (std::abs(delta) <= 1e-15 * std::max(1.0, std::abs(x))) break;
    }

    const double depth_b = cos_ab + x;
    Vector3d axis_dir = vb * depth_b - va;
    const double axis_len = axis_dir.norm();
    if (axis_len < 1e-12) continue;
    axis_dir /= axis_len;
    const Matrix3d cam_frame = complete_frame(axis_dir);
    const double r1 = cam_frame(0, 0), r2 = cam_frame(0, 1), r3 = cam_frame(0, 2);
    const double r4 = cam_frame(1, 0), r5 = cam_frame(1, 1), r6 = cam_frame(1, 2);
    const double r7 = cam_frame(2, 0), r8 = cam_frame(2, 1), r9 = cam_frame(2, 2);

    // Remaining unknowns: rotation angle about the axis (cos, sin) and the
    // translation. Each point contributes two homogeneous projection rows in
    // w = [cos, sin, tx, ty, tz, 1]; the smallest eigenvector of D^T D is the
    // least-squares solution.
    Eigen::MatrixXd d(2 * n, 6);
    for (int i = 0; i < n; ++i) {
      const double xo = object_pts[i].x();
      const double yo = object_pts[i].y();
      const double zo = object_pts[i].z();
      const double u = obs.normed[i].x();
      const double v = obs.normed[i].y();
      d.row(2 * i) << -r2 * yo - r3 * zo + u * (r8 * yo + r9 * zo),
          -r3 * yo + r2 * zo + u * (r9 * yo - r8 * zo), -1.0, 0.0, u,
          u * r7 * xo - r1 * xo;
      d.row(2 * i + 1) << -r5 * yo - r6 * zo + v * (r8 * yo + r9 * zo),
          -r6 * yo + r5 * zo + v * (r9 * yo - r8 * zo), 0.0, -1.0, v,
          v * r7 * xo - r4 * xo;
    }
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d.transpose() * d);
    const Eigen::VectorXd w = es.eigenvectors().col(0);
    if (std::abs(w(5)) < 1e-15) continue;
    const double cos_t = w(0) / w(5);
    const double sin_t = w(1) / w(5);
    const Vector3d trans(w(2) / w(5), w(3) / w(5), w(4) / w(5));

    // model the points in the camera frame, then drop each one onto its
    // observed ray at the modeled depth
    std::vector<Vector3d> cloud(n);
    bool usable = true;
    for (int i = 0; i < n; ++i) {
      const double xo = object_pts[i].x();
      const double yo = object_pts[i].y();
      const double zo = object_pts[i].z();
      const Vector3d modeled =
          cam_frame * Vector3d(xo, cos_t * yo - sin_t * zo,
                               sin_t * yo + cos_t * zo) +
          trans;
      const double depth = modeled.norm();
      if (!(depth > 0.0) || !modeled.allFinite()) {
        usable = false;
        break;
      }
      cloud[i] = obs.rays[i] * depth;
    }
    if (!usable) continue;

    const Pose candidate = procrustes(reference_pts, cloud);
    double rmse;
    try {
      rmse = reprojection_rmse(corr, intr, candidate);
    } catch (const PointBehindCamera&) {
      continue;
    }
    ++best.candidate_count;
    best.candidate_rmses.push_back(rmse);
    if (rmse < best.reprojection_rmse) {
      best.reprojection_rmse = rmse;
      best.pose = candidate;
    }
  }

  if (!std::isfinite(best.reprojection_rmse))
    throw NoMinimumFound("rpnp: no usable local minimum");
  return best;
}

}  // namespace udock::pnp
