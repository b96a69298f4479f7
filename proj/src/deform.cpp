#include "udock/deform.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "udock/errors.hpp"
#include "udock/rng.hpp"

namespace udock::deform {

using Eigen::MatrixXd;
using Eigen::VectorXd;

int blur_kernel_side(double sigma) {
  return 2 * static_cast<int>(std::ceil(2.0 * sigma)) + 1;
}

ImageBuffer gaussian_blur(const ImageBuffer& img, double sigma) {
  if (!(sigma > 0.0)) throw NonPositiveSigma();
  const int side = blur_kernel_side(sigma);
  const int half = side / 2;
  std::vector<double> kernel(side);
  double sum = 0.0;
  for (int i = 0; i < side; ++i) {
    const double d = i - half;
    kernel[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += kernel[i];
  }
  for (double& k : kernel) k /= sum;

  // The radial kernel factorizes and clamping acts per axis, so two 1D
  // passes reproduce the 2D clamped convolution exactly.
  ImageBuffer mid = img;
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        double acc = 0.0;
        for (int k = 0; k < side; ++k)
          acc += kernel[k] * img.at_clamped(x + k - half, y, c);
        mid.at(x, y, c) = acc;
      }
    }
  }
  ImageBuffer out = img;
  for (int c = 0; c < img.channels; ++c) {
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) {
        double acc = 0.0;
        for (int k = 0; k < side; ++k)
          acc += kernel[k] * mid.at_clamped(x, y + k - half, c);
        out.at(x, y, c) = acc;
      }
    }
  }
  return out;
}

ImageBuffer hsv_shift(const ImageBuffer& img, HsvChannel p, double lambda_p) {
  if (!(lambda_p > 0.0))
    throw PreconditionViolation("hsv_shift: lambda must be positive");
  if (img.channels == 1) {
    if (p != HsvChannel::V) return img;  // gray has no hue or saturation
    ImageBuffer out = img;
    for (double& v : out.data) v = std::clamp(v * lambda_p, 0.0, 1.0);
    return out;
  }
  ImageBuffer hsv = img.color_space == ColorSpace::Hsv ? img : rgb_to_hsv(img);
  const std::size_t n = hsv.pixel_count();
  const std::size_t offset = static_cast<std::size_t>(p) * n;
  for (std::size_t i = 0; i < n; ++i) {
    double& v = hsv.data[offset + i];
    v *= lambda_p;
    if (p == HsvChannel::H) {
      v -= std::floor(v);  // hue is angular
    } else {
      v = std::clamp(v, 0.0, 1.0);
    }
  }
  return img.color_space == ColorSpace::Hsv ? hsv : hsv_to_rgb(hsv);
}

namespace {

/// Extracts the requested HSV component (gray images expose only V).
std::vector<double> hsv_component(const ImageBuffer& img, HsvChannel p) {
  const std::size_t n = img.pixel_count();
  if (img.channels == 1) {
    if (p != HsvChannel::V)
      throw PreconditionViolation("gray image has no hue or saturation");
    return {img.data.begin(), img.data.begin() + n};
  }
  const ImageBuffer hsv =
      img.color_space == ColorSpace::Hsv ? img : rgb_to_hsv(img);
  const std::size_t offset = static_cast<std::size_t>(p) * n;
  return {hsv.data.begin() + offset, hsv.data.begin() + offset + n};
}

}  // namespace

double estimate_lambda(const ImageBuffer& img_in, const ImageBuffer& img_out,
                       HsvChannel p) {
  if (!img_in.same_shape(img_out))
    throw ShapeMismatch("estimate_lambda: image shapes differ");
  const std::vector<double> in = hsv_component(img_in, p);
  const std::vector<double> out = hsv_component(img_out, p);
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    if (in[i] < 1e-6) continue;
    sum += out[i] / in[i];
    ++used;
  }
  if (used == 0) throw AllPixelsExcluded();
  return sum / static_cast<double>(used);
}

ImageBuffer gamma_contrast(const ImageBuffer& img, double gamma) {
  if (!(gamma > 0.0))
    throw PreconditionViolation("gamma_contrast: gamma must be positive");
  ImageBuffer out = img;
  for (double& v : out.data) v = std::pow(v, gamma);
  return out;
}

double estimate_gamma(const ImageBuffer& img_in, const ImageBuffer& img_out) {
  if (!img_in.same_shape(img_out))
    throw ShapeMismatch("estimate_gamma: image shapes differ");
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < img_in.data.size(); ++i) {
    const double in = img_in.data[i];
    const double out = img_out.data[i];
    if (in < 1e-6 || in > 1.0 - 1e-6) continue;  // log singularities
    if (out <= 0.0) continue;
    sum += std::log(out) / std::log(in);
    ++used;
  }
  if (used == 0) throw AllPixelsExcluded();
  return sum / static_cast<double>(used);
}

namespace {

double norm_coord(int i, int extent) {
  return extent > 1 ? static_cast<double>(i) / (extent - 1) : 0.5;
}

/// Monomials in the fixed descending term order; the constant comes last.
void fill_terms(double x, double y, int order_x, int order_y, double* row) {
  int idx = 0;
  for (int by = order_y; by >= 0; --by) {
    for (int ax = order_x; ax >= 0; --ax) {
      row[idx++] = std::pow(x, ax) * std::pow(y, by);
    }
  }
}

}  // namespace

ImageBuffer illumination_field(const std::vector<double>& coeffs, int order_x,
                               int order_y, int width, int height) {
  const int terms = (order_x + 1) * (order_y + 1);
  if (static_cast<int>(coeffs.size()) != terms)
    throw PreconditionViolation("illumination_field: coefficient count");
  ImageBuffer out(width, height, 1, ColorSpace::Gray);
  std::vector<double> row(terms);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      fill_terms(norm_coord(x, width), norm_coord(y, height), order_x, order_y,
                 row.data());
      double v = 0.0;
      for (int t = 0; t < terms; ++t) v += coeffs[t] * row[t];
      out.at(x, y) = v;
    }
  }
  return out;
}

std::vector<double> fit_illumination(const ImageBuffer& value_channel,
                                     int order_x, int order_y) {
  if (value_channel.width <= 0 || value_channel.height <= 0 ||
      value_channel.data.empty())
    throw EmptyPatch();
  const int terms = (order_x + 1) * (order_y + 1);
  const int w = value_channel.width, h = value_channel.height;
  const std::size_t n = value_channel.pixel_count();
  MatrixXd design(n, terms);
  VectorXd rhs(n);
  std::vector<double> row(terms);
  std::size_t i = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x, ++i) {
      fill_terms(norm_coord(x, w), norm_coord(y, h), order_x, order_y,
                 row.data());
      for (int t = 0; t < terms; ++t) design(i, t) = row[t];
      rhs(i) = value_channel.at(x, y, 0);
    }
  }
  Eigen::ColPivHouseholderQR<MatrixXd> qr(design);
  if (qr.rank() < terms) throw SingularFit();
  const VectorXd q = qr.solve(rhs);
  return {q.data(), q.data() + terms};
}

IlluminationModel build_illumination_model(
    const std::vector<ImageBuffer>& corpus, int order_x, int order_y) {
  if (corpus.size() < 2) throw CorpusTooSmall();
  const int terms = (order_x + 1) * (order_y + 1);
  std::vector<std::vector<double>> fits;
  fits.reserve(corpus.size());
  for (const ImageBuffer& img : corpus)
    fits.push_back(fit_illumination(img, order_x, order_y));

  IlluminationModel model;
  model.order_x = order_x;
  model.order_y = order_y;
  model.mean.assign(terms, 0.0);
  model.variance.assign(terms, 0.0);
  const double inv_n = 1.0 / static_cast<double>(fits.size());
  for (const auto& q : fits)
    for (int t = 0; t < terms; ++t) model.mean[t] += q[t] * inv_n;
  for (const auto& q : fits) {
    for (int t = 0; t < terms; ++t) {
      const double d = q[t] - model.mean[t];
      model.variance[t] += d * d;
    }
  }
  for (int t = 0; t < terms; ++t)
    model.variance[t] /= static_cast<double>(fits.size() - 1);
  return model;
}

ImageBuffer apply_illumination(const ImageBuffer& img,
                               const IlluminationModel& model,
                               std::uint64_t seed) {
  const int terms = model.coefficient_count();
  if (static_cast<int>(model.mean.size()) != terms ||
      static_cast<int>(model.variance.size()) != terms)
    throw PreconditionViolation("apply_illumination: malformed model");
  Rng rng(seed);
  std::vector<double> coeffs(terms);
  for (int t = 0; t < terms; ++t)
    coeffs[t] = rng.normal(model.mean[t], std::sqrt(model.variance[t]));
  ImageBuffer field = illumination_field(coeffs, model.order_x, model.order_y,
                                         img.width, img.height);
  for (double& v : field.data) v = std::clamp(v, 0.0, 2.0);

  if (img.channels == 1) {
    ImageBuffer out = img;
    for (std::size_t i = 0; i < out.data.size(); ++i)
      out.data[i] = std::clamp(out.data[i] * field.data[i], 0.0, 1.0);
    return out;
  }
  ImageBuffer hsv = img.color_space == ColorSpace::Hsv ? img : rgb_to_hsv(img);
  const std::size_t n = hsv.pixel_count();
  for (std::size_t i = 0; i < n; ++i) {
    double& v = hsv.data[2 * n + i];
    v = std::clamp(v * field.data[i], 0.0, 1.0);
  }
  return img.color_space == ColorSpace::Hsv ? hsv : hsv_to_rgb(hsv);
}

namespace {

void check_patch_fits(const ImageBuffer& base, const ImageBuffer& patch, int x,
                      int y) {
  if (base.channels != patch.channels)
    throw ShapeMismatch("composite: channel mismatch");
  if (x < 0 || y < 0 || x + patch.width > base.width ||
      y + patch.height > base.height)
    throw PatchOutOfBounds();
}

/// rhs of the interior Poisson system: patch Laplacian plus base boundary.
/// Unknowns index the patch interior row-major.
struct PoissonSystem {
  int iw = 0, ih = 0;  // interior dims
  std::vector<double> rhs;
};

PoissonSystem build_poisson(const ImageBuffer& base, const ImageBuffer& patch,
                            int px, int py, int channel) {
  PoissonSystem sys;
  sys.iw = patch.width - 2;
  sys.ih = patch.height - 2;
  sys.rhs.assign(static_cast<std::size_t>(sys.iw) * sys.ih, 0.0);
  for (int iy = 0; iy < sys.ih; ++iy) {
    for (int ix = 0; ix < sys.iw; ++ix) {
      const int qx = ix + 1, qy = iy + 1;  // patch coords
      double r = 4.0 * patch.at(qx, qy, channel) -
                 patch.at(qx - 1, qy, channel) - patch.at(qx + 1, qy, channel) -
                 patch.at(qx, qy - 1, channel) - patch.at(qx, qy + 1, channel);
      if (ix == 0) r += base.at(px + qx - 1, py + qy, channel);
      if (ix == sys.iw - 1) r += base.at(px + qx + 1, py + qy, channel);
      if (iy == 0) r += base.at(px + qx, py + qy - 1, channel);
      if (iy == sys.ih - 1) r += base.at(px + qx, py + qy + 1, channel);
      sys.rhs[static_cast<std::size_t>(iy) * sys.iw + ix] = r;
    }
  }
  return sys;
}

/// 5-point Laplacian with homogeneous Dirichlet boundary, applied in place.
void apply_laplacian(const PoissonSystem& sys, const std::vector<double>& u,
                     std::vector<double>& out) {
  for (int iy = 0; iy < sys.ih; ++iy) {
    for (int ix = 0; ix < sys.iw; ++ix) {
      const std::size_t i = static_cast<std::size_t>(iy) * sys.iw + ix;
      double v = 4.0 * u[i];
      if (ix > 0) v -= u[i - 1];
      if (ix < sys.iw - 1) v -= u[i + 1];
      if (iy > 0) v -= u[i - sys.iw];
      if (iy < sys.ih - 1) v -= u[i + sys.iw];
      out[i] = v;
    }
  }
}

std::vector<double> solve_poisson_cg(const PoissonSystem& sys) {
  const std::size_t n = sys.rhs.size();
  std::vector<double> u(n, 0.0), r = sys.rhs, p = sys.rhs, ap(n);
  double rs = 0.0;
  for (double v : r) rs += v * v;
  // well past the 1e-6*initial contract so the solution error stays below
  // the identity tolerance
  const double target = 1e-10 * 1e-10 * rs;
  if (rs == 0.0) return u;
  for (std::size_t iter = 0; iter < 4 * n + 64; ++iter) {
    apply_laplacian(sys, p, ap);
    double pap = 0.0;
    for (std::size_t i = 0; i < n; ++i) pap += p[i] * ap[i];
    if (pap == 0.0) break;
    const double alpha = rs / pap;
    double rs_new = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      u[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
      rs_new += r[i] * r[i];
    }
    if (rs_new <= target) break;
    const double beta = rs_new / rs;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
    rs = rs_new;
  }
  return u;
}

std::vector<double> solve_poisson_dense(const PoissonSystem& sys) {
  const int n = sys.iw * sys.ih;
  MatrixXd a = MatrixXd::Zero(n, n);
  for (int iy = 0; iy < sys.ih; ++iy) {
    for (int ix = 0; ix < sys.iw; ++ix) {
      const int i = iy * sys.iw + ix;
      a(i, i) = 4.0;
      if (ix > 0) a(i, i - 1) = -1.0;
      if (ix < sys.iw - 1) a(i, i + 1) = -1.0;
      if (iy > 0) a(i, i - sys.iw) = -1.0;
      if (iy < sys.ih - 1) a(i, i + sys.iw) = -1.0;
    }
  }
  const Eigen::Map<const VectorXd> rhs(sys.rhs.data(), n);
  const VectorXd u = a.ldlt().solve(rhs);
  return {u.data(), u.data() + n};
}

ImageBuffer composite_gradient_domain(const ImageBuffer& base,
                                      const ImageBuffer& patch, int x, int y,
                                      bool dense) {
  ImageBuffer out = base;
  if (patch.width < 3 || patch.height < 3) return out;  // no interior
  for (int c = 0; c < base.channels; ++c) {
    const PoissonSystem sys = build_poisson(base, patch, x, y, c);
    const std::vector<double> u =
        dense ? solve_poisson_dense(sys) : solve_poisson_cg(sys);
    for (int iy = 0; iy < sys.ih; ++iy) {
      for (int ix = 0; ix < sys.iw; ++ix) {
        out.at(x + ix + 1, y + iy + 1, c) = std::clamp(
            u[static_cast<std::size_t>(iy) * sys.iw + ix], 0.0, 1.0);
      }
    }
  }
  return out;
}

ImageBuffer composite_alpha(const ImageBuffer& base, const ImageBuffer& patch,
                            int x, int y) {
  ImageBuffer out = base;
  constexpr double kFeather = 3.0;
  for (int qy = 0; qy < patch.height; ++qy) {
    for (int qx = 0; qx < patch.width; ++qx) {
      const double border = std::min(
          std::min(qx, patch.width - 1 - qx), std::min(qy, patch.height - 1 - qy));
      const double alpha = std::clamp(border / kFeather, 0.0, 1.0);
      for (int c = 0; c < base.channels; ++c) {
        out.at(x + qx, y + qy, c) = alpha * patch.at(qx, qy, c) +
                                    (1.0 - alpha) * base.at(x + qx, y + qy, c);
      }
    }
  }
  return out;
}

}  // namespace

ImageBuffer composite_patch(const ImageBuffer& base, const ImageBuffer& patch,
                            int x, int y, CompositeMode mode) {
  check_patch_fits(base, patch, x, y);
  return mode == CompositeMode::Alpha
             ? composite_alpha(base, patch, x, y)
             : composite_gradient_domain(base, patch, x, y, false);
}

ImageBuffer composite_patch_direct(const ImageBuffer& base,
                                   const ImageBuffer& patch, int x, int y) {
  check_patch_fits(base, patch, x, y);
  return composite_gradient_domain(base, patch, x, y, true);
}

namespace {

ImageBuffer crop(const ImageBuffer& img, int x, int y, int w, int h) {
  ImageBuffer out(w, h, img.channels, img.color_space);
  for (int c = 0; c < img.channels; ++c)
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx)
        out.at(xx, yy, c) = img.at(x + xx, y + yy, c);
  return out;
}

ImageBuffer flip_vertical(const ImageBuffer& img) {
  ImageBuffer out = img;
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        out.at(x, y, c) = img.at(x, img.height - 1 - y, c);
  return out;
}

}  // namespace

ImageBuffer make_mirror_sample(const ImageBuffer& img, const Box& gt_box,
                               std::uint64_t seed) {
  const int bx = static_cast<int>(std::floor(gt_box.x * img.width));
  const int by = static_cast<int>(std::floor(gt_box.y * img.height));
  const int bw = std::max(1, static_cast<int>(std::ceil(gt_box.w * img.width)));
  const int bh = std::max(1, static_cast<int>(std::ceil(gt_box.h * img.height)));
  if (bx < 0 || by < 0 || bx + bw > img.width || by + bh > img.height)
    throw PreconditionViolation("make_mirror_sample: box outside image");

  Rng rng(seed);
  const double gap_frac = rng.uniform(0.2, 0.6);
  const int gap = static_cast<int>(std::lround(gap_frac * bh));
  const int top = by - gap - bh;
  if (top < 0) throw NoRoomAbove();

  const ImageBuffer mirror = flip_vertical(crop(img, bx, by, bw, bh));
  return composite_patch(img, mirror, bx, top, CompositeMode::GradientDomain);
}

ImageBuffer make_noisy_luminary_sample(const ImageBuffer& img,
                                       const Box& gt_box, int count,
                                       std::uint64_t seed) {
  if (count < 0)
    throw PreconditionViolation("make_noisy_luminary_sample: negative count");
  if (count == 0) return img;

  // distractor: a bright blob patch matching the landmark appearance
  const double sigma = 2.0;
  const int side = 2 * static_cast<int>(std::ceil(4.0 * sigma)) + 1;
  Rng rng(seed);
  ImageBuffer out = img;
  int placed = 0;
  for (int attempt = 0; attempt < 1000 && placed < count; ++attempt) {
    const int x = static_cast<int>(
        rng.below(static_cast<std::uint64_t>(std::max(1, img.width - side))));
    const int y = static_cast<int>(
        rng.below(static_cast<std::uint64_t>(std::max(1, img.height - side))));
    const Box candidate{static_cast<double>(x) / img.width,
                        static_cast<double>(y) / img.height,
                        static_cast<double>(side) / img.width,
                        static_cast<double>(side) / img.height};
    const double ix = std::max(
        0.0, std::min(candidate.x + candidate.w, gt_box.x + gt_box.w) -
                 std::max(candidate.x, gt_box.x));
    const double iy = std::max(
        0.0, std::min(candidate.y + candidate.h, gt_box.y + gt_box.h) -
                 std::max(candidate.y, gt_box.y));
    const double inter = ix * iy;
    const double uni =
        candidate.w * candidate.h + gt_box.w * gt_box.h - inter;
    if (uni > 0.0 && inter / uni >= 0.1) continue;

    ImageBuffer blob = crop(out, x, y, side, side);
    const double cx = (side - 1) / 2.0, cy = (side - 1) / 2.0;
    for (int yy = 0; yy < side; ++yy) {
      for (int xx = 0; xx < side; ++xx) {
        const double d2 = (xx - cx) * (xx - cx) + (yy - cy) * (yy - cy);
        const double add = 0.85 * std::exp(-d2 / (2.0 * sigma * sigma));
        for (int c = 0; c < blob.channels; ++c)
          blob.at(xx, yy, c) = std::min(1.0, blob.at(xx, yy, c) + add);
      }
    }
    out = composite_patch(out, blob, x, y, CompositeMode::GradientDomain);
    ++placed;
  }
  if (placed < count) throw PlacementFailed();
  return out;
}

}  // namespace udock::deform
