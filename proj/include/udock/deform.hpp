#pragma once

#include <cstdint>
#include <vector>

#include "udock/image.hpp"
#include "udock/scene.hpp"

namespace udock::deform {

enum class HsvChannel { H, S, V };

/// Gaussian low-pass with kernel side 2*ceil(2*sigma)+1, normalized to sum
/// one, clamped-edge padding. Throws NonPositiveSigma.
ImageBuffer gaussian_blur(const ImageBuffer& img, double sigma);

int blur_kernel_side(double sigma);

/// Multiplies one HSV component by lambda_p. Saturation and value clamp to
/// [0,1]; hue wraps modulo 1. Gray images pass H/S shifts through unchanged.
ImageBuffer hsv_shift(const ImageBuffer& img, HsvChannel p, double lambda_p);

/// Mean per-pixel ratio out/in of the chosen component. Pixels whose input
/// component is below 1e-6 are excluded. Throws AllPixelsExcluded.
double estimate_lambda(const ImageBuffer& img_in, const ImageBuffer& img_out,
                       HsvChannel p);

/// Per-sample power law I^gamma on every channel.
ImageBuffer gamma_contrast(const ImageBuffer& img, double gamma);

/// Mean over pixels and channels of log(out)/log(in); inputs within 1e-6 of
/// 0 or 1 (and non-positive outputs) are excluded. Throws AllPixelsExcluded.
double estimate_gamma(const ImageBuffer& img_in, const ImageBuffer& img_out);

/// Bivariate polynomial illumination surface. Coefficients follow the term
/// order (x^n y^m, x^{n-1} y^m, ..., y^m, x^n y^{m-1}, ..., 1): the constant
/// term is last; (n+1)(m+1) coefficients in total.
struct IlluminationModel {
  int order_x = 2;  // n
  int order_y = 2;  // m
  std::vector<double> mean;
  std::vector<double> variance;  // unbiased, per coefficient

  int coefficient_count() const { return (order_x + 1) * (order_y + 1); }
};

/// Evaluates the polynomial over pixel coordinates normalized to [0,1].
ImageBuffer illumination_field(const std::vector<double>& coeffs, int order_x,
                               int order_y, int width, int height);

/// Least-squares fit of the surface to the first channel of the image over
/// normalized coordinates. Throws SingularFit on a rank-deficient design.
std::vector<double> fit_illumination(const ImageBuffer& value_channel,
                                     int order_x = 2, int order_y = 2);

/// Per-coefficient Gaussian moments across the corpus fits.
/// Throws CorpusTooSmall for fewer than two images.
IlluminationModel build_illumination_model(
    const std::vector<ImageBuffer>& corpus, int order_x = 2, int order_y = 2);

/// Draws a coefficient sample, clamps the field to [0,2], and multiplies it
/// into the value component (the sample itself for gray images).
/// Deterministic per seed.
ImageBuffer apply_illumination(const ImageBuffer& img,
                               const IlluminationModel& model,
                               std::uint64_t seed);

enum class CompositeMode { GradientDomain, Alpha };

/// Inserts the patch with its top-left corner at (x, y).
/// GradientDomain keeps the patch gradients and the base boundary (discrete
/// Poisson system, conjugate gradients to 1e-6 relative residual); Alpha is
/// a feathered linear blend with a 3 px ramp. Throws PatchOutOfBounds.
ImageBuffer composite_patch(const ImageBuffer& base, const ImageBuffer& patch,
                            int x, int y,
                            CompositeMode mode = CompositeMode::GradientDomain);

/// Same Poisson system solved by dense LU; reference path for small patches.
ImageBuffer composite_patch_direct(const ImageBuffer& base,
                                   const ImageBuffer& patch, int x, int y);

/// Composites a vertically flipped copy of the station patch above the real
/// one, separated by a gap of [0.2, 0.6] box heights. The ground truth still
/// labels only the original station. Throws NoRoomAbove.
ImageBuffer make_mirror_sample(const ImageBuffer& img, const Box& gt_box,
                               std::uint64_t seed);

/// Adds `count` bright distractor blobs at rejection-sampled positions whose
/// bounding boxes overlap the ground truth with IoU < 0.1.
/// Throws PlacementFailed after 1000 attempts.
ImageBuffer make_noisy_luminary_sample(const ImageBuffer& img,
                                       const Box& gt_box, int count,
                                       std::uint64_t seed);

}  // namespace udock::deform
