#pragma once

#include "hmjnd/image.hpp"

namespace hmjnd {

/// Mean squared error on the 0..255 intensity scale, over all channels.
double mse_255(const ImagePlane& a, const ImagePlane& b);

/// 10*log10(255^2 / MSE); +infinity for identical images.
double psnr(const ImagePlane& a, const ImagePlane& b);

/// Single-scale SSIM on BT.601 luma: 11x11 Gaussian window (sigma 1.5),
/// K1=0.01, K2=0.03, L=255, averaged over valid window positions.
double ssim(const ImagePlane& a, const ImagePlane& b);

/// Multi-scale SSIM, weights (0.0448, 0.2856, 0.3001, 0.2363, 0.1333) and
/// dyadic 2x2-mean downsampling. Images too small for 5 scales use as many
/// scales as fit (min dim >= 11), with the weights renormalized. Result is
/// clamped into [0,1].
double ms_ssim(const ImagePlane& a, const ImagePlane& b);

}  // namespace hmjnd
