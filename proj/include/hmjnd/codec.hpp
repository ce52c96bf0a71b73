#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hmjnd/image.hpp"

namespace hmjnd {

/// One compression run: rate, distortion vs the original, and how often each
/// branch of the JND rule fired (the three counters sum to the luma pixel
/// count).
struct CodecStats {
  double bpp = 0;
  double psnr = 0;
  double ms_ssim = 0;
  long branch[3] = {0, 0, 0};  // jpeg_pre: {to-mean, shift-up, shift-down}
                               // residual: {zeroed, negative, positive}
  long var_eps_count = 0;      // zero-variance guard activations (residual mode)
  long pixel_count = 0;
};

enum class CodecMode { JpegPre, Residual };

/// Per-pixel rule applied before block-DCT coding; all quantities in 0..255
/// scale. Pixels within the threshold collapse onto the block mean, the rest
/// shift toward it by the threshold.
double preprocess_pixel(double i_ori, double block_mean, double i_vt);

/// Applies preprocess_pixel over a luma plane (values in [0,1]; thresholds in
/// [0,1]) with per-8x8-block means. counters may be null.
ImagePlane preprocess_jpeg(const ImagePlane& i_ori, const JndMap& i_vt,
                           long counters[3] = nullptr);

/// Residual shaping rule for prediction residuals, 0..255 scale. var_block
/// <= 0 is guarded with epsilon 1e-6 (counted through eps_count when given).
double filter_residual(double r, double i_vt, double var_local, double var_block,
                       long* eps_count = nullptr);

/// Orthonormal 8x8 type-II DCT and its inverse.
void block_dct8(const double in[64], double out[64]);
void block_idct8(const double in[64], double out[64]);

/// Standard JPEG luma table scaled by the usual quality formula;
/// round-to-nearest symbols.
void quantize_block(const double coef[64], int quality, int sym[64]);
void dequantize_block(const int sym[64], int quality, double coef[64]);
const int* quant_table(int quality);  // 64 entries

/// Symbol of the zigzag run-length stream. kind 0: (run, level) pair;
/// kind 1: end-of-block; kind 2: block-mean side info (residual mode).
struct Token {
  std::int32_t kind = 0, a = 0, b = 0;
  auto operator<=>(const Token&) const = default;
};

/// Zigzag + run-length encoding of one quantized block (DC treated as zigzag
/// position 0; an all-zero block emits only end-of-block).
void rle_block(const int sym[64], std::vector<Token>& out);

/// Order-0 Shannon entropy of the stream times symbol count, per pixel.
double bpp_estimate(const std::vector<Token>& stream, long pixel_count);

struct CompressResult {
  CodecStats stats;
  ImagePlane recon;
};

/// Full pipeline. jpeg_pre: Eq-style preprocessing of luma then plain
/// block-DCT coding; residual: per-block DC prediction, JND-shaped residual,
/// DCT-coded. Chroma always takes the plain path. A zero map makes either
/// mode behave like the plain codec.
CompressResult compress(const ImagePlane& image, const JndMap& i_vt, CodecMode mode,
                        int quality);

}  // namespace hmjnd
