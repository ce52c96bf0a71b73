#include "hmjnd/codec.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "hmjnd/kernels.hpp"
#include "hmjnd/metrics.hpp"

namespace hmjnd {

namespace {

const int kBaseTable[64] = {
    16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
    14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
    18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
    49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};

const int kZigzag[64] = {0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,
                         12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6,  7,  14, 21, 28,
                         35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
                         58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

struct Plane8 {
  std::vector<double> v;
  int w = 0, h = 0;
  double at(int x, int y) const { return v[static_cast<std::size_t>(y) * w + x]; }
  double& at(int x, int y) { return v[static_cast<std::size_t>(y) * w + x]; }
};

Plane8 pad_to_blocks(const Plane8& p) {
  Plane8 out;
  out.w = (p.w + 7) / 8 * 8;
  out.h = (p.h + 7) / 8 * 8;
  out.v.resize(static_cast<std::size_t>(out.w) * out.h);
  for (int y = 0; y < out.h; ++y)
    for (int x = 0; x < out.w; ++x)
      out.at(x, y) = p.at(std::min(x, p.w - 1), std::min(y, p.h - 1));
  return out;
}

// Plain block-DCT coding of one padded 0..255 plane: tokens appended,
// reconstruction returned (cropped to the original size).
Plane8 code_plane(const Plane8& padded, int w, int h, int quality, std::vector<Token>& stream) {
  const int bw = padded.w / 8, bh = padded.h / 8;
  const std::int64_t nblocks = static_cast<std::int64_t>(bw) * bh;
  std::vector<double> blocks(nblocks * 64), coefs(nblocks * 64);
  for (int by = 0; by < bh; ++by)
    for (int bx = 0; bx < bw; ++bx)
      for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
          blocks[(static_cast<std::size_t>(by) * bw + bx) * 64 + y * 8 + x] =
              padded.at(bx * 8 + x, by * 8 + y);
  kernels::dct8_blocks(blocks.data(), coefs.data(), nblocks, false);

  std::vector<double> deq(nblocks * 64);
  for (std::int64_t bl = 0; bl < nblocks; ++bl) {
    int sym[64];
    quantize_block(coefs.data() + bl * 64, quality, sym);
    rle_block(sym, stream);
    dequantize_block(sym, quality, deq.data() + bl * 64);
  }
  std::vector<double> rec(nblocks * 64);
  kernels::dct8_blocks(deq.data(), rec.data(), nblocks, true);

  Plane8 out;
  out.w = w;
  out.h = h;
  out.v.resize(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out.at(x, y) = std::clamp(
          rec[(static_cast<std::size_t>(y / 8) * bw + x / 8) * 64 + (y % 8) * 8 + x % 8], 0.0,
          255.0);
  return out;
}

// population variance of the 3x3 neighborhood (clamped at borders)
double var_local3(const Plane8& p, int x, int y) {
  double s = 0, s2 = 0;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      const double v = p.at(std::clamp(x + dx, 0, p.w - 1), std::clamp(y + dy, 0, p.h - 1));
      s += v;
      s2 += v * v;
    }
  const double mu = s / 9.0;
  return std::max(0.0, s2 / 9.0 - mu * mu);
}

}  // namespace

double preprocess_pixel(double i_ori, double block_mean, double i_vt) {
  if (std::fabs(i_ori - block_mean) <= i_vt) return block_mean;
  if (i_ori - block_mean < -i_vt) return i_ori + i_vt;
  return i_ori - i_vt;
}

ImagePlane preprocess_jpeg(const ImagePlane& i_ori, const JndMap& i_vt, long counters[3]) {
  if (i_ori.width != i_vt.width || i_ori.height != i_vt.height)
    throw std::invalid_argument("preprocess_jpeg: map/image dimensions differ");
  const ImagePlane luma = luma_of(i_ori);
  const int w = luma.width, h = luma.height;
  std::vector<double> y8(static_cast<std::size_t>(w) * h), vt8(y8.size()), out8(y8.size());
  for (std::size_t i = 0; i < y8.size(); ++i) {
    y8[i] = luma.data[i] * 255.0;
    vt8[i] = i_vt.thresholds[i] * 255.0;
  }
  kernels::jnd_preprocess(y8.data(), vt8.data(), out8.data(), h, w, counters);
  ImagePlane out = ImagePlane::make(w, h, 1);
  for (std::size_t i = 0; i < out8.size(); ++i) out.data[i] = out8[i] / 255.0;
  return out;
}

double filter_residual(double r, double i_vt, double var_local, double var_block,
                       long* eps_count) {
  if (var_block <= 0.0) {
    var_block = 1e-6;
    if (eps_count) ++*eps_count;
  }
  if (std::fabs(r) <= i_vt && var_local > var_block) return 0.0;
  if (r < 0.0) return std::min(r * std::fabs(i_vt) / var_block, r + i_vt);
  return std::max(r * std::fabs(i_vt) / var_block, r - i_vt);
}

void block_dct8(const double in[64], double out[64]) {
  kernels::serial::dct8_blocks(in, out, 1, false);
}

void block_idct8(const double in[64], double out[64]) {
  kernels::serial::dct8_blocks(in, out, 1, true);
}

const int* quant_table(int quality) {
  if (quality < 1 || quality > 100)
    throw std::invalid_argument("quality must be in 1..100");
  static thread_local int table[64];
  static thread_local int cached = -1;
  if (cached != quality) {
    const int s = quality < 50 ? 5000 / quality : 200 - 2 * quality;
    for (int i = 0; i < 64; ++i)
      table[i] = std::clamp((kBaseTable[i] * s + 50) / 100, 1, 255);
    cached = quality;
  }
  return table;
}

void quantize_block(const double coef[64], int quality, int sym[64]) {
  const int* t = quant_table(quality);
  for (int i = 0; i < 64; ++i) sym[i] = static_cast<int>(std::llround(coef[i] / t[i]));
}

void dequantize_block(const int sym[64], int quality, double coef[64]) {
  const int* t = quant_table(quality);
  for (int i = 0; i < 64; ++i) coef[i] = static_cast<double>(sym[i]) * t[i];
}

void rle_block(const int sym[64], std::vector<Token>& out) {
  int run = 0;
  for (int i = 0; i < 64; ++i) {
    const int v = sym[kZigzag[i]];
    if (v == 0) {
      ++run;
      continue;
    }
    while (run > 15) {
      out.push_back({0, 15, 0});  // ZRL
      run -= 16;
    }
    out.push_back({0, run, v});
    run = 0;
  }
  out.push_back({1, 0, 0});  // EOB covers any trailing zeros
}

double bpp_estimate(const std::vector<Token>& stream, long pixel_count) {
  if (stream.empty() || pixel_count <= 0) return 0.0;
  std::map<Token, long> counts;
  for (const Token& t : stream) ++counts[t];
  const double n = static_cast<double>(stream.size());
  double entropy = 0.0;
  for (const auto& [tok, cnt] : counts) {
    const double p = cnt / n;
    entropy -= p * std::log2(p);
  }
  return entropy * n / static_cast<double>(pixel_count);
}

CompressResult compress(const ImagePlane& image, const JndMap& i_vt, CodecMode mode,
                        int quality) {
  if (image.width != i_vt.width || image.height != i_vt.height)
    throw std::invalid_argument("compress: map/image dimensions differ");
  const int w = image.width, h = image.height;

  // colorspace split: luma gets the JND treatment, chroma the plain path
  Plane8 y{std::vector<double>(static_cast<std::size_t>(w) * h), w, h};
  Plane8 cb, cr;
  const bool color = image.channels == 3;
  if (color) {
    cb = y;
    cr = y;
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx) {
        const double r = image.at(xx, yy, 0), g = image.at(xx, yy, 1), b = image.at(xx, yy, 2);
        const double lum = 0.299 * r + 0.587 * g + 0.114 * b;
        y.at(xx, yy) = lum * 255.0;
        cb.at(xx, yy) = (0.5 + (b - lum) * 0.564) * 255.0;
        cr.at(xx, yy) = (0.5 + (r - lum) * 0.713) * 255.0;
      }
  } else {
    for (std::size_t i = 0; i < image.data.size(); ++i) y.v[i] = image.data[i] * 255.0;
  }

  CompressResult res;
  res.stats.pixel_count = static_cast<long>(w) * h;
  std::vector<Token> stream;
  Plane8 yrec;

  if (mode == CodecMode::JpegPre) {
    std::vector<double> vt8(y.v.size());
    for (std::size_t i = 0; i < vt8.size(); ++i) vt8[i] = i_vt.thresholds[i] * 255.0;
    Plane8 pre = y;
    kernels::jnd_preprocess(y.v.data(), vt8.data(), pre.v.data(), h, w, res.stats.branch);
    yrec = code_plane(pad_to_blocks(pre), w, h, quality, stream);
  } else {
    // per-block DC prediction, JND-shaped residual, DCT-coded residual
    const Plane8 yp = pad_to_blocks(y);
    const int bw = yp.w / 8, bh = yp.h / 8;
    const std::int64_t nblocks = static_cast<std::int64_t>(bw) * bh;
    std::vector<double> resid(nblocks * 64), coefs(nblocks * 64);
    std::vector<int> dc(nblocks);
    for (int by = 0; by < bh; ++by)
      for (int bx = 0; bx < bw; ++bx) {
        const std::int64_t bl = static_cast<std::int64_t>(by) * bw + bx;
        double s = 0, s2 = 0;
        for (int yy = 0; yy < 8; ++yy)
          for (int xx = 0; xx < 8; ++xx) {
            const double v = yp.at(bx * 8 + xx, by * 8 + yy);
            s += v;
            s2 += v * v;
          }
        const double mean = s / 64.0;
        const double var_block = std::max(0.0, s2 / 64.0 - mean * mean);
        dc[bl] = static_cast<int>(std::llround(mean));
        stream.push_back({2, dc[bl], 0});
        for (int yy = 0; yy < 8; ++yy)
          for (int xx = 0; xx < 8; ++xx) {
            const int px = bx * 8 + xx, py = by * 8 + yy;
            const double r = yp.at(px, py) - dc[bl];
            const bool real = px < w && py < h;
            const double vt =
                real ? i_vt.thresholds[static_cast<std::size_t>(py) * w + px] * 255.0
                     : 0.0;
            double rf = r;
            if (real) {
              const double vloc = var_local3(yp, px, py);
              // count the branch taken, mirroring filter_residual
              double vb = var_block;
              if (vb <= 0.0) {
                vb = 1e-6;
                ++res.stats.var_eps_count;
              }
              if (std::fabs(r) <= vt && vloc > vb) {
                rf = 0.0;
                ++res.stats.branch[0];
              } else if (r < 0.0) {
                rf = std::min(r * std::fabs(vt) / vb, r + vt);
                ++res.stats.branch[1];
              } else {
                rf = std::max(r * std::fabs(vt) / vb, r - vt);
                ++res.stats.branch[2];
              }
            }
            resid[bl * 64 + yy * 8 + xx] = rf;
          }
      }
    kernels::dct8_blocks(resid.data(), coefs.data(), nblocks, false);
    std::vector<double> deq(nblocks * 64), rec(nblocks * 64);
    for (std::int64_t bl = 0; bl < nblocks; ++bl) {
      int sym[64];
      quantize_block(coefs.data() + bl * 64, quality, sym);
      rle_block(sym, stream);
      dequantize_block(sym, quality, deq.data() + bl * 64);
    }
    kernels::dct8_blocks(deq.data(), rec.data(), nblocks, true);
    yrec.w = w;
    yrec.h = h;
    yrec.v.resize(static_cast<std::size_t>(w) * h);
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx) {
        const std::int64_t bl = static_cast<std::int64_t>(yy / 8) * bw + xx / 8;
        yrec.at(xx, yy) =
            std::clamp(dc[bl] + rec[bl * 64 + (yy % 8) * 8 + xx % 8], 0.0, 255.0);
      }
  }

  Plane8 cbrec, crrec;
  if (color) {
    cbrec = code_plane(pad_to_blocks(cb), w, h, quality, stream);
    crrec = code_plane(pad_to_blocks(cr), w, h, quality, stream);
  }

  // reassemble
  res.recon = ImagePlane::make(w, h, image.channels);
  for (int yy = 0; yy < h; ++yy)
    for (int xx = 0; xx < w; ++xx) {
      if (color) {
        const double lum = yrec.at(xx, yy) / 255.0;
        const double pb = crrec.at(xx, yy) / 255.0 - 0.5;  // Cr
        const double pcb = cbrec.at(xx, yy) / 255.0 - 0.5;
        const double r = lum + pb / 0.713;
        const double b = lum + pcb / 0.564;
        const double g = (lum - 0.299 * r - 0.114 * b) / 0.587;
        res.recon.at(xx, yy, 0) = std::clamp(r, 0.0, 1.0);
        res.recon.at(xx, yy, 1) = std::clamp(g, 0.0, 1.0);
        res.recon.at(xx, yy, 2) = std::clamp(b, 0.0, 1.0);
      } else {
        res.recon.at(xx, yy) = yrec.at(xx, yy) / 255.0;
      }
    }

  res.stats.bpp = bpp_estimate(stream, res.stats.pixel_count);
  res.stats.psnr = psnr(res.recon, image);
  res.stats.ms_ssim = ms_ssim(res.recon, image);
  return res;
}

}  // namespace hmjnd
