#include "hmjnd/kernels.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace hmjnd::kernels {

namespace {
std::atomic<bool> g_parallel{true};

// 11-tap Gaussian, sigma 1.5, normalized to sum 1.
struct Gauss11 {
  double g[11];
  Gauss11() {
    double s = 0.0;
    for (int i = 0; i < 11; ++i) {
      g[i] = std::exp(-((i - 5) * (i - 5)) / (2.0 * 1.5 * 1.5));
      s += g[i];
    }
    for (double& v : g) v /= s;
  }
};
const Gauss11 kGauss;

struct DctBasis {
  double m[8][8];
  DctBasis() {
    for (int u = 0; u < 8; ++u) {
      const double a = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
      for (int k = 0; k < 8; ++k)
        m[u][k] = a * std::cos((2 * k + 1) * u * 3.14159265358979323846 / 16.0);
    }
  }
};
const DctBasis kDct;
}  // namespace

bool parallel_enabled() { return g_parallel.load(std::memory_order_relaxed); }
void set_parallel_enabled(bool on) { g_parallel.store(on, std::memory_order_relaxed); }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

ConvDims conv_dims(int n, int cin, int h, int w, int cout, int k, int stride, int pad) {
  ConvDims d{n, cin, h, w, cout, k, stride, pad, 0, 0};
  d.oh = (h + 2 * pad - k) / stride + 1;
  d.ow = (w + 2 * pad - k) / stride + 1;
  return d;
}

// ---------------------------------------------------------------------------
// serial reference
// ---------------------------------------------------------------------------
namespace serial {

void conv2d_forward(const double* x, const double* w, const double* b, double* y,
                    const ConvDims& d) {
  for (int n = 0; n < d.n; ++n)
    for (int co = 0; co < d.cout; ++co)
      for (int oh = 0; oh < d.oh; ++oh)
        for (int ow = 0; ow < d.ow; ++ow) {
          double acc = b ? b[co] : 0.0;
          for (int ci = 0; ci < d.cin; ++ci)
            for (int kh = 0; kh < d.k; ++kh) {
              const int ih = oh * d.stride - d.pad + kh;
              if (ih < 0 || ih >= d.h) continue;
              for (int kw = 0; kw < d.k; ++kw) {
                const int iw = ow * d.stride - d.pad + kw;
                if (iw < 0 || iw >= d.w) continue;
                acc += x[((static_cast<std::int64_t>(n) * d.cin + ci) * d.h + ih) * d.w + iw] *
                       w[((static_cast<std::int64_t>(co) * d.cin + ci) * d.k + kh) * d.k + kw];
              }
            }
          y[((static_cast<std::int64_t>(n) * d.cout + co) * d.oh + oh) * d.ow + ow] = acc;
        }
}

void conv2d_backward_input(const double* dy, const double* w, double* dx, const ConvDims& d) {
  for (int n = 0; n < d.n; ++n)
    for (int ci = 0; ci < d.cin; ++ci)
      for (int ih = 0; ih < d.h; ++ih)
        for (int iw = 0; iw < d.w; ++iw) {
          double acc = 0.0;
          for (int co = 0; co < d.cout; ++co)
            for (int kh = 0; kh < d.k; ++kh) {
              const int oh_num = ih + d.pad - kh;
              if (oh_num < 0 || oh_num % d.stride != 0) continue;
              const int oh = oh_num / d.stride;
              if (oh >= d.oh) continue;
              for (int kw = 0; kw < d.k; ++kw) {
                const int ow_num = iw + d.pad - kw;
                if (ow_num < 0 || ow_num % d.stride != 0) continue;
                const int ow = ow_num / d.stride;
                if (ow >= d.ow) continue;
                acc += dy[((static_cast<std::int64_t>(n) * d.cout + co) * d.oh + oh) * d.ow + ow] *
                       w[((static_cast<std::int64_t>(co) * d.cin + ci) * d.k + kh) * d.k + kw];
              }
            }
          dx[((static_cast<std::int64_t>(n) * d.cin + ci) * d.h + ih) * d.w + iw] = acc;
        }
}

void conv2d_backward_weight(const double* dy, const double* x, double* dw, double* db,
                            const ConvDims& d) {
  for (int co = 0; co < d.cout; ++co)
    for (int ci = 0; ci < d.cin; ++ci)
      for (int kh = 0; kh < d.k; ++kh)
        for (int kw = 0; kw < d.k; ++kw) {
          double acc = 0.0;
          for (int n = 0; n < d.n; ++n)
            for (int oh = 0; oh < d.oh; ++oh) {
              const int ih = oh * d.stride - d.pad + kh;
              if (ih < 0 || ih >= d.h) continue;
              for (int ow = 0; ow < d.ow; ++ow) {
                const int iw = ow * d.stride - d.pad + kw;
                if (iw < 0 || iw >= d.w) continue;
                acc += dy[((static_cast<std::int64_t>(n) * d.cout + co) * d.oh + oh) * d.ow + ow] *
                       x[((static_cast<std::int64_t>(n) * d.cin + ci) * d.h + ih) * d.w + iw];
              }
            }
          dw[((static_cast<std::int64_t>(co) * d.cin + ci) * d.k + kh) * d.k + kw] = acc;
        }
  if (db) {
    for (int co = 0; co < d.cout; ++co) {
      double acc = 0.0;
      for (int n = 0; n < d.n; ++n)
        for (int oh = 0; oh < d.oh; ++oh)
          for (int ow = 0; ow < d.ow; ++ow)
            acc += dy[((static_cast<std::int64_t>(n) * d.cout + co) * d.oh + oh) * d.ow + ow];
      db[co] = acc;
    }
  }
}

void bmm(const double* a, const double* b, double* c, std::int64_t batches, int m, int kd,
         int n, bool transpose_b) {
  for (std::int64_t bt = 0; bt < batches; ++bt) {
    const double* ab = a + bt * static_cast<std::int64_t>(m) * kd;
    const double* bb = b + bt * static_cast<std::int64_t>(kd) * n;
    double* cb = c + bt * static_cast<std::int64_t>(m) * n;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int k = 0; k < kd; ++k)
          acc += ab[i * kd + k] * (transpose_b ? bb[j * kd + k] : bb[k * n + j]);
        cb[i * n + j] = acc;
      }
  }
}

void softmax_rows(const double* x, double* y, std::int64_t rows, int n) {
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xr = x + r * n;
    double* yr = y + r * n;
    double m = xr[0];
    for (int i = 1; i < n; ++i) m = std::max(m, xr[i]);
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
      yr[i] = std::exp(xr[i] - m);
      s += yr[i];
    }
    for (int i = 0; i < n; ++i) yr[i] /= s;
  }
}

void softmax_rows_backward(const double* y, const double* dy, double* dx, std::int64_t rows,
                           int n) {
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* yr = y + r * n;
    const double* dyr = dy + r * n;
    double* dxr = dx + r * n;
    double dot = 0.0;
    for (int i = 0; i < n; ++i) dot += dyr[i] * yr[i];
    for (int i = 0; i < n; ++i) dxr[i] = yr[i] * (dyr[i] - dot);
  }
}

namespace {
inline void dct8_one(const double* x, double* y, bool inverse) {
  double tmp[64];
  if (!inverse) {
    // y = M x M^T
    for (int u = 0; u < 8; ++u)
      for (int j = 0; j < 8; ++j) {
        double acc = 0.0;
        for (int k = 0; k < 8; ++k) acc += kDct.m[u][k] * x[k * 8 + j];
        tmp[u * 8 + j] = acc;
      }
    for (int u = 0; u < 8; ++u)
      for (int v = 0; v < 8; ++v) {
        double acc = 0.0;
        for (int j = 0; j < 8; ++j) acc += tmp[u * 8 + j] * kDct.m[v][j];
        y[u * 8 + v] = acc;
      }
  } else {
    // x = M^T y M
    for (int k = 0; k < 8; ++k)
      for (int j = 0; j < 8; ++j) {
        double acc = 0.0;
        for (int u = 0; u < 8; ++u) acc += kDct.m[u][k] * x[u * 8 + j];
        tmp[k * 8 + j] = acc;
      }
    for (int k = 0; k < 8; ++k)
      for (int l = 0; l < 8; ++l) {
        double acc = 0.0;
        for (int v = 0; v < 8; ++v) acc += tmp[k * 8 + v] * kDct.m[v][l];
        y[k * 8 + l] = acc;
      }
  }
}
}  // namespace

void dct8_blocks(const double* x, double* y, std::int64_t nblocks, bool inverse) {
  for (std::int64_t bl = 0; bl < nblocks; ++bl) dct8_one(x + bl * 64, y + bl * 64, inverse);
}

void ssim_stats(const double* a, const double* b, int h, int w, double c1, double c2,
                double* mean_ssim, double* mean_cs) {
  const double* g = kGauss.g;
  double ssim_sum = 0.0, cs_sum = 0.0;
  for (int cy = 5; cy < h - 5; ++cy)
    for (int cx = 5; cx < w - 5; ++cx) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (int dy = -5; dy <= 5; ++dy)
        for (int dx = -5; dx <= 5; ++dx) {
          const double wgt = g[dy + 5] * g[dx + 5];
          const double va = a[(cy + dy) * w + (cx + dx)];
          const double vb = b[(cy + dy) * w + (cx + dx)];
          sa += wgt * va;
          sb += wgt * vb;
          saa += wgt * va * va;
          sbb += wgt * vb * vb;
          sab += wgt * va * vb;
        }
      const double var_a = saa - sa * sa;
      const double var_b = sbb - sb * sb;
      const double cov = sab - sa * sb;
      const double cs = (2.0 * cov + c2) / (var_a + var_b + c2);
      const double lum = (2.0 * sa * sb + c1) / (sa * sa + sb * sb + c1);
      ssim_sum += lum * cs;
      cs_sum += cs;
    }
  const double npos = static_cast<double>(h - 10) * static_cast<double>(w - 10);
  *mean_ssim = ssim_sum / npos;
  *mean_cs = cs_sum / npos;
}

void jnd_preprocess(const double* luma, const double* vt, double* out, int h, int w,
                    long counters[3]) {
  const int bw = (w + 7) / 8;
  std::vector<double> means(static_cast<std::size_t>(bw) * ((h + 7) / 8));
  block_means_8(luma, means.data(), h, w);
  long c0 = 0, c1 = 0, c2 = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double mb = means[(y / 8) * bw + (x / 8)];
      const double v = luma[y * w + x];
      const double t = vt[y * w + x];
      double r;
      if (std::fabs(v - mb) <= t) {
        r = mb;
        ++c0;
      } else if (v - mb < -t) {
        r = v + t;
        ++c1;
      } else {
        r = v - t;
        ++c2;
      }
      out[y * w + x] = std::clamp(r, 0.0, 255.0);
    }
  if (counters) {
    counters[0] = c0;
    counters[1] = c1;
    counters[2] = c2;
  }
}

}  // namespace serial

// ---------------------------------------------------------------------------
// OpenMP variants. Writes are disjoint per iteration and inner accumulation
// order matches the serial code, so outputs are bit-identical for any thread
// count (ssim_stats is the exception: it uses a separable two-pass filter,
// algebraically equal to the reference but reordered).
// ---------------------------------------------------------------------------
namespace par {

void conv2d_forward(const double* x, const double* w, const double* b, double* y,
                    const ConvDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n)
    for (int co = 0; co < d.cout; ++co)
      for (int oh = 0; oh < d.oh; ++oh)
        for (int ow = 0; ow < d.ow; ++ow) {
          double acc = b ? b[co] : 0.0;
          for (int ci = 0; ci < d.cin; ++ci)
            for (int kh = 0; kh < d.k; ++kh) {
              const int ih = oh * d.stride - d.pad + kh;
              if (ih < 0 || ih >= d.h) continue;
              for (int kw = 0; kw < d.k; ++kw) {
                const int iw = ow * d.stride - d.pad + kw;
                if (iw < 0 || iw >= d.w) continue;
                acc += x[((static_cast<std::int64_t>(n) * d.cin + ci) * d.h + ih) * d.w + iw] *
                       w[((static_cast<std::int64_t>(co) * d.cin + ci) * d.k + kh) * d.k + kw];
              }
            }
          y[((static_cast<std::int64_t>(n) * d.cout + co) * d.oh + oh) * d.ow + ow] = acc;
        }
}

void conv2d_backward_input(const double* dy, const double* w, double* dx, const ConvDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < d.n; ++n)
    for (int ci = 0; ci < d.cin; ++ci)
      for (int ih = 0; ih < d.h; ++ih)
        for (int iw = 0; iw < d.w; ++iw) {
          double acc = 0.0;
          for (int co = 0; co < d.cout; ++co)
            for (int kh = 0; kh < d.k; ++kh) {
              const int oh_num = ih + d.pad - kh;
              if (oh_num < 0 || oh_num % d.stride != 0) continue;
              const int oh = oh_num / d.stride;
              if (oh >= d.oh) continue;
              for (int kw = 0; kw < d.k; ++kw) {
                const int ow_num = iw + d.pad - kw;
                if (ow_num < 0 || ow_num % d.stride != 0) continue;
                const int ow = ow_num / d.stride;
                if (ow >= d.ow) continue;
                acc += dy[((static_cast<std::int64_t>(n) * d.cout + co) * d.oh + oh) * d.ow + ow] *
                       w[((static_cast<std::int64_t>(co) * d.cin + ci) * d.k + kh) * d.k + kw];
              }
            }
          dx[((static_cast<std::int64_t>(n) * d.cin + ci) * d.h + ih) * d.w + iw] = acc;
        }
}

void conv2d_backward_weight(const double* dy, const double* x, double* dw, double* db,
                            const ConvDims& d) {
#pragma omp parallel for collapse(2) schedule(static)
  for (int co = 0; co < d.cout; ++co)
    for (int ci = 0; ci < d.cin; ++ci)
      for (int kh = 0; kh < d.k; ++kh)
        for (int kw = 0; kw < d.k; ++kw) {
          double acc = 0.0;
          for (int n = 0; n < d.n; ++n)
            for (int oh = 0; oh < d.oh; ++oh) {
              const int ih = oh * d.stride - d.pad + kh;
              if (ih < 0 || ih >= d.h) continue;
              for (int ow = 0; ow < d.ow; ++ow) {
                const int iw = ow * d.stride - d.pad + kw;
                if (iw < 0 || iw >= d.w) continue;
                acc += dy[((static_cast<std::int64_t>(n) * d.cout + co) * d.oh + oh) * d.ow + ow] *
                       x[((static_cast<std::int64_t>(n) * d.cin + ci) * d.h + ih) * d.w + iw];
              }
            }
          dw[((static_cast<std::int64_t>(co) * d.cin + ci) * d.k + kh) * d.k + kw] = acc;
        }
  if (db) {
#pragma omp parallel for schedule(static)
    for (int co = 0; co < d.cout; ++co) {
      double acc = 0.0;
      for (int n = 0; n < d.n; ++n)
        for (int oh = 0; oh < d.oh; ++oh)
          for (int ow = 0; ow < d.ow; ++ow)
            acc += dy[((static_cast<std::int64_t>(n) * d.cout + co) * d.oh + oh) * d.ow + ow];
      db[co] = acc;
    }
  }
}

void bmm(const double* a, const double* b, double* c, std::int64_t batches, int m, int kd,
         int n, bool transpose_b) {
#pragma omp parallel for schedule(static)
  for (std::int64_t bt = 0; bt < batches; ++bt) {
    const double* ab = a + bt * static_cast<std::int64_t>(m) * kd;
    const double* bb = b + bt * static_cast<std::int64_t>(kd) * n;
    double* cb = c + bt * static_cast<std::int64_t>(m) * n;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int k = 0; k < kd; ++k)
          acc += ab[i * kd + k] * (transpose_b ? bb[j * kd + k] : bb[k * n + j]);
        cb[i * n + j] = acc;
      }
  }
}

void softmax_rows(const double* x, double* y, std::int64_t rows, int n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) serial::softmax_rows(x + r * n, y + r * n, 1, n);
}

void softmax_rows_backward(const double* y, const double* dy, double* dx, std::int64_t rows,
                           int n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r)
    serial::softmax_rows_backward(y + r * n, dy + r * n, dx + r * n, 1, n);
}

void dct8_blocks(const double* x, double* y, std::int64_t nblocks, bool inverse) {
#pragma omp parallel for schedule(static)
  for (std::int64_t bl = 0; bl < nblocks; ++bl)
    serial::dct8_blocks(x + bl * 64, y + bl * 64, 1, inverse);
}

void ssim_stats(const double* a, const double* b, int h, int w, double c1, double c2,
                double* mean_ssim, double* mean_cs) {
  const double* g = kGauss.g;
  const int vw = w - 10, vh = h - 10;
  // pass 1: horizontal filter of a, b, a^2, b^2, ab over valid columns
  std::vector<double> row(5 * static_cast<std::size_t>(h) * vw);
  double* ra = row.data();
  double* rb = ra + static_cast<std::size_t>(h) * vw;
  double* raa = rb + static_cast<std::size_t>(h) * vw;
  double* rbb = raa + static_cast<std::size_t>(h) * vw;
  double* rab = rbb + static_cast<std::size_t>(h) * vw;
#pragma omp parallel for schedule(static)
  for (int y = 0; y < h; ++y)
    for (int cx = 0; cx < vw; ++cx) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (int dx = 0; dx < 11; ++dx) {
        const double wgt = g[dx];
        const double va = a[y * w + cx + dx];
        const double vb = b[y * w + cx + dx];
        sa += wgt * va;
        sb += wgt * vb;
        saa += wgt * va * va;
        sbb += wgt * vb * vb;
        sab += wgt * va * vb;
      }
      const std::size_t o = static_cast<std::size_t>(y) * vw + cx;
      ra[o] = sa;
      rb[o] = sb;
      raa[o] = saa;
      rbb[o] = sbb;
      rab[o] = sab;
    }
  // pass 2: vertical filter + per-position SSIM terms
  std::vector<double> ssim_map(static_cast<std::size_t>(vh) * vw);
  std::vector<double> cs_map(static_cast<std::size_t>(vh) * vw);
#pragma omp parallel for schedule(static)
  for (int cy = 0; cy < vh; ++cy)
    for (int cx = 0; cx < vw; ++cx) {
      double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
      for (int dy = 0; dy < 11; ++dy) {
        const double wgt = g[dy];
        const std::size_t o = static_cast<std::size_t>(cy + dy) * vw + cx;
        sa += wgt * ra[o];
        sb += wgt * rb[o];
        saa += wgt * raa[o];
        sbb += wgt * rbb[o];
        sab += wgt * rab[o];
      }
      const double var_a = saa - sa * sa;
      const double var_b = sbb - sb * sb;
      const double cov = sab - sa * sb;
      const double cs = (2.0 * cov + c2) / (var_a + var_b + c2);
      const double lum = (2.0 * sa * sb + c1) / (sa * sa + sb * sb + c1);
      const std::size_t o = static_cast<std::size_t>(cy) * vw + cx;
      ssim_map[o] = lum * cs;
      cs_map[o] = cs;
    }
  double ssim_sum = 0.0, cs_sum = 0.0;
  for (std::size_t i = 0; i < ssim_map.size(); ++i) {
    ssim_sum += ssim_map[i];
    cs_sum += cs_map[i];
  }
  const double npos = static_cast<double>(vh) * vw;
  *mean_ssim = ssim_sum / npos;
  *mean_cs = cs_sum / npos;
}

void jnd_preprocess(const double* luma, const double* vt, double* out, int h, int w,
                    long counters[3]) {
  const int bw = (w + 7) / 8;
  std::vector<double> means(static_cast<std::size_t>(bw) * ((h + 7) / 8));
  block_means_8(luma, means.data(), h, w);
  long c0 = 0, c1 = 0, c2 = 0;
#pragma omp parallel for schedule(static) reduction(+ : c0, c1, c2)
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double mb = means[(y / 8) * bw + (x / 8)];
      const double v = luma[y * w + x];
      const double t = vt[y * w + x];
      double r;
      if (std::fabs(v - mb) <= t) {
        r = mb;
        ++c0;
      } else if (v - mb < -t) {
        r = v + t;
        ++c1;
      } else {
        r = v - t;
        ++c2;
      }
      out[y * w + x] = std::clamp(r, 0.0, 255.0);
    }
  if (counters) {
    counters[0] = c0;
    counters[1] = c1;
    counters[2] = c2;
  }
}

}  // namespace par

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------
#define HMJND_DISPATCH(fn, ...) \
  do {                          \
    if (parallel_enabled())     \
      par::fn(__VA_ARGS__);     \
    else                        \
      serial::fn(__VA_ARGS__);  \
  } while (0)

void conv2d_forward(const double* x, const double* w, const double* b, double* y,
                    const ConvDims& d) {
  HMJND_DISPATCH(conv2d_forward, x, w, b, y, d);
}
void conv2d_backward_input(const double* dy, const double* w, double* dx, const ConvDims& d) {
  HMJND_DISPATCH(conv2d_backward_input, dy, w, dx, d);
}
void conv2d_backward_weight(const double* dy, const double* x, double* dw, double* db,
                            const ConvDims& d) {
  HMJND_DISPATCH(conv2d_backward_weight, dy, x, dw, db, d);
}
void bmm(const double* a, const double* b, double* c, std::int64_t batches, int m, int kd,
         int n, bool transpose_b) {
  HMJND_DISPATCH(bmm, a, b, c, batches, m, kd, n, transpose_b);
}
void softmax_rows(const double* x, double* y, std::int64_t rows, int n) {
  HMJND_DISPATCH(softmax_rows, x, y, rows, n);
}
void softmax_rows_backward(const double* y, const double* dy, double* dx, std::int64_t rows,
                           int n) {
  HMJND_DISPATCH(softmax_rows_backward, y, dy, dx, rows, n);
}
void dct8_blocks(const double* x, double* y, std::int64_t nblocks, bool inverse) {
  HMJND_DISPATCH(dct8_blocks, x, y, nblocks, inverse);
}
void ssim_stats(const double* a, const double* b, int h, int w, double c1, double c2,
                double* mean_ssim, double* mean_cs) {
  HMJND_DISPATCH(ssim_stats, a, b, h, w, c1, c2, mean_ssim, mean_cs);
}
void jnd_preprocess(const double* luma, const double* vt, double* out, int h, int w,
                    long counters[3]) {
  HMJND_DISPATCH(jnd_preprocess, luma, vt, out, h, w, counters);
}

#undef HMJND_DISPATCH

void block_means_8(const double* luma, double* means, int h, int w) {
  const int bw = (w + 7) / 8, bh = (h + 7) / 8;
  for (int by = 0; by < bh; ++by)
    for (int bx = 0; bx < bw; ++bx) {
      const int y1 = std::min(by * 8 + 8, h), x1 = std::min(bx * 8 + 8, w);
      double s = 0.0;
      int cnt = 0;
      for (int y = by * 8; y < y1; ++y)
        for (int x = bx * 8; x < x1; ++x) {
          s += luma[y * w + x];
          ++cnt;
        }
      means[by * bw + bx] = s / cnt;
    }
}

}  // namespace hmjnd::kernels
