#pragma once

#include <cstdint>

namespace hmjnd::kernels {

// The hot inner loops live here in two variants: a plain serial reference
// (namespace serial) and an OpenMP version (namespace par). The unqualified
// entry points dispatch on parallel_enabled(). Both variants keep the same
// per-element accumulation order, so results are bit-identical and switching
// thread counts never changes an output.

bool parallel_enabled();
void set_parallel_enabled(bool on);
int max_threads();

struct ConvDims {
  int n, cin, h, w;     // input
  int cout, k;          // weight (cout, cin, k, k)
  int stride, pad;
  int oh, ow;           // output spatial size
};
ConvDims conv_dims(int n, int cin, int h, int w, int cout, int k, int stride, int pad);

namespace serial {
void conv2d_forward(const double* x, const double* w, const double* b, double* y,
                    const ConvDims& d);
void conv2d_backward_input(const double* dy, const double* w, double* dx, const ConvDims& d);
void conv2d_backward_weight(const double* dy, const double* x, double* dw, double* db,
                            const ConvDims& d);
// c[bt] (m x n) = a[bt] (m x kd) * b[bt] (kd x n), or * b[bt]^T when
// transpose_b (then b is n x kd).
void bmm(const double* a, const double* b, double* c, std::int64_t batches, int m, int kd,
         int n, bool transpose_b);
void softmax_rows(const double* x, double* y, std::int64_t rows, int n);
void softmax_rows_backward(const double* y, const double* dy, double* dx, std::int64_t rows,
                           int n);
// Orthonormal 2-D type-II DCT on packed 8x8 blocks.
void dct8_blocks(const double* x, double* y, std::int64_t nblocks, bool inverse);
// Mean + contrast/structure stats of the 11x11 Gaussian-window SSIM,
// over valid positions only. a, b are single-channel, 0..255 scale.
void ssim_stats(const double* a, const double* b, int h, int w, double c1, double c2,
                double* mean_ssim, double* mean_cs);
// Eq.(13)-style block preprocessing on a luma plane in 0..255 scale.
// counters: {clamp-to-mean, shift-up, shift-down}.
void jnd_preprocess(const double* luma, const double* vt, double* out, int h, int w,
                    long counters[3]);
}  // namespace serial

namespace par {
void conv2d_forward(const double* x, const double* w, const double* b, double* y,
                    const ConvDims& d);
void conv2d_backward_input(const double* dy, const double* w, double* dx, const ConvDims& d);
void conv2d_backward_weight(const double* dy, const double* x, double* dw, double* db,
                            const ConvDims& d);
void bmm(const double* a, const double* b, double* c, std::int64_t batches, int m, int kd,
         int n, bool transpose_b);
void softmax_rows(const double* x, double* y, std::int64_t rows, int n);
void softmax_rows_backward(const double* y, const double* dy, double* dx, std::int64_t rows,
                           int n);
void dct8_blocks(const double* x, double* y, std::int64_t nblocks, bool inverse);
void ssim_stats(const double* a, const double* b, int h, int w, double c1, double c2,
                double* mean_ssim, double* mean_cs);
void jnd_preprocess(const double* luma, const double* vt, double* out, int h, int w,
                    long counters[3]);
}  // namespace par

void conv2d_forward(const double* x, const double* w, const double* b, double* y,
                    const ConvDims& d);
void conv2d_backward_input(const double* dy, const double* w, double* dx, const ConvDims& d);
void conv2d_backward_weight(const double* dy, const double* x, double* dw, double* db,
                            const ConvDims& d);
void bmm(const double* a, const double* b, double* c, std::int64_t batches, int m, int kd,
         int n, bool transpose_b);
void softmax_rows(const double* x, double* y, std::int64_t rows, int n);
void softmax_rows_backward(const double* y, const double* dy, double* dx, std::int64_t rows,
                           int n);
void dct8_blocks(const double* x, double* y, std::int64_t nblocks, bool inverse);
void ssim_stats(const double* a, const double* b, int h, int w, double c1, double c2,
                double* mean_ssim, double* mean_cs);
void jnd_preprocess(const double* luma, const double* vt, double* out, int h, int w,
                    long counters[3]);

// Per-8x8-block means of a luma plane; partial edge blocks average the
// pixels actually present. means has ceil(h/8)*ceil(w/8) entries.
void block_means_8(const double* luma, double* means, int h, int w);

}  // namespace hmjnd::kernels
