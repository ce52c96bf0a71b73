#include "hmjnd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "hmjnd/kernels.hpp"

namespace hmjnd {

namespace {

void check_same(const ImagePlane& a, const ImagePlane& b, const char* who) {
  if (!a.same_dims(b) || a.channels != b.channels)
    throw std::invalid_argument(std::string(who) + ": image dimensions differ");
}

std::vector<double> luma255(const ImagePlane& p) {
  std::vector<double> out(static_cast<std::size_t>(p.width) * p.height);
  if (p.channels == 1) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = p.data[i] * 255.0;
  } else {
    for (int y = 0; y < p.height; ++y)
      for (int x = 0; x < p.width; ++x)
        out[static_cast<std::size_t>(y) * p.width + x] =
            (0.299 * p.at(x, y, 0) + 0.587 * p.at(x, y, 1) + 0.114 * p.at(x, y, 2)) * 255.0;
  }
  return out;
}

constexpr double kC1 = (0.01 * 255.0) * (0.01 * 255.0);
constexpr double kC2 = (0.03 * 255.0) * (0.03 * 255.0);

void downsample2(std::vector<double>& img, int& w, int& h) {
  const int nw = w / 2, nh = h / 2;
  std::vector<double> out(static_cast<std::size_t>(nw) * nh);
  for (int y = 0; y < nh; ++y)
    for (int x = 0; x < nw; ++x)
      out[static_cast<std::size_t>(y) * nw + x] =
          0.25 * (img[static_cast<std::size_t>(2 * y) * w + 2 * x] +
                  img[static_cast<std::size_t>(2 * y) * w + 2 * x + 1] +
                  img[static_cast<std::size_t>(2 * y + 1) * w + 2 * x] +
                  img[static_cast<std::size_t>(2 * y + 1) * w + 2 * x + 1]);
  img = std::move(out);
  w = nw;
  h = nh;
}

}  // namespace

double mse_255(const ImagePlane& a, const ImagePlane& b) {
  check_same(a, b, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = (a.data[i] - b.data[i]) * 255.0;
    acc += d * d;
  }
  return acc / static_cast<double>(a.data.size());
}

double psnr(const ImagePlane& a, const ImagePlane& b) {
  const double mse = mse_255(a, b);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

double ssim(const ImagePlane& a, const ImagePlane& b) {
  check_same(a, b, "ssim");
  if (a.width < 11 || a.height < 11)
    throw std::invalid_argument("ssim: image smaller than the 11x11 window");
  const auto la = luma255(a);
  const auto lb = luma255(b);
  double mean_ssim = 0.0, mean_cs = 0.0;
  kernels::ssim_stats(la.data(), lb.data(), a.height, a.width, kC1, kC2, &mean_ssim, &mean_cs);
  return mean_ssim;
}

double ms_ssim(const ImagePlane& a, const ImagePlane& b) {
  check_same(a, b, "ms_ssim");
  static const double kWeights[5] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};
  int w = a.width, h = a.height;
  if (w < 11 || h < 11)
    throw std::invalid_argument("ms_ssim: image smaller than the 11x11 window");
  // how many dyadic scales keep the window valid
  int scales = 1;
  while (scales < 5 && (w >> scales) >= 11 && (h >> scales) >= 11) ++scales;
  double wsum = 0.0;
  for (int j = 0; j < scales; ++j) wsum += kWeights[j];

  auto la = luma255(a);
  auto lb = luma255(b);
  int cw = w, ch = h;
  double result = 1.0;
  for (int j = 0; j < scales; ++j) {
    double mean_ssim = 0.0, mean_cs = 0.0;
    kernels::ssim_stats(la.data(), lb.data(), ch, cw, kC1, kC2, &mean_ssim, &mean_cs);
    const double term = j + 1 < scales ? mean_cs : mean_ssim;
    result *= std::pow(std::max(term, 0.0), kWeights[j] / wsum);
    if (j + 1 < scales) {
      downsample2(la, cw, ch);
      downsample2(lb, cw, ch);
    }
  }
  return std::clamp(result, 0.0, 1.0);
}

}  // namespace hmjnd
