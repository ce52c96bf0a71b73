#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "hmjnd/image.hpp"

namespace hmjnd {

/// Adjustment factor alpha such that injecting alpha * gamma * I_vt reaches
/// target_mse (0..255^2 scale) exactly before clipping: since gamma^2 = 1,
/// alpha = sqrt(target / mean(I_vt^2)). Throws on an all-zero map.
double calibrate_alpha(const JndMap& i_vt, double target_mse);

/// I_con = clamp(I_ori + alpha * gamma * I_vt) with gamma a seeded iid +-1
/// field, shared across the channels of a pixel.
ImagePlane inject_noise(const ImagePlane& i_ori, const JndMap& i_vt, double alpha,
                        std::uint64_t seed);

struct EvalItem {
  std::string id;
  ImagePlane i_ori;  // required
  ImagePlane i_rr;   // redundancy-removed prediction; needed for gt metrics
  ImagePlane i_gt;   // ground truth; needed for gt metrics
  JndMap i_vt;       // required
};

struct EvalOptions {
  double target_mse = 100.0;
  std::uint64_t seed = 0;
  bool want_psnr_gt = true;   // PSNR(I_rr, I_gt)
  bool want_ssim_gt = true;   // SSIM(I_rr, I_gt)
  bool want_ms_ssim = true;   // MS-SSIM(I_ori, I_con)
};

struct EvalRow {
  std::string id;
  bool skipped = false;
  std::string note;
  double alpha = 0, mse_pre = 0, mse_post = 0;
  double psnr_gt = 0, ssim_gt = 0, ms_ssim_con = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;  // sorted by id
  double mean_psnr_gt = 0, mean_ssim_gt = 0, mean_ms_ssim = 0;
  double mean_mse_pre = 0, mean_mse_post = 0;
  int evaluated = 0, skipped = 0;
  double target_mse = 0;
  EvalOptions opts;
};

/// Per-image alpha calibration, injection and metrics; items with an all-zero
/// threshold map are reported as skipped, not failed. Requesting the
/// ground-truth metrics without i_gt/i_rr on every item is an error.
EvalReport evaluate(const std::vector<EvalItem>& items, const EvalOptions& opts);

void write_report_csv(const EvalReport& report, std::ostream& os);
std::string format_report_table(const EvalReport& report);

}  // namespace hmjnd
