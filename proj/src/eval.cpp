#include "hmjnd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "hmjnd/metrics.hpp"
#include "hmjnd/rng.hpp"

namespace hmjnd {

double calibrate_alpha(const JndMap& i_vt, double target_mse) {
  if (target_mse <= 0) throw std::invalid_argument("calibrate_alpha: target must be positive");
  if (i_vt.thresholds.empty()) throw std::invalid_argument("calibrate_alpha: empty map");
  double acc = 0.0;
  for (double v : i_vt.thresholds) {
    const double v255 = v * 255.0;
    acc += v255 * v255;
  }
  const double mean_sq = acc / static_cast<double>(i_vt.thresholds.size());
  if (mean_sq == 0.0)
    throw std::runtime_error("calibrate_alpha: unbounded alpha (threshold map is all zero)");
  return std::sqrt(target_mse / mean_sq);
}

ImagePlane inject_noise(const ImagePlane& i_ori, const JndMap& i_vt, double alpha,
                        std::uint64_t seed) {
  if (i_ori.width != i_vt.width || i_ori.height != i_vt.height)
    throw std::invalid_argument("inject_noise: map/image dimensions differ");
  if (alpha < 0) throw std::invalid_argument("inject_noise: alpha must be >= 0");
  Rng rng(derive_seed(seed, 0x909));
  ImagePlane out = i_ori;
  for (int y = 0; y < i_ori.height; ++y)
    for (int x = 0; x < i_ori.width; ++x) {
      const double delta = alpha * rng.sign() * i_vt.at(x, y);
      for (int c = 0; c < i_ori.channels; ++c)
        out.at(x, y, c) = std::clamp(i_ori.at(x, y, c) + delta, 0.0, 1.0);
    }
  return out;
}

namespace {

// Pre-clipping achieved MSE: alpha^2 * mean(I_vt^2). Equal across channels,
// and equal to the calibration target by construction.
double pre_clip_mse(const JndMap& vt, double alpha) {
  double acc = 0.0;
  for (double v : vt.thresholds) {
    const double d = alpha * v * 255.0;
    acc += d * d;
  }
  return acc / static_cast<double>(vt.thresholds.size());
}

}  // namespace

EvalReport evaluate(const std::vector<EvalItem>& items, const EvalOptions& opts) {
  const bool need_gt = opts.want_psnr_gt || opts.want_ssim_gt;
  for (const auto& it : items) {
    if (it.i_ori.empty() || it.i_vt.thresholds.empty())
      throw std::invalid_argument("evaluate: item '" + it.id + "' lacks image or map");
    if (need_gt && it.i_gt.empty())
      throw std::invalid_argument(
          "evaluate: ground-truth metrics requested but item '" + it.id +
          "' has no ground truth");
    if (need_gt && it.i_rr.empty())
      throw std::invalid_argument(
          "evaluate: ground-truth metrics requested but item '" + it.id +
          "' has no redundancy-removed prediction");
  }

  EvalReport report;
  report.target_mse = opts.target_mse;
  report.opts = opts;
  report.rows.resize(items.size());

#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(items.size()); ++i) {
    const EvalItem& it = items[i];
    EvalRow row;
    row.id = it.id;
    const bool zero_map =
        std::all_of(it.i_vt.thresholds.begin(), it.i_vt.thresholds.end(),
                    [](double v) { return v == 0.0; });
    if (zero_map) {
      row.skipped = true;
      row.note = "threshold map is all zero; alpha unbounded";
    } else {
      row.alpha = calibrate_alpha(it.i_vt, opts.target_mse);
      const ImagePlane con =
          inject_noise(it.i_ori, it.i_vt, row.alpha, derive_seed(opts.seed, i));
      row.mse_pre = pre_clip_mse(it.i_vt, row.alpha);
      row.mse_post = mse_255(con, it.i_ori);
      if (opts.want_ms_ssim) row.ms_ssim_con = ms_ssim(it.i_ori, con);
      if (opts.want_psnr_gt) row.psnr_gt = psnr(it.i_rr, it.i_gt);
      if (opts.want_ssim_gt) row.ssim_gt = ssim(it.i_rr, it.i_gt);
    }
    report.rows[i] = std::move(row);
  }

  std::sort(report.rows.begin(), report.rows.end(),
            [](const EvalRow& a, const EvalRow& b) { return a.id < b.id; });
  for (const auto& row : report.rows) {
    if (row.skipped) {
      ++report.skipped;
      continue;
    }
    ++report.evaluated;
    report.mean_psnr_gt += row.psnr_gt;
    report.mean_ssim_gt += row.ssim_gt;
    report.mean_ms_ssim += row.ms_ssim_con;
    report.mean_mse_pre += row.mse_pre;
    report.mean_mse_post += row.mse_post;
  }
  if (report.evaluated > 0) {
    report.mean_psnr_gt /= report.evaluated;
    report.mean_ssim_gt /= report.evaluated;
    report.mean_ms_ssim /= report.evaluated;
    report.mean_mse_pre /= report.evaluated;
    report.mean_mse_post /= report.evaluated;
  }
  return report;
}

void write_report_csv(const EvalReport& report, std::ostream& os) {
  os << "image,skipped,alpha,mse_pre,mse_post,psnr_gt_rr,ssim_gt_rr,msssim_ori_con,note\n";
  os << std::setprecision(17);
  for (const auto& r : report.rows) {
    os << r.id << "," << (r.skipped ? 1 : 0) << "," << r.alpha << "," << r.mse_pre << ","
       << r.mse_post << "," << r.psnr_gt << "," << r.ssim_gt << "," << r.ms_ssim_con << ","
       << r.note << "\n";
  }
  os << "mean," << 0 << "," << "" << "," << report.mean_mse_pre << "," << report.mean_mse_post
     << "," << report.mean_psnr_gt << "," << report.mean_ssim_gt << "," << report.mean_ms_ssim
     << ",\n";
}

std::string format_report_table(const EvalReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << std::setw(16) << "image" << std::setw(10) << "alpha" << std::setw(12) << "mse_pre"
     << std::setw(12) << "mse_post";
  if (report.opts.want_psnr_gt) os << std::setw(12) << "psnr_gt";
  if (report.opts.want_ssim_gt) os << std::setw(12) << "ssim_gt";
  if (report.opts.want_ms_ssim) os << std::setw(12) << "msssim";
  os << "\n";
  for (const auto& r : report.rows) {
    os << std::setw(16) << r.id;
    if (r.skipped) {
      os << "  skipped: " << r.note << "\n";
      continue;
    }
    os << std::setw(10) << r.alpha << std::setw(12) << r.mse_pre << std::setw(12) << r.mse_post;
    if (report.opts.want_psnr_gt) os << std::setw(12) << r.psnr_gt;
    if (report.opts.want_ssim_gt) os << std::setw(12) << r.ssim_gt;
    if (report.opts.want_ms_ssim) os << std::setw(12) << r.ms_ssim_con;
    os << "\n";
  }
  os << std::setw(16) << "mean" << std::setw(10) << "" << std::setw(12) << report.mean_mse_pre
     << std::setw(12) << report.mean_mse_post;
  if (report.opts.want_psnr_gt) os << std::setw(12) << report.mean_psnr_gt;
  if (report.opts.want_ssim_gt) os << std::setw(12) << report.mean_ssim_gt;
  if (report.opts.want_ms_ssim) os << std::setw(12) << report.mean_ms_ssim;
  os << "\n";
  return os.str();
}

}  // namespace hmjnd
