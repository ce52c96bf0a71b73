#include "hmjnd/train.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include "hmjnd/rng.hpp"

namespace hmjnd {

void TrainConfig::validate(int window) const {
  if (lambda_fea < 0 || lambda_pix < 0 || lambda_fea + lambda_pix <= 0)
    throw std::invalid_argument("train config: need lambda_fea + lambda_pix > 0, both >= 0");
  if (patch % window != 0)
    throw std::invalid_argument("train config: patch size must be divisible by the window");
  if (batch < 1 || epochs < 0) throw std::invalid_argument("train config: bad batch/epochs");
}

LossParts loss_overall(const Tensor& f_r, const Tensor& f_pr, const Tensor& i_rr,
                       const Tensor& i_gt, double lambda_fea, double lambda_pix) {
  if (f_r.shape() != f_pr.shape())
    throw std::invalid_argument("loss_overall: feature shapes differ");
  if (i_rr.shape() != i_gt.shape())
    throw std::invalid_argument("loss_overall: image shapes differ");
  LossParts parts;
  parts.fea = scale(reduce_sum(abs(f_r - f_pr)), lambda_fea / static_cast<double>(f_r.size()));
  Tensor d = i_rr - i_gt;
  parts.pix = scale(reduce_sum(d * d), lambda_pix / static_cast<double>(i_rr.size()));
  parts.total = parts.fea + parts.pix;
  return parts;
}

std::vector<int> tile_offsets(int extent, int patch) {
  std::vector<int> offs;
  for (int o = 0; o + patch <= extent; o += patch) offs.push_back(o);
  if (offs.empty() || offs.back() + patch < extent) offs.push_back(extent - patch);
  return offs;
}

namespace {

ImagePlane crop(const ImagePlane& p, int x0, int y0, int size) {
  ImagePlane out = ImagePlane::make(size, size, p.channels);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < p.channels; ++c) out.at(x, y, c) = p.at(x0 + x, y0 + y, c);
  return out;
}

}  // namespace

std::vector<ModalityBundle> patch_partition(const ModalityBundle& bundle, int patch) {
  if (patch > bundle.width() || patch > bundle.height())
    throw std::invalid_argument("patch_partition: patch larger than image");
  const auto xs = tile_offsets(bundle.width(), patch);
  const auto ys = tile_offsets(bundle.height(), patch);
  std::vector<ModalityBundle> out;
  for (int y0 : ys)
    for (int x0 : xs) {
      ModalityBundle p;
      p.rgb = crop(bundle.rgb, x0, y0, patch);
      p.saliency = crop(bundle.saliency, x0, y0, patch);
      p.depth = crop(bundle.depth, x0, y0, patch);
      p.segmentation = crop(bundle.segmentation, x0, y0, patch);
      p.num_classes = bundle.num_classes;
      p.seg_labels.resize(static_cast<std::size_t>(patch) * patch);
      for (int y = 0; y < patch; ++y)
        for (int x = 0; x < patch; ++x)
          p.seg_labels[static_cast<std::size_t>(y) * patch + x] =
              bundle.seg_labels.empty()
                  ? 0
                  : bundle.seg_labels[static_cast<std::size_t>(y0 + y) * bundle.width() + x0 + x];
      if (bundle.has_ground_truth()) p.ground_truth = crop(bundle.ground_truth, x0, y0, patch);
      out.push_back(std::move(p));
    }
  return out;
}

double lr_at(int epoch, int total_epochs, double lr0) {
  if (epoch < 0 || epoch > total_epochs) throw std::invalid_argument("lr_at: epoch out of range");
  if (total_epochs == 0) return lr0;
  return lr0 * (1.0 - static_cast<double>(epoch) / static_cast<double>(total_epochs));
}

TrainResult train(Model& model, const std::vector<ModalityBundle>& dataset,
                  const TrainConfig& cfg) {
  cfg.validate(model.config().window);
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  for (std::size_t i = 0; i < dataset.size(); ++i)
    if (!dataset[i].has_ground_truth())
      throw std::invalid_argument("train: bundle " + std::to_string(i) +
                                  " lacks ground truth");

  std::vector<ModalityBundle> patches;
  for (const auto& b : dataset) {
    auto ps = patch_partition(b, cfg.patch);
    for (auto& p : ps) patches.push_back(std::move(p));
  }

  Rng rng(derive_seed(cfg.seed, 0x7a11));
  TrainResult result;
  int step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_at(epoch, cfg.epochs, cfg.lr0);
    // Fisher-Yates with the run RNG; ordering is part of the seeded contract.
    std::vector<std::size_t> order(patches.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(0, static_cast<int>(i) - 1)]);

    for (std::size_t ofs = 0; ofs < order.size(); ofs += cfg.batch) {
      const std::size_t take = std::min<std::size_t>(cfg.batch, order.size() - ofs);
      model.params().zero_grads();
      double tot = 0, fea = 0, pix = 0;
      for (std::size_t bi = 0; bi < take; ++bi) {
        const ModalityBundle& b = patches[order[ofs + bi]];
        Model::Forward f = model.forward(b);
        LossParts parts = loss_overall(f.f_r, f.f_pr, f.i_rr,
                                       plane_to_tensor(b.ground_truth), cfg.lambda_fea,
                                       cfg.lambda_pix);
        // mean over the mini-batch
        Tensor contrib = scale(parts.total, 1.0 / static_cast<double>(take));
        contrib.backward();
        tot += parts.total.item() / take;
        fea += parts.fea.item() / take;
        pix += parts.pix.item() / take;
      }
      model.params().adam_step(lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
      ++step;
      result.log.push_back({epoch, step, tot, fea, pix});
      if (cfg.max_steps > 0 && step >= cfg.max_steps) {
        result.steps = step;
        return result;
      }
    }
  }
  result.steps = step;
  return result;
}

void write_loss_csv(const TrainResult& result, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f << "epoch,step,loss_total,loss_fea,loss_pix\n";
  f.precision(17);
  for (const auto& s : result.log)
    f << s.epoch << "," << s.step << "," << s.total << "," << s.fea << "," << s.pix << "\n";
}

}  // namespace hmjnd
