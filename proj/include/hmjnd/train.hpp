#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hmjnd/bundle.hpp"
#include "hmjnd/model.hpp"
#include "hmjnd/tensor.hpp"

namespace hmjnd {

struct TrainConfig {
  double lambda_fea = 0.1;
  double lambda_pix = 1.0;
  int batch = 4;
  int epochs = 50;
  int patch = 32;
  double lr0 = 1e-4;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  std::uint64_t seed = 0;
  int max_steps = 0;  // 0 = no cap

  void validate(int window) const;
};

struct LossParts {
  Tensor total, fea, pix;
};

/// lambda_fea * mean|F_r - F_pr| + lambda_pix * mean (I_rr - I_gt)^2, each
/// mean taken over all coordinates of its operand.
LossParts loss_overall(const Tensor& f_r, const Tensor& f_pr, const Tensor& i_rr,
                       const Tensor& i_gt, double lambda_fea, double lambda_pix);

/// Edge-anchored tiling: full-size patches cover every pixel; remainder tiles
/// are re-anchored at the right/bottom edge and may overlap their neighbor.
std::vector<ModalityBundle> patch_partition(const ModalityBundle& bundle, int patch);

/// Anchor offsets used by patch_partition along one axis.
std::vector<int> tile_offsets(int extent, int patch);

/// Linear decay from lr0 at epoch 0 to zero at the final epoch.
double lr_at(int epoch, int total_epochs, double lr0);

struct StepLog {
  int epoch, step;
  double total, fea, pix;
};

struct TrainResult {
  std::vector<StepLog> log;
  int steps = 0;
};

/// Deterministic mini-batch training over seeded shuffled patches.
TrainResult train(Model& model, const std::vector<ModalityBundle>& dataset,
                  const TrainConfig& cfg);

void write_loss_csv(const TrainResult& result, const std::string& path);

}  // namespace hmjnd
