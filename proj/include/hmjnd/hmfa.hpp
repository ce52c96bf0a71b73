#pragma once

#include <string>

#include "hmjnd/model.hpp"
#include "hmjnd/param_store.hpp"
#include "hmjnd/tensor.hpp"

namespace hmjnd {
class Rng;
}

namespace hmjnd::hmfa {

// Homologous-modality feature alignment: stacked STA blocks, each a window
// encoder followed by a shifted-window encoder whose K/V always re-read a
// freshly convolved view of the original prior feature.

void init_params(ParamStore& params, const NetConfig& cfg, Rng& rng);

Tensor embed_rgb(const ImagePlane& rgb, const ParamStore& params);

/// One STA block (1-based index i): wmE with K,V = F_conv^(2i-2)(F_pr)
/// (identity when i = 1) then swmE with K,V = F_conv^(2i-1)(F_pr).
Tensor sta_block(const Tensor& f_q, const Tensor& f_pr, int i, const ParamStore& params,
                 const NetConfig& cfg, StaTrace* trace = nullptr);

/// Chains cfg.sta_blocks STA blocks starting from the RGB feature.
Tensor forward(const Tensor& f_pr, const Tensor& f_r, const ParamStore& params,
               const NetConfig& cfg, StaTrace* trace = nullptr);

/// Ablation alternative: concat(F_pr, F_r) -> SE channel attention -> 1x1 conv.
Tensor forward_concat_alternative(const Tensor& f_pr, const Tensor& f_r,
                                  const ParamStore& params, const NetConfig& cfg);

/// Reassembles the aligned feature into a 3-channel residual, adds the
/// original image and clamps into [0,1].
Tensor reshape_head(const Tensor& f_an, const Tensor& i_ori, const ParamStore& params);

}  // namespace hmjnd::hmfa
