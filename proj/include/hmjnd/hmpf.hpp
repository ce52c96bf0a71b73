#pragma once

#include <string>

#include "hmjnd/bundle.hpp"
#include "hmjnd/model.hpp"
#include "hmjnd/param_store.hpp"
#include "hmjnd/tensor.hpp"

namespace hmjnd {
class Rng;
}

namespace hmjnd::hmpf {

// Homologous-modality prior fusion: embed the saliency / depth / segmentation
// planes, combine saliency and depth through summation-enhancement and
// subtractive-offset SE gates, then modulate with the segmentation feature.

void init_params(ParamStore& params, const NetConfig& cfg, Rng& rng);

/// Three-layer 3x3 conv stack (relu between layers, spatial size preserved).
Tensor embed_modality(const ImagePlane& plane, const ParamStore& params,
                      const std::string& prefix);
Tensor embed_tensor(const Tensor& x, const ParamStore& params, const std::string& prefix);

/// f (x) gate(f) (+) f with gate = sigmoid(fc2(relu(fc1(gap(f))))).
Tensor se_gate(const Tensor& f, const ParamStore& params, const std::string& prefix);

/// SE-gated sum feature plus SE-gated difference feature.
Tensor fuse_saliency_depth(const Tensor& f_sa, const Tensor& f_de, const ParamStore& params);

/// f_fuse (x) gamma(f_se) (+) beta(f_se); gamma and beta are independent
/// two-layer conv branches.
Tensor modulate_with_segmentation(const Tensor& f_fuse, const Tensor& f_se,
                                  const ParamStore& params);

/// Full prior path producing F_pr of shape (1, C, H, W).
Tensor forward(const ModalityBundle& bundle, const ParamStore& params, const NetConfig& cfg);

/// Ablation alternative: concatenate the raw prior planes, then a three-layer
/// 3x3 conv and a 1x1 conv.
Tensor forward_concat_alternative(const ModalityBundle& bundle, const ParamStore& params,
                                  const NetConfig& cfg);

}  // namespace hmjnd::hmpf
