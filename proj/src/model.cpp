#include "hmjnd/model.hpp"

#include <cmath>
#include <stdexcept>

#include "hmjnd/hmfa.hpp"
#include "hmjnd/hmpf.hpp"
#include "hmjnd/rng.hpp"

namespace hmjnd {

void NetConfig::validate() const {
  if (channels < 1) throw std::invalid_argument("config: channels must be >= 1");
  if (window < 2 || window % 2 != 0)
    throw std::invalid_argument("config: window must be even and >= 2");
  if (heads < 1 || channels % heads != 0)
    throw std::invalid_argument("config: heads must divide channels");
  if (sta_blocks < 1) throw std::invalid_argument("config: sta_blocks must be >= 1");
  if (se_reduction < 1 || channels % se_reduction != 0)
    throw std::invalid_argument("config: se_reduction must divide channels");
  if (layer_norm_eps <= 0) throw std::invalid_argument("config: layer_norm_eps must be > 0");
}

Model::Model(NetConfig cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(derive_seed(seed, 0x1417));
  hmpf::init_params(params_, cfg_, rng);
  hmfa::init_params(params_, cfg_, rng);
}

Model::Model(NetConfig cfg, ParamStore&& params) : cfg_(cfg), params_(std::move(params)) {
  cfg_.validate();
}

Model::Forward Model::forward(const ModalityBundle& bundle, hmfa::StaTrace* trace) const {
  if (bundle.rgb.channels != 3) throw std::invalid_argument("forward: rgb must be 3-channel");
  Forward out;
  out.f_pr = hmpf::forward(bundle, params_, cfg_);
  out.f_r = hmfa::embed_rgb(bundle.rgb, params_);
  Tensor f_an = hmfa::forward(out.f_pr, out.f_r, params_, cfg_, trace);
  out.i_rr = hmfa::reshape_head(f_an, plane_to_tensor(bundle.rgb), params_);
  return out;
}

Model::Prediction Model::predict(const ModalityBundle& bundle, hmfa::StaTrace* trace) const {
  Forward f = forward(bundle, trace);
  Prediction p;
  p.f_r = f.f_r;
  p.f_pr = f.f_pr;
  p.i_rr_tensor = f.i_rr;
  p.i_rr = tensor_to_plane(f.i_rr);

  const int w = bundle.width(), h = bundle.height();
  p.i_vt = JndMap::make(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int c = 0; c < 3; ++c) acc += std::fabs(bundle.rgb.at(x, y, c) - p.i_rr.at(x, y, c));
      p.i_vt.at(x, y) = acc / 3.0;
    }
  return p;
}

}  // namespace hmjnd
