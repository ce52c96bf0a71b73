#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hmjnd/bundle.hpp"
#include "hmjnd/param_store.hpp"
#include "hmjnd/tensor.hpp"

namespace hmjnd {

/// Architecture knobs. The paper-scale layout keeps 3 STA blocks; widths,
/// window and head counts are configuration.
struct NetConfig {
  int channels = 16;
  int window = 8;
  int heads = 2;
  int sta_blocks = 3;
  int se_reduction = 4;
  double layer_norm_eps = 1e-5;
  bool use_hmpf = true;  // off: concat priors -> 3x 3x3 conv + 1x1 conv
  bool use_hmfa = true;  // off: concat F_pr/F_r -> SE gate + 1x1 conv

  void validate() const;
};

namespace hmfa {
struct TraceEvent {
  int block;       // 1-based STA block index
  bool shifted;    // false: wmE, true: swmE
  int shift;       // actual cyclic shift used
  int conv_index;  // F_conv^j feeding K/V; 0 means identity (raw F_pr)
};
using StaTrace = std::vector<TraceEvent>;
}  // namespace hmfa

/// The full forecasting network: parameter construction, forward pass, and
/// prediction of the redundancy-removed image plus its visibility-threshold
/// map.
class Model {
 public:
  Model(NetConfig cfg, std::uint64_t seed);           // fresh initialization
  Model(NetConfig cfg, ParamStore&& params);          // from checkpoint

  const NetConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  struct Forward {
    Tensor f_r;    // (1, C, H, W) RGB stream feature
    Tensor f_pr;   // (1, C, H, W) prior fused feature
    Tensor i_rr;   // (1, 3, H, W) redundancy-removed image, clamped
  };
  Forward forward(const ModalityBundle& bundle, hmfa::StaTrace* trace = nullptr) const;

  struct Prediction {
    ImagePlane i_rr;
    JndMap i_vt;   // channel-mean |I_ori - I_rr|
    Tensor f_r, f_pr, i_rr_tensor;
  };
  Prediction predict(const ModalityBundle& bundle, hmfa::StaTrace* trace = nullptr) const;

 private:
  NetConfig cfg_;
  ParamStore params_;
};

}  // namespace hmjnd
