#include "hmjnd/hmpf.hpp"

#include <stdexcept>

#include "hmjnd/rng.hpp"

namespace hmjnd::hmpf {

namespace {

void add_conv(ParamStore& p, const std::string& prefix, int cin, int cout, int k, Rng& rng) {
  p.add(prefix + ".weight", make_weight({cout, cin, k, k}, rng));
  p.add(prefix + ".bias", make_zeros_param({cout}));
}

Tensor conv(const Tensor& x, const ParamStore& p, const std::string& prefix, int pad) {
  return conv2d(x, p.get(prefix + ".weight"), p.get(prefix + ".bias"), 1, pad);
}

void add_embedder(ParamStore& p, const std::string& prefix, int cin, int c, Rng& rng) {
  add_conv(p, prefix + ".conv0", cin, c, 3, rng);
  add_conv(p, prefix + ".conv1", c, c, 3, rng);
  add_conv(p, prefix + ".conv2", c, c, 3, rng);
}

void add_gate(ParamStore& p, const std::string& prefix, int c, int r, Rng& rng) {
  p.add(prefix + ".fc1.weight", make_weight({c / r, c}, rng));
  p.add(prefix + ".fc1.bias", make_zeros_param({c / r}));
  p.add(prefix + ".fc2.weight", make_weight({c, c / r}, rng));
  p.add(prefix + ".fc2.bias", make_zeros_param({c}));
}

}  // namespace

void init_params(ParamStore& params, const NetConfig& cfg, Rng& rng) {
  const int c = cfg.channels;
  if (cfg.use_hmpf) {
    if (c % cfg.se_reduction != 0)
      throw std::invalid_argument("hmpf: se_reduction must divide channels");
    add_embedder(params, "hmpf.embed_sa", 1, c, rng);
    add_embedder(params, "hmpf.embed_de", 1, c, rng);
    add_embedder(params, "hmpf.embed_se", 1, c, rng);
    add_gate(params, "hmpf.gate_sum", c, cfg.se_reduction, rng);
    add_gate(params, "hmpf.gate_sub", c, cfg.se_reduction, rng);
    add_conv(params, "hmpf.mod_gamma.conv0", c, c, 3, rng);
    add_conv(params, "hmpf.mod_gamma.conv1", c, c, 3, rng);
    add_conv(params, "hmpf.mod_beta.conv0", c, c, 3, rng);
    add_conv(params, "hmpf.mod_beta.conv1", c, c, 3, rng);
  } else {
    add_embedder(params, "hmpf.alt.stack", 3, c, rng);
    add_conv(params, "hmpf.alt.proj", c, c, 1, rng);
  }
}

Tensor embed_tensor(const Tensor& x, const ParamStore& params, const std::string& prefix) {
  Tensor f = relu(conv(x, params, prefix + ".conv0", 1));
  f = relu(conv(f, params, prefix + ".conv1", 1));
  return conv(f, params, prefix + ".conv2", 1);
}

Tensor embed_modality(const ImagePlane& plane, const ParamStore& params,
                      const std::string& prefix) {
  return embed_tensor(plane_to_tensor(plane), params, prefix);
}

Tensor se_gate(const Tensor& f, const ParamStore& params, const std::string& prefix) {
  if (f.rank() != 4) throw std::invalid_argument("se_gate: input must be rank 4");
  Tensor pooled = global_avg_pool(f);  // (N, C)
  Tensor g = relu(fully_connected(pooled, params.get(prefix + ".fc1.weight"),
                                  params.get(prefix + ".fc1.bias")));
  g = sigmoid(fully_connected(g, params.get(prefix + ".fc2.weight"),
                              params.get(prefix + ".fc2.bias")));
  return f * g + f;  // channel gate broadcasts over H, W
}

Tensor fuse_saliency_depth(const Tensor& f_sa, const Tensor& f_de, const ParamStore& params) {
  if (f_sa.shape() != f_de.shape())
    throw std::invalid_argument("fuse_saliency_depth: feature shapes differ");
  Tensor f_sum = f_sa + f_de;
  Tensor f_sub = f_sa - f_de;
  Tensor f_e = se_gate(f_sum, params, "hmpf.gate_sum");
  Tensor f_o = se_gate(f_sub, params, "hmpf.gate_sub");
  return f_e + f_o;
}

Tensor modulate_with_segmentation(const Tensor& f_fuse, const Tensor& f_se,
                                  const ParamStore& params) {
  if (f_fuse.dim(2) != f_se.dim(2) || f_fuse.dim(3) != f_se.dim(3))
    throw std::invalid_argument("modulate_with_segmentation: spatial sizes differ");
  Tensor gamma = conv(relu(conv(f_se, params, "hmpf.mod_gamma.conv0", 1)), params,
                      "hmpf.mod_gamma.conv1", 1);
  Tensor beta = conv(relu(conv(f_se, params, "hmpf.mod_beta.conv0", 1)), params,
                     "hmpf.mod_beta.conv1", 1);
  return f_fuse * gamma + beta;
}

Tensor forward(const ModalityBundle& bundle, const ParamStore& params, const NetConfig& cfg) {
  if (!cfg.use_hmpf) return forward_concat_alternative(bundle, params, cfg);
  Tensor f_sa = embed_modality(bundle.saliency, params, "hmpf.embed_sa");
  Tensor f_de = embed_modality(bundle.depth, params, "hmpf.embed_de");
  Tensor f_se = embed_modality(bundle.segmentation, params, "hmpf.embed_se");
  Tensor f_fuse = fuse_saliency_depth(f_sa, f_de, params);
  return modulate_with_segmentation(f_fuse, f_se, params);
}

Tensor forward_concat_alternative(const ModalityBundle& bundle, const ParamStore& params,
                                  const NetConfig& cfg) {
  (void)cfg;
  Tensor x = concat_channels({plane_to_tensor(bundle.saliency), plane_to_tensor(bundle.depth),
                              plane_to_tensor(bundle.segmentation)});
  Tensor f = embed_tensor(x, params, "hmpf.alt.stack");
  return conv(f, params, "hmpf.alt.proj", 0);
}

}  // namespace hmjnd::hmpf
