#include "hmjnd/hmfa.hpp"

#include <stdexcept>

#include "hmjnd/rng.hpp"

namespace hmjnd::hmfa {

namespace {

void add_conv(ParamStore& p, const std::string& prefix, int cin, int cout, int k, Rng& rng) {
  p.add(prefix + ".weight", make_weight({cout, cin, k, k}, rng));
  p.add(prefix + ".bias", make_zeros_param({cout}));
}

Tensor conv(const Tensor& x, const ParamStore& p, const std::string& prefix, int pad) {
  return conv2d(x, p.get(prefix + ".weight"), p.get(prefix + ".bias"), 1, pad);
}

void add_encoder(ParamStore& p, const std::string& prefix, int c, Rng& rng) {
  p.add(prefix + ".ln1.gamma", make_ones_param({c}));
  p.add(prefix + ".ln1.beta", make_zeros_param({c}));
  p.add(prefix + ".ln2.gamma", make_ones_param({c}));
  p.add(prefix + ".ln2.beta", make_zeros_param({c}));
  for (const char* nm : {"wq", "wk", "wv", "wo"})
    p.add(prefix + ".attn." + std::string(nm), make_weight({c, c, 1, 1}, rng));
  for (const char* nm : {"bq", "bk", "bv", "bo"})
    p.add(prefix + ".attn." + std::string(nm), make_zeros_param({c}));
  add_conv(p, prefix + ".mlp.fc1", c, 2 * c, 1, rng);
  add_conv(p, prefix + ".mlp.fc2", 2 * c, c, 1, rng);
}

AttentionParams attn_params(const ParamStore& p, const std::string& prefix) {
  return AttentionParams{p.get(prefix + ".attn.wq"), p.get(prefix + ".attn.bq"),
                         p.get(prefix + ".attn.wk"), p.get(prefix + ".attn.bk"),
                         p.get(prefix + ".attn.wv"), p.get(prefix + ".attn.bv"),
                         p.get(prefix + ".attn.wo"), p.get(prefix + ".attn.bo")};
}

// norm -> windowed cross-attention -> residual -> norm -> MLP -> residual
Tensor encoder(const Tensor& q_stream, const Tensor& kv_stream, int shift,
               const ParamStore& p, const NetConfig& cfg, const std::string& prefix) {
  Tensor normed = layer_norm(q_stream, p.get(prefix + ".ln1.gamma"),
                             p.get(prefix + ".ln1.beta"), cfg.layer_norm_eps);
  Tensor attn = windowed_cross_attention(normed, kv_stream, kv_stream, cfg.heads, cfg.window,
                                         shift, attn_params(p, prefix));
  Tensor x = q_stream + attn;
  Tensor normed2 = layer_norm(x, p.get(prefix + ".ln2.gamma"), p.get(prefix + ".ln2.beta"),
                              cfg.layer_norm_eps);
  Tensor mlp = conv(relu(conv(normed2, p, prefix + ".mlp.fc1", 0)), p, prefix + ".mlp.fc2", 0);
  return x + mlp;
}

// F_conv^j: two-layer 3x3 convolution over the prior feature.
Tensor conv_block(const Tensor& f_pr, int j, const ParamStore& p) {
  const std::string prefix = "hmfa.conv" + std::to_string(j);
  return conv(relu(conv(f_pr, p, prefix + ".conv0", 1)), p, prefix + ".conv1", 1);
}

void add_alt_params(ParamStore& params, const NetConfig& cfg, Rng& rng) {
  const int c2 = 2 * cfg.channels;
  params.add("hmfa.alt.gate.fc1.weight", make_weight({c2 / cfg.se_reduction, c2}, rng));
  params.add("hmfa.alt.gate.fc1.bias", make_zeros_param({c2 / cfg.se_reduction}));
  params.add("hmfa.alt.gate.fc2.weight", make_weight({c2, c2 / cfg.se_reduction}, rng));
  params.add("hmfa.alt.gate.fc2.bias", make_zeros_param({c2}));
  add_conv(params, "hmfa.alt.proj", c2, cfg.channels, 1, rng);
}

}  // namespace

void init_params(ParamStore& params, const NetConfig& cfg, Rng& rng) {
  const int c = cfg.channels;
  add_conv(params, "hmfa.embed_rgb.conv0", 3, c, 3, rng);
  add_conv(params, "hmfa.embed_rgb.conv1", c, c, 3, rng);
  add_conv(params, "hmfa.embed_rgb.conv2", c, c, 3, rng);
  if (cfg.use_hmfa) {
    for (int i = 1; i <= cfg.sta_blocks; ++i) {
      add_encoder(params, "hmfa.sta" + std::to_string(i) + ".wm", c, rng);
      add_encoder(params, "hmfa.sta" + std::to_string(i) + ".swm", c, rng);
    }
    for (int j = 1; j <= 2 * cfg.sta_blocks - 1; ++j) {
      const std::string prefix = "hmfa.conv" + std::to_string(j);
      add_conv(params, prefix + ".conv0", c, c, 3, rng);
      add_conv(params, prefix + ".conv1", c, c, 3, rng);
    }
  } else {
    add_alt_params(params, cfg, rng);
  }
  add_conv(params, "hmfa.head", c, 3, 1, rng);
}

Tensor embed_rgb(const ImagePlane& rgb, const ParamStore& params) {
  Tensor f = relu(conv(plane_to_tensor(rgb), params, "hmfa.embed_rgb.conv0", 1));
  f = relu(conv(f, params, "hmfa.embed_rgb.conv1", 1));
  return conv(f, params, "hmfa.embed_rgb.conv2", 1);
}

Tensor sta_block(const Tensor& f_q, const Tensor& f_pr, int i, const ParamStore& params,
                 const NetConfig& cfg, StaTrace* trace) {
  if (f_q.shape() != f_pr.shape())
    throw std::invalid_argument("sta_block: query and prior streams must be aligned");
  if (i < 1 || i > cfg.sta_blocks) throw std::invalid_argument("sta_block: bad block index");
  const std::string base = "hmfa.sta" + std::to_string(i);

  const int wm_conv = 2 * i - 2;  // 0 = identity on the raw prior feature
  Tensor kv_wm = wm_conv == 0 ? f_pr : conv_block(f_pr, wm_conv, params);
  if (trace) trace->push_back({i, false, 0, wm_conv});
  Tensor f_m = encoder(f_q, kv_wm, /*shift=*/0, params, cfg, base + ".wm");

  const int swm_conv = 2 * i - 1;
  Tensor kv_swm = conv_block(f_pr, swm_conv, params);
  if (trace) trace->push_back({i, true, cfg.window / 2, swm_conv});
  return encoder(f_m, kv_swm, /*shift=*/cfg.window / 2, params, cfg, base + ".swm");
}

Tensor forward(const Tensor& f_pr, const Tensor& f_r, const ParamStore& params,
               const NetConfig& cfg, StaTrace* trace) {
  if (!cfg.use_hmfa) return forward_concat_alternative(f_pr, f_r, params, cfg);
  Tensor f = f_r;
  for (int i = 1; i <= cfg.sta_blocks; ++i) f = sta_block(f, f_pr, i, params, cfg, trace);
  return f;
}

Tensor forward_concat_alternative(const Tensor& f_pr, const Tensor& f_r,
                                  const ParamStore& params, const NetConfig& cfg) {
  (void)cfg;
  Tensor x = concat_channels({f_pr, f_r});
  Tensor pooled = global_avg_pool(x);
  Tensor g = relu(fully_connected(pooled, params.get("hmfa.alt.gate.fc1.weight"),
                                  params.get("hmfa.alt.gate.fc1.bias")));
  g = sigmoid(fully_connected(g, params.get("hmfa.alt.gate.fc2.weight"),
                              params.get("hmfa.alt.gate.fc2.bias")));
  Tensor gated = x * g + x;
  return conv(gated, params, "hmfa.alt.proj", 0);
}

Tensor reshape_head(const Tensor& f_an, const Tensor& i_ori, const ParamStore& params) {
  Tensor residual = conv(f_an, params, "hmfa.head", 0);
  if (residual.shape() != i_ori.shape())
    throw std::invalid_argument("reshape_head: residual/image shape mismatch");
  return clamp01(residual + i_ori);
}

}  // namespace hmjnd::hmfa
