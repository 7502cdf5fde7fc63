#include "odetex/field.hpp"

#include <cmath>
#include <stdexcept>

namespace odetex::field {

using ad::Tensor;

void FieldConfig::validate() const {
  if (levels < 1) throw std::invalid_argument("FieldConfig: levels < 1");
  if (static_cast<int>(channels.size()) != levels)
    throw std::invalid_argument("FieldConfig: channels list length != levels");
  if (time_embed_dim != 2 * channels[0])
    throw std::invalid_argument(
        "FieldConfig: time_embed_dim must be 2 x channels[0]");
  if (time_embed_dim % 2 != 0)
    throw std::invalid_argument("FieldConfig: time_embed_dim must be even");
  for (int c : channels)
    if (c % norm_groups != 0)
      throw std::invalid_argument(
          "FieldConfig: channel count not divisible by norm_groups");
}

FieldConfig rgb_preset() {
  FieldConfig cfg;
  cfg.levels = 3;
  cfg.channels = {32, 64, 128};
  cfg.use_attention = true;
  cfg.attn_heads = 4;
  cfg.attn_head_dim = 8;
  cfg.time_embed_dim = 64;
  cfg.state_channels = 12;
  cfg.appearance_channels = 3;
  cfg.mode = Mode::kRgb;
  return cfg;
}

FieldConfig svbrdf_preset() {
  FieldConfig cfg;
  cfg.levels = 2;
  cfg.channels = {64, 128};
  cfg.use_attention = false;
  cfg.time_embed_dim = 128;
  cfg.state_channels = 18;
  cfg.appearance_channels = 9;
  cfg.mode = Mode::kSvbrdf;
  return cfg;
}

FieldConfig desk_rgb_preset() {
  FieldConfig cfg;
  cfg.levels = 2;
  cfg.channels = {16, 32};
  cfg.use_attention = true;
  cfg.attn_heads = 4;
  cfg.attn_head_dim = 8;
  cfg.time_embed_dim = 32;
  cfg.state_channels = 12;
  cfg.appearance_channels = 3;
  cfg.mode = Mode::kRgb;
  return cfg;
}

FieldConfig desk_svbrdf_preset() {
  FieldConfig cfg;
  cfg.levels = 2;
  cfg.channels = {16, 32};
  cfg.use_attention = false;
  cfg.time_embed_dim = 32;
  cfg.state_channels = 18;
  cfg.appearance_channels = 9;
  cfg.mode = Mode::kSvbrdf;
  return cfg;
}

namespace {

Tensor randn_param(ad::Shape shape, float std, Rng& rng) {
  std::vector<float> v(ad::numel(shape));
  for (auto& x : v) x = static_cast<float>(rng.normal()) * std;
  return Tensor::param(std::move(shape), std::move(v));
}

Tensor zero_param(ad::Shape shape) {
  return Tensor::param(shape, std::vector<float>(ad::numel(shape), 0.0f));
}

ConvLayer init_conv(int cin, int cout, int k, Rng& rng) {
  const float std = std::sqrt(2.0f / static_cast<float>(cin * k * k));
  return {randn_param({cout, cin, k, k}, std, rng), zero_param({cout})};
}

AdaGnParams init_adagn(int c, int d) {
  // Zero projections: identity scaling and zero shift at initialization.
  return {zero_param({c, d}), zero_param({c}), zero_param({c, d}),
          zero_param({c})};
}

ConvBlockParams init_block(int cin, int cout, int d, bool attention, int heads,
                           int head_dim, Rng& rng) {
  ConvBlockParams b;
  b.conv = init_conv(cin, cout, 3, rng);
  b.adagn = init_adagn(cout, d);
  b.has_attention = attention;
  if (attention) {
    const int hd = heads * head_dim;
    const float std = 1.0f / std::sqrt(static_cast<float>(cout));
    b.attn.wq = randn_param({hd, cout}, std, rng);
    b.attn.wk = randn_param({hd, cout}, std, rng);
    b.attn.wv = randn_param({hd, cout}, std, rng);
    b.attn.wo = randn_param({cout, hd},
                            1.0f / std::sqrt(static_cast<float>(hd)), rng);
    b.attn.bo = zero_param({cout});
  }
  return b;
}

void add_conv(std::vector<std::pair<std::string, Tensor>>& out,
              const std::string& name, const ConvLayer& c) {
  out.emplace_back(name + ".kernel", c.kernel);
  out.emplace_back(name + ".bias", c.bias);
}

void add_block(std::vector<std::pair<std::string, Tensor>>& out,
               const std::string& name, const ConvBlockParams& b) {
  add_conv(out, name + ".conv", b.conv);
  out.emplace_back(name + ".adagn.scale_w", b.adagn.scale_w);
  out.emplace_back(name + ".adagn.scale_b", b.adagn.scale_b);
  out.emplace_back(name + ".adagn.shift_w", b.adagn.shift_w);
  out.emplace_back(name + ".adagn.shift_b", b.adagn.shift_b);
  if (b.has_attention) {
    out.emplace_back(name + ".attn.wq", b.attn.wq);
    out.emplace_back(name + ".attn.wk", b.attn.wk);
    out.emplace_back(name + ".attn.wv", b.attn.wv);
    out.emplace_back(name + ".attn.wo", b.attn.wo);
    out.emplace_back(name + ".attn.bo", b.attn.bo);
  }
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> FieldParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  add_conv(out, "conv_in", conv_in);
  for (std::size_t l = 0; l < enc.size(); ++l)
    add_block(out, "enc" + std::to_string(l), enc[l]);
  for (std::size_t l = 0; l < down.size(); ++l)
    add_conv(out, "down" + std::to_string(l), down[l]);
  for (std::size_t l = 0; l < up.size(); ++l)
    add_conv(out, "up" + std::to_string(l), up[l]);
  for (std::size_t l = 0; l < dec.size(); ++l)
    add_block(out, "dec" + std::to_string(l), dec[l]);
  add_conv(out, "head1", head1);
  add_conv(out, "head2", head2);
  out.emplace_back("time.w1", time_w1);
  out.emplace_back("time.b1", time_b1);
  out.emplace_back("time.w2", time_w2);
  out.emplace_back("time.b2", time_b2);
  if (intensity.defined()) out.emplace_back("intensity", intensity);
  return out;
}

FieldParams init_params(const FieldConfig& cfg, Rng& rng) {
  cfg.validate();
  FieldParams p;
  const int d = cfg.time_embed_dim;
  const auto& ch = cfg.channels;
  p.conv_in = init_conv(cfg.state_channels, ch[0], 3, rng);
  for (int l = 0; l < cfg.levels; ++l) {
    const bool attn = cfg.use_attention && l == cfg.levels - 1;
    p.enc.push_back(init_block(ch[l], ch[l], d, attn, cfg.attn_heads,
                               cfg.attn_head_dim, rng));
  }
  for (int l = 0; l + 1 < cfg.levels; ++l) {
    p.down.push_back(init_conv(ch[l], ch[l + 1], 3, rng));
    p.up.push_back(init_conv(ch[l + 1], ch[l], 3, rng));
    p.dec.push_back(init_block(2 * ch[l], ch[l], d, false, 0, 0, rng));
  }
  p.head1 = init_conv(ch[0], ch[0], 1, rng);
  p.head2 = {zero_param({cfg.state_channels, ch[0], 1, 1}),
             zero_param({cfg.state_channels})};
  const float tstd = 1.0f / std::sqrt(static_cast<float>(d));
  p.time_w1 = randn_param({d, d}, tstd, rng);
  p.time_b1 = zero_param({d});
  p.time_w2 = randn_param({d, d}, tstd, rng);
  p.time_b2 = zero_param({d});
  if (cfg.mode == Mode::kSvbrdf)
    p.intensity = Tensor::param({}, {3.0f});
  return p;
}

Tensor time_embed_raw(double t, int dim) {
  if (dim % 2 != 0)
    throw std::invalid_argument("time_embed_raw: dim must be even");
  std::vector<float> enc(dim);
  // Geometric frequencies starting at a 32-unit period so the embedding is
  // non-repeating across the whole supervised time range.
  double freq = M_PI / 16.0;
  for (int k = 0; k < dim / 2; ++k) {
    enc[2 * k] = static_cast<float>(std::sin(freq * t));
    enc[2 * k + 1] = static_cast<float>(std::cos(freq * t));
    freq *= 2.0;
  }
  return Tensor::constant({dim, 1}, std::move(enc));
}

namespace {

Tensor linear(const Tensor& w, const Tensor& b, const Tensor& x_col) {
  Tensor y = matmul(w, x_col);  // [D, 1]
  const int dout = w.shape()[0];
  return scale_shift_channels(
      y, Tensor::constant({dout}, std::vector<float>(dout, 1.0f)), b);
}

}  // namespace

Tensor time_embed(const FieldParams& params, const FieldConfig& cfg, double t) {
  Tensor enc = time_embed_raw(t, cfg.time_embed_dim);
  Tensor h = swish(linear(params.time_w1, params.time_b1, enc));
  return linear(params.time_w2, params.time_b2, h);
}

Tensor ada_gn(const Tensor& x, const Tensor& t_embed, const AdaGnParams& p,
              int groups, float eps) {
  const int c = x.shape()[0];
  Tensor sigma = add_scalar(
      reshape(linear(p.scale_w, p.scale_b, t_embed), {c}), 1.0f);
  Tensor mu = reshape(linear(p.shift_w, p.shift_b, t_embed), {c});
  return scale_shift_channels(group_norm(x, groups, eps), sigma, mu);
}

namespace {

// `residual` carries the identity path when in/out widths match; without it
// the stacked normalizations erase the state's amplitude and the net cannot
// express contractive fields like f(z) = -c z.
Tensor conv_block(const Tensor& x, const ConvBlockParams& b,
                  const Tensor& t_embed, const FieldConfig& cfg,
                  const Tensor* residual) {
  Tensor h = conv2d_circular(x, b.conv.kernel, b.conv.bias);
  // Wide eps: near-constant states (the warm-up target) would otherwise be
  // normalized into amplified float noise.
  h = ada_gn(h, t_embed, b.adagn, cfg.norm_groups, 1e-2f);
  h = swish(h);
  if (b.has_attention)
    h = self_attention(h, cfg.attn_heads, cfg.attn_head_dim, b.attn);
  return residual ? add(*residual, h) : h;
}

}  // namespace

Tensor eval_field(const FieldParams& params, const FieldConfig& cfg,
                  const Tensor& z, double t) {
  if (z.shape().size() != 3 || z.shape()[0] != cfg.state_channels)
    throw std::invalid_argument("eval_field: state must be [" +
                                std::to_string(cfg.state_channels) + ",H,W]");
  const int h = z.shape()[1], w = z.shape()[2];
  const int f = cfg.down_factor();
  if (h % f != 0 || w % f != 0)
    throw std::invalid_argument(
        "eval_field: H and W must be divisible by " + std::to_string(f) +
        " for a " + std::to_string(cfg.levels) +
        "-level UNet; resize the state grid");

  Tensor t_embed = time_embed(params, cfg, t);
  Tensor x = conv2d_circular(z, params.conv_in.kernel, params.conv_in.bias);
  std::vector<Tensor> skips;
  for (int l = 0; l < cfg.levels; ++l) {
    x = conv_block(x, params.enc[l], t_embed, cfg, &x);
    if (l + 1 < cfg.levels) {
      skips.push_back(x);
      x = downsample2x(x);
      x = conv2d_circular(x, params.down[l].kernel, params.down[l].bias);
    }
  }
  for (int l = cfg.levels - 2; l >= 0; --l) {
    x = upsample2x(x);
    x = conv2d_circular(x, params.up[l].kernel, params.up[l].bias);
    Tensor res = x;
    x = concat_channels(x, skips[l]);
    x = conv_block(x, params.dec[l], t_embed, cfg, &res);
  }
  x = conv2d_circular(x, params.head1.kernel, params.head1.bias);
  x = sigmoid(x);
  return conv2d_circular(x, params.head2.kernel, params.head2.bias);
}

float field_bound(const FieldParams& params) {
  const auto& k = params.head2.kernel.values();
  const auto& b = params.head2.bias.values();
  const int cout = params.head2.kernel.shape()[0];
  const int cin = params.head2.kernel.shape()[1];
  float bound = 0.0f;
  for (int c = 0; c < cout; ++c) {
    float s = std::abs(b[c]);
    for (int i = 0; i < cin; ++i)
      s += std::abs(k[static_cast<std::size_t>(c) * cin + i]);
    bound = std::max(bound, s);
  }
  return bound;
}

ode::Field make_field(const FieldParams& params, const FieldConfig& cfg) {
  return [&params, cfg](const Tensor& z, double t) {
    return eval_field(params, cfg, z, t);
  };
}

}  // namespace odetex::field
