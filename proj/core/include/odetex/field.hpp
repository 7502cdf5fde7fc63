#pragma once

#include <string>
#include <utility>
#include <vector>

#include "odetex/ode.hpp"
#include "odetex/tensor.hpp"

namespace odetex::field {

enum class Mode { kRgb, kSvbrdf };

struct FieldConfig {
  int levels = 3;
  std::vector<int> channels = {32, 64, 128};
  bool use_attention = true;
  int attn_heads = 4;
  int attn_head_dim = 8;
  int time_embed_dim = 64;  // 2 x channels[0]
  int state_channels = 12;
  int appearance_channels = 3;
  int norm_groups = 8;
  Mode mode = Mode::kRgb;

  void validate() const;
  int down_factor() const { return 1 << (levels - 1); }
};

FieldConfig rgb_preset();
FieldConfig svbrdf_preset();
// Small CPU-friendly configuration used by tests and regressions.
FieldConfig desk_rgb_preset();
FieldConfig desk_svbrdf_preset();

struct ConvLayer {
  ad::Tensor kernel;  // [Cout, Cin, k, k]
  ad::Tensor bias;    // [Cout]
};

struct AdaGnParams {
  ad::Tensor scale_w, scale_b;  // sigma(T) = 1 + W T + b
  ad::Tensor shift_w, shift_b;  // mu(T)    =     W T + b
};

struct ConvBlockParams {
  ConvLayer conv;
  AdaGnParams adagn;
  bool has_attention = false;
  ad::AttentionParams attn;
};

struct FieldParams {
  ConvLayer conv_in;
  std::vector<ConvBlockParams> enc;  // one per level
  std::vector<ConvLayer> down;       // levels-1
  std::vector<ConvLayer> up;         // levels-1
  std::vector<ConvBlockParams> dec;  // levels-1 (levels-2 .. 0)
  ConvLayer head1, head2;            // 1x1; head2 zero-initialized
  ad::Tensor time_w1, time_b1, time_w2, time_b2;
  ad::Tensor intensity;  // svBRDF mode only (positive scalar)

  // Deterministic (name, tensor) enumeration of every learnable leaf.
  std::vector<std::pair<std::string, ad::Tensor>> named() const;
};

// Freshly initialized parameters realize an identically-zero vector field
// (zero final 1x1 kernel and bias).
FieldParams init_params(const FieldConfig& cfg, Rng& rng);

// Raw interleaved sin/cos encoding of t at geometric frequencies starting
// from a 32-unit period.
ad::Tensor time_embed_raw(double t, int dim);
// Encoding pushed through the 2-layer swish MLP; returns a [D, 1] column.
ad::Tensor time_embed(const FieldParams& params, const FieldConfig& cfg,
                      double t);

// sigma(T) * GN(x) + mu(T)
ad::Tensor ada_gn(const ad::Tensor& x, const ad::Tensor& t_embed,
                  const AdaGnParams& p, int groups, float eps = 1e-5f);

ad::Tensor eval_field(const FieldParams& params, const FieldConfig& cfg,
                      const ad::Tensor& z, double t);

// Closed-form sup-norm bound on the field magnitude implied by the final
// layer: max_c sum_i |K(c,i)| + |b(c)| (the sigmoid input lies in [0,1]).
float field_bound(const FieldParams& params);

ode::Field make_field(const FieldParams& params, const FieldConfig& cfg);

}  // namespace odetex::field
