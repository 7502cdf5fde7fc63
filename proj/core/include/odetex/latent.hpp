#pragma once

#include "odetex/field.hpp"
#include "odetex/render.hpp"
#include "odetex/rng.hpp"
#include "odetex/tensor.hpp"

namespace odetex::latent {

using field::Mode;

inline int appearance_channels(Mode m) { return m == Mode::kRgb ? 3 : 9; }
// 9 augmented channels on top of the appearance channels.
inline int state_channels(Mode m) { return appearance_channels(m) + 9; }

struct LatentState {
  ad::Tensor data;  // [C,H,W]
  Mode mode = Mode::kRgb;

  int height() const { return data.shape()[1]; }
  int width() const { return data.shape()[2]; }
};

LatentState sample_initial_state(Rng& rng, Mode mode, int h, int w);

// First three channels, unchanged (fixed extraction projection).
ad::Tensor project_rgb(const LatentState& z);

// Channels [0..8] split into diffuse/specular/roughness/height with range
// squashing; the isotropic toggle forces rough_v := rough_u.
render::SvbrdfMaps extract_brdf_maps(const LatentState& z,
                                     bool isotropic = false);

ad::Tensor project_svbrdf(const LatentState& z,
                          const render::ShadingGeometry& geom,
                          const ad::Tensor& intensity, bool isotropic = false);

}  // namespace odetex::latent
