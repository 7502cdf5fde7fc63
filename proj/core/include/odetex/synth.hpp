#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "odetex/exemplar.hpp"
#include "odetex/render.hpp"

namespace odetex::io {

// Procedural desk-scale exemplars. Kinds:
//   growing-disk        RGB; wrapped disks whose radii ramp up over time
//   reaction-diffusion  RGB; Gray-Scott (F=0.037, k=0.06), periodic domain
//   rusting-ramp        svBRDF; known time-varying maps pushed through the
//                       renderer, so ground-truth relighting exists
struct SynthResult {
  Exemplar exemplar;
  // rusting-ramp only: the maps each frame was rendered from.
  std::vector<render::SvbrdfMaps> gt_maps;
  ad::Tensor gt_intensity;
};

SynthResult synth_exemplar(const std::string& kind, int size, int n_frames,
                           std::uint64_t seed);

}  // namespace odetex::io
