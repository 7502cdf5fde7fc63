#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "odetex/latent.hpp"
#include "odetex/render.hpp"
#include "odetex/rng.hpp"
#include "odetex/tensor.hpp"

namespace odetex::loss {

// Frozen multiscale conv pyramid used as the perceptual descriptor space.
// Weights are plain constants and never receive adjoints.
struct FeatureBank {
  struct Layer {
    ad::Tensor kernel;  // [Cout, Cin, 3, 3]
    ad::Tensor bias;    // [Cout]
  };
  std::vector<Layer> layers;
  std::uint64_t seed = 0;

  // Random-weight bank (default channels 16/32/64/128, one 2x reduction per
  // layer where the resolution allows it).
  static FeatureBank builtin(std::uint64_t seed = 7,
                             const std::vector<int>& channels = {16, 32, 64,
                                                                 128});
  // Externally trained weights, entries named layer<i>.kernel / layer<i>.bias.
  static FeatureBank from_tensors(
      const std::vector<std::pair<std::string, ad::Tensor>>& entries);

  int min_input_size() const { return 4; }
};

// One activation map per layer; spatial size halves after each layer while
// both dimensions stay even.
std::vector<ad::Tensor> extract_features(const ad::Tensor& img,
                                         const FeatureBank& bank);

// Sliced Wasserstein-2^2 between per-layer feature point sets. Each entry is
// a [C, m] point matrix or a [C, h, w] map; pairs are truncated to the
// smaller point count. Fresh random slice directions per call.
ad::Tensor swd(const std::vector<ad::Tensor>& features_a,
               const std::vector<ad::Tensor>& features_b, int n_slices,
               Rng& rng);

ad::Tensor gram_loss(const std::vector<ad::Tensor>& features_a,
                     const std::vector<ad::Tensor>& features_b);

struct CropWindow {
  int y0 = 0, x0 = 0, h = 0, w = 0;
};

// Renders the crop-sized state under its window's light/view sub-maps and
// accumulates the global statistics distance against n_crops random windows
// of the target frame. The ODE is solved at crop size only; this loss never
// solves, it consumes the already-solved crop state.
ad::Tensor crop_loss(const latent::LatentState& z_crop, const CropWindow& window,
                     const ad::Tensor& target_frame,
                     const render::ShadingGeometry& geom_full,
                     const ad::Tensor& intensity, const FeatureBank& bank,
                     Rng& rng, int n_crops, int n_slices,
                     bool isotropic = false);

// One-pixel-crop stationarity loss: render under spatially permuted
// light/view maps and match the identically permuted target.
ad::Tensor shuffle_init_loss(const latent::LatentState& z,
                             const ad::Tensor& target,
                             const render::ShadingGeometry& geom,
                             const ad::Tensor& intensity, Rng& rng,
                             int n_shuffles, bool isotropic = false);

// Quadratic penalty on appearance values outside their allowed range:
// [0,1] for RGB appearance channels, |height| <= h_max for svBRDF.
ad::Tensor range_penalty(const latent::LatentState& z, float lambda = 0.1f,
                         float h_max = 3.0f);

}  // namespace odetex::loss
