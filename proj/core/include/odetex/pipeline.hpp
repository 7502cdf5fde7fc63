#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "odetex/exemplar.hpp"
#include "odetex/field.hpp"
#include "odetex/latent.hpp"

namespace odetex::io {

// Directory of lexicographically ordered PNG frames, center-cropped square
// and resized. Frame times are uniform over [t_first, t_last] unless a
// manifest.txt ("<filename> <time>" per line) supplies them. n_frames == 0
// keeps every frame; otherwise the frames are subsampled uniformly.
Exemplar load_exemplar(const std::string& dir, field::Mode mode,
                       int target_size, int n_frames = 0, double t_first = 0.0,
                       double t_last = 5.0);

// Writes an exemplar's frames as frame_%04d.png (used by `synth` and tests).
void save_frames(const std::string& dir, const std::vector<ad::Tensor>& frames);

struct GenerateOptions {
  int h = 128, w = 128;
  int n_frames = 20;
  double t_warm = -1.0, t_first = 0.0, t_last = 5.0;
  double tol = 1e-2;
  std::uint64_t seed = 0;
  bool isotropic = false;
};

// Warm a fresh noise state into the texture and sample its evolution.
// Returns tone-domain frames; svBRDF states are rendered under the training
// light. `states` optionally receives the raw latent states.
std::vector<ad::Tensor> generate_frames(
    const field::FieldParams& params, const field::FieldConfig& fcfg,
    const GenerateOptions& opts,
    std::vector<latent::LatentState>* states = nullptr);

// generate_frames + numbered PNGs; svBRDF mode also writes the float maps
// (tensor archive `maps.bin`) and 8-bit per-map previews.
void generate(const field::FieldParams& params, const field::FieldConfig& fcfg,
              const GenerateOptions& opts, const std::string& out_dir);

// Drives a foreign image with learned RGB dynamics: warm up from noise,
// swap the appearance channels for the statistically matched input, solve
// forward, and map outputs back to the input's channel statistics.
std::vector<ad::Tensor> transfer(const field::FieldParams& params,
                                 const field::FieldConfig& fcfg,
                                 const ad::Tensor& new_image,
                                 const GenerateOptions& opts);

}  // namespace odetex::io
