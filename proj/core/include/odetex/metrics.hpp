#pragma once

#include <map>
#include <string>
#include <vector>

#include "odetex/field.hpp"
#include "odetex/loss.hpp"
#include "odetex/render.hpp"
#include "odetex/rng.hpp"

namespace odetex::metrics {

struct RealismScores {
  double gram = 0.0;
  double swd = 0.0;
  std::vector<double> gram_per_frame, swd_per_frame;
};

// Frame-wise descriptor distances between a generated and a reference video
// of equal length.
RealismScores realism(const std::vector<ad::Tensor>& generated,
                      const std::vector<ad::Tensor>& reference,
                      const loss::FeatureBank& bank, int n_slices, Rng& rng);

// Mean turning angle (radians) of the video's path through descriptor space
// (final bank layer, spatially averaged). 0 for a perfectly straight path.
// Sets *degenerate when consecutive frames coincide or there are fewer than
// three usable frames.
double non_straightness(const std::vector<ad::Tensor>& frames,
                        const loss::FeatureBank& bank,
                        bool* degenerate = nullptr);

struct Lighting {
  std::string name;
  render::Vec3 pos;
};

// Training light plus three novel positions.
std::vector<Lighting> relight_lightings();

struct RelightResult {
  std::string lighting;
  std::vector<ad::Tensor> frames;
  double non_straightness = 0.0;
  bool degenerate = false;
  RealismScores realism;  // only when a reference was supplied
  bool has_realism = false;
};

// Generates one latent trajectory and renders it under each lighting.
std::vector<RelightResult> relight_eval(
    const field::FieldParams& params, const field::FieldConfig& fcfg, int h,
    int w, double t_warm, const std::vector<double>& sample_times, double tol,
    std::uint64_t seed, const loss::FeatureBank& bank, int n_slices,
    const std::map<std::string, std::vector<ad::Tensor>>* references = nullptr,
    bool isotropic = false);

}  // namespace odetex::metrics
