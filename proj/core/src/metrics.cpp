#include "odetex/metrics.hpp"

#include <cmath>
#include <stdexcept>

#include "odetex/latent.hpp"
#include "odetex/ode.hpp"

namespace odetex::metrics {

using ad::Tensor;

RealismScores realism(const std::vector<Tensor>& generated,
                      const std::vector<Tensor>& reference,
                      const loss::FeatureBank& bank, int n_slices, Rng& rng) {
  if (generated.size() != reference.size() || generated.empty())
    throw std::invalid_argument("realism: need equal, non-zero frame counts");
  ad::NoGradGuard ng;
  RealismScores out;
  for (std::size_t i = 0; i < generated.size(); ++i) {
    auto fa = loss::extract_features(generated[i], bank);
    auto fb = loss::extract_features(reference[i], bank);
    out.gram_per_frame.push_back(loss::gram_loss(fa, fb).item());
    out.swd_per_frame.push_back(loss::swd(fa, fb, n_slices, rng).item());
    out.gram += out.gram_per_frame.back();
    out.swd += out.swd_per_frame.back();
  }
  out.gram /= generated.size();
  out.swd /= generated.size();
  return out;
}

namespace {

// Final-layer features, spatially averaged -> one vector per frame.
std::vector<double> descriptor(const Tensor& frame,
                               const loss::FeatureBank& bank) {
  auto feats = loss::extract_features(frame, bank);
  const Tensor& f = feats.back();
  const int c = f.shape()[0];
  const std::size_t plane =
      static_cast<std::size_t>(f.shape()[1]) * f.shape()[2];
  std::vector<double> v(c, 0.0);
  for (int ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < plane; ++i) v[ch] += f.values()[ch * plane + i];
    v[ch] /= static_cast<double>(plane);
  }
  return v;
}

}  // namespace

double non_straightness(const std::vector<Tensor>& frames,
                        const loss::FeatureBank& bank, bool* degenerate) {
  if (degenerate) *degenerate = false;
  if (frames.size() < 3) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  ad::NoGradGuard ng;
  std::vector<std::vector<double>> vs;
  for (const auto& f : frames) vs.push_back(descriptor(f, bank));
  const std::size_t dim = vs[0].size();
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i + 2 < vs.size(); ++i) {
    double na = 0.0, nb = 0.0, dot = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double a = vs[i + 1][j] - vs[i][j];
      const double b = vs[i + 2][j] - vs[i + 1][j];
      na += a * a;
      nb += b * b;
      dot += a * b;
    }
    if (na < 1e-24 || nb < 1e-24) {
      if (degenerate) *degenerate = true;
      continue;
    }
    double c = dot / std::sqrt(na * nb);
    c = std::min(1.0, std::max(-1.0, c));
    sum += std::acos(c);
    count += 1;
  }
  if (count == 0) {
    if (degenerate) *degenerate = true;
    return 0.0;
  }
  return sum / count;
}

std::vector<Lighting> relight_lightings() {
  return {{"center", {0.0, 0.0, 1.0}},
          {"top", {0.0, -0.5, 1.0}},
          {"left", {-0.5, 0.0, 1.0}},
          {"bottom_right", {0.35, 0.35, 1.0}}};
}

std::vector<RelightResult> relight_eval(
    const field::FieldParams& params, const field::FieldConfig& fcfg, int h,
    int w, double t_warm, const std::vector<double>& sample_times, double tol,
    std::uint64_t seed, const loss::FeatureBank& bank, int n_slices,
    const std::map<std::string, std::vector<Tensor>>* references,
    bool isotropic) {
  if (fcfg.mode != field::Mode::kSvbrdf)
    throw std::invalid_argument("relight_eval: requires an svBRDF model");
  ad::NoGradGuard ng;
  Rng rng(seed);
  latent::LatentState z0 =
      latent::sample_initial_state(rng, fcfg.mode, h, w);
  const ode::Field field = field::make_field(params, fcfg);
  ode::Trajectory traj =
      ode::solve_dense(field, z0.data, t_warm, sample_times, tol);

  std::vector<RelightResult> out;
  for (const Lighting& lit : relight_lightings()) {
    render::ShadingGeometry geom = render::shading_geometry(h, w, render::kDefaultFov, lit.pos);
    RelightResult r;
    r.lighting = lit.name;
    for (const Tensor& z : traj.states)
      r.frames.push_back(latent::project_svbrdf({z, fcfg.mode}, geom,
                                                params.intensity, isotropic));
    r.non_straightness = non_straightness(r.frames, bank, &r.degenerate);
    if (references) {
      auto it = references->find(lit.name);
      if (it != references->end()) {
        r.realism = realism(r.frames, it->second, bank, n_slices, rng);
        r.has_realism = true;
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace odetex::metrics
