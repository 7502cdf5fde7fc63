#include "odetex/latent.hpp"

#include <stdexcept>

namespace odetex::latent {

using ad::Tensor;

LatentState sample_initial_state(Rng& rng, Mode mode, int h, int w) {
  const int c = state_channels(mode);
  return {Tensor::randn({c, h, w}, rng), mode};
}

ad::Tensor project_rgb(const LatentState& z) {
  if (z.mode != Mode::kRgb)
    throw std::invalid_argument("project_rgb: state is not in RGB mode");
  return slice_channels(z.data, 0, 3);
}

render::SvbrdfMaps extract_brdf_maps(const LatentState& z, bool isotropic) {
  if (z.mode != Mode::kSvbrdf)
    throw std::invalid_argument("extract_brdf_maps: state is not svBRDF mode");
  const float a0 = render::kAlphaMin;
  auto squash_rough = [a0](const Tensor& t) {
    return add_scalar(mul_scalar(sigmoid(t), 1.0f - a0), a0);
  };
  render::SvbrdfMaps maps;
  maps.diffuse = sigmoid(slice_channels(z.data, 0, 3));
  maps.specular = sigmoid(slice_channels(z.data, 3, 6));
  maps.rough_u = squash_rough(slice_channels(z.data, 6, 7));
  maps.rough_v = isotropic ? maps.rough_u
                           : squash_rough(slice_channels(z.data, 7, 8));
  // Gentle decode gain: a unit-variance initial latent should correspond to
  // moderate relief, not bump slopes that dominate the shading signal.
  maps.height = mul_scalar(slice_channels(z.data, 8, 9), 0.25f);
  return maps;
}

ad::Tensor project_svbrdf(const LatentState& z,
                          const render::ShadingGeometry& geom,
                          const ad::Tensor& intensity, bool isotropic) {
  return render::render(extract_brdf_maps(z, isotropic), geom, intensity);
}

}  // namespace odetex::latent
