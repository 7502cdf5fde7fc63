#pragma once

#include <array>

#include "odetex/tensor.hpp"

namespace odetex::render {

using Vec3 = std::array<double, 3>;

constexpr float kAlphaMin = 0.05f;  // GGX roughness floor
constexpr double kGamma = 2.2;

struct SvbrdfMaps {
  ad::Tensor diffuse;   // [3,H,W] in [0,1]
  ad::Tensor specular;  // [3,H,W] in [0,1]
  ad::Tensor rough_u;   // [1,H,W] in [alpha_min, 1]
  ad::Tensor rough_v;   // [1,H,W] in [alpha_min, 1]
  ad::Tensor height;    // [1,H,W] unbounded
};

// Default field of view for the canonical capture setup. Narrow enough that
// shading varies gently across a flat sample (a uniform material renders
// nearly uniformly), wide enough that novel lights remain distinctive.
inline constexpr double kDefaultFov = 20.0;

// Camera pinhole at (0,0,1) looking at the sample plane z=0.
struct ShadingGeometry {
  int h = 0, w = 0;
  ad::Tensor light_dirs;     // [3,H,W] unit, surface point -> light
  ad::Tensor view_dirs;      // [3,H,W] unit, surface point -> camera
  ad::Tensor light_dist_sq;  // [1,H,W]
  double fov_deg = kDefaultFov;
  Vec3 light_pos{0.0, 0.0, 1.0};
};

ShadingGeometry shading_geometry(int h, int w, double fov_deg,
                                 const Vec3& light_pos);

// Geometry restricted to a window (same light/view maps, sliced).
ShadingGeometry crop_geometry(const ShadingGeometry& g, int y0, int x0,
                              int crop_h, int crop_w);
// Geometry with its pixel sites permuted/gathered (for shuffle losses);
// idx[i] is the flat source site of output site i.
ShadingGeometry gather_geometry(const ShadingGeometry& g,
                                const std::vector<int>& idx, int out_h,
                                int out_w);

// Scalar reference lobes (tangent-frame directions).
double ggx_ndf(const Vec3& h_local, double alpha_u, double alpha_v);
double smith_lambda(const Vec3& w_local, double alpha_u, double alpha_v);
double smith_g1(const Vec3& w_local, double alpha_u, double alpha_v);
double smith_g(const Vec3& l_local, const Vec3& v_local, double alpha_u,
               double alpha_v);
Vec3 fresnel_schlick(double cos_theta, const Vec3& f0);

// Central-difference shading normals with circular wrap; unit length.
ad::Tensor height_to_normal(const ad::Tensor& height, float bump_scale = 1.0f);

// Clamp to [0,1] then gamma 1/2.2; gradient is zero outside [0,1].
ad::Tensor tonemap(const ad::Tensor& linear);

// Cook-Torrance specular (anisotropic GGX + separable Smith + Schlick) plus
// a Lambertian diffuse lobe, point light with inverse-square falloff.
// intensity is a positive scalar tensor. Returns the tone-mapped image.
ad::Tensor render(const SvbrdfMaps& maps, const ShadingGeometry& geom,
                  const ad::Tensor& intensity, float bump_scale = 1.0f,
                  bool apply_tonemap = true);

}  // namespace odetex::render
