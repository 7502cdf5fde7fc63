#include "odetex/render.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace odetex::render {

using ad::Tensor;

namespace {

// Pixel index -> plane coordinate; corner pixels on the long axis map to
// +/- tan(fov/2) exactly.
double pixel_coord(int i, int n, int n_long, double half_long) {
  if (n_long <= 1 || n <= 1) return 0.0;
  const double half = half_long * static_cast<double>(n - 1) / (n_long - 1);
  return (2.0 * i / (n - 1) - 1.0) * half;
}

void check_finite_term(const Tensor& t, const char* term) {
  for (float v : t.values())
    if (!std::isfinite(v))
      throw std::runtime_error(std::string("render: non-finite value in ") +
                               term);
}

Tensor channel(const Tensor& v3, int c) { return slice_channels(v3, c, c + 1); }

// dot of two [3,H,W] vector fields -> [1,H,W]
Tensor dot3(const Tensor& a, const Tensor& b) { return sum_channels(mul(a, b)); }

Tensor normalize3(const Tensor& v) {
  Tensor n2 = clamp_min(dot3(v, v), 1e-12f);
  Tensor inv = pow_scalar(n2, -0.5f);
  return bcast_mul(v, inv);
}

Tensor vec3_map(const Tensor& x, const Tensor& y, const Tensor& z) {
  return concat_channels(concat_channels(x, y), z);
}

}  // namespace

ShadingGeometry shading_geometry(int h, int w, double fov_deg,
                                 const Vec3& light_pos) {
  if (h < 1 || w < 1)
    throw std::invalid_argument("shading_geometry: H, W must be >= 1");
  if (!(light_pos[2] > 0.0))
    throw std::invalid_argument(
        "shading_geometry: light must be above the sample plane (z > 0)");
  const int n_long = std::max(h, w);
  const double half_long = std::tan(0.5 * fov_deg * M_PI / 180.0);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<float> l(3 * plane), v(3 * plane), d2(plane);
  for (int y = 0; y < h; ++y) {
    const double py = pixel_coord(y, h, n_long, half_long);
    for (int x = 0; x < w; ++x) {
      const double px = pixel_coord(x, w, n_long, half_long);
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      // view: surface point (px, py, 0) -> camera (0, 0, 1)
      double vx = -px, vy = -py, vz = 1.0;
      const double vn = std::sqrt(vx * vx + vy * vy + vz * vz);
      v[i] = static_cast<float>(vx / vn);
      v[plane + i] = static_cast<float>(vy / vn);
      v[2 * plane + i] = static_cast<float>(vz / vn);
      double lx = light_pos[0] - px, ly = light_pos[1] - py, lz = light_pos[2];
      const double dist2 = lx * lx + ly * ly + lz * lz;
      const double ln = std::sqrt(dist2);
      l[i] = static_cast<float>(lx / ln);
      l[plane + i] = static_cast<float>(ly / ln);
      l[2 * plane + i] = static_cast<float>(lz / ln);
      d2[i] = static_cast<float>(dist2);
    }
  }
  ShadingGeometry g;
  g.h = h;
  g.w = w;
  g.fov_deg = fov_deg;
  g.light_pos = light_pos;
  g.light_dirs = Tensor::constant({3, h, w}, std::move(l));
  g.view_dirs = Tensor::constant({3, h, w}, std::move(v));
  g.light_dist_sq = Tensor::constant({1, h, w}, std::move(d2));
  return g;
}

ShadingGeometry crop_geometry(const ShadingGeometry& g, int y0, int x0,
                              int crop_h, int crop_w) {
  if (y0 < 0 || x0 < 0 || y0 + crop_h > g.h || x0 + crop_w > g.w)
    throw std::invalid_argument("crop_geometry: window out of bounds");
  std::vector<int> idx(static_cast<std::size_t>(crop_h) * crop_w);
  for (int y = 0; y < crop_h; ++y)
    for (int x = 0; x < crop_w; ++x)
      idx[y * crop_w + x] = (y0 + y) * g.w + (x0 + x);
  return gather_geometry(g, idx, crop_h, crop_w);
}

ShadingGeometry gather_geometry(const ShadingGeometry& g,
                                const std::vector<int>& idx, int out_h,
                                int out_w) {
  ShadingGeometry out;
  out.h = out_h;
  out.w = out_w;
  out.fov_deg = g.fov_deg;
  out.light_pos = g.light_pos;
  out.light_dirs = gather_spatial(g.light_dirs, idx, out_h, out_w).detach();
  out.view_dirs = gather_spatial(g.view_dirs, idx, out_h, out_w).detach();
  out.light_dist_sq =
      gather_spatial(g.light_dist_sq, idx, out_h, out_w).detach();
  return out;
}

double ggx_ndf(const Vec3& h, double au, double av) {
  if (h[2] <= 0.0) return 0.0;
  const double a = h[0] / au, b = h[1] / av;
  const double t = a * a + b * b + h[2] * h[2];
  return 1.0 / (M_PI * au * av * t * t);
}

double smith_lambda(const Vec3& w, double au, double av) {
  const double wz = std::max(w[2], 1e-6);
  const double t = (au * au * w[0] * w[0] + av * av * w[1] * w[1]) / (wz * wz);
  return 0.5 * (-1.0 + std::sqrt(1.0 + t));
}

double smith_g1(const Vec3& w, double au, double av) {
  return 1.0 / (1.0 + smith_lambda(w, au, av));
}

double smith_g(const Vec3& l, const Vec3& v, double au, double av) {
  return smith_g1(l, au, av) * smith_g1(v, au, av);
}

Vec3 fresnel_schlick(double cos_theta, const Vec3& f0) {
  const double c = std::min(std::max(cos_theta, 0.0), 1.0);
  const double m = std::pow(1.0 - c, 5.0);
  return {f0[0] + (1.0 - f0[0]) * m, f0[1] + (1.0 - f0[1]) * m,
          f0[2] + (1.0 - f0[2]) * m};
}

Tensor height_to_normal(const Tensor& height, float bump_scale) {
  if (height.shape().size() != 3 || height.shape()[0] != 1)
    throw std::invalid_argument("height_to_normal: expected [1,H,W]");
  Tensor dhdx =
      mul_scalar(sub(roll2d(height, 0, -1), roll2d(height, 0, 1)), 0.5f);
  Tensor dhdy =
      mul_scalar(sub(roll2d(height, -1, 0), roll2d(height, 1, 0)), 0.5f);
  Tensor nx = mul_scalar(dhdx, -bump_scale);
  Tensor ny = mul_scalar(dhdy, -bump_scale);
  Tensor nz = Tensor::full(height.shape(), 1.0f);
  return normalize3(vec3_map(nx, ny, nz));
}

Tensor tonemap(const Tensor& linear) {
  return pow_scalar(clamp(linear, 0.0f, 1.0f),
                    static_cast<float>(1.0 / kGamma));
}

Tensor render(const SvbrdfMaps& maps, const ShadingGeometry& geom,
              const ad::Tensor& intensity, float bump_scale,
              bool apply_tonemap) {
  const int h = geom.h, w = geom.w;
  const ad::Shape map_shape{1, h, w};
  if (maps.diffuse.shape() != ad::Shape{3, h, w} ||
      maps.specular.shape() != ad::Shape{3, h, w} ||
      maps.rough_u.shape() != map_shape || maps.rough_v.shape() != map_shape ||
      maps.height.shape() != map_shape)
    throw std::invalid_argument("render: map shapes do not match geometry " +
                                ad::shape_str({3, h, w}));
  if (!(intensity.size() == 1))
    throw std::invalid_argument("render: intensity must be scalar");
  if (!(intensity.values()[0] > 0.0f))
    throw std::invalid_argument("render: intensity must be positive");

  Tensor n = height_to_normal(maps.height, bump_scale);
  const Tensor& l = geom.light_dirs;
  const Tensor& v = geom.view_dirs;

  // Tangent frame: t_u = normalize(e_x - n * n_x), t_v = n x t_u.
  Tensor nx = channel(n, 0), ny = channel(n, 1), nz = channel(n, 2);
  Tensor tu = normalize3(vec3_map(add_scalar(neg(mul(nx, nx)), 1.0f),
                                  neg(mul(nx, ny)), neg(mul(nx, nz))));
  Tensor tux = channel(tu, 0), tuy = channel(tu, 1), tuz = channel(tu, 2);
  Tensor tv = vec3_map(sub(mul(ny, tuz), mul(nz, tuy)),
                       sub(mul(nz, tux), mul(nx, tuz)),
                       sub(mul(nx, tuy), mul(ny, tux)));

  Tensor hv = normalize3(add(l, v));

  auto to_local = [&](const Tensor& dir) {
    return vec3_map(dot3(dir, tu), dot3(dir, tv), dot3(dir, n));
  };
  Tensor h_loc = to_local(hv);
  Tensor l_loc = to_local(l);
  Tensor v_loc = to_local(v);

  Tensor au = maps.rough_u, av = maps.rough_v;

  // Anisotropic GGX NDF.
  Tensor hx = channel(h_loc, 0), hy = channel(h_loc, 1), hz = channel(h_loc, 2);
  Tensor term = add(add(mul(div(hx, au), div(hx, au)),
                        mul(div(hy, av), div(hy, av))),
                    mul(hz, hz));
  Tensor ndf = div(Tensor::full(map_shape, static_cast<float>(1.0 / M_PI)),
                   mul(mul(au, av), mul(term, term)));
  check_finite_term(ndf, "GGX NDF");

  // Separable Smith masking-shadowing.
  auto g1 = [&](const Tensor& w_loc) {
    Tensor wx = channel(w_loc, 0), wy = channel(w_loc, 1);
    Tensor wz = clamp_min(channel(w_loc, 2), 1e-6f);
    Tensor t = div(add(mul(mul(au, au), mul(wx, wx)),
                       mul(mul(av, av), mul(wy, wy))),
                   mul(wz, wz));
    Tensor lam = mul_scalar(add_scalar(sqrt_t(add_scalar(t, 1.0f)), -1.0f),
                            0.5f);
    return div(Tensor::full(map_shape, 1.0f), add_scalar(lam, 1.0f));
  };
  Tensor gvis = mul(g1(l_loc), g1(v_loc));
  check_finite_term(gvis, "Smith G");

  // Schlick Fresnel at the half-vector.
  Tensor cos_hv = clamp(dot3(hv, v), 0.0f, 1.0f);
  Tensor m5 = pow_scalar(add_scalar(neg(cos_hv), 1.0f), 5.0f);
  Tensor fres = add(maps.specular,
                    bcast_mul(add_scalar(neg(maps.specular), 1.0f), m5));
  check_finite_term(fres, "Fresnel");

  Tensor ndl = dot3(n, l);
  Tensor ndv = dot3(n, v);
  Tensor denom = mul_scalar(mul(clamp_min(ndl, 1e-4f), clamp_min(ndv, 1e-4f)),
                            4.0f);
  Tensor spec_scalar = div(mul(ndf, gvis), denom);
  Tensor f = add(mul_scalar(maps.diffuse, static_cast<float>(1.0 / M_PI)),
                 bcast_mul(fres, spec_scalar));

  Tensor irradiance = div(relu(ndl), geom.light_dist_sq);
  Tensor radiance = scale_by(bcast_mul(f, irradiance), intensity);
  check_finite_term(radiance, "radiance");

  return apply_tonemap ? tonemap(radiance) : radiance;
}

}  // namespace odetex::render
