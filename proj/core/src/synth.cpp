#include "odetex/synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "odetex/rng.hpp"

namespace odetex::io {

using ad::Tensor;

namespace {

std::vector<double> uniform_times(int n, double t0, double t1) {
  std::vector<double> t(n);
  for (int i = 0; i < n; ++i)
    t[i] = n == 1 ? t0 : t0 + (t1 - t0) * i / (n - 1);
  return t;
}

// Toroidal distance between pixel sites.
double wrap_dist(double ay, double ax, double by, double bx, int size) {
  double dy = std::abs(ay - by), dx = std::abs(ax - bx);
  dy = std::min(dy, size - dy);
  dx = std::min(dx, size - dx);
  return std::sqrt(dy * dy + dx * dx);
}

Exemplar growing_disk(int size, int n_frames, std::uint64_t seed) {
  Rng rng(seed);
  const int n_disks = std::max(2, size * size / 192);
  std::vector<double> cy(n_disks), cx(n_disks), tint(n_disks);
  for (int i = 0; i < n_disks; ++i) {
    cy[i] = rng.uniform(0.0, size);
    cx[i] = rng.uniform(0.0, size);
    tint[i] = rng.uniform(0.6, 1.0);
  }
  Exemplar ex;
  ex.name = "growing-disk";
  ex.times = uniform_times(n_frames, 0.0, 5.0);
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  const double r_max = 0.4 * size;
  for (int f = 0; f < n_frames; ++f) {
    const double r = 1.5 + (r_max - 1.5) * (f + 1) / n_frames;
    std::vector<float> vals(3 * plane, 0.0f);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        double v = 0.1;  // background
        double t = 0.0;
        for (int i = 0; i < n_disks; ++i) {
          const double d = wrap_dist(y, x, cy[i], cx[i], size);
          // one-pixel soft rim
          const double cov = std::clamp(r - d + 0.5, 0.0, 1.0);
          if (cov * tint[i] > v - 0.1 && cov > 0.0) {
            v = 0.1 + 0.85 * cov;
            t = tint[i];
          }
        }
        const std::size_t p = y * static_cast<std::size_t>(size) + x;
        vals[p] = static_cast<float>(v);
        vals[plane + p] = static_cast<float>(v * t);
        vals[2 * plane + p] = static_cast<float>(0.1 + (v - 0.1) * 0.4);
      }
    ex.frames.push_back(Tensor::constant({3, size, size}, std::move(vals)));
  }
  return ex;
}

Exemplar gray_scott(int size, int n_frames, std::uint64_t seed) {
  Rng rng(seed);
  const double F = 0.037, k = 0.06, du = 0.16, dv = 0.08;
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  std::vector<double> u(plane, 1.0), v(plane, 0.0), un(plane), vn(plane);
  // Dense random seeding keeps the pattern statistically uniform in space.
  for (std::size_t i = 0; i < plane; ++i)
    if (rng.uniform() < 0.08) {
      u[i] = 0.5 + 0.1 * rng.uniform();
      v[i] = 0.25 + 0.1 * rng.uniform();
    }
  auto lap = [&](const std::vector<double>& a, int y, int x) {
    const int yp = (y + 1) % size, ym = (y + size - 1) % size;
    const int xp = (x + 1) % size, xm = (x + size - 1) % size;
    return a[ym * size + x] + a[yp * size + x] + a[y * size + xm] +
           a[y * size + xp] - 4.0 * a[y * size + x];
  };
  Exemplar ex;
  ex.name = "reaction-diffusion";
  ex.times = uniform_times(n_frames, 0.0, 5.0);
  const int steps_per_frame = std::max(1, 2000 / n_frames);
  for (int f = 0; f < n_frames; ++f) {
    for (int s = 0; s < steps_per_frame; ++s) {
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const std::size_t i = y * static_cast<std::size_t>(size) + x;
          const double uvv = u[i] * v[i] * v[i];
          un[i] = u[i] + du * lap(u, y, x) - uvv + F * (1.0 - u[i]);
          vn[i] = v[i] + dv * lap(v, y, x) + uvv - (F + k) * v[i];
        }
      u.swap(un);
      v.swap(vn);
    }
    std::vector<float> vals(3 * plane);
    for (std::size_t i = 0; i < plane; ++i) {
      vals[i] = static_cast<float>(std::clamp(u[i], 0.0, 1.0));
      vals[plane + i] = static_cast<float>(std::clamp(3.0 * v[i], 0.0, 1.0));
      vals[2 * plane + i] = static_cast<float>(std::clamp(1.0 - u[i], 0.0, 1.0));
    }
    ex.frames.push_back(Tensor::constant({3, size, size}, std::move(vals)));
  }
  return ex;
}

SynthResult rusting_ramp(int size, int n_frames, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t plane = static_cast<std::size_t>(size) * size;
  // Static noise field breaking up the rust front.
  std::vector<double> noise(plane);
  for (double& n : noise) n = rng.uniform(-0.25, 0.25);

  SynthResult out;
  out.exemplar.name = "rusting-ramp";
  out.exemplar.mode = field::Mode::kSvbrdf;
  out.exemplar.times = uniform_times(n_frames, 0.0, 10.0);
  // Calibrated so the glossy metal highlight stays just below the tonemap
  // clamp: clipped pixels carry no gradient and would starve training.
  out.gt_intensity = Tensor::constant({}, {2.5f});
  render::ShadingGeometry geom =
      render::shading_geometry(size, size, render::kDefaultFov, {0.0, 0.0, 1.0});

  const double metal_d[3] = {0.30, 0.30, 0.32}, rust_d[3] = {0.45, 0.20, 0.10};
  const double metal_s[3] = {0.50, 0.50, 0.50}, rust_s[3] = {0.05, 0.04, 0.04};
  for (int f = 0; f < n_frames; ++f) {
    const double progress = n_frames == 1 ? 1.0 : double(f) / (n_frames - 1);
    std::vector<float> dif(3 * plane), spec(3 * plane), ru(plane), rv(plane),
        hgt(plane);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        const std::size_t i = y * static_cast<std::size_t>(size) + x;
        // Rust creeps across a vertical ramp, jittered by the noise field.
        // The jitter fades in with progress so the first frame is a pristine,
        // spatially uniform metal sheet.
        const double front = 1.3 * progress - double(y) / size;
        const double m =
            std::clamp(2.0 * (front + progress * noise[i]), 0.0, 1.0);
        for (int c = 0; c < 3; ++c) {
          dif[c * plane + i] =
              static_cast<float>(metal_d[c] * (1 - m) + rust_d[c] * m);
          spec[c * plane + i] =
              static_cast<float>(metal_s[c] * (1 - m) + rust_s[c] * m);
        }
        ru[i] = static_cast<float>(0.40 * (1 - m) + 0.60 * m);
        rv[i] = static_cast<float>(0.40 * (1 - m) + 0.50 * m);
        hgt[i] = static_cast<float>(0.4 * m * noise[i]);
      }
    render::SvbrdfMaps maps;
    maps.diffuse = Tensor::constant({3, size, size}, std::move(dif));
    maps.specular = Tensor::constant({3, size, size}, std::move(spec));
    maps.rough_u = Tensor::constant({1, size, size}, std::move(ru));
    maps.rough_v = Tensor::constant({1, size, size}, std::move(rv));
    maps.height = Tensor::constant({1, size, size}, std::move(hgt));
    out.exemplar.frames.push_back(
        render::render(maps, geom, out.gt_intensity));
    out.gt_maps.push_back(std::move(maps));
  }
  return out;
}

}  // namespace

SynthResult synth_exemplar(const std::string& kind, int size, int n_frames,
                           std::uint64_t seed) {
  if (size < 4 || n_frames < 2)
    throw std::invalid_argument("synth_exemplar: need size >= 4, frames >= 2");
  SynthResult out;
  if (kind == "growing-disk") {
    out.exemplar = growing_disk(size, n_frames, seed);
  } else if (kind == "reaction-diffusion") {
    out.exemplar = gray_scott(size, n_frames, seed);
  } else if (kind == "rusting-ramp") {
    out = rusting_ramp(size, n_frames, seed);
  } else {
    throw std::invalid_argument("synth_exemplar: unknown kind " + kind);
  }
  out.exemplar.validate();
  return out;
}

}  // namespace odetex::io
