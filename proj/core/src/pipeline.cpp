#include "odetex/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "odetex/archive.hpp"
#include "odetex/image.hpp"
#include "odetex/ode.hpp"
#include "odetex/render.hpp"

namespace odetex::io {

namespace fs = std::filesystem;
using ad::Tensor;

namespace {

std::vector<double> sample_times(int n, double t0, double t1) {
  std::vector<double> t(n);
  for (int i = 0; i < n; ++i)
    t[i] = n == 1 ? t0 : t0 + (t1 - t0) * i / (n - 1);
  return t;
}

}  // namespace

Exemplar load_exemplar(const std::string& dir, field::Mode mode,
                       int target_size, int n_frames, double t_first,
                       double t_last) {
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".png")
      files.push_back(entry.path().filename().string());
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw std::runtime_error("load_exemplar: no .png frames in " + dir);

  std::map<std::string, double> manifest_times;
  if (fs::exists(fs::path(dir) / "manifest.txt")) {
    std::ifstream m(fs::path(dir) / "manifest.txt");
    std::string line;
    while (std::getline(m, line)) {
      std::istringstream ls(line);
      std::string name;
      double t;
      if (ls >> name >> t) manifest_times[name] = t;
    }
  }

  if (n_frames > 0 && n_frames < static_cast<int>(files.size())) {
    std::vector<std::string> picked;
    for (int i = 0; i < n_frames; ++i)
      picked.push_back(
          files[static_cast<std::size_t>(i) * (files.size() - 1) /
                (n_frames - 1)]);
    files = std::move(picked);
  }

  Exemplar ex;
  ex.mode = mode;
  ex.name = dir;
  for (const std::string& name : files) {
    Tensor img = read_png((fs::path(dir) / name).string());
    const int side = std::min(img.shape()[1], img.shape()[2]);
    img = center_crop(img, side, side);
    img = resize_bilinear(img, target_size, target_size);
    ex.frames.push_back(img);
  }
  if (!manifest_times.empty()) {
    for (const std::string& name : files) {
      auto it = manifest_times.find(name);
      if (it == manifest_times.end())
        throw std::runtime_error("load_exemplar: " + name +
                                 " missing from manifest.txt");
      ex.times.push_back(it->second);
    }
  } else {
    ex.times = sample_times(static_cast<int>(files.size()), t_first, t_last);
  }
  ex.validate();
  return ex;
}

void save_frames(const std::string& dir, const std::vector<Tensor>& frames) {
  fs::create_directories(dir);
  for (std::size_t i = 0; i < frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04zu.png", i);
    write_png((fs::path(dir) / name).string(), frames[i]);
  }
}

std::vector<Tensor> generate_frames(const field::FieldParams& params,
                                    const field::FieldConfig& fcfg,
                                    const GenerateOptions& opts,
                                    std::vector<latent::LatentState>* states) {
  fcfg.validate();
  if (opts.h % fcfg.down_factor() != 0 || opts.w % fcfg.down_factor() != 0)
    throw std::invalid_argument(
        "generate: output size must be divisible by the net's down factor");
  ad::NoGradGuard ng;
  Rng rng(opts.seed);
  latent::LatentState z0 =
      latent::sample_initial_state(rng, fcfg.mode, opts.h, opts.w);
  const ode::Field field = field::make_field(params, fcfg);
  ode::Trajectory traj = ode::solve_dense(
      field, z0.data, opts.t_warm,
      sample_times(opts.n_frames, opts.t_first, opts.t_last), opts.tol);

  std::vector<Tensor> frames;
  if (fcfg.mode == field::Mode::kRgb) {
    for (const Tensor& z : traj.states) {
      if (states) states->push_back({z, fcfg.mode});
      frames.push_back(clamp(latent::project_rgb({z, fcfg.mode}), 0.0f, 1.0f));
    }
  } else {
    render::ShadingGeometry geom =
        render::shading_geometry(opts.h, opts.w, render::kDefaultFov, {0.0, 0.0, 1.0});
    for (const Tensor& z : traj.states) {
      if (states) states->push_back({z, fcfg.mode});
      frames.push_back(latent::project_svbrdf({z, fcfg.mode}, geom,
                                              params.intensity,
                                              opts.isotropic));
    }
  }
  return frames;
}

void generate(const field::FieldParams& params, const field::FieldConfig& fcfg,
              const GenerateOptions& opts, const std::string& out_dir) {
  std::vector<latent::LatentState> states;
  std::vector<Tensor> frames = generate_frames(params, fcfg, opts, &states);
  save_frames(out_dir, frames);
  if (fcfg.mode != field::Mode::kSvbrdf) return;

  ad::NoGradGuard ng;
  std::vector<ArchiveEntry> entries;
  for (std::size_t i = 0; i < states.size(); ++i) {
    render::SvbrdfMaps maps =
        latent::extract_brdf_maps(states[i], opts.isotropic);
    char tag[32];
    std::snprintf(tag, sizeof(tag), "frame_%04zu", i);
    const std::string t(tag);
    entries.push_back(ArchiveEntry::tensor(t + ".diffuse", maps.diffuse));
    entries.push_back(ArchiveEntry::tensor(t + ".specular", maps.specular));
    entries.push_back(ArchiveEntry::tensor(t + ".rough_u", maps.rough_u));
    entries.push_back(ArchiveEntry::tensor(t + ".rough_v", maps.rough_v));
    entries.push_back(ArchiveEntry::tensor(t + ".height", maps.height));
    write_png((fs::path(out_dir) / (t + "_diffuse.png")).string(),
              maps.diffuse);
    write_png((fs::path(out_dir) / (t + "_specular.png")).string(),
              maps.specular);
    write_png((fs::path(out_dir) / (t + "_rough.png")).string(), maps.rough_u);
    // Height is unbounded; preview remapped through a sigmoid.
    write_png((fs::path(out_dir) / (t + "_height.png")).string(),
              sigmoid(maps.height));
  }
  save_archive((fs::path(out_dir) / "maps.bin").string(), entries);
}

namespace {

struct ChannelStats {
  double mean = 0.0, std = 0.0;
};

ChannelStats channel_stats(const Tensor& t, int c) {
  const std::size_t plane =
      static_cast<std::size_t>(t.shape()[1]) * t.shape()[2];
  const float* p = t.values().data() + c * plane;
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < plane; ++i) {
    sum += p[i];
    sum2 += double(p[i]) * p[i];
  }
  ChannelStats s;
  s.mean = sum / plane;
  s.std = std::sqrt(std::max(0.0, sum2 / plane - s.mean * s.mean));
  return s;
}

}  // namespace

std::vector<Tensor> transfer(const field::FieldParams& params,
                             const field::FieldConfig& fcfg,
                             const Tensor& new_image,
                             const GenerateOptions& opts) {
  if (fcfg.mode != field::Mode::kRgb)
    throw std::invalid_argument("transfer: requires an RGB-mode model");
  if (new_image.shape().size() != 3 || new_image.shape()[0] != 3)
    throw std::invalid_argument("transfer: new_image must be [3,H,W]");
  const int h = new_image.shape()[1], w = new_image.shape()[2];
  if (h % fcfg.down_factor() != 0 || w % fcfg.down_factor() != 0)
    throw std::invalid_argument(
        "transfer: image size must be divisible by the net's down factor");

  ad::NoGradGuard ng;
  Rng rng(opts.seed);
  latent::LatentState z0 = latent::sample_initial_state(rng, fcfg.mode, h, w);
  const ode::Field field = field::make_field(params, fcfg);
  Tensor zt0 =
      ode::solve_adaptive(field, z0.data, opts.t_warm, opts.t_first, opts.tol);

  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<float> state_vals = zt0.values();
  ChannelStats state_stats[3], img_stats[3];
  for (int c = 0; c < 3; ++c) {
    state_stats[c] = channel_stats(zt0, c);
    img_stats[c] = channel_stats(new_image, c);
    const bool degenerate = img_stats[c].std < 1e-6;
    if (degenerate)
      std::cerr << "transfer: channel " << c
                << " of the input is (near-)constant; passed through unscaled\n";
    for (std::size_t i = 0; i < plane; ++i) {
      const double x = new_image.values()[c * plane + i];
      state_vals[c * plane + i] = static_cast<float>(
          degenerate ? x
                     : (x - img_stats[c].mean) / img_stats[c].std *
                               state_stats[c].std +
                           state_stats[c].mean);
    }
  }
  Tensor z_enc = Tensor::constant(zt0.shape(), std::move(state_vals));

  ode::Trajectory traj = ode::solve_dense(
      field, z_enc, opts.t_first,
      sample_times(opts.n_frames, opts.t_first, opts.t_last), opts.tol);

  std::vector<Tensor> out;
  for (const Tensor& z : traj.states) {
    Tensor proj = latent::project_rgb({z, fcfg.mode});
    std::vector<float> vals = proj.values();
    for (int c = 0; c < 3; ++c) {
      const bool degenerate =
          state_stats[c].std < 1e-6 || img_stats[c].std < 1e-6;
      if (state_stats[c].std < 1e-6)
        std::cerr << "transfer: state channel " << c
                  << " is (near-)constant; decoded unscaled\n";
      for (std::size_t i = 0; i < plane; ++i) {
        const double x = vals[c * plane + i];
        vals[c * plane + i] = static_cast<float>(
            degenerate ? x
                       : (x - state_stats[c].mean) / state_stats[c].std *
                                 img_stats[c].std +
                             img_stats[c].mean);
      }
    }
    out.push_back(Tensor::constant(proj.shape(), std::move(vals)));
  }
  return out;
}

}  // namespace odetex::io
