#include "odetex/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "odetex/appconfig.hpp"
#include "odetex/archive.hpp"
#include "odetex/checkpoint.hpp"
#include "odetex/image.hpp"
#include "odetex/metrics.hpp"
#include "odetex/pipeline.hpp"
#include "odetex/synth.hpp"
#include "odetex/train.hpp"

namespace odetex::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOpts {
  std::string config_path;
  std::string out = ".";
  std::uint64_t seed = 0;
  bool seed_set = false;
  int threads = 1;  // kernels are single-threaded; accepted for compatibility
};

Exemplar resolve_exemplar(const std::string& spec, field::Mode mode, int size,
                          int frames, double t_first, double t_last) {
  if (spec.rfind("synth:", 0) == 0)
    return synth_exemplar(spec.substr(6), size, frames, 1).exemplar;
  return load_exemplar(spec, mode, size, frames, t_first, t_last);
}

int cmd_train(const GlobalOpts& g, const std::string& exemplar_spec,
              const std::string& preset, int size, int frames,
              int iterations_override, int checkpoint_every,
              const std::string& resume) {
  field::FieldConfig fcfg;
  train::TrainConfig tcfg;
  if (preset == "rgb") {
    fcfg = field::rgb_preset();
    tcfg = train::rgb_defaults();
  } else if (preset == "svbrdf") {
    fcfg = field::svbrdf_preset();
    tcfg = train::svbrdf_defaults();
  } else if (preset == "desk-rgb") {
    fcfg = field::desk_rgb_preset();
    tcfg = train::rgb_defaults();
  } else if (preset == "desk-svbrdf") {
    fcfg = field::desk_svbrdf_preset();
    tcfg = train::svbrdf_defaults();
  } else {
    std::cerr << "unknown preset: " << preset << "\n";
    return 1;
  }
  if (!g.config_path.empty()) {
    const ConfigMap cm = parse_config_file(g.config_path);
    apply_train_config(cm, tcfg);
    apply_field_config(cm, fcfg);
  }
  if (g.seed_set) tcfg.seed = g.seed;
  if (iterations_override >= 0) tcfg.iterations = iterations_override;

  Exemplar ex = resolve_exemplar(exemplar_spec, fcfg.mode, size, frames,
                                 tcfg.t_first, tcfg.t_last);

  train::TrainState st = resume.empty() ? train::make_train_state(tcfg, fcfg, ex)
                                        : load_checkpoint(resume);
  if (!resume.empty()) st.cfg.iterations = tcfg.iterations;

  fs::create_directories(g.out);
  std::ofstream report(fs::path(g.out) / "report.jsonl",
                       resume.empty() ? std::ios::trunc : std::ios::app);
  train::train(st, ex, [&](const train::TrainState& s,
                           const train::IterationRecord& r) {
    report << json{{"iteration", r.iteration},
                   {"loss", r.loss},
                   {"lr", r.lr},
                   {"nfe", r.nfe},
                   {"wall_ms", r.wall_ms}}
                  .dump()
           << "\n";
    if (checkpoint_every > 0 && (r.iteration + 1) % checkpoint_every == 0)
      save_checkpoint((fs::path(g.out) /
                       ("ckpt_" + std::to_string(r.iteration + 1) + ".bin"))
                          .string(),
                      s);
  });
  save_checkpoint((fs::path(g.out) / "final.ckpt").string(), st);
  std::cout << "trained " << st.iteration << " iterations; checkpoint at "
            << (fs::path(g.out) / "final.ckpt").string() << "\n";
  return 0;
}

int cmd_generate(const GlobalOpts& g, const std::string& ckpt, int size,
                 int frames) {
  LoadedModel m = load_model(ckpt);
  GenerateOptions opts;
  opts.h = opts.w = size;
  opts.n_frames = frames;
  opts.seed = g.seed;
  if (m.fcfg.mode == field::Mode::kSvbrdf) {
    opts.t_warm = -2.0;
    opts.t_last = 10.0;
  }
  generate(m.params, m.fcfg, opts, g.out);
  std::cout << "wrote " << frames << " frames to " << g.out << "\n";
  return 0;
}

int cmd_relight(const GlobalOpts& g, const std::string& ckpt, int size,
                int frames) {
  LoadedModel m = load_model(ckpt);
  std::vector<double> times(frames);
  for (int i = 0; i < frames; ++i)
    times[i] = frames == 1 ? 0.0 : 10.0 * i / (frames - 1);
  loss::FeatureBank bank = loss::FeatureBank::builtin();
  auto results = metrics::relight_eval(m.params, m.fcfg, size, size, -2.0,
                                       times, 1e-2, g.seed, bank, 64);
  fs::create_directories(g.out);
  std::ofstream rep(fs::path(g.out) / "relight.jsonl");
  for (const auto& r : results) {
    save_frames((fs::path(g.out) / r.lighting).string(), r.frames);
    rep << json{{"lighting", r.lighting},
                {"non_straightness", r.non_straightness},
                {"degenerate", r.degenerate}}
               .dump()
        << "\n";
  }
  std::cout << "relit under " << results.size() << " lightings in " << g.out
            << "\n";
  return 0;
}

int cmd_transfer(const GlobalOpts& g, const std::string& ckpt,
                 const std::string& image_path, int frames) {
  LoadedModel m = load_model(ckpt);
  ad::Tensor img = read_png(image_path);
  GenerateOptions opts;
  opts.n_frames = frames;
  opts.seed = g.seed;
  std::vector<ad::Tensor> out = transfer(m.params, m.fcfg, img, opts);
  for (auto& f : out) f = clamp(f, 0.0f, 1.0f);
  save_frames(g.out, out);
  std::cout << "wrote " << out.size() << " transferred frames to " << g.out
            << "\n";
  return 0;
}

std::vector<ad::Tensor> read_frame_dir(const std::string& dir) {
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".png")
      files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  std::vector<ad::Tensor> frames;
  for (const auto& f : files) frames.push_back(read_png(f));
  if (frames.empty()) throw std::runtime_error("no .png frames in " + dir);
  return frames;
}

int cmd_metrics(const GlobalOpts& g, const std::string& generated_dir,
                const std::string& target_dir) {
  auto gen = read_frame_dir(generated_dir);
  auto tgt = read_frame_dir(target_dir);
  loss::FeatureBank bank = loss::FeatureBank::builtin();
  Rng rng(g.seed);
  const std::size_t n = std::min(gen.size(), tgt.size());
  gen.resize(n);
  tgt.resize(n);
  metrics::RealismScores rs = metrics::realism(gen, tgt, bank, 64, rng);
  bool degenerate = false;
  const double ns = metrics::non_straightness(gen, bank, &degenerate);
  const json out{{"gram_mean", rs.gram},
                 {"swd_mean", rs.swd},
                 {"non_straightness", ns},
                 {"degenerate_path", degenerate},
                 {"frames", n}};
  std::cout << out.dump() << "\n";
  if (g.out != ".") {
    fs::create_directories(g.out);
    std::ofstream f(fs::path(g.out) / "metrics.json");
    f << out.dump(2) << "\n";
  }
  return 0;
}

int cmd_synth(const GlobalOpts& g, const std::string& kind, int size,
              int frames) {
  SynthResult res = synth_exemplar(kind, size, frames, g.seed);
  save_frames(g.out, res.exemplar.frames);
  std::ofstream manifest(fs::path(g.out) / "manifest.txt");
  for (std::size_t i = 0; i < res.exemplar.frames.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%04zu.png", i);
    manifest << name << " " << res.exemplar.times[i] << "\n";
  }
  std::cout << "wrote " << res.exemplar.frames.size() << " frames to " << g.out
            << "\n";
  return 0;
}

int cmd_inspect(const std::string& path) {
  const auto entries = load_archive(path);
  for (const auto& e : entries) {
    std::cout << e.name << "  dtype="
              << (e.dtype == Dtype::kF32 ? "f32" : "u64") << "  shape=[";
    for (std::size_t i = 0; i < e.shape.size(); ++i)
      std::cout << (i ? "," : "") << e.shape[i];
    std::cout << "]\n";
  }
  std::cout << entries.size() << " entries\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Neural appearance ODE toolkit"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "key = value config file");
  auto* seed_opt = app.add_option("--seed", g.seed, "rng seed");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--threads", g.threads, "kernel thread cap")
      ->check(CLI::PositiveNumber);

  std::string exemplar_spec, preset = "desk-rgb", resume, ckpt, image_path;
  std::string generated_dir, target_dir, kind;
  int size = 24, frames = 20, iterations = -1, checkpoint_every = 0;

  auto* train_cmd = app.add_subcommand("train", "train a model");
  train_cmd->fallthrough();
  train_cmd->add_option("--exemplar", exemplar_spec,
                        "frame directory or synth:<kind>")
      ->required();
  train_cmd->add_option("--preset", preset,
                        "rgb | svbrdf | desk-rgb | desk-svbrdf");
  train_cmd->add_option("--size", size, "exemplar resolution");
  train_cmd->add_option("--frames", frames, "exemplar frame count");
  train_cmd->add_option("--iterations", iterations, "override iteration count");
  train_cmd->add_option("--checkpoint-every", checkpoint_every,
                        "periodic checkpoint interval");
  train_cmd->add_option("--resume", resume, "checkpoint to resume from");

  auto* gen_cmd = app.add_subcommand("generate", "synthesize frames");
  gen_cmd->fallthrough();
  gen_cmd->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
  gen_cmd->add_option("--size", size, "output resolution");
  gen_cmd->add_option("--frames", frames, "frame count");

  auto* relight_cmd = app.add_subcommand("relight", "render under 4 lightings");
  relight_cmd->fallthrough();
  relight_cmd->add_option("--checkpoint", ckpt, "trained svBRDF checkpoint")
      ->required();
  relight_cmd->add_option("--size", size, "output resolution");
  relight_cmd->add_option("--frames", frames, "frame count");

  auto* transfer_cmd = app.add_subcommand("transfer", "drive a new image");
  transfer_cmd->fallthrough();
  transfer_cmd->add_option("--checkpoint", ckpt, "trained RGB checkpoint")
      ->required();
  transfer_cmd->add_option("--image", image_path, "input PNG")->required();
  transfer_cmd->add_option("--frames", frames, "frame count");

  auto* metrics_cmd = app.add_subcommand("metrics", "evaluate a frame dir");
  metrics_cmd->fallthrough();
  metrics_cmd->add_option("--generated", generated_dir, "generated frames")
      ->required();
  metrics_cmd->add_option("--target", target_dir, "reference frames")
      ->required();

  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic exemplar");
  synth_cmd->fallthrough();
  synth_cmd->add_option("kind", kind,
                        "growing-disk | reaction-diffusion | rusting-ramp")
      ->required();
  synth_cmd->add_option("--size", size, "resolution");
  synth_cmd->add_option("--frames", frames, "frame count");

  auto* inspect_cmd =
      app.add_subcommand("inspect-checkpoint", "list archive entries");
  inspect_cmd->fallthrough();
  inspect_cmd->add_option("path", ckpt, "archive path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }
  g.seed_set = seed_opt->count() > 0;

  try {
    if (*train_cmd)
      return cmd_train(g, exemplar_spec, preset, size, frames, iterations,
                       checkpoint_every, resume);
    if (*gen_cmd) return cmd_generate(g, ckpt, size, frames);
    if (*relight_cmd) return cmd_relight(g, ckpt, size, frames);
    if (*transfer_cmd) return cmd_transfer(g, ckpt, image_path, frames);
    if (*metrics_cmd) return cmd_metrics(g, generated_dir, target_dir);
    if (*synth_cmd) return cmd_synth(g, kind, size, frames);
    if (*inspect_cmd) return cmd_inspect(ckpt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace odetex::io
