#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "odetex/appconfig.hpp"
#include "odetex/archive.hpp"
#include "odetex/checkpoint.hpp"
#include "odetex/cli.hpp"
#include "odetex/image.hpp"
#include "odetex/pipeline.hpp"
#include "odetex/synth.hpp"
#include "odetex/train.hpp"

using namespace odetex;
using ad::Tensor;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("odetex_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void corrupt_byte(const fs::path& p, std::size_t offset, char value) {
  std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(static_cast<std::streamoff>(offset));
  f.put(value);
}

int run(std::vector<std::string> args) {
  std::vector<const char*> argv{"odetex"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return io::run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("archive round trip is bit-identical") {
  fs::path dir = scratch_dir("archive");
  Rng rng(1);
  Tensor t = Tensor::randn({3, 4, 5}, rng);
  std::vector<io::ArchiveEntry> entries{
      io::ArchiveEntry::tensor("weights", t),
      io::ArchiveEntry::words("state", {0, 42, ~0ull}),
      io::ArchiveEntry::word("count", 7)};
  const std::string path = (dir / "a.bin").string();
  io::save_archive(path, entries);

  auto loaded = io::load_archive(path);
  REQUIRE(loaded.size() == 3);
  const io::ArchiveEntry& w = io::find_entry(loaded, "weights");
  CHECK(w.dtype == io::Dtype::kF32);
  CHECK(w.shape == ad::Shape{3, 4, 5});
  CHECK(w.f32 == t.values());
  CHECK(w.to_tensor().values() == t.values());
  CHECK(io::find_entry(loaded, "state").u64 ==
        std::vector<std::uint64_t>{0, 42, ~0ull});
  CHECK(io::find_entry(loaded, "count").u64[0] == 7);
  CHECK(io::find_entry_opt(loaded, "missing") == nullptr);
  CHECK_THROWS(io::find_entry(loaded, "missing"));

  // Saving the loaded entries again reproduces the file byte for byte.
  const std::string path2 = (dir / "b.bin").string();
  io::save_archive(path2, loaded);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::vector<char> b1((std::istreambuf_iterator<char>(f1)), {});
  std::vector<char> b2((std::istreambuf_iterator<char>(f2)), {});
  CHECK(b1 == b2);
}

TEST_CASE("archive rejects corruption") {
  fs::path dir = scratch_dir("archive_bad");
  const std::string path = (dir / "a.bin").string();
  io::save_archive(path, {io::ArchiveEntry::word("x", 1)});

  SUBCASE("bad magic") {
    corrupt_byte(path, 0, 'X');
    CHECK_THROWS(io::load_archive(path));
  }
  SUBCASE("newer format version") {
    corrupt_byte(path, 8, 2);  // version word follows the 8-byte magic
    CHECK_THROWS(io::load_archive(path));
  }
  SUBCASE("truncation") {
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
    in.close();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 6));
    out.close();
    CHECK_THROWS(io::load_archive(path));
  }
  SUBCASE("missing file") {
    CHECK_THROWS(io::load_archive((dir / "nope.bin").string()));
  }
}

TEST_CASE("png round trip stays within one quantization step") {
  fs::path dir = scratch_dir("png");
  Rng rng(2);
  std::vector<float> v(3 * 6 * 9);
  for (auto& x : v) x = static_cast<float>(rng.uniform());
  Tensor img = Tensor::constant({3, 6, 9}, std::move(v));
  const std::string path = (dir / "img.png").string();
  io::write_png(path, img);
  Tensor back = io::read_png(path);
  REQUIRE(back.shape() == img.shape());
  for (std::size_t i = 0; i < img.size(); ++i)
    CHECK(std::abs(back.values()[i] - img.values()[i]) <= 1.0f / 255 + 1e-6f);

  // Single-channel images come back replicated to three channels.
  Tensor gray = Tensor::full({1, 4, 4}, 0.25f);
  const std::string gpath = (dir / "gray.png").string();
  io::write_png(gpath, gray);
  Tensor gback = io::read_png(gpath);
  REQUIRE(gback.shape() == ad::Shape{3, 4, 4});
  for (std::size_t i = 0; i < gback.size(); ++i)
    CHECK(std::abs(gback.values()[i] - 0.25f) <= 1.0f / 255 + 1e-6f);

  CHECK_THROWS(io::read_png((dir / "missing.png").string()));
}

TEST_CASE("center crop and bilinear resize") {
  std::vector<float> v(16);
  for (int i = 0; i < 16; ++i) v[i] = static_cast<float>(i);
  Tensor img = Tensor::constant({1, 4, 4}, std::move(v));

  Tensor c = io::center_crop(img, 2, 2);
  CHECK(c.values() == std::vector<float>{5, 6, 9, 10});
  CHECK(io::center_crop(img, 4, 4).values() == img.values());

  CHECK(io::resize_bilinear(img, 4, 4).values() == img.values());
  Tensor flat = Tensor::full({3, 3, 3}, 0.7f);
  Tensor fup = io::resize_bilinear(flat, 7, 5);
  for (float x : fup.values()) CHECK(x == doctest::Approx(0.7f));

  // Upsampling a horizontal gradient keeps rows constant vertically.
  Tensor row = Tensor::constant({1, 1, 3}, {0.0f, 0.5f, 1.0f});
  Tensor up = io::resize_bilinear(row, 2, 3);
  CHECK(up.values()[0] == doctest::Approx(0.0f));
  CHECK(up.values()[4] == doctest::Approx(0.5f));
}

TEST_CASE("growing-disk exemplar grows monotonically") {
  io::SynthResult res = io::synth_exemplar("growing-disk", 24, 6, 3);
  const Exemplar& ex = res.exemplar;
  CHECK(ex.mode == field::Mode::kRgb);
  REQUIRE(ex.frames.size() == 6);
  CHECK(ex.times.front() == 0.0);
  CHECK(ex.times.back() == 5.0);

  long prev = -1;
  for (const auto& frame : ex.frames) {
    for (float v : frame.values()) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
    long lit = 0;
    for (int i = 0; i < 24 * 24; ++i)
      if (frame.values()[i] > 0.5f) ++lit;
    CHECK(lit > prev);  // strictly increasing disk coverage
    prev = lit;
  }
}

TEST_CASE("reaction-diffusion exemplar is statistically uniform") {
  io::SynthResult res = io::synth_exemplar("reaction-diffusion", 32, 4, 5);
  const Tensor& last = res.exemplar.frames.back();
  // Dense seeding on a periodic domain: no quadrant dominates.
  double q[4] = {0, 0, 0, 0};
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      q[(y / 16) * 2 + (x / 16)] += last.values()[y * 32 + x];
  const double mean = (q[0] + q[1] + q[2] + q[3]) / 4;
  REQUIRE(mean > 0.0);
  for (double qi : q) CHECK(std::abs(qi - mean) / mean < 0.05);
}

TEST_CASE("rusting-ramp frames are renders of their ground-truth maps") {
  io::SynthResult res = io::synth_exemplar("rusting-ramp", 16, 4, 9);
  const Exemplar& ex = res.exemplar;
  CHECK(ex.mode == field::Mode::kSvbrdf);
  REQUIRE(res.gt_maps.size() == 4);
  CHECK(ex.times.back() == 10.0);

  render::ShadingGeometry geom = render::shading_geometry(16, 16, render::kDefaultFov,
                                                          {0.0, 0.0, 1.0});
  for (std::size_t i = 0; i < ex.frames.size(); ++i) {
    ad::NoGradGuard ng;
    Tensor want = render::render(res.gt_maps[i], geom, res.gt_intensity);
    CHECK(ex.frames[i].values() == want.values());  // bit-exact
  }

  CHECK_THROWS(io::synth_exemplar("no-such-kind", 16, 4, 0));
}

TEST_CASE("exemplar directory loading honours the manifest") {
  fs::path dir = scratch_dir("exemplar");
  io::SynthResult res = io::synth_exemplar("growing-disk", 16, 4, 11);
  io::save_frames(dir.string(), res.exemplar.frames);
  {
    std::ofstream m(dir / "manifest.txt");
    m << "frame_0000.png 0.0\nframe_0001.png 0.5\n"
      << "frame_0002.png 2.5\nframe_0003.png 5.0\n";
  }
  Exemplar ex = io::load_exemplar(dir.string(), field::Mode::kRgb, 16);
  REQUIRE(ex.frames.size() == 4);
  CHECK(ex.times == std::vector<double>{0.0, 0.5, 2.5, 5.0});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < ex.frames[i].size(); ++j)
      CHECK(std::abs(ex.frames[i].values()[j] -
                     res.exemplar.frames[i].values()[j]) <=
            1.0f / 255 + 1e-6f);

  // Without a manifest: uniform times, optional subsampling.
  fs::remove(dir / "manifest.txt");
  Exemplar sub = io::load_exemplar(dir.string(), field::Mode::kRgb, 16, 2,
                                   0.0, 6.0);
  REQUIRE(sub.frames.size() == 2);
  CHECK(sub.times == std::vector<double>{0.0, 6.0});

  CHECK_THROWS(io::load_exemplar((dir / "missing").string(),
                                 field::Mode::kRgb, 16));
}

TEST_CASE("config files parse into train and field settings") {
  const std::string text =
      "# comment\n"
      "[train]\n"
      "iterations = 123\n"
      "lr = 0.001\n"
      "refresh_rate=4\n"
      "\n"
      "[field]\n"
      "channels = 16, 32\n"
      "levels = 2\n"
      "use_attention = false\n";
  io::ConfigMap cm = io::parse_config_text(text);
  CHECK(cm.at("train").at("iterations") == "123");

  train::TrainConfig tc = train::rgb_defaults();
  io::apply_train_config(cm, tc);
  CHECK(tc.iterations == 123);
  CHECK(tc.lr == doctest::Approx(0.001));
  CHECK(tc.refresh_rate == 4);

  field::FieldConfig fc = field::desk_rgb_preset();
  io::apply_field_config(cm, fc);
  CHECK(fc.channels == std::vector<int>{16, 32});
  CHECK(fc.levels == 2);
  CHECK(!fc.use_attention);

  CHECK_THROWS(io::parse_config_text("key_without_value\n"));
  io::ConfigMap bad = io::parse_config_text("[train]\nnot_a_key = 1\n");
  CHECK_THROWS(io::apply_train_config(bad, tc));
}

TEST_CASE("checkpoint resume continues bit-exactly") {
  fs::path dir = scratch_dir("ckpt");
  io::SynthResult synth = io::synth_exemplar("growing-disk", 16, 4, 13);
  field::FieldConfig fcfg = field::desk_rgb_preset();
  train::TrainConfig cfg = train::rgb_defaults();
  cfg.iterations = 24;
  cfg.seed = 17;
  cfg.n_slices = 8;

  train::TrainState st = train::make_train_state(cfg, fcfg, synth.exemplar);
  for (int i = 0; i < 12; ++i) train::train_iteration(st, synth.exemplar);
  const std::string path = (dir / "mid.ckpt").string();
  io::save_checkpoint(path, st);

  train::TrainState resumed = io::load_checkpoint(path);
  CHECK(resumed.iteration == 12);
  CHECK(resumed.cfg.seed == cfg.seed);
  CHECK(resumed.fcfg.levels == fcfg.levels);

  std::vector<double> a, b;
  for (int i = 0; i < 12; ++i) {
    a.push_back(train::train_iteration(st, synth.exemplar).loss);
    b.push_back(train::train_iteration(resumed, synth.exemplar).loss);
  }
  CHECK(a == b);
  auto na = st.params.named(), nb = resumed.params.named();
  for (std::size_t i = 0; i < na.size(); ++i)
    CHECK(na[i].second.values() == nb[i].second.values());

  // Parameter-only loading serves generation.
  io::LoadedModel m = io::load_model(path);
  CHECK(m.fcfg.mode == field::Mode::kRgb);
  io::GenerateOptions gopts;
  gopts.h = gopts.w = 16;
  gopts.n_frames = 2;
  auto frames = io::generate_frames(m.params, m.fcfg, gopts);
  CHECK(frames.size() == 2);
}

TEST_CASE("transfer with identity dynamics reproduces the input") {
  field::FieldConfig fcfg = field::desk_rgb_preset();
  Rng rng(19);
  field::FieldParams params = field::init_params(fcfg, rng);  // zero field

  Rng ir(20);
  std::vector<float> v(3 * 16 * 16);
  for (auto& x : v) x = static_cast<float>(ir.uniform(0.05, 0.95));
  Tensor img = Tensor::constant({3, 16, 16}, std::move(v));

  io::GenerateOptions opts;
  opts.h = opts.w = 16;
  opts.n_frames = 3;
  auto out = io::transfer(params, fcfg, img, opts);
  REQUIRE(out.size() == 3);
  for (const auto& f : out) {
    REQUIRE(f.shape() == img.shape());
    for (std::size_t i = 0; i < f.size(); ++i)
      CHECK(f.values()[i] == doctest::Approx(img.values()[i]).epsilon(1e-3));
  }

  // Constant channels short-circuit the statistics matching.
  Tensor flat = Tensor::full({3, 16, 16}, 0.5f);
  auto out2 = io::transfer(params, fcfg, flat, opts);
  for (std::size_t i = 0; i < out2[0].size(); ++i)
    CHECK(out2[0].values()[i] == doctest::Approx(0.5f).epsilon(1e-3));
}

TEST_CASE("command line smoke test") {
  fs::path base = scratch_dir("cli");
  const std::string synth_dir = (base / "exemplar").string();
  const std::string train_dir = (base / "model").string();
  const std::string gen_dir = (base / "generated").string();

  CHECK(run({"synth", "growing-disk", "--size", "16", "--frames", "4",
             "--out", synth_dir}) == 0);
  CHECK(fs::exists(fs::path(synth_dir) / "frame_0000.png"));
  CHECK(fs::exists(fs::path(synth_dir) / "manifest.txt"));

  CHECK(run({"train", "--exemplar", synth_dir, "--preset", "desk-rgb",
             "--size", "16", "--iterations", "3", "--out", train_dir}) == 0);
  const std::string ckpt = (fs::path(train_dir) / "final.ckpt").string();
  CHECK(fs::exists(ckpt));
  CHECK(fs::exists(fs::path(train_dir) / "report.jsonl"));

  CHECK(run({"generate", "--checkpoint", ckpt, "--size", "16", "--frames",
             "2", "--out", gen_dir}) == 0);
  CHECK(fs::exists(fs::path(gen_dir) / "frame_0001.png"));

  CHECK(run({"metrics", "--generated", gen_dir, "--target", synth_dir}) == 0);
  CHECK(run({"inspect-checkpoint", ckpt}) == 0);

  CHECK(run({"generate", "--no-such-flag"}) == 1);
  CHECK(run({"generate", "--checkpoint", (base / "nope.ckpt").string()}) == 2);
}
