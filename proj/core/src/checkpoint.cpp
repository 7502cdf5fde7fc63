#include "odetex/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>

#include <json.hpp>

#include "odetex/archive.hpp"

namespace odetex::io {

using nlohmann::json;
using train::TrainState;

namespace {

std::uint64_t dbits(double v) { return std::bit_cast<std::uint64_t>(v); }
double bitsd(std::uint64_t w) { return std::bit_cast<double>(w); }

json fcfg_to_json(const field::FieldConfig& c) {
  return json{{"levels", c.levels},
              {"channels", c.channels},
              {"use_attention", c.use_attention},
              {"attn_heads", c.attn_heads},
              {"attn_head_dim", c.attn_head_dim},
              {"time_embed_dim", c.time_embed_dim},
              {"state_channels", c.state_channels},
              {"appearance_channels", c.appearance_channels},
              {"norm_groups", c.norm_groups},
              {"mode", c.mode == field::Mode::kRgb ? "rgb" : "svbrdf"}};
}

field::FieldConfig fcfg_from_json(const json& j) {
  field::FieldConfig c;
  c.levels = j.at("levels");
  c.channels = j.at("channels").get<std::vector<int>>();
  c.use_attention = j.at("use_attention");
  c.attn_heads = j.at("attn_heads");
  c.attn_head_dim = j.at("attn_head_dim");
  c.time_embed_dim = j.at("time_embed_dim");
  c.state_channels = j.at("state_channels");
  c.appearance_channels = j.at("appearance_channels");
  c.norm_groups = j.at("norm_groups");
  c.mode = j.at("mode") == "rgb" ? field::Mode::kRgb : field::Mode::kSvbrdf;
  return c;
}

json tcfg_to_json(const train::TrainConfig& c) {
  return json{{"iterations", c.iterations},
              {"refresh_rate", c.refresh_rate},
              {"lr", c.lr},
              {"t_warm", c.t_warm},
              {"t_first", c.t_first},
              {"t_last", c.t_last},
              {"tol", c.tol},
              {"init_phase_iterations", c.init_phase_iterations},
              {"plateau_patience", c.plateau_patience},
              {"plateau_window", c.plateau_window},
              {"plateau_threshold", c.plateau_threshold},
              {"n_slices", c.n_slices},
              {"n_crops", c.n_crops},
              {"n_shuffles", c.n_shuffles},
              {"crop_size", c.crop_size},
              {"lambda_range", c.lambda_range},
              {"h_max", c.h_max},
              {"isotropic_ggx", c.isotropic_ggx},
              {"seed", c.seed}};
}

train::TrainConfig tcfg_from_json(const json& j) {
  train::TrainConfig c;
  c.iterations = j.at("iterations");
  c.refresh_rate = j.at("refresh_rate");
  c.lr = j.at("lr");
  c.t_warm = j.at("t_warm");
  c.t_first = j.at("t_first");
  c.t_last = j.at("t_last");
  c.tol = j.at("tol");
  c.init_phase_iterations = j.at("init_phase_iterations");
  c.plateau_patience = j.at("plateau_patience");
  c.plateau_window = j.at("plateau_window");
  c.plateau_threshold = j.at("plateau_threshold");
  c.n_slices = j.at("n_slices");
  c.n_crops = j.at("n_crops");
  c.n_shuffles = j.at("n_shuffles");
  c.crop_size = j.at("crop_size");
  c.lambda_range = j.at("lambda_range");
  c.h_max = j.at("h_max");
  c.isotropic_ggx = j.at("isotropic_ggx");
  c.seed = j.at("seed");
  return c;
}

ArchiveEntry json_entry(const std::string& name, const json& j) {
  const std::string s = j.dump();
  std::vector<std::uint64_t> words(1 + (s.size() + 7) / 8, 0);
  words[0] = s.size();
  std::memcpy(words.data() + 1, s.data(), s.size());
  return ArchiveEntry::words(name, std::move(words));
}

json entry_json(const std::vector<ArchiveEntry>& es, const std::string& name) {
  const ArchiveEntry& e = find_entry(es, name);
  if (e.u64.empty()) throw std::runtime_error("checkpoint: empty " + name);
  const std::size_t len = e.u64[0];
  if (len > (e.u64.size() - 1) * 8)
    throw std::runtime_error("checkpoint: corrupt " + name);
  std::string s(len, '\0');
  std::memcpy(s.data(), e.u64.data() + 1, len);
  return json::parse(s);
}

}  // namespace

void save_checkpoint(const std::string& path, const TrainState& st) {
  std::vector<ArchiveEntry> es;
  json meta;
  meta["field_config"] = fcfg_to_json(st.fcfg);
  meta["train_config"] = tcfg_to_json(st.cfg);
  es.push_back(json_entry("meta.config", meta));
  es.push_back(ArchiveEntry::word("meta.iteration",
                                  static_cast<std::uint64_t>(st.iteration)));
  es.push_back(
      ArchiveEntry::words("meta.rng", {st.rng.seed(), st.rng.counter()}));
  es.push_back(ArchiveEntry::words(
      "meta.frame_dims", {static_cast<std::uint64_t>(st.frame_h),
                          static_cast<std::uint64_t>(st.frame_w)}));

  for (const auto& [name, p] : st.params.named())
    es.push_back(ArchiveEntry::tensor("param." + name, p));

  es.push_back(ArchiveEntry::word("opt.step",
                                  static_cast<std::uint64_t>(st.opt.step)));
  if (!st.opt.m.empty()) {
    const auto named = st.params.named();
    for (std::size_t i = 0; i < named.size(); ++i) {
      ArchiveEntry m, v;
      m.name = "opt.m." + named[i].first;
      m.shape = {static_cast<int>(st.opt.m[i].size())};
      m.f32 = st.opt.m[i];
      v.name = "opt.v." + named[i].first;
      v.shape = {static_cast<int>(st.opt.v[i].size())};
      v.f32 = st.opt.v[i];
      es.push_back(std::move(m));
      es.push_back(std::move(v));
    }
  }

  es.push_back(ArchiveEntry::words(
      "plateau.state",
      {dbits(st.plateau.lr), dbits(st.plateau.best),
       static_cast<std::uint64_t>(st.plateau.has_best ? 1 : 0),
       static_cast<std::uint64_t>(st.plateau.since_improvement),
       static_cast<std::uint64_t>(st.plateau.halvings)}));
  std::vector<std::uint64_t> win;
  for (double v : st.plateau.window) win.push_back(dbits(v));
  if (!win.empty()) es.push_back(ArchiveEntry::words("plateau.window", win));

  es.push_back(ArchiveEntry::word(
      "carried.valid", static_cast<std::uint64_t>(st.carried.valid ? 1 : 0)));
  if (st.carried.valid) {
    es.push_back(ArchiveEntry::tensor("carried.data", st.carried.data));
    es.push_back(ArchiveEntry::words(
        "carried.meta",
        {dbits(st.carried.t), static_cast<std::uint64_t>(st.carried.window.y0),
         static_cast<std::uint64_t>(st.carried.window.x0),
         static_cast<std::uint64_t>(st.carried.window.h),
         static_cast<std::uint64_t>(st.carried.window.w)}));
  }
  save_archive(path, es);
}

TrainState load_checkpoint(const std::string& path) {
  const auto es = load_archive(path);
  const json meta = entry_json(es, "meta.config");

  TrainState st;
  st.fcfg = fcfg_from_json(meta.at("field_config"));
  st.cfg = tcfg_from_json(meta.at("train_config"));
  st.fcfg.validate();

  Rng scratch(0);
  st.params = field::init_params(st.fcfg, scratch);
  auto named = st.params.named();
  for (auto& [name, p] : named) {
    const ArchiveEntry& e = find_entry(es, "param." + name);
    if (e.shape != p.shape() && !(p.shape().empty() && e.f32.size() == 1))
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    p.mutable_values() = e.f32;
  }

  st.opt.step = static_cast<long>(find_entry(es, "opt.step").u64.at(0));
  if (find_entry_opt(es, "opt.m." + named[0].first)) {
    st.opt.m.resize(named.size());
    st.opt.v.resize(named.size());
    for (std::size_t i = 0; i < named.size(); ++i) {
      st.opt.m[i] = find_entry(es, "opt.m." + named[i].first).f32;
      st.opt.v[i] = find_entry(es, "opt.v." + named[i].first).f32;
      if (st.opt.m[i].size() != named[i].second.size() ||
          st.opt.v[i].size() != named[i].second.size())
        throw std::runtime_error("checkpoint: moment size mismatch for " +
                                 named[i].first);
    }
  }

  const auto& pl = find_entry(es, "plateau.state").u64;
  st.plateau.lr = bitsd(pl.at(0));
  st.plateau.best = bitsd(pl.at(1));
  st.plateau.has_best = pl.at(2) != 0;
  st.plateau.since_improvement = static_cast<int>(pl.at(3));
  st.plateau.halvings = static_cast<int>(pl.at(4));
  if (const ArchiveEntry* w = find_entry_opt(es, "plateau.window"))
    for (std::uint64_t b : w->u64) st.plateau.window.push_back(bitsd(b));

  st.iteration = static_cast<int>(find_entry(es, "meta.iteration").u64.at(0));
  const auto& rw = find_entry(es, "meta.rng").u64;
  st.rng.set_state(rw.at(0), rw.at(1));
  const auto& fd = find_entry(es, "meta.frame_dims").u64;
  st.frame_h = static_cast<int>(fd.at(0));
  st.frame_w = static_cast<int>(fd.at(1));

  st.carried.valid = find_entry(es, "carried.valid").u64.at(0) != 0;
  if (st.carried.valid) {
    st.carried.data = find_entry(es, "carried.data").to_tensor();
    const auto& cm = find_entry(es, "carried.meta").u64;
    st.carried.t = bitsd(cm.at(0));
    st.carried.window = {static_cast<int>(cm.at(1)), static_cast<int>(cm.at(2)),
                         static_cast<int>(cm.at(3)),
                         static_cast<int>(cm.at(4))};
  }

  st.bank = loss::FeatureBank::builtin();
  if (st.fcfg.mode == field::Mode::kSvbrdf)
    st.geom = render::shading_geometry(st.frame_h, st.frame_w,
                                       render::kDefaultFov, {0.0, 0.0, 1.0});
  return st;
}

LoadedModel load_model(const std::string& path) {
  const auto es = load_archive(path);
  const json meta = entry_json(es, "meta.config");
  LoadedModel m;
  m.fcfg = fcfg_from_json(meta.at("field_config"));
  m.fcfg.validate();
  Rng scratch(0);
  m.params = field::init_params(m.fcfg, scratch);
  for (auto& [name, p] : m.params.named())
    p.mutable_values() = find_entry(es, "param." + name).f32;
  return m;
}

}  // namespace odetex::io
