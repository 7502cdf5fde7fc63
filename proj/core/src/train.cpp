#include "odetex/train.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace odetex::train {

using ad::Tensor;

void TrainConfig::validate() const {
  if (iterations < 0) throw std::invalid_argument("train: iterations < 0");
  // R = 1 degenerates to refreshing every iteration (no continuation strata).
  if (refresh_rate < 1) throw std::invalid_argument("train: refresh_rate < 1");
  if (!(lr > 0.0)) throw std::invalid_argument("train: lr must be positive");
  if (!(t_warm < t_first && t_first < t_last))
    throw std::invalid_argument("train: need t_warm < t_first < t_last");
  if (!(tol > 0.0)) throw std::invalid_argument("train: tol must be positive");
  if (plateau_window < 1 || plateau_patience < 1)
    throw std::invalid_argument("train: plateau settings must be >= 1");
  if (n_slices < 1 || n_crops < 1 || n_shuffles < 1)
    throw std::invalid_argument("train: sample counts must be >= 1");
}

TrainConfig rgb_defaults() {
  TrainConfig c;
  c.iterations = 50000;
  c.t_warm = -1.0;
  c.t_first = 0.0;
  c.t_last = 5.0;
  return c;
}

TrainConfig svbrdf_defaults() {
  TrainConfig c;
  c.iterations = 60000;
  c.init_phase_iterations = 20000;
  c.t_warm = -2.0;
  c.t_first = 0.0;
  c.t_last = 10.0;
  return c;
}

double sample_supervision_time(int k, double t_first, double t_last,
                               int refresh_rate, Rng& rng) {
  if (k < 1 || k >= refresh_rate)
    throw std::invalid_argument("sample_supervision_time: k out of range");
  const double span = (t_last - t_first) / (refresh_rate - 1);
  const double lo = t_first + (k - 1) * span;
  return rng.uniform(lo, lo + span);
}

bool adam_step(field::FieldParams& params, OptimizerState& opt, double lr) {
  auto named = params.named();
  if (opt.m.size() != named.size()) {
    opt.m.assign(named.size(), {});
    opt.v.assign(named.size(), {});
    for (std::size_t i = 0; i < named.size(); ++i) {
      opt.m[i].assign(named[i].second.size(), 0.0f);
      opt.v[i].assign(named[i].second.size(), 0.0f);
    }
  }
  for (auto& [name, p] : named) {
    if (!p.has_grad()) continue;
    for (float g : p.grad())
      if (!std::isfinite(g)) return false;
  }
  opt.step += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  for (std::size_t i = 0; i < named.size(); ++i) {
    Tensor& p = named[i].second;
    std::vector<float>& val = p.mutable_values();
    std::vector<float>& m = opt.m[i];
    std::vector<float>& v = opt.v[i];
    const bool has_g = p.has_grad();
    for (std::size_t j = 0; j < val.size(); ++j) {
      const double g = has_g ? p.grad()[j] : 0.0;
      m[j] = static_cast<float>(opt.beta1 * m[j] + (1.0 - opt.beta1) * g);
      v[j] = static_cast<float>(opt.beta2 * v[j] + (1.0 - opt.beta2) * g * g);
      const double mh = m[j] / bc1;
      const double vh = v[j] / bc2;
      val[j] -= static_cast<float>(lr * mh / (std::sqrt(vh) + opt.eps));
    }
    if (named[i].first == "intensity")
      for (float& x : val) x = std::max(x, 1e-4f);
  }
  return true;
}

bool plateau_update(PlateauState& plateau, double loss_value, int patience,
                    int window, double threshold) {
  plateau.window.push_back(loss_value);
  if (static_cast<int>(plateau.window.size()) > window)
    plateau.window.pop_front();
  const double smoothed =
      std::accumulate(plateau.window.begin(), plateau.window.end(), 0.0) /
      plateau.window.size();
  if (!plateau.has_best || smoothed < plateau.best * (1.0 - threshold)) {
    plateau.best = smoothed;
    plateau.has_best = true;
    plateau.since_improvement = 0;
    return false;
  }
  if (++plateau.since_improvement >= patience) {
    plateau.lr *= 0.5;
    plateau.halvings += 1;
    plateau.since_improvement = 0;
    return true;
  }
  return false;
}

namespace {

int auto_crop_size(const TrainConfig& cfg, const field::FieldConfig& fcfg,
                   const Exemplar& ex) {
  if (cfg.crop_size > 0) {
    if (cfg.crop_size % fcfg.down_factor() != 0)
      throw std::invalid_argument(
          "train: crop_size must be divisible by the net's down factor");
    if (cfg.crop_size > std::min(ex.height(), ex.width()))
      throw std::invalid_argument("train: crop_size exceeds the frame");
    return cfg.crop_size;
  }
  const int df = fcfg.down_factor();
  int cs = std::min(ex.height(), ex.width()) / 4;
  cs -= cs % df;
  return std::max(cs, df);
}

std::vector<int> window_indices(const loss::CropWindow& win, int frame_w) {
  std::vector<int> idx(static_cast<std::size_t>(win.h) * win.w);
  for (int y = 0; y < win.h; ++y)
    for (int x = 0; x < win.w; ++x)
      idx[y * win.w + x] = (win.y0 + y) * frame_w + (win.x0 + x);
  return idx;
}

const std::vector<Tensor>& target_features(TrainState& st, const Exemplar& ex,
                                           int frame_idx) {
  auto it = st.target_feature_cache.find(frame_idx);
  if (it != st.target_feature_cache.end()) return it->second;
  ad::NoGradGuard ng;
  auto feats = loss::extract_features(ex.frames[frame_idx], st.bank);
  return st.target_feature_cache.emplace(frame_idx, std::move(feats))
      .first->second;
}

}  // namespace

TrainState make_train_state(const TrainConfig& cfg,
                            const field::FieldConfig& fcfg,
                            const Exemplar& exemplar) {
  cfg.validate();
  fcfg.validate();
  exemplar.validate();
  if (fcfg.mode != exemplar.mode)
    throw std::invalid_argument("train: net mode != exemplar mode");
  if (fcfg.mode == field::Mode::kRgb &&
      (exemplar.height() % fcfg.down_factor() != 0 ||
       exemplar.width() % fcfg.down_factor() != 0))
    throw std::invalid_argument(
        "train: frame size must be divisible by the net's down factor");
  TrainState st;
  st.cfg = cfg;
  st.fcfg = fcfg;
  st.rng = Rng(cfg.seed);
  st.params = field::init_params(fcfg, st.rng);
  st.plateau.lr = cfg.lr;
  st.bank = loss::FeatureBank::builtin();
  st.frame_h = exemplar.height();
  st.frame_w = exemplar.width();
  if (fcfg.mode == field::Mode::kSvbrdf)
    st.geom = render::shading_geometry(exemplar.height(), exemplar.width(),
                                       render::kDefaultFov, {0.0, 0.0, 1.0});
  return st;
}

IterationRecord train_iteration(TrainState& st, const Exemplar& exemplar) {
  const auto t_start = std::chrono::steady_clock::now();
  const TrainConfig& cfg = st.cfg;
  const bool svbrdf = st.fcfg.mode == field::Mode::kSvbrdf;

  IterationRecord rec;
  rec.iteration = st.iteration;
  rec.lr = st.plateau.lr;

  const int k = st.iteration % cfg.refresh_rate;
  const bool refresh = (k == 0) || !st.carried.valid;
  rec.refresh = refresh;

  Tensor z0;
  double t0 = 0.0, t_target = 0.0;
  loss::CropWindow window = st.carried.window;
  if (refresh) {
    t0 = cfg.t_warm;
    t_target = cfg.t_first;
    int h = exemplar.height(), w = exemplar.width();
    if (svbrdf) {
      const int cs = auto_crop_size(cfg, st.fcfg, exemplar);
      window = {static_cast<int>(st.rng.below(h - cs + 1)),
                static_cast<int>(st.rng.below(w - cs + 1)), cs, cs};
      h = w = cs;
    }
    z0 = latent::sample_initial_state(st.rng, st.fcfg.mode, h, w).data;
  } else {
    t0 = st.carried.t;
    t_target = sample_supervision_time(k, cfg.t_first, cfg.t_last,
                                       cfg.refresh_rate, st.rng);
    if (t_target <= t0) t_target = t0 + 1e-9;
    z0 = st.carried.data;
  }

  const ode::Field field = field::make_field(st.params, st.fcfg);
  ode::SolveStats stats;
  Tensor z1;
  try {
    z1 = ode::solve_adaptive(field, z0, t0, t_target, cfg.tol, &stats);
  } catch (const ode::StiffnessError&) {
    st.carried.valid = false;
    st.report.stiff_events += 1;
    rec.stiff_abort = true;
    st.iteration += 1;
    st.report.records.push_back(rec);
    return rec;
  }
  rec.nfe = stats.nfe;
  for (const auto& [t_mid, density] : stats.steps_per_unit_time)
    (t_mid < cfg.t_first ? st.report.warmup_density
                         : st.report.generation_density)
        .push_back(density);

  const int frame_idx =
      refresh ? 0 : nearest_frame(exemplar.times, t_target);
  const latent::LatentState z1s{z1, st.fcfg.mode};

  for (auto& [name, p] : st.params.named()) p.zero_grad();

  Tensor total;
  if (!svbrdf) {
    Tensor img = latent::project_rgb(z1s);
    auto fa = loss::extract_features(img, st.bank);
    const auto& fb = target_features(st, exemplar, frame_idx);
    total = loss::swd(fa, fb, cfg.n_slices, st.rng);
  } else {
    const Tensor& frame = exemplar.frames[frame_idx];
    if (st.iteration < cfg.init_phase_iterations) {
      render::ShadingGeometry cgeom = render::crop_geometry(
          *st.geom, window.y0, window.x0, window.h, window.w);
      Tensor target_win;
      {
        ad::NoGradGuard ng;
        target_win = gather_spatial(
            frame, window_indices(window, exemplar.width()), window.h,
            window.w);
      }
      total = loss::shuffle_init_loss(z1s, target_win, cgeom,
                                      st.params.intensity, st.rng,
                                      cfg.n_shuffles, cfg.isotropic_ggx);
    } else {
      total = loss::crop_loss(z1s, window, frame, *st.geom,
                              st.params.intensity, st.bank, st.rng,
                              cfg.n_crops, cfg.n_slices, cfg.isotropic_ggx);
    }
  }
  total = add(total, loss::range_penalty(z1s, cfg.lambda_range, cfg.h_max));
  rec.loss = total.item();

  ad::backward(total);
  if (!adam_step(st.params, st.opt, st.plateau.lr)) {
    rec.skipped_update = true;
    st.report.skipped_updates += 1;
  }
  if (plateau_update(st.plateau, rec.loss, cfg.plateau_patience,
                     cfg.plateau_window, cfg.plateau_threshold))
    st.report.lr_halvings += 1;
  rec.lr = st.plateau.lr;

  st.carried.valid = true;
  st.carried.data = z1.detach();
  st.carried.t = t_target;
  st.carried.window = window;

  rec.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t_start)
                    .count();
  st.iteration += 1;
  st.report.records.push_back(rec);
  return rec;
}

void train(TrainState& st, const Exemplar& exemplar,
           const IterationCallback& on_iteration) {
  while (st.iteration < st.cfg.iterations) {
    IterationRecord rec = train_iteration(st, exemplar);
    if (on_iteration) on_iteration(st, rec);
  }
}

}  // namespace odetex::train
