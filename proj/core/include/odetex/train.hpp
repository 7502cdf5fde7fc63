#pragma once

#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <vector>

#include "odetex/exemplar.hpp"
#include "odetex/field.hpp"
#include "odetex/latent.hpp"
#include "odetex/loss.hpp"
#include "odetex/ode.hpp"
#include "odetex/rng.hpp"

namespace odetex::train {

struct TrainConfig {
  int iterations = 50000;
  int refresh_rate = 6;      // cycle length R: 1 refresh + R-1 continuations
  double lr = 5e-4;
  double t_warm = -1.0;      // noise-side start of the warm-up interval
  double t_first = 0.0;      // time of the first exemplar frame
  double t_last = 5.0;       // end of the supervised range
  double tol = 1e-2;
  int init_phase_iterations = 0;  // svBRDF: pixel-shuffle phase length
  int plateau_patience = 2500;
  int plateau_window = 100;
  double plateau_threshold = 0.01;  // relative improvement to reset patience
  int n_slices = 64;
  int n_crops = 36;
  int n_shuffles = 36;
  int crop_size = 0;  // svBRDF crop side; 0 = auto (~1/4 of the frame)
  float lambda_range = 0.1f;
  float h_max = 3.0f;
  bool isotropic_ggx = false;
  std::uint64_t seed = 0;

  void validate() const;
};

TrainConfig rgb_defaults();
TrainConfig svbrdf_defaults();

struct OptimizerState {
  std::vector<std::vector<float>> m, v;  // aligned with FieldParams::named()
  long step = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

struct PlateauState {
  double lr = 0.0;
  double best = 0.0;
  bool has_best = false;
  int since_improvement = 0;
  std::deque<double> window;
  int halvings = 0;
};

// Latest solved state, reused as the initial condition of the next
// continuation iteration within a cycle.
struct CarriedState {
  bool valid = false;
  ad::Tensor data;  // detached
  double t = 0.0;
  loss::CropWindow window;  // svBRDF only
};

struct IterationRecord {
  int iteration = 0;
  double loss = 0.0;
  double lr = 0.0;
  long nfe = 0;
  double wall_ms = 0.0;
  bool refresh = false;
  bool stiff_abort = false;
  bool skipped_update = false;  // non-finite adjoints
};

struct TrainReport {
  std::vector<IterationRecord> records;
  long stiff_events = 0;
  long skipped_updates = 0;
  int lr_halvings = 0;
  // Accepted-step density samples split by the supervision time they fall in.
  std::vector<double> warmup_density, generation_density;
};

struct TrainState {
  TrainConfig cfg;
  field::FieldConfig fcfg;
  field::FieldParams params;
  OptimizerState opt;
  PlateauState plateau;
  CarriedState carried;
  Rng rng;
  loss::FeatureBank bank;
  std::optional<render::ShadingGeometry> geom;  // full-frame, svBRDF only
  int frame_h = 0, frame_w = 0;
  int iteration = 0;
  TrainReport report;
  // Target feature cache (RGB mode; frames are constant across training).
  std::map<int, std::vector<ad::Tensor>> target_feature_cache;
};

// Supervision time for cycle position k in 1..R-1: uniform within the k-th
// of R-1 equal strata spanning [t_first, t_last].
double sample_supervision_time(int k, double t_first, double t_last,
                               int refresh_rate, Rng& rng);

// One Adam update over the named parameters. Returns false (and leaves the
// parameters untouched) if any adjoint is non-finite. Keeps the intensity
// parameter strictly positive.
bool adam_step(field::FieldParams& params, OptimizerState& opt, double lr);

// Running-mean plateau detector; halves plateau.lr when the smoothed loss
// fails to improve by `threshold` for `patience` consecutive iterations.
// Returns true iff the rate was halved on this call.
bool plateau_update(PlateauState& plateau, double loss_value, int patience,
                    int window, double threshold);

TrainState make_train_state(const TrainConfig& cfg,
                            const field::FieldConfig& fcfg,
                            const Exemplar& exemplar);

// One pass of the online training loop: pick the cycle position, solve the
// flow to the supervision time, evaluate the phase loss, update parameters.
IterationRecord train_iteration(TrainState& st, const Exemplar& exemplar);

using IterationCallback = std::function<void(const TrainState&,
                                             const IterationRecord&)>;

// Runs cfg.iterations iterations (from st.iteration onwards).
void train(TrainState& st, const Exemplar& exemplar,
           const IterationCallback& on_iteration = nullptr);

}  // namespace odetex::train
