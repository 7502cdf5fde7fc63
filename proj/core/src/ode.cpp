#include "odetex/ode.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace odetex::ode {

namespace {

constexpr double kSafety = 0.9;
constexpr double kMinFactor = 0.2;
constexpr double kMaxFactor = 5.0;
constexpr double kInitialDtFraction = 1.0 / 50.0;
constexpr double kMinDtFraction = 1e-7;

void check_finite(const ad::Tensor& k, double t) {
  for (float v : k.values()) {
    if (!std::isfinite(v))
      throw StiffnessError(
          "field returned a non-finite value at t=" + std::to_string(t) +
              " (stiffness or overflow)",
          t);
  }
}

}  // namespace

void SolveStats::merge(const SolveStats& other) {
  accepted_steps += other.accepted_steps;
  rejected_steps += other.rejected_steps;
  nfe += other.nfe;
  steps_per_unit_time.insert(steps_per_unit_time.end(),
                             other.steps_per_unit_time.begin(),
                             other.steps_per_unit_time.end());
}

std::pair<ad::Tensor, double> heun_step(const Field& field, const ad::Tensor& z,
                                        double t, double dt, double atol,
                                        double rtol) {
  if (dt <= 0.0) throw std::invalid_argument("heun_step: dt must be positive");
  ad::Tensor k1 = field(z, t);
  check_finite(k1, t);
  ad::Tensor z_pred = add(z, mul_scalar(k1, static_cast<float>(dt)));
  ad::Tensor k2 = field(z_pred, t + dt);
  check_finite(k2, t + dt);
  ad::Tensor z_trial = add(
      z, mul_scalar(add(k1, k2), static_cast<float>(0.5 * dt)));

  const auto& v1 = k1.values();
  const auto& v2 = k2.values();
  const auto& zv = z.values();
  double err = 0.0;
  for (std::size_t i = 0; i < v1.size(); ++i) {
    const double e = 0.5 * dt * std::abs(static_cast<double>(v2[i]) - v1[i]);
    const double scale = atol + rtol * std::abs(static_cast<double>(zv[i]));
    err = std::max(err, e / scale);
  }
  return {z_trial, err};
}

ad::Tensor solve_adaptive(const Field& field, const ad::Tensor& z0, double t0,
                          double t1, double tol, SolveStats* stats) {
  if (!(t1 > t0)) throw std::invalid_argument("solve_adaptive: need t1 > t0");
  if (!(tol > 0.0)) throw std::invalid_argument("solve_adaptive: need tol > 0");
  const double span = t1 - t0;
  const double t_eps = 1e-12 * (std::abs(t0) + std::abs(t1) + 1.0);
  SolveStats local;
  ad::Tensor z = z0;
  double t = t0;
  double dt = span * kInitialDtFraction;
  while (t < t1 - t_eps) {
    const bool clipped = dt >= t1 - t;
    const double dt_used = clipped ? t1 - t : dt;
    auto [z_trial, err] = heun_step(field, z, t, dt_used, tol, tol);
    local.nfe += 2;
    if (err <= 1.0) {
      local.accepted_steps += 1;
      local.steps_per_unit_time.emplace_back(t + 0.5 * dt_used, 1.0 / dt_used);
      t += dt_used;
      z = z_trial;
    } else {
      local.rejected_steps += 1;
    }
    const double factor =
        err > 0.0
            ? std::clamp(kSafety * std::pow(err, -1.0 / 3.0), kMinFactor,
                         kMaxFactor)
            : kMaxFactor;
    dt = dt_used * factor;
    if (dt < kMinDtFraction * span)
      throw StiffnessError("solve_adaptive: step size underflow at t=" +
                               std::to_string(t),
                           t);
  }
  if (stats) stats->merge(local);
  return z;
}

Trajectory solve_dense(const Field& field, const ad::Tensor& z0, double t0,
                       const std::vector<double>& sample_times, double tol,
                       SolveStats* stats) {
  for (std::size_t i = 0; i < sample_times.size(); ++i) {
    if (sample_times[i] < t0)
      throw std::invalid_argument("solve_dense: sample time before t0");
    if (i > 0 && sample_times[i] < sample_times[i - 1])
      throw std::invalid_argument("solve_dense: sample times must increase");
  }
  Trajectory traj;
  ad::Tensor z = z0;
  double t = t0;
  const double t_eps = 1e-12 * (std::abs(t0) + 1.0 +
                                (sample_times.empty()
                                     ? 0.0
                                     : std::abs(sample_times.back())));
  for (double ts : sample_times) {
    if (ts > t + t_eps) {
      z = solve_adaptive(field, z, t, ts, tol, stats);
      t = ts;
    }
    traj.times.push_back(ts);
    traj.states.push_back(z);
  }
  return traj;
}

}  // namespace odetex::ode
