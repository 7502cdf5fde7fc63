#pragma once

#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "odetex/tensor.hpp"

namespace odetex::ode {

// Vector field dz/dt = f(z, t); must be reentrant.
using Field = std::function<ad::Tensor(const ad::Tensor&, double)>;

struct SolveStats {
  long accepted_steps = 0;
  long rejected_steps = 0;
  long nfe = 0;
  // (midpoint time of accepted step, local step density 1/dt)
  std::vector<std::pair<double, double>> steps_per_unit_time;

  void merge(const SolveStats& other);
};

struct Trajectory {
  std::vector<double> times;
  std::vector<ad::Tensor> states;
};

// Raised on step underflow or a non-finite field evaluation.
class StiffnessError : public std::runtime_error {
 public:
  StiffnessError(const std::string& msg, double t_reached)
      : std::runtime_error(msg), t_reached_(t_reached) {}
  double t_reached() const { return t_reached_; }

 private:
  double t_reached_;
};

// One explicit trapezoidal (Heun) trial step. err is the max-norm of the
// embedded Euler/Heun difference scaled componentwise by atol + rtol*|z|;
// err <= 1 means acceptable.
std::pair<ad::Tensor, double> heun_step(const Field& field, const ad::Tensor& z,
                                        double t, double dt, double atol,
                                        double rtol);

// Adaptive solve over [t0, t1] with atol = rtol = tol. The returned state
// stays connected to z0 and the field parameters through accepted steps only.
ad::Tensor solve_adaptive(const Field& field, const ad::Tensor& z0, double t0,
                          double t1, double tol, SolveStats* stats = nullptr);

// Chained adaptive solves snapshotting the state at each sample time.
Trajectory solve_dense(const Field& field, const ad::Tensor& z0, double t0,
                       const std::vector<double>& sample_times, double tol,
                       SolveStats* stats = nullptr);

}  // namespace odetex::ode
