#include <doctest.h>

#include <cmath>
#include <vector>

#include "odetex/ode.hpp"

using namespace odetex;
using ad::Tensor;

namespace {

// Classic RK4 with a fixed fine grid, used as an independent oracle.
double rk4_scalar(const std::function<double(double, double)>& f, double z0,
                  double t0, double t1, int steps) {
  double z = z0, t = t0;
  const double h = (t1 - t0) / steps;
  for (int i = 0; i < steps; ++i) {
    const double k1 = f(z, t);
    const double k2 = f(z + 0.5 * h * k1, t + 0.5 * h);
    const double k3 = f(z + 0.5 * h * k2, t + 0.5 * h);
    const double k4 = f(z + h * k3, t + h);
    z += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    t += h;
  }
  return z;
}

ode::Field scalar_field(const std::function<double(double, double)>& f) {
  return [f](const Tensor& z, double t) {
    return Tensor::constant({1}, {static_cast<float>(f(z.values()[0], t))});
  };
}

// Fixed-step Heun integration (accept every trial step).
double heun_fixed(const ode::Field& field, double z0, double t0, double t1,
                  int steps) {
  Tensor z = Tensor::constant({1}, {static_cast<float>(z0)});
  const double h = (t1 - t0) / steps;
  for (int i = 0; i < steps; ++i)
    z = ode::heun_step(field, z, t0 + i * h, h, 1.0, 1.0).first;
  return z.values()[0];
}

}  // namespace

TEST_CASE("heun_step anchors") {
  // dz/dt = z, z=1, dt=0.1 -> 1 + 0.1 + 0.1^2/2 = 1.105
  auto growth = scalar_field([](double z, double) { return z; });
  auto [z1, err] = ode::heun_step(growth, Tensor::constant({1}, {1.0f}), 0.0,
                                  0.1, 1e-3, 1e-3);
  CHECK(z1.values()[0] == doctest::Approx(1.105).epsilon(1e-6));
  CHECK(err > 0.0);

  // dz/dt = 0: exact, zero error estimate.
  auto zero = scalar_field([](double, double) { return 0.0; });
  auto [z2, err2] = ode::heun_step(zero, Tensor::constant({1}, {2.5f}), 0.0,
                                   0.5, 1e-6, 1e-6);
  CHECK(z2.values()[0] == 2.5f);
  CHECK(err2 == 0.0);

  // dz/dt = 1: also exact for a trapezoidal step.
  auto drift = scalar_field([](double, double) { return 1.0; });
  auto [z3, err3] = ode::heun_step(drift, Tensor::constant({1}, {0.0f}), 0.0,
                                   0.5, 1e-6, 1e-6);
  CHECK(z3.values()[0] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(err3 == doctest::Approx(0.0));
}

TEST_CASE("fixed-step order: halving dt divides the error by about 4") {
  auto f = scalar_field([](double z, double t) { return std::sin(t) - 0.5 * z; });
  const double exact = rk4_scalar(
      [](double z, double t) { return std::sin(t) - 0.5 * z; }, 1.0, 0.0, 2.0,
      20000);
  const double e1 = std::abs(heun_fixed(f, 1.0, 0.0, 2.0, 40) - exact);
  const double e2 = std::abs(heun_fixed(f, 1.0, 0.0, 2.0, 80) - exact);
  const double ratio = e1 / e2;
  CHECK(ratio > 3.4);
  CHECK(ratio < 4.6);
}

TEST_CASE("adaptive solve hits e for exponential growth") {
  auto growth = scalar_field([](double z, double) { return z; });
  ode::SolveStats stats;
  Tensor z1 = ode::solve_adaptive(growth, Tensor::constant({1}, {1.0f}), 0.0,
                                  1.0, 1e-4, &stats);
  CHECK(std::abs(z1.values()[0] - std::exp(1.0)) < 1e-3);
  CHECK(stats.accepted_steps >= 1);
  CHECK(stats.nfe == 2 * (stats.accepted_steps + stats.rejected_steps));
  CHECK(stats.steps_per_unit_time.size() ==
        static_cast<std::size_t>(stats.accepted_steps));
}

TEST_CASE("adaptive solve of a zero field is exact and cheap") {
  auto zero = [](const Tensor& z, double) {
    return ad::mul_scalar(z, 0.0f);
  };
  Tensor z0 = Tensor::constant({3}, {1.0f, -2.0f, 0.25f});
  ode::SolveStats stats;
  Tensor z1 = ode::solve_adaptive(zero, z0, -1.0, 0.0, 1e-2, &stats);
  CHECK(z1.values() == z0.values());
  CHECK(stats.rejected_steps == 0);
}

TEST_CASE("adaptive solve matches a fine RK4 oracle") {
  auto f = [](double z, double t) { return -std::sin(t) * z; };
  const double oracle = rk4_scalar(f, 1.0, 0.0, 3.14159265358979, 20000);
  for (double tol : {1e-3, 1e-4, 1e-5}) {
    Tensor z1 = ode::solve_adaptive(scalar_field(f),
                                    Tensor::constant({1}, {1.0f}), 0.0,
                                    3.14159265358979, tol);
    CHECK(std::abs(z1.values()[0] - oracle) < 10 * tol);
  }
}

TEST_CASE("tighter tolerance means more accepted steps") {
  auto f = scalar_field([](double z, double t) { return std::cos(3 * t) * z; });
  ode::SolveStats loose, tight;
  ode::solve_adaptive(f, Tensor::constant({1}, {1.0f}), 0.0, 2.0, 1e-2, &loose);
  ode::solve_adaptive(f, Tensor::constant({1}, {1.0f}), 0.0, 2.0, 1e-5, &tight);
  CHECK(tight.accepted_steps > loose.accepted_steps);
}

TEST_CASE("dense output equals chained segment solves") {
  auto f = scalar_field([](double z, double t) { return 0.3 * z + std::sin(t); });
  const double tol = 1e-4;
  const std::vector<double> samples{0.5, 1.25, 2.0};
  ode::Trajectory traj = ode::solve_dense(f, Tensor::constant({1}, {1.0f}),
                                          0.0, samples, tol);
  REQUIRE(traj.states.size() == 3);
  CHECK(traj.times == samples);

  Tensor z = Tensor::constant({1}, {1.0f});
  double t = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    z = ode::solve_adaptive(f, z, t, samples[i], tol);
    t = samples[i];
    CHECK(std::abs(z.values()[0] - traj.states[i].values()[0]) <= 2 * tol);
  }

  // Zero field: all snapshots identical to the initial state.
  auto zero = scalar_field([](double, double) { return 0.0; });
  ode::Trajectory flat = ode::solve_dense(zero, Tensor::constant({1}, {0.75f}),
                                          0.0, {1.0, 2.0, 3.0}, 1e-2);
  for (const auto& s : flat.states) CHECK(s.values()[0] == 0.75f);
}

TEST_CASE("solve_dense rejects non-increasing sample times") {
  auto zero = scalar_field([](double, double) { return 0.0; });
  CHECK_THROWS(ode::solve_dense(zero, Tensor::constant({1}, {0.0f}), 0.0,
                                {1.0, 0.5}, 1e-2));
}

TEST_CASE("gradients flow through the solver") {
  // dz/dt = a*z solved over [0,1]: dz1/da = a-exp(a) sensitivity e^a at a=0.7.
  Tensor a = Tensor::param({1}, {0.7f});
  ode::Field f = [&a](const Tensor& z, double) { return ad::scale_by(z, a); };
  const double tol = 1e-4;

  Tensor z1 = ode::solve_adaptive(f, Tensor::constant({1}, {1.0f}), 0.0, 1.0,
                                  tol);
  ad::backward(ad::sum_all(z1));
  const double analytic = a.grad()[0];

  const double h = 1e-3;
  auto value_at = [&](float av) {
    Tensor ap = Tensor::constant({1}, {av});
    ode::Field ff = [&ap](const Tensor& z, double) {
      return ad::scale_by(z, ap);
    };
    ad::NoGradGuard ng;
    return double(ode::solve_adaptive(ff, Tensor::constant({1}, {1.0f}), 0.0,
                                      1.0, tol)
                      .values()[0]);
  };
  const double fd = (value_at(0.7f + h) - value_at(0.7f - h)) / (2 * h);
  CHECK(std::abs(analytic - fd) / std::max(1.0, std::abs(fd)) < 1e-2);
  // sanity: both near d/da exp(a) = exp(0.7)
  CHECK(analytic == doctest::Approx(std::exp(0.7)).epsilon(0.02));
}

TEST_CASE("finite-time blow-up raises StiffnessError") {
  // dz/dt = z^2 from z0=5 escapes at t=0.2; the solver must not hang.
  auto f = [](const Tensor& z, double) { return ad::mul(z, z); };
  CHECK_THROWS_AS(
      ode::solve_adaptive(f, Tensor::constant({1}, {5.0f}), 0.0, 1.0, 1e-3),
      ode::StiffnessError);

  // A field that returns NaN must be rejected the same way.
  auto bad = [](const Tensor& z, double) {
    return ad::mul_scalar(z, std::numeric_limits<float>::quiet_NaN());
  };
  try {
    ode::solve_adaptive(bad, Tensor::constant({1}, {1.0f}), 0.0, 1.0, 1e-3);
    FAIL("expected StiffnessError");
  } catch (const ode::StiffnessError& e) {
    CHECK(e.t_reached() == doctest::Approx(0.0));
  }
}

TEST_CASE("step density log covers the integration window") {
  auto f = scalar_field([](double z, double t) { return std::sin(5 * t) * z; });
  ode::SolveStats stats;
  ode::solve_adaptive(f, Tensor::constant({1}, {1.0f}), -1.0, 2.0, 1e-4,
                      &stats);
  REQUIRE(!stats.steps_per_unit_time.empty());
  for (const auto& [tm, dens] : stats.steps_per_unit_time) {
    CHECK(tm >= -1.0);
    CHECK(tm <= 2.0);
    CHECK(dens > 0.0);
  }
}
