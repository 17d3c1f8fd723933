#pragma once

// Ready-made experiment setups: the seeker benchmark wired into the harness,
// and small solvable test systems used as oracles.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "spavg/averaging.hpp"
#include "spavg/harness.hpp"
#include "spavg/numkit.hpp"
#include "spavg/seeker.hpp"
#include "spavg/so3.hpp"
#include "spavg/system.hpp"

namespace spavg::experiments {

using seeker::FrameConvention;
using seeker::ScalarField;
using seeker::SeekerConfig;
using so3::Rotation;
using so3::Vector3;

// ---------------------------------------------------------------------------
// Seeker

/// Quasi-steady value [c(p), c(p)] of the filter state for x = (p, q).
inline Vector seeker_phi0(const ScalarField& field, const Vector& x) {
  const double c = field.c(x.head<3>());
  return Eigen::Vector2d(c, c);
}

/// c at the vehicle center, V_c and the frame residual, on the full 14-state.
inline std::vector<harness::NamedSeries> seeker_series(const ScalarField& field) {
  const double c_star = field.c(field.p_star);
  return {
      {"c_at_center", [field](double, const Vector& s) { return field.c(s.segment<3>(seeker::kP)); }},
      {"V_c", [field, c_star](double, const Vector& s) { return c_star - field.c(s.segment<3>(seeker::kP)); }},
      {"manifold_residual",
       [](double, const Vector& s) { return so3::manifold_residual(s.segment<9>(seeker::kQ)); }},
  };
}

inline harness::FullModel seeker_full_model(const SeekerConfig& cfg, const ScalarField& field) {
  cfg.validate();
  harness::FullModel model;
  model.n = seeker::kAveragedSize;
  model.m = 2;
  const auto f = seeker::seeker_field(cfg, field);
  model.field = [f](double t, const Vector& s) { return f(t, s); };
  model.phi0 = [field](const Vector& x) { return seeker_phi0(field, x); };
  model.dt = cfg.dt();
  if (cfg.projection) model.post_step = seeker::projection_options(true).post_step;
  model.A = Matrix(seeker::filter_A());
  model.series = seeker_series(field);
  return model;
}

inline harness::AveragedModel seeker_averaged_model(const ScalarField& field, FrameConvention conv,
                                                    double dt, bool projection = true) {
  harness::AveragedModel model;
  model.averaged = AveragedSystem::closed_form(seeker::averaged_seeker_field(field, conv));
  model.dt = dt;
  if (projection) model.post_step = [](Vector& s) { so3::project_frame(s.segment<9>(3)); };
  return model;
}

struct SeekerExperiment {
  SeekerConfig cfg;
  ScalarField field;
  Vector3 p0 = Vector3(6.0, 2.0, -2.0);
  Rotation r0;
  double averaged_dt = 1e-3;
};

inline harness::CompareSetup seeker_compare_setup(const SeekerExperiment& ex) {
  const auto init = seeker::initial_state(ex.cfg, ex.field, ex.p0, ex.r0);
  harness::CompareSetup setup;
  setup.full = seeker_full_model(ex.cfg, ex.field);
  setup.averaged = seeker_averaged_model(ex.field, ex.cfg.frame, ex.averaged_dt, ex.cfg.projection);
  setup.x0 = init.to_vector().head(seeker::kAveragedSize);
  setup.y0 = init.y;
  return setup;
}

/// Same experiment at each frequency of a sweep.
inline harness::SetupBuilder seeker_sweep_builder(const SeekerExperiment& ex) {
  return [ex](double omega) {
    SeekerExperiment at = ex;
    at.cfg.omega = omega;
    return seeker_compare_setup(at);
  };
}

/// The seeker's set S = {p*} x SO(3): distance |p - p*|, panels on the
/// delta-shell around p* with aligned frame.
inline std::function<Vector(double, int)> seeker_panel(const ScalarField& field) {
  return [p_star = field.p_star](double delta, int k) -> Vector {
    Vector x(seeker::kAveragedSize);
    x << p_star + delta * harness::shell_direction(k), so3::embed(Rotation::identity());
    return x;
  };
}

/// Probe of the averaged seeker; omega plays no role.
inline harness::ProbeProblem averaged_seeker_probe(const ScalarField& field, FrameConvention conv,
                                                   double dt = 1e-2, std::size_t stride = 10) {
  harness::ProbeProblem problem;
  problem.omega_free = true;
  problem.panel_point = seeker_panel(field);
  const auto f = seeker::averaged_seeker_field(field, conv);
  problem.run = [f, field, dt, stride](const Vector& x0, double, double, double t0, double horizon) {
    harness::ProbeTrace tr;
    Rk4Options opt;
    opt.stride = stride;
    opt.post_step = [](Vector& s) { so3::project_frame(s.segment<9>(3)); };
    try {
      const auto traj = integrate_rk4([&f](double, const Vector& s) { return f(s); }, x0,
                                      TimeGrid::covering(t0, horizon, dt), opt);
      for (std::size_t i = 0; i < traj.size(); ++i) {
        tr.t.push_back(traj.t[i]);
        tr.dist_x.push_back((traj.x[i].head<3>() - field.p_star).norm());
        tr.z_norm.push_back(0.0);
      }
    } catch (const DivergenceError&) {
      tr.diverged = true;
    }
    return tr;
  };
  return problem;
}

/// Probe of the full seeker. Samples once per fast period.
inline harness::ProbeProblem full_seeker_probe(const SeekerConfig& base, const ScalarField& field) {
  base.validate();
  harness::ProbeProblem problem;
  problem.omega_free = false;
  problem.period = 2.0 * M_PI;
  problem.panel_point = seeker_panel(field);
  problem.run = [base, field](const Vector& x0, double delta_z, double omega, double t0,
                              double horizon) {
    SeekerConfig cfg = base;
    cfg.omega = omega;
    harness::ProbeTrace tr;
    Vector s0(seeker::kStateSize);
    s0 << x0, seeker_phi0(field, x0) + delta_z * Eigen::Vector2d(1.0, 1.0).normalized();
    try {
      const auto traj = integrate_rk4(seeker::seeker_field(cfg, field), s0,
                                      TimeGrid::covering(t0, horizon, cfg.dt()),
                                      seeker::projection_options(cfg.projection,
                                                                 static_cast<std::size_t>(cfg.steps_per_fast_period)));
      for (std::size_t i = 0; i < traj.size(); ++i) {
        const Vector x = traj.x[i].head(seeker::kAveragedSize);
        tr.t.push_back(traj.t[i]);
        tr.dist_x.push_back((x.head<3>() - field.p_star).norm());
        tr.z_norm.push_back((traj.x[i].tail<2>() - seeker_phi0(field, x)).norm());
      }
    } catch (const DivergenceError&) {
      tr.diverged = true;
    }
    return tr;
  };
  return problem;
}

// ---------------------------------------------------------------------------
// Solvable test systems

/// x' = -y + sin(tau), y' = w (x - y): phi0 = x, no first-order terms, and the
/// averaged field is x' = -x. The averaging error is O(1/w).
inline OscillatorySystemSpec linear_test_spec() {
  OscillatorySystemSpec spec;
  spec.n = 1;
  spec.m = 1;
  spec.T = 2.0 * M_PI;
  spec.A = Matrix::Constant(1, 1, -1.0);
  spec.f2 = [](const Vector&, const Vector& y, double tau) -> Vector {
    return Vector::Constant(1, -y[0] + std::sin(tau));
  };
  spec.phi0 = [](const Vector& x) -> Vector { return x; };
  return spec;
}

inline harness::SetupBuilder linear_test_builder(double averaged_dt = 1e-3) {
  return [averaged_dt](double omega) {
    const auto spec = linear_test_spec();
    harness::CompareSetup setup;
    setup.full = harness::make_full_model(spec, omega);
    setup.averaged.averaged = AveragedSystem::closed_form([](const Vector& x) -> Vector { return -x; });
    setup.averaged.dt = averaged_dt;
    setup.x0 = Vector::Constant(1, 1.0);
    setup.y0 = Vector::Constant(1, 1.0);
    return setup;
  };
}

/// Pure boundary layer: x frozen, y' = w A y with A = diag(-1, -2), phi0 = 0.
inline OscillatorySystemSpec boundary_layer_spec() {
  OscillatorySystemSpec spec;
  spec.n = 1;
  spec.m = 2;
  spec.T = 2.0 * M_PI;
  spec.A = Eigen::Vector2d(-1.0, -2.0).asDiagonal();
  spec.phi0 = [](const Vector&) -> Vector { return Vector::Zero(2); };
  return spec;
}

inline harness::CompareSetup boundary_layer_setup(double omega) {
  const auto spec = boundary_layer_spec();
  harness::CompareSetup setup;
  setup.full = harness::make_full_model(spec, omega);
  setup.averaged.averaged = AveragedSystem::closed_form([](const Vector& x) -> Vector {
    return Vector::Zero(x.size());
  });
  setup.averaged.dt = 1e-2;
  setup.x0 = Vector::Zero(1);
  setup.y0 = Eigen::Vector2d(1.0, 0.1);
  return setup;
}

/// A periodic corrector problem with its own data.
struct CorrectorCase {
  std::string name;
  Matrix A;
  ForcingTerm b;
  double T = 2.0 * M_PI;
  std::vector<Vector> xs;  // evaluation points
};

/// m = 1, A = -1, b = cos(tau); periodic solution (cos + sin) / 2.
inline CorrectorCase cosine_case() {
  return {"cosine", Matrix::Constant(1, 1, -1.0),
          ForcingTerm{[](const Vector&, double tau) -> Vector { return Vector::Constant(1, std::cos(tau)); }, {}},
          2.0 * M_PI, {Vector::Zero(1)}};
}

/// The seeker's filter matrix with b = [sin(tau), cos(tau)].
inline CorrectorCase jordan_case() {
  return {"jordan", Matrix(seeker::filter_A()),
          ForcingTerm{[](const Vector&, double tau) -> Vector {
                        return Eigen::Vector2d(std::sin(tau), std::cos(tau));
                      },
                      {}},
          2.0 * M_PI, {Vector::Zero(1)}};
}

/// Seeker corrector residuals: phi1 and phi2 at `count` sampled states.
struct SeekerCorrectors {
  OscillatorySystemSpec spec;
  CorrectorSolution phi1;
  ForcingTerm b1;
  CorrectorSolution phi2;
  ForcingTerm b2;
  std::vector<Vector> xs;
};

inline SeekerCorrectors seeker_correctors(const SeekerConfig& cfg, const ScalarField& field,
                                          int panels, int count, std::uint64_t seed) {
  auto spec = seeker::as_system_spec(cfg, field);
  ForcingTerm b1 = build_b(spec, 1);
  CorrectorSolution phi1 = solve_periodic_bvp(spec.A, b1, spec.T, panels, 1);
  ForcingTerm b2 = build_b(spec, 2, &phi1);
  CorrectorSolution phi2 = solve_periodic_bvp(spec.A, b2, spec.T, panels, 2);
  auto xs = seeker::sample_states(count, seed);
  return {std::move(spec), std::move(phi1), std::move(b1), std::move(phi2), std::move(b2), std::move(xs)};
}

}  // namespace spavg::experiments
