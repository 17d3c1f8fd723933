// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "spavg/cli.hpp"
#include "spavg/experiments.hpp"

using namespace spavg;
namespace ex = spavg::experiments;
using seeker::FrameConvention;
using so3::Vector3;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string title;
  double budget_s;  // runtime limit, part of the verdict
  std::function<Outcome()> check;
};

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Tolerances.
constexpr double kOracleTol = 1e-6;
constexpr double kResidualTol = 1e-6;
constexpr double kSlopeMax = -0.4;
constexpr double kLambdaLo = 0.5;
constexpr double kLambdaHi = 1.5;
constexpr double kCenterGap = 0.5;
constexpr double kBoundP = 10.0;
constexpr double kTerminalP = 1.5;
constexpr double kLyapunovStep = 1e-9;
constexpr double kGradGoal = 1e-3;
constexpr double kManifoldTol = 1e-6;
constexpr double kCrossTol = 1e-6;

Outcome averaging_oracle() {
  double worst = 0.0;
  const auto xs = seeker::sample_states(20, 2024);
  for (const auto& field : {seeker::log_field(), seeker::quadratic_field()}) {
    for (auto conv : {FrameConvention::kinematic, FrameConvention::index_form}) {
      seeker::SeekerConfig cfg;
      cfg.frame = conv;
      const auto pipe = build_averaged(seeker::as_system_spec(cfg, field));
      const auto closed = seeker::averaged_seeker_field(field, conv);
      const auto errs = harness::parallel_map(xs.size(), [&](std::size_t i) {
        const Vector ref = closed(xs[i]);
        return (pipe.averaged(xs[i]) - ref).norm() / ref.norm();
      });
      for (double e : errs) worst = std::max(worst, e);
    }
  }
  return {worst < kOracleTol, "max relative error " + sci(worst) + " over 20 states x 2 fields x 2 frame conventions"};
}

Outcome corrector_residuals() {
  double cosine = 0.0, jordan = 0.0, forward = 0.0, seeker_worst = 0.0;
  {
    const auto c = ex::cosine_case();
    const auto phi = solve_periodic_bvp(c.A, c.b, c.T, 512);
    cosine = residual_bvp(phi, c.A, c.b, c.T, c.xs.front());
    for (int j = 0; j < 64; ++j) {
      const double tau = c.T * j / 64;
      cosine = std::max(cosine, std::abs(phi(c.xs.front(), tau)[0] - 0.5 * (std::cos(tau) + std::sin(tau))));
    }
  }
  {
    const auto c = ex::jordan_case();
    const auto phi = solve_periodic_bvp(c.A, c.b, c.T, 512);
    jordan = residual_bvp(phi, c.A, c.b, c.T, c.xs.front());
    // Forward integration from rest settles onto the periodic orbit.
    const int per = 2000;
    const auto traj = integrate_rk4([&](double tau, const Vector& v) -> Vector { return c.A * v + c.b.at(c.xs.front(), tau); },
                                    Vector::Zero(2), TimeGrid(0.0, c.T / per, 40 * per));
    for (int j = 0; j < per; j += 50) {
      const std::size_t i = 39 * per + j;
      forward = std::max(forward, (traj.x[i] - phi(c.xs.front(), traj.t[i])).cwiseAbs().maxCoeff());
    }
  }
  const auto s = ex::seeker_correctors({}, seeker::log_field(), 512, 5, 7);
  for (const Vector& x : s.xs) {
    seeker_worst = std::max(seeker_worst, residual_bvp(s.phi1, s.spec.A, s.b1, s.spec.T, x));
    seeker_worst = std::max(seeker_worst, residual_bvp(s.phi2, s.spec.A, s.b2, s.spec.T, x));
  }
  const bool pass = cosine < kResidualTol && jordan < kResidualTol && forward < kResidualTol &&
                    seeker_worst < kResidualTol;
  return {pass, "cosine " + sci(cosine) + ", jordan " + sci(jordan) + " (forward oracle " + sci(forward) +
                    "), seeker phi1/phi2 at 5 states " + sci(seeker_worst)};
}

Outcome convergence_order() {
  ex::SeekerExperiment e;
  e.field = seeker::quadratic_field();
  std::vector<double> omegas;
  for (int k = 0; k < 5; ++k) omegas.push_back(4 * M_PI * std::pow(2.0, k));
  harness::SweepOptions opt;
  opt.t_f = 5.0;
  opt.slope_threshold = kSlopeMax;
  const auto rep = harness::sweep_convergence(ex::seeker_sweep_builder(e), omegas, opt);
  std::string errs;
  for (const auto& en : rep.entries) errs += (errs.empty() ? "" : ", ") + sci(en.error);
  return {rep.slope_pass && rep.strictly_decreasing,
          "E = [" + errs + "], slope " + sci(rep.slope) + (rep.strictly_decreasing ? ", strictly decreasing" : ", not monotone")};
}

Outcome boundary_layer() {
  ex::SeekerExperiment e;
  e.field = seeker::log_field();
  e.cfg.filter_init = seeker::FilterInit::zero;
  const auto setup = ex::seeker_compare_setup(e);
  const auto rec = harness::run_compare(setup, e.cfg.omega, 2.0);
  const auto fit = harness::fit_boundary_layer(rec, e.cfg.omega, setup.full.A);
  return {fit.lambda >= kLambdaLo && fit.lambda <= kLambdaHi,
          "lambda_hat " + sci(fit.lambda) + ", gamma_hat " + sci(fit.gamma) + " from " + std::to_string(fit.samples) + " samples"};
}

Trajectory source_run() {
  seeker::SeekerConfig cfg;
  const auto field = seeker::log_field();
  return seeker::simulate(cfg, field, seeker::initial_state(cfg, field, Vector3(6, 2, -2)), 100.0, 20);
}

Outcome source_run_outcome(const Trajectory& traj) {
  const auto field = seeker::log_field();
  const double c0 = field.c(traj.x.front().head<3>());
  const double c_end = field.c(traj.back().head<3>());
  double max_p = 0.0, tail_p = 0.0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    const double r = traj.x[i].head<3>().norm();
    max_p = std::max(max_p, r);
    if (traj.t[i] >= 75.0) tail_p = std::max(tail_p, r);
  }
  const bool pass = std::abs(c0 + 3.135494) < 1e-6 && c_end > -kCenterGap && max_p <= kBoundP && tail_p <= kTerminalP;
  return {pass, "c " + sci(c0) + " -> " + sci(c_end) + ", max |p| " + sci(max_p) + ", max |p| on [75,100] " + sci(tail_p)};
}

Outcome lyapunov() {
  // Generic starts: random positions in a ball of radius 6 and random frames.
  std::mt19937_64 rng(606);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Vector> starts;
  while (starts.size() < 10) {
    const Vector3 p(6 * u(rng), 6 * u(rng), 6 * u(rng));
    const Vector3 w(M_PI * u(rng), M_PI * u(rng), M_PI * u(rng));
    if (p.norm() > 6.0 || p.norm() < 1.0) continue;
    starts.push_back(seeker::AveragedSeekerState{p, so3::exp_so3(w)}.to_vector());
  }
  double worst_step = -INFINITY, worst_grad = 0.0;
  for (const auto& field : {seeker::log_field(), seeker::quadratic_field()}) {
    const auto f = seeker::averaged_seeker_field(field);
    Rk4Options opt;
    opt.post_step = [](Vector& s) { so3::project_frame(s.segment<9>(3)); };
    const auto runs = harness::parallel_map(starts.size(), [&](std::size_t i) {
      return integrate_rk4([&](double, const Vector& s) { return f(s); }, starts[i],
                           TimeGrid::covering(0.0, 200.0, 1e-2), opt);
    });
    for (const auto& traj : runs) {
      double prev = field.c(field.p_star) - field.c(traj.x.front().head<3>());
      for (std::size_t k = 1; k < traj.size(); ++k) {
        const double v = field.c(field.p_star) - field.c(traj.x[k].head<3>());
        worst_step = std::max(worst_step, v - prev);
        prev = v;
      }
      if (field.name == "quadratic") worst_grad = std::max(worst_grad, field.grad(traj.back().head<3>()).norm());
    }
  }
  const bool monotone = worst_step < kLyapunovStep;
  const bool reached = worst_grad < kGradGoal;
  return {monotone && reached, std::string("V_c nonincreasing: ") + (monotone ? "yes" : "no") + " (max step change " +
                                   sci(worst_step) + "); quadratic max |grad c| at t=200: " + sci(worst_grad) +
                                   " (goal " + sci(kGradGoal) + ")"};
}

Outcome geometry(const Trajectory& traj) {
  double worst = 0.0;
  for (const Vector& s : traj.x) worst = std::max(worst, so3::manifold_residual(s.segment<9>(seeker::kQ)));
  seeker::SeekerConfig cfg;
  cfg.steps_per_fast_period = 400;
  const auto field = seeker::log_field();
  const double cross = seeker::cross_check(cfg, field, seeker::initial_state(cfg, field, Vector3(6, 2, -2)), cfg.fast_period());
  return {worst < kManifoldTol && cross < kCrossTol,
          "max manifold residual " + sci(worst) + ", cross-check deviation " + sci(cross)};
}

Outcome determinism() {
  const std::string src = SPAVG_SOURCE_DIR;
  const auto root = std::filesystem::temp_directory_path() / "spavg_acceptance";
  std::filesystem::remove_all(root);
  const std::vector<std::pair<std::string, std::string>> jobs = {
      {"simulate", "simulate_log.json"},   {"average-check", "average_check.json"},
      {"sweep", "sweep_seeker.json"},      {"bvp-check", "bvp_check.json"},
      {"stability-probe", "probe_averaged.json"}};
  int identical = 0, files = 0;
  std::string bad;
  for (const auto& [command, config] : jobs) {
    for (const char* pass : {"first", "second"}) {
      cli::RunOptions opt;
      opt.out_dir = (root / pass).string();
      opt.quiet = true;
      std::ostringstream out, err;
      const int code = cli::run_file(command, src + "/configs/" + config, opt, out, err);
      if (code != cli::kOk) bad += " " + config + "(exit " + std::to_string(code) + ")";
    }
  }
  for (const auto& entry : std::filesystem::directory_iterator(root / "first")) {
    ++files;
    const auto twin = root / "second" / entry.path().filename();
    if (std::filesystem::exists(twin) && io::read_text(entry.path().string()) == io::read_text(twin.string())) {
      ++identical;
    } else {
      bad += " " + entry.path().filename().string();
    }
  }
  const bool pass = files == static_cast<int>(jobs.size()) && identical == files && bad.empty();
  return {pass, std::to_string(identical) + "/" + std::to_string(files) + " output files bit-identical" +
                    (bad.empty() ? "" : "; problems:" + bad)};
}

}  // namespace

int main() {
  Trajectory run5;
  const std::vector<Criterion> criteria = {
      {1, "averaging oracle", 30, averaging_oracle},
      {2, "corrector residuals", 10, corrector_residuals},
      {3, "convergence order", 300, convergence_order},
      {4, "boundary-layer decay", 60, boundary_layer},
      {5, "source-seeking run", 120, [&] { run5 = source_run(); return source_run_outcome(run5); }},
      {6, "Lyapunov and LaSalle", 60, lyapunov},
      {7, "geometry preservation", 60, [&] { return geometry(run5); }},
      {8, "determinism", 600, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = secs < c.budget_s;
    const bool pass = o.pass && in_time;
    if (!pass) ++failures;
    char timing[64];
    std::snprintf(timing, sizeof timing, "%.1f s of %.0f s", secs, c.budget_s);
    std::cout << "C" << c.id << " " << (pass ? "PASS" : "FAIL") << "  " << c.title << ": " << o.detail << " ["
              << timing << (in_time ? "" : ", over budget") << "]" << std::endl;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criterion(s) failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
