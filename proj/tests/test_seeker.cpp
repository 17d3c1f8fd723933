#include <cmath>

#include <gtest/gtest.h>

#include "spavg/seeker.hpp"
#include "spavg/system.hpp"
#include "support.hpp"

using namespace spavg;
using namespace spavg::seeker;
using spavg::testing::Gen;

namespace {

constexpr FrameConvention kConventions[] = {FrameConvention::kinematic, FrameConvention::index_form};

Vector averaged_state(const Vector3& p, const Rotation& q) { return AveragedSeekerState{p, q}.to_vector(); }

Trajectory averaged_flow(const ScalarField& field, const Vector& x0, double horizon, double dt,
                         bool projection, std::size_t stride = 1) {
  const auto f = averaged_seeker_field(field);
  Rk4Options opt;
  opt.stride = stride;
  if (projection) opt.post_step = [](Vector& s) { so3::project_frame(s.segment<9>(3)); };
  return integrate_rk4([&](double, const Vector& s) { return f(s); }, x0, TimeGrid::covering(0.0, horizon, dt), opt);
}

}  // namespace

TEST(SensorPosition, Examples) {
  const Vector3 p(1.0, -2.0, 0.5);
  SeekerState s;
  s.p = p;
  EXPECT_EQ(sensor_position(s, 0.7, 0.0), p);
  EXPECT_LT((sensor_position(s, 0.0, 1.0) - (p + Vector3::UnitY())).norm(), 1e-15);
  EXPECT_LT((sensor_position(s, M_PI / 2, 2.0) - (p + 2.0 * Vector3::UnitZ())).norm(), 1e-15);
}

TEST(SensorPosition, MatchesRotatedE2) {
  Gen g(51);
  for (int i = 0; i < 10; ++i) {
    SeekerState s;
    const Rotation q = g.rotation();
    s.q = so3::embed(q);
    const double tau = g.uniform(0, 2 * M_PI);
    const Vector3 r_e2 = q.matrix() * so3::exp_so3(tau * Vector3::UnitX()).matrix() * Vector3::UnitY();
    EXPECT_LT((sensor_position(s, tau, 0.3) - (s.p + 0.3 * r_e2)).norm(), 1e-14);
  }
}

TEST(SeekerField, Examples) {
  SeekerConfig cfg;
  const auto field = log_field();
  const auto f = seeker_field(cfg, field);
  Gen g(52);

  // y = 0: the frame does not move and y' = w B c(p_s).
  SeekerState s;
  s.p = g.vec3(-3, 3);
  s.q = so3::embed(g.rotation());
  const double t = 0.013;
  const Vector d = f(t, s.to_vector());
  EXPECT_EQ(d.segment<9>(kQ).norm(), 0.0);
  const double cs = field.c(sensor_position(s, cfg.omega * t, cfg.r()));
  EXPECT_NEAR(d[kY], 0.0, 1e-12);
  EXPECT_NEAR(d[kY + 1], cfg.omega * cs, 1e-12);

  // Identity frame at t = 0 with c(p_s) = 0: p' = 2 sqrt(w) e1. With r =
  // 1/sqrt(w) the sensor sits at p + r e2, so put the body at -r e2.
  SeekerState origin;
  origin.p = -cfg.r() * Vector3::UnitY();
  const Vector d0 = f(0.0, origin.to_vector());
  EXPECT_LT((d0.segment<3>(kP) - 2.0 * std::sqrt(cfg.omega) * Vector3::UnitX()).norm(), 1e-12);
}

TEST(SeekerField, FrameRateMatchesIndexFormula) {
  // index_form: q_i' = sqrt(w) sum_jk L_j eps_ijk q_k.
  Gen g(53);
  auto eps = [](int i, int j, int k) { return 0.5 * (i - j) * (j - k) * (k - i); };
  for (auto conv : kConventions) {
    SeekerConfig cfg;
    cfg.frame = conv;
    const auto f = seeker_field(cfg, quadratic_field());
    SeekerState s;
    s.p = g.vec3();
    s.q = so3::embed(g.rotation());
    s.y = g.vec3().head<2>();
    const double t = g.uniform(0, 1);
    const Vector3 lambda = filter_C().dot(s.y) * rolled_e3(cfg.omega * t);
    const Vector d = f(t, s.to_vector());
    for (int i = 0; i < 3; ++i) {
      Vector3 expect = Vector3::Zero();
      for (int j = 0; j < 3; ++j)
        for (int k = 0; k < 3; ++k) expect += lambda[j] * eps(i, j, k) * s.q.segment<3>(3 * k);
      expect *= -frame_sign(conv) * std::sqrt(cfg.omega);
      EXPECT_LT((d.segment<3>(kQ + 3 * i) - expect).norm(), 1e-12);
    }
  }
}

TEST(RawKinematics, CrossCheckExamples) {
  SeekerConfig cfg;
  cfg.steps_per_fast_period = 400;
  const auto field = log_field();
  const auto init = initial_state(cfg, field, Vector3(6, 2, -2), so3::exp_so3(Vector3(0.3, -0.2, 0.5)));
  EXPECT_EQ(cross_check(cfg, field, init, 0.0), 0.0);
  EXPECT_LT(cross_check(cfg, field, init, cfg.fast_period()), 1e-6);

  SeekerConfig fast = cfg;
  fast.omega = 16 * M_PI;
  EXPECT_LT(cross_check(fast, quadratic_field(), initial_state(fast, quadratic_field(), Vector3(1, 1, 1)),
                        fast.fast_period()),
            1e-6);
}

TEST(RawKinematics, PureRoll) {
  // Constant field with the filter at rest (Cy = 0, Ay + Bc = 0): Omega_perp
  // vanishes and R follows R(0) exp(wt e1).
  SeekerConfig cfg;
  ScalarField flat;
  flat.name = "flat";
  flat.c = [](const Vector3&) { return M_PI / 4; };
  flat.grad = [](const Vector3&) -> Vector3 { return Vector3::Zero(); };
  const auto raw = raw_kinematics_field(cfg, flat);
  SeekerState s;
  const Rotation r0 = so3::exp_so3(Vector3(0.1, 0.2, -0.3));
  s.q = so3::embed(r0);
  s.y = Vector2(M_PI / 4, M_PI / 4);
  const double horizon = cfg.fast_period();
  const auto traj = integrate_rk4(raw, s.to_vector(), TimeGrid::covering(0.0, horizon, cfg.dt()));
  const Matrix3 expected = r0.matrix() * so3::exp_so3(cfg.omega * horizon * Vector3::UnitX()).matrix();
  EXPECT_LT((so3::unstack(traj.back().segment<9>(kQ)) - expected).norm(), 1e-6);
  EXPECT_LT((traj.back().segment<2>(kY) - s.y).norm(), 1e-12);
}

TEST(RawKinematics, PureRollKeepsPositionWhenVelocityVanishes) {
  // With the pure roll, p' = 2 sqrt(w) cos(2wt - c) R e1 and R e1 is fixed
  // by the roll, so p returns to p(0) after a full dither period.
  SeekerConfig cfg;
  cfg.steps_per_fast_period = 400;
  ScalarField flat;
  flat.c = [](const Vector3&) { return 0.0; };
  flat.grad = [](const Vector3&) -> Vector3 { return Vector3::Zero(); };
  SeekerState s;
  s.p = Vector3(1, 2, 3);
  const auto traj = integrate_rk4(raw_kinematics_field(cfg, flat), s.to_vector(),
                                  TimeGrid::covering(0.0, cfg.fast_period(), cfg.dt()));
  EXPECT_LT((traj.back().segment<3>(kP) - s.p).norm(), 1e-10);
}

TEST(AveragedSeekerField, Examples) {
  const auto quad = quadratic_field();
  for (auto conv : kConventions) {
    const auto f = averaged_seeker_field(quad, conv);
    EXPECT_EQ(f(averaged_state(Vector3::Zero(), Rotation::identity())).norm(), 0.0);
  }

  // grad c = e2 at p = -e2 for the quadratic field.
  const Vector3 p = -Vector3::UnitY();
  EXPECT_LT((average_angular_velocity(quad, p, Matrix3::Identity(), FrameConvention::index_form) -
             Vector3(0, 0, -0.25)).norm(),
            1e-15);
  EXPECT_LT((average_angular_velocity(quad, p, Matrix3::Identity(), FrameConvention::kinematic) -
             Vector3(0, 0, 0.25)).norm(),
            1e-15);
  const Vector d = averaged_seeker_field(quad)(averaged_state(p, Rotation::identity()));
  EXPECT_EQ(d.head<3>().norm(), 0.0);

  // grad c = e1: full ascent and no turning.
  const Vector3 p1 = -Vector3::UnitX();
  for (auto conv : kConventions) {
    const Vector d1 = averaged_seeker_field(quad, conv)(averaged_state(p1, Rotation::identity()));
    EXPECT_LT((d1.head<3>() - Vector3::UnitX()).norm(), 1e-15);
    EXPECT_EQ(d1.segment<9>(3).norm(), 0.0);
  }
}

TEST(AveragedSeekerField, AngularVelocityIsOrthogonalToE1) {
  Gen g(54);
  for (const auto& field : {log_field(), quadratic_field(Vector3(1, -1, 2))}) {
    for (auto conv : kConventions) {
      for (int i = 0; i < 50; ++i) {
        const Vector3 lambda = average_angular_velocity(field, g.vec3(-5, 5), g.rotation().matrix(), conv);
        EXPECT_EQ(lambda.x(), 0.0);
      }
    }
  }
}

TEST(Lyapunov, Examples) {
  const auto quad = quadratic_field();
  const auto at_source = lyapunov_value_and_rate(quad, AveragedSeekerState{Vector3::Zero(), Rotation::identity()});
  EXPECT_EQ(at_source.value, 0.0);
  EXPECT_EQ(at_source.rate, 0.0);

  const auto unit = lyapunov_value_and_rate(quad, AveragedSeekerState{Vector3::UnitX(), Rotation::identity()});
  EXPECT_DOUBLE_EQ(unit.value, 0.5);
  EXPECT_DOUBLE_EQ(unit.rate, -1.0);

  // Heading orthogonal to the gradient.
  const auto ortho = lyapunov_value_and_rate(quad, AveragedSeekerState{Vector3::UnitY(), Rotation::identity()});
  EXPECT_EQ(ortho.rate, 0.0);
}

TEST(Lyapunov, RateMatchesDerivativeAlongAveragedField) {
  Gen g(55);
  for (const auto& field : {log_field(), quadratic_field()}) {
    const auto f = averaged_seeker_field(field);
    for (int i = 0; i < 10; ++i) {
      const AveragedSeekerState s{g.vec3(-4, 4), g.rotation()};
      const Vector3 pdot = f(s.to_vector()).head<3>();
      EXPECT_NEAR(lyapunov_value_and_rate(field, s).rate, -field.grad(s.p).dot(pdot), 1e-12);
    }
  }
}

TEST(BuiltinFields, Examples) {
  const auto fields = builtin_fields();
  EXPECT_EQ(fields.log.c(Vector3::Zero()), 0.0);
  const Vector3 p(6, 2, -2);
  EXPECT_NEAR(fields.log.c(p), -std::log(23.0), 1e-14);
  EXPECT_NEAR(fields.log.c(p), -3.135494, 1e-6);
  EXPECT_LT((fields.log.grad(p) - Vector3(-0.260870, -0.086957, 0.086957)).norm(), 1e-6);
  EXPECT_FALSE(fields.log.kappa.has_value());
  EXPECT_EQ(*fields.quadratic.kappa, 0.5);
}

TEST(BuiltinFields, GradientsAndHessiansMatchFiniteDifferences) {
  Gen g(56);
  for (const auto& field : {log_field(), quadratic_field(Vector3(0.5, -1, 2))}) {
    EXPECT_LT(field.grad(field.p_star).norm(), 1e-10);
    for (int i = 0; i < 20; ++i) {
      const Vector3 p = g.in_ball(10.0);
      const Matrix fd = jacobian_fd([&](const Vector& x) { return Vector::Constant(1, field.c(x)); }, Vector(p));
      EXPECT_LT((fd.transpose() - field.grad(p)).cwiseAbs().maxCoeff(), 1e-6) << field.name;
      const Matrix hfd = jacobian_fd([&](const Vector& x) -> Vector { return field.grad(x); }, Vector(p));
      EXPECT_LT((hfd - field.hess(p)).cwiseAbs().maxCoeff(), 1e-6) << field.name;
    }
  }
}

TEST(BuiltinFields, QuadraticSatisfiesKappaBound) {
  Gen g(57);
  const auto quad = quadratic_field(Vector3(1, 2, 3));
  for (int i = 0; i < 50; ++i) {
    const Vector3 p = g.in_ball(10.0);
    EXPECT_LE(quad.c(quad.p_star) - quad.c(p), *quad.kappa * quad.grad(p).squaredNorm() + 1e-12);
  }
}

TEST(AsSystemSpec, Examples) {
  for (auto conv : kConventions) {
    SeekerConfig cfg;
    cfg.frame = conv;
    const auto spec = as_system_spec(cfg, log_field());
    EXPECT_NO_THROW(spec.validate());
    EXPECT_TRUE(check_assumption_A(spec, 20).all_pass());
    EXPECT_EQ(spec.phi0(Vector::Zero(12)), Vector::Zero(2));
    for (const Vector& x : sample_states(20, 58)) {
      for (double tau : {0.0, 1.0, 4.0}) {
        const Vector f1 = spec.eval_f1(x, spec.phi0(x), tau);
        EXPECT_TRUE(f1.allFinite());
        EXPECT_LE(f1.head<3>().norm(), 2.0 + 1e-12);
      }
    }
  }
}

TEST(AsSystemSpec, ExpansionApproximatesSensorReading) {
  // c(p + r u) against c + r a + r^2 u^T H u / 2: the remainder is O(r^3).
  const auto field = log_field();
  const auto spec = as_system_spec({}, field);
  for (const Vector& x : sample_states(5, 59)) {
    const Vector3 p = x.head<3>();
    for (double r : {0.1, 0.05}) {
      const double tau = 0.8;
      const Vector3 u = std::cos(tau) * x.segment<3>(6) + std::sin(tau) * x.segment<3>(9);
      const double exact = field.c(p + r * u);
      const double series = field.c(p) + r * spec.eval_g1(x, Vector::Zero(2), tau)[1] +
                            r * r * spec.eval_g2(x, Vector::Zero(2), tau)[1];
      EXPECT_LT(std::abs(exact - series), 2.0 * r * r * r);
    }
  }
}

TEST(SeekerInvariants, LyapunovNonincreasingAlongAveragedFlow) {
  Gen g(60);
  for (const auto& field : {log_field(), quadratic_field()}) {
    for (int i = 0; i < 10; ++i) {
      const Vector x0 = averaged_state(g.vec3(-5, 5), g.rotation());
      const auto traj = averaged_flow(field, x0, 20.0, 1e-2, true);
      double prev = lyapunov_value_and_rate(field, AveragedSeekerState::from_vector(traj.x[0])).value;
      for (std::size_t k = 1; k < traj.size(); ++k) {
        const double v = field.c(field.p_star) - field.c(traj.x[k].head<3>());
        EXPECT_LT(v - prev, 1e-9) << field.name << " run " << i << " step " << k;
        prev = v;
      }
    }
  }
}

TEST(SeekerInvariants, AveragedFlowStaysOnManifoldWithoutProjection) {
  const auto traj = averaged_flow(quadratic_field(), averaged_state(Vector3(6, 2, -2), so3::exp_so3(Vector3(0.4, -0.3, 0.2))),
                                  200.0, 1e-3, false, 1000);
  double worst = 0.0;
  for (const Vector& s : traj.x) worst = std::max(worst, so3::manifold_residual(s.segment<9>(3)));
  EXPECT_LT(worst, 1e-7);
}

TEST(SeekerInvariants, FullSimulationKeepsFrameOnManifold) {
  SeekerConfig cfg;
  const auto field = log_field();
  const auto traj = simulate(cfg, field, initial_state(cfg, field, Vector3(6, 2, -2)), 20.0, 100);
  for (const Vector& s : traj.x) EXPECT_LT(so3::manifold_residual(s.segment<9>(kQ)), 1e-6);
}

TEST(SeekerInvariants, MisalignedHeadingDecaysAlgebraically) {
  // With g = grad c, a = g.q1 and b = |g - a q1|, the averaged quadratic
  // seeker obeys a' = -a + b^2/4 and (b^2)' = -a b^2 / 2. On the slow
  // manifold a ~ b^2/4, so b^2 ~ 8/t for large t.
  const auto quad = quadratic_field();
  const auto traj = averaged_flow(quad, averaged_state(Vector3(6, 2, -2), so3::exp_so3(Vector3(0.4, -0.3, 0.2))),
                                  400.0, 1e-2, true, 100);
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const double t = traj.t[k];
    if (t < 100.0) continue;
    const Vector3 grad = quad.grad(traj.x[k].head<3>());
    const double a = grad.dot(traj.x[k].segment<3>(3));
    const double b2 = grad.squaredNorm() - a * a;
    EXPECT_GT(b2 * t, 6.0) << t;
    EXPECT_LT(b2 * t, 10.0) << t;
    EXPECT_NEAR(a, 0.25 * b2, 0.05 * b2 + 1e-6) << t;
  }
}
