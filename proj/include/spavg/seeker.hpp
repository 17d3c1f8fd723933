#pragma once

// 3D source seeking for a rigid body with an offset signal sensor.
//
// Body kinematics p' = R v, R' = R hat(Omega) under the dither law
//   v = sqrt(4w) cos(2wt - c(p_s)) e1,  Omega = w e1 + sqrt(w) (C y) e3,
//   y' = w (A y + B c(p_s)),            p_s = p + r R e2,  r = 1/sqrt(w),
// written in the rolling frame Q = R R0^T, R0 = exp(wt hat(e1)), with the frame
// stored column-stacked in R^9.
//
// State layouts:
//   full seeker      [p(3), q1(3), q2(3), q3(3), y(2)]   (14)
//   raw kinematics   [p(3), R column-stacked(9), y(2)]   (14)
//   averaged seeker  [p(3), q(9)]                        (12)

#include <cmath>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "spavg/errors.hpp"
#include "spavg/numkit.hpp"
#include "spavg/so3.hpp"
#include "spavg/system.hpp"

namespace spavg::seeker {

using so3::Matrix3;
using so3::Rotation;
using so3::Vector3;
using so3::Vector9;
using Vector2 = Eigen::Vector2d;

inline constexpr int kStateSize = 14;
inline constexpr int kAveragedSize = 12;
inline constexpr Eigen::Index kP = 0;
inline constexpr Eigen::Index kQ = 3;
inline constexpr Eigen::Index kY = 12;

// ---------------------------------------------------------------------------
// Signal fields

struct ScalarField {
  std::string name;
  std::function<double(const Vector3&)> c;
  std::function<Vector3(const Vector3&)> grad;
  std::function<Matrix3(const Vector3&)> hess;  // optional
  Vector3 p_star = Vector3::Zero();
  std::optional<double> kappa;  // nullopt when no global constant exists

  [[nodiscard]] Matrix3 hessian(const Vector3& p) const {
    if (hess) return hess(p);
    const Matrix jac = jacobian_fd([this](const Vector& x) -> Vector { return grad(x); }, Vector(p));
    return 0.5 * (jac + jac.transpose());
  }
};

/// c(p) = -log(1 + |p|^2 / 2), source at the origin. No global kappa exists:
/// (c* - c) / |grad c|^2 grows without bound.
inline ScalarField log_field() {
  ScalarField f;
  f.name = "log";
  f.c = [](const Vector3& p) { return -std::log1p(0.5 * p.squaredNorm()); };
  f.grad = [](const Vector3& p) -> Vector3 { return -p / (1.0 + 0.5 * p.squaredNorm()); };
  f.hess = [](const Vector3& p) -> Matrix3 {
    const double d = 1.0 + 0.5 * p.squaredNorm();
    return -Matrix3::Identity() / d + p * p.transpose() / (d * d);
  };
  f.p_star = Vector3::Zero();
  return f;
}

/// c(p) = -|p - p*|^2 / 2, kappa = 1/2.
inline ScalarField quadratic_field(const Vector3& p_star = Vector3::Zero()) {
  ScalarField f;
  f.name = "quadratic";
  f.c = [p_star](const Vector3& p) { return -0.5 * (p - p_star).squaredNorm(); };
  f.grad = [p_star](const Vector3& p) -> Vector3 { return -(p - p_star); };
  f.hess = [](const Vector3&) -> Matrix3 { return -Matrix3::Identity(); };
  f.p_star = p_star;
  f.kappa = 0.5;
  return f;
}

struct FieldCatalog {
  ScalarField log;
  ScalarField quadratic;
};

inline FieldCatalog builtin_fields() { return {log_field(), quadratic_field()}; }

// ---------------------------------------------------------------------------
// Configuration

/// Sign relating the embedded frame dynamics to the body kinematics.
///   kinematic:   q_i' = sqrt(w) Q (Lambda x e_i), i.e. Q' = sqrt(w) Q hat(Lambda),
///                exactly equivalent to R' = R hat(Omega) under Q = R R0^T.
///   index_form:  q_i' = sqrt(w) sum_jk Lambda_j eps_ijk q_k, the opposite sign.
/// The matching averaged angular velocity is -1/4 (Q^T grad c) x e1 for
/// kinematic and +1/4 (Q^T grad c) x e1 for index_form.
enum class FrameConvention { kinematic, index_form };

/// Filter start: y(0) = [c(p_s(0)), c(p_s(0))] or y(0) = 0.
enum class FilterInit { quasi_steady, zero };

inline double frame_sign(FrameConvention conv) {
  return conv == FrameConvention::kinematic ? 1.0 : -1.0;
}

struct SeekerConfig {
  double omega = 4.0 * M_PI;
  int steps_per_fast_period = 200;
  bool projection = true;
  FilterInit filter_init = FilterInit::quasi_steady;
  FrameConvention frame = FrameConvention::kinematic;

  void validate() const {
    if (!(omega > 0.0) || !std::isfinite(omega)) {
      throw ConfigurationError("seeker: omega must be > 0, got " + std::to_string(omega));
    }
    if (steps_per_fast_period < 50) {
      throw ConfigurationError("seeker: steps_per_fast_period must be >= 50");
    }
  }

  /// Sensor offset, tied to the frequency as r = 1/sqrt(w).
  [[nodiscard]] double r() const { return 1.0 / std::sqrt(omega); }
  /// Period of the frame roll and the filter, 2 pi / w.
  [[nodiscard]] double fast_period() const { return 2.0 * M_PI / omega; }
  [[nodiscard]] double dt() const { return fast_period() / steps_per_fast_period; }
};

// Band-pass filter (A, B, C).
inline Eigen::Matrix2d filter_A() {
  Eigen::Matrix2d a;
  a << -1.0, 1.0, 0.0, -1.0;
  return a;
}
inline Vector2 filter_B() { return {0.0, 1.0}; }
inline Eigen::RowVector2d filter_C() { return {-1.0, 1.0}; }

// ---------------------------------------------------------------------------
// States

struct SeekerState {
  Vector3 p = Vector3::Zero();
  Vector9 q = so3::embed(Rotation::identity());
  Vector2 y = Vector2::Zero();

  [[nodiscard]] Vector to_vector() const {
    Vector v(kStateSize);
    v << p, q, y;
    return v;
  }
  static SeekerState from_vector(const Vector& v) {
    if (v.size() != kStateSize) throw DimensionError("seeker state must have 14 entries");
    SeekerState s;
    s.p = v.segment<3>(kP);
    s.q = v.segment<9>(kQ);
    s.y = v.segment<2>(kY);
    return s;
  }
  void validate() const {
    const double res = so3::manifold_residual(q);
    if (!(res <= so3::kManifoldTolerance)) {
      throw ManifoldError("seeker frame off the manifold (residual " + std::to_string(res) + ")");
    }
  }
};

struct AveragedSeekerState {
  Vector3 p = Vector3::Zero();
  Rotation Q;

  [[nodiscard]] Vector to_vector() const {
    Vector v(kAveragedSize);
    v << p, so3::embed(Q);
    return v;
  }
  static AveragedSeekerState from_vector(const Vector& v) {
    if (v.size() != kAveragedSize) throw DimensionError("averaged state must have 12 entries");
    return {v.head<3>(), so3::extract(v.segment<9>(3))};
  }
};

// ---------------------------------------------------------------------------
// Dynamics

/// R0(tau) e3 with R0(tau) = exp(tau hat(e1)).
inline Vector3 rolled_e3(double tau) { return so3::exp_so3(tau * Vector3::UnitX()) * Vector3::UnitZ(); }

/// p + r (cos(tau) q2 + sin(tau) q3), i.e. p + r R e2 in the rolling frame.
inline Vector3 sensor_position(const Vector3& p, const Eigen::Ref<const Eigen::VectorXd>& q,
                               double tau, double r) {
  return p + r * (std::cos(tau) * q.segment<3>(3) + std::sin(tau) * q.segment<3>(6));
}

inline Vector3 sensor_position(const SeekerState& s, double tau, double r) {
  return sensor_position(s.p, s.q, tau, r);
}

/// Column-stacked s * Q hat(lambda).
inline Vector9 frame_rate(const Eigen::Ref<const Eigen::VectorXd>& q, const Vector3& lambda,
                          double sign) {
  const Matrix3 qdot = sign * so3::unstack(q) * so3::hat(lambda);
  Vector9 out;
  for (int c = 0; c < 3; ++c) out.segment<3>(3 * c) = qdot.col(c);
  return out;
}

/// Transformed seeker dynamics on R^3 x M x R^2; c is evaluated exactly at the
/// sensor position.
class SeekerField {
 public:
  SeekerField(SeekerConfig cfg, ScalarField field) : cfg_(cfg), field_(std::move(field)) {
    cfg_.validate();
  }

  [[nodiscard]] Vector operator()(double t, const Vector& s) const {
    const double w = cfg_.omega;
    const double sw = std::sqrt(w);
    const double tau = w * t;
    const auto q = s.segment<9>(kQ);
    const Vector2 y = s.segment<2>(kY);
    const double cs = field_.c(sensor_position(s.segment<3>(kP), q, tau, cfg_.r()));
    const Vector3 lambda = (filter_C() * y)(0) * rolled_e3(tau);

    Vector out(kStateSize);
    out.segment<3>(kP) = 2.0 * sw * std::cos(2.0 * tau - cs) * q.head<3>();
    out.segment<9>(kQ) = sw * frame_rate(q, lambda, frame_sign(cfg_.frame));
    out.segment<2>(kY) = w * (filter_A() * y + filter_B() * cs);
    return out;
  }

  [[nodiscard]] const SeekerConfig& config() const noexcept { return cfg_; }
  [[nodiscard]] const ScalarField& field() const noexcept { return field_; }

 private:
  SeekerConfig cfg_;
  ScalarField field_;
};

inline SeekerField seeker_field(const SeekerConfig& cfg, const ScalarField& field) {
  return SeekerField(cfg, field);
}

/// Untransformed body kinematics p' = R v, R' = R hat(Omega) with the filter.
class RawKinematicsField {
 public:
  RawKinematicsField(SeekerConfig cfg, ScalarField field) : cfg_(cfg), field_(std::move(field)) {
    cfg_.validate();
  }

  [[nodiscard]] Vector operator()(double t, const Vector& s) const {
    const double w = cfg_.omega;
    const double sw = std::sqrt(w);
    const Matrix3 r = so3::unstack(s.segment<9>(kQ));
    const Vector2 y = s.segment<2>(kY);
    const Vector3 ps = s.segment<3>(kP) + cfg_.r() * r.col(1);
    const double cs = field_.c(ps);
    const double v = 2.0 * sw * std::cos(2.0 * w * t - cs);
    const Vector3 omega_body = w * Vector3::UnitX() + sw * (filter_C() * y)(0) * Vector3::UnitZ();
    const Matrix3 rdot = r * so3::hat(omega_body);

    Vector out(kStateSize);
    out.segment<3>(kP) = v * r.col(0);
    for (int c = 0; c < 3; ++c) out.segment<3>(kQ + 3 * c) = rdot.col(c);
    out.segment<2>(kY) = w * (filter_A() * y + filter_B() * cs);
    return out;
  }

 private:
  SeekerConfig cfg_;
  ScalarField field_;
};

inline RawKinematicsField raw_kinematics_field(const SeekerConfig& cfg, const ScalarField& field) {
  return RawKinematicsField(cfg, field);
}

/// Initial full state for given p(0), R(0) = Q(0); the filter start follows
/// cfg.filter_init.
inline SeekerState initial_state(const SeekerConfig& cfg, const ScalarField& field,
                                 const Vector3& p0, const Rotation& r0 = Rotation::identity()) {
  SeekerState s;
  s.p = p0;
  s.q = so3::embed(r0);
  if (cfg.filter_init == FilterInit::quasi_steady) {
    const double c0 = field.c(sensor_position(s, 0.0, cfg.r()));
    s.y = Vector2(c0, c0);
  }
  return s;
}

inline Rk4Options projection_options(bool projection, std::size_t stride = 1) {
  Rk4Options opt;
  opt.stride = stride;
  if (projection) opt.post_step = [](Vector& s) { so3::project_frame(s.segment<9>(kQ)); };
  return opt;
}

/// Integrates the transformed seeker from t = 0 over `horizon`.
inline Trajectory simulate(const SeekerConfig& cfg, const ScalarField& field,
                           const SeekerState& init, double horizon, std::size_t stride = 1) {
  cfg.validate();
  init.validate();
  const TimeGrid grid = TimeGrid::covering(0.0, horizon, cfg.dt());
  return integrate_rk4(seeker_field(cfg, field), init.to_vector(), grid,
                       projection_options(cfg.projection, stride));
}

/// Integrates the raw kinematics and the transformed system from matched data
/// (R(0) = Q(0)) and returns max_t ||p_raw - p|| + ||R_raw - Q R0(wt)||_F.
inline double cross_check(const SeekerConfig& cfg, const ScalarField& field,
                          const SeekerState& init, double horizon) {
  cfg.validate();
  init.validate();
  if (horizon == 0.0) return 0.0;
  const TimeGrid grid = TimeGrid::covering(0.0, horizon, cfg.dt());
  const auto opts = projection_options(cfg.projection);
  const Trajectory transformed = integrate_rk4(seeker_field(cfg, field), init.to_vector(), grid, opts);
  const Trajectory raw = integrate_rk4(raw_kinematics_field(cfg, field), init.to_vector(), grid, opts);
  double worst = 0.0;
  for (std::size_t i = 0; i < transformed.size(); ++i) {
    const double tau = cfg.omega * transformed.t[i];
    const Matrix3 q = so3::unstack(transformed.x[i].segment<9>(kQ));
    const Matrix3 r0 = so3::exp_so3(tau * Vector3::UnitX()).matrix();
    const Matrix3 r = so3::unstack(raw.x[i].segment<9>(kQ));
    const double dev = (raw.x[i].segment<3>(kP) - transformed.x[i].segment<3>(kP)).norm() +
                       (r - q * r0).norm();
    worst = std::max(worst, dev);
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Averaged system

/// Average angular velocity 1/4 (Q^T grad c) x e1, signed for the convention.
inline Vector3 average_angular_velocity(const ScalarField& field, const Vector3& p,
                                        const Matrix3& q, FrameConvention conv) {
  const Vector3 g = q.transpose() * field.grad(p);
  return -frame_sign(conv) * 0.25 * g.cross(Vector3::UnitX());
}

/// p' = Q e1 e1^T Q^T grad c(p), Q' = Q hat(Lambda_bar).
inline std::function<Vector(const Vector&)> averaged_seeker_field(
    const ScalarField& field, FrameConvention conv = FrameConvention::kinematic) {
  return [field, conv](const Vector& s) -> Vector {
    const Vector3 p = s.head<3>();
    const auto q = s.segment<9>(3);
    const Matrix3 qm = so3::unstack(q);
    const Vector3 grad = field.grad(p);
    const Vector3 lambda = average_angular_velocity(field, p, qm, conv);
    Vector out(kAveragedSize);
    out.head<3>() = qm.col(0) * qm.col(0).dot(grad);
    out.segment<9>(3) = frame_rate(q, lambda, 1.0);
    return out;
  };
}

struct LyapunovSample {
  double value = 0.0;  // V_c = c(p*) - c(p)
  double rate = 0.0;   // dV_c/dt = -(grad c^T Q e1)^2
};

inline LyapunovSample lyapunov_value_and_rate(const ScalarField& field, const Vector3& p,
                                              const Matrix3& q) {
  const double align = field.grad(p).dot(q.col(0));
  return {field.c(field.p_star) - field.c(p), -align * align};
}

inline LyapunovSample lyapunov_value_and_rate(const ScalarField& field,
                                              const AveragedSeekerState& s) {
  return lyapunov_value_and_rate(field, s.p, s.Q.matrix());
}

// ---------------------------------------------------------------------------
// Packaging as an instance of the oscillatory system class

/// The seeker as x = (p, q) in R^12, y in R^2, T = 2 pi, with c(p_s) expanded
/// to second order in 1/sqrt(w) (remainder dropped):
///   f1 = [2 cos(2tau - c) q1 ; s Q hat((Cy) R0 e3)]
///   f2 = [2 a sin(2tau - c) q1 ; 0]
///   g1 = B a,  g2 = B (u^T H u) / 2,  phi0 = [c, c]
/// where u = cos(tau) q2 + sin(tau) q3 and a = grad c^T u.
inline OscillatorySystemSpec as_system_spec(const SeekerConfig& cfg, const ScalarField& field) {
  const double sign = frame_sign(cfg.frame);
  OscillatorySystemSpec spec;
  spec.n = kAveragedSize;
  spec.m = 2;
  spec.T = 2.0 * M_PI;
  spec.A = filter_A();

  auto u_dir = [](const Vector& x, double tau) -> Vector3 {
    return std::cos(tau) * x.segment<3>(6) + std::sin(tau) * x.segment<3>(9);
  };

  spec.f1 = [field, sign](const Vector& x, const Vector& y, double tau) -> Vector {
    Vector out(kAveragedSize);
    const double c = field.c(x.head<3>());
    out.head<3>() = 2.0 * std::cos(2.0 * tau - c) * x.segment<3>(3);
    const double cy = filter_C().dot(y);
    out.segment<9>(3) = frame_rate(x.segment<9>(3), cy * rolled_e3(tau), sign);
    return out;
  };
  spec.f1_y_jacobian = [sign](const Vector& x, const Vector&, double tau) -> Matrix {
    Matrix jac = Matrix::Zero(kAveragedSize, 2);
    const Vector9 unit = frame_rate(x.segment<9>(3), rolled_e3(tau), sign);
    jac.block<9, 1>(3, 0) = filter_C()(0) * unit;
    jac.block<9, 1>(3, 1) = filter_C()(1) * unit;
    return jac;
  };
  spec.f2 = [field, u_dir](const Vector& x, const Vector&, double tau) -> Vector {
    Vector out = Vector::Zero(kAveragedSize);
    const Vector3 p = x.head<3>();
    const double a = field.grad(p).dot(u_dir(x, tau));
    out.head<3>() = 2.0 * a * std::sin(2.0 * tau - field.c(p)) * x.segment<3>(3);
    return out;
  };
  spec.g1 = [field, u_dir](const Vector& x, const Vector&, double tau) -> Vector {
    return Vector2(0.0, field.grad(x.head<3>()).dot(u_dir(x, tau)));
  };
  spec.g1_y_jacobian = [](const Vector&, const Vector&, double) -> Matrix {
    return Matrix::Zero(2, 2);
  };
  spec.g2 = [field, u_dir](const Vector& x, const Vector&, double tau) -> Vector {
    const Vector3 u = u_dir(x, tau);
    return Vector2(0.0, 0.5 * u.dot(field.hessian(x.head<3>()) * u));
  };
  spec.phi0 = [field](const Vector& x) -> Vector {
    const double c = field.c(x.head<3>());
    return Vector2(c, c);
  };
  spec.phi0_jacobian = [field](const Vector& x) -> Matrix {
    Matrix jac = Matrix::Zero(2, kAveragedSize);
    const Vector3 g = field.grad(x.head<3>());
    jac.block<1, 3>(0, 0) = g.transpose();
    jac.block<1, 3>(1, 0) = g.transpose();
    return jac;
  };
  spec.sampler = [field](std::mt19937_64& rng) -> std::pair<Vector, Vector> {
    std::uniform_real_distribution<double> box(-4.0, 4.0);
    std::uniform_real_distribution<double> ang(-M_PI, M_PI);
    const Vector3 p(box(rng), box(rng), box(rng));
    const Vector3 w(ang(rng), ang(rng), ang(rng));
    Vector x(kAveragedSize);
    x << p, so3::embed(so3::exp_so3(w));
    const double c = field.c(p);
    return {x, Vector2(c + 0.1 * box(rng), c + 0.1 * box(rng))};
  };
  return spec;
}

/// Deterministic on-manifold sample states (p with |p| in [0.5, 5], random
/// frame) used by the averaging oracle.
inline std::vector<Vector> sample_states(int count, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> radius(0.5, 5.0);
  std::uniform_real_distribution<double> ang(-M_PI, M_PI);
  std::vector<Vector> out;
  out.reserve(static_cast<std::size_t>(std::max(count, 0)));
  while (static_cast<int>(out.size()) < count) {
    Vector3 dir(unit(rng), unit(rng), unit(rng));
    if (dir.norm() < 1e-3) continue;
    const Vector3 p = radius(rng) * dir.normalized();
    const Vector3 w(ang(rng), ang(rng), ang(rng));
    Vector x(kAveragedSize);
    x << p, so3::embed(so3::exp_so3(w));
    out.push_back(std::move(x));
  }
  return out;
}

}  // namespace spavg::seeker
