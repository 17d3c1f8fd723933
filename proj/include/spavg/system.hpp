#pragma once

// The singularly perturbed oscillatory system class
//
//   x' = sum_i w^{1-i/2} f_i(x, y, wt) + w^{-1/2} f3(x, y, wt, w)
//   y' = w A (y - phi0(x)) + sum_i w^{1-i/2} g_i(x, y, wt) + w^{-1/2} g3(x, y, wt, w)
//
// for i in {1, 2}, with A Hurwitz, every field T-periodic in its fast-time
// argument and f1 zero-mean over one period.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "spavg/errors.hpp"
#include "spavg/numkit.hpp"

namespace spavg {

struct OscillatorySystemSpec {
  using Field = std::function<Vector(const Vector& x, const Vector& y, double tau)>;
  using RemainderField =
      std::function<Vector(const Vector& x, const Vector& y, double tau, double omega)>;
  using FieldJacobian = std::function<Matrix(const Vector& x, const Vector& y, double tau)>;
  using Map = std::function<Vector(const Vector& x)>;
  using MapJacobian = std::function<Matrix(const Vector& x)>;
  using Sampler = std::function<std::pair<Vector, Vector>(std::mt19937_64& rng)>;

  int n = 0;
  int m = 0;
  // Unset fields are treated as identically zero.
  Field f1, f2;
  RemainderField f3;
  Field g1, g2;
  RemainderField g3;
  Matrix A;
  Map phi0;
  double T = 2.0 * M_PI;

  // Optional analytic derivatives; finite differences are used otherwise.
  MapJacobian phi0_jacobian;
  FieldJacobian f1_y_jacobian;  // C(x, y, tau) = d f1 / d y
  FieldJacobian g1_y_jacobian;

  // Optional state sampler for the assumption checks (uniform box otherwise).
  Sampler sampler;

  void validate() const {
    if (n <= 0 || m <= 0) throw DimensionError("system: n and m must be positive");
    if (A.rows() != m || A.cols() != m) {
      throw DimensionError("system: A must be " + std::to_string(m) + "x" + std::to_string(m));
    }
    if (!phi0) throw ConfigurationError("system: phi0 is required");
    if (!(T > 0.0)) throw ConfigurationError("system: period must be > 0");
  }

  [[nodiscard]] Vector eval_f1(const Vector& x, const Vector& y, double tau) const {
    return f1 ? f1(x, y, tau) : Vector::Zero(n);
  }
  [[nodiscard]] Vector eval_f2(const Vector& x, const Vector& y, double tau) const {
    return f2 ? f2(x, y, tau) : Vector::Zero(n);
  }
  [[nodiscard]] Vector eval_f3(const Vector& x, const Vector& y, double tau, double w) const {
    return f3 ? f3(x, y, tau, w) : Vector::Zero(n);
  }
  [[nodiscard]] Vector eval_g1(const Vector& x, const Vector& y, double tau) const {
    return g1 ? g1(x, y, tau) : Vector::Zero(m);
  }
  [[nodiscard]] Vector eval_g2(const Vector& x, const Vector& y, double tau) const {
    return g2 ? g2(x, y, tau) : Vector::Zero(m);
  }
  [[nodiscard]] Vector eval_g3(const Vector& x, const Vector& y, double tau, double w) const {
    return g3 ? g3(x, y, tau, w) : Vector::Zero(m);
  }

  /// d phi0 / dx, m x n.
  [[nodiscard]] Matrix dphi0(const Vector& x) const {
    if (phi0_jacobian) return phi0_jacobian(x);
    return jacobian_fd([this](const Vector& xx) { return phi0(xx); }, x);
  }

  /// C(x, y, tau) = d f1 / d y, n x m.
  [[nodiscard]] Matrix df1_dy(const Vector& x, const Vector& y, double tau) const {
    if (f1_y_jacobian) return f1_y_jacobian(x, y, tau);
    if (!f1) return Matrix::Zero(n, m);
    return jacobian_fd([&](const Vector& w) { return f1(x, w, tau); }, y);
  }

  /// d g1 / d y, m x m.
  [[nodiscard]] Matrix dg1_dy(const Vector& x, const Vector& y, double tau) const {
    if (g1_y_jacobian) return g1_y_jacobian(x, y, tau);
    if (!g1) return Matrix::Zero(m, m);
    return jacobian_fd([&](const Vector& w) { return g1(x, w, tau); }, y);
  }
};

struct FullState {
  Vector x;
  Vector y;
  double t = 0.0;
};

struct FullDerivative {
  Vector dx;
  Vector dy;
};

/// Right-hand side of the full system at a fixed frequency omega.
class FullField {
 public:
  FullField(OscillatorySystemSpec spec, double omega) : spec_(std::move(spec)), omega_(omega) {
    if (!(omega_ > 0.0) || !std::isfinite(omega_)) {
      throw ConfigurationError("omega must be > 0, got " + std::to_string(omega_));
    }
    spec_.validate();
  }

  [[nodiscard]] FullDerivative operator()(double t, const FullState& s) const {
    return evaluate(t, s.x, s.y);
  }

  /// Same field on the stacked state [x; y].
  [[nodiscard]] Vector operator()(double t, const Vector& state) const {
    const auto d = evaluate(t, state.head(spec_.n), state.tail(spec_.m));
    Vector out(spec_.n + spec_.m);
    out << d.dx, d.dy;
    return out;
  }

  [[nodiscard]] const OscillatorySystemSpec& spec() const noexcept { return spec_; }
  [[nodiscard]] double omega() const noexcept { return omega_; }

 private:
  [[nodiscard]] FullDerivative evaluate(double t, const Vector& x, const Vector& y) const {
    const double w = omega_;
    const double tau = w * t;
    const double sw = std::sqrt(w);
    FullDerivative d;
    d.dx = sw * spec_.eval_f1(x, y, tau) + spec_.eval_f2(x, y, tau) +
           spec_.eval_f3(x, y, tau, w) / sw;
    d.dy = w * (spec_.A * (y - spec_.phi0(x))) + sw * spec_.eval_g1(x, y, tau) +
           spec_.eval_g2(x, y, tau) + spec_.eval_g3(x, y, tau, w) / sw;
    return d;
  }

  OscillatorySystemSpec spec_;
  double omega_;
};

inline FullField assemble_full_field(const OscillatorySystemSpec& spec, double omega) {
  return FullField(spec, omega);
}

// ---------------------------------------------------------------------------
// Hurwitz test

/// Monic characteristic polynomial coefficients [1, a1, ..., am] of A
/// (Faddeev-LeVerrier).
inline std::vector<double> characteristic_polynomial(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("characteristic_polynomial: A must be square");
  const auto m = a.rows();
  std::vector<double> coeffs(static_cast<std::size_t>(m) + 1, 0.0);
  coeffs[0] = 1.0;
  Matrix mk = Matrix::Zero(m, m);
  const Matrix ident = Matrix::Identity(m, m);
  for (Eigen::Index k = 1; k <= m; ++k) {
    mk = a * mk + coeffs[static_cast<std::size_t>(k - 1)] * ident;
    coeffs[static_cast<std::size_t>(k)] = -(a * mk).trace() / static_cast<double>(k);
  }
  return coeffs;
}

/// Routh-Hurwitz: all leading minors of the Hurwitz matrix positive.
inline bool hurwitz_by_routh(const std::vector<double>& monic) {
  const int m = static_cast<int>(monic.size()) - 1;
  auto coeff = [&](int k) { return (k < 0 || k > m) ? 0.0 : monic[static_cast<std::size_t>(k)]; };
  Matrix h(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) h(i, j) = coeff(2 * (j + 1) - (i + 1));
  for (int k = 1; k <= m; ++k) {
    if (!(h.topLeftCorner(k, k).determinant() > 0.0)) return false;
  }
  return true;
}

/// Solves A^T P + P A = -I and checks P symmetric positive definite.
inline bool hurwitz_by_lyapunov(const Matrix& a) {
  const auto m = a.rows();
  const Matrix ident = Matrix::Identity(m, m);
  Matrix kron = Matrix::Zero(m * m, m * m);
  // vec(A^T P + P A) = (I (x) A^T + A^T (x) I) vec(P), column-major vec.
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      kron.block(i * m, j * m, m, m) += ident(i, j) * a.transpose();
      kron.block(i * m, j * m, m, m) += a(j, i) * ident;
    }
  }
  const Vector rhs = -Eigen::Map<const Vector>(ident.data(), m * m);
  Eigen::FullPivLU<Matrix> lu(kron);
  if (!lu.isInvertible()) return false;
  const Vector vp = lu.solve(rhs);
  Matrix p = Eigen::Map<const Matrix>(vp.data(), m, m);
  p = 0.5 * (p + p.transpose());
  Eigen::LLT<Matrix> llt(p);
  return llt.info() == Eigen::Success;
}

inline bool is_hurwitz(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("is_hurwitz: A must be square");
  if (!a.allFinite()) return false;
  if (a.rows() <= 4) return hurwitz_by_routh(characteristic_polynomial(a));
  return hurwitz_by_lyapunov(a);
}

/// Largest real part of the spectrum.
inline double spectral_abscissa(const Matrix& a) {
  Eigen::EigenSolver<Matrix> es(a, false);
  return es.eigenvalues().real().maxCoeff();
}

// ---------------------------------------------------------------------------
// Assumption checks

struct CheckItem {
  bool pass = false;
  double value = 0.0;  // worst residual observed
  std::string detail;
};

struct AssumptionReport {
  CheckItem hurwitz;
  CheckItem zero_mean;
  CheckItem periodicity;

  [[nodiscard]] bool all_pass() const { return hurwitz.pass && zero_mean.pass && periodicity.pass; }
};

struct AssumptionCheckOptions {
  int panels = 256;
  double zero_mean_tol = 1e-8;
  double periodicity_tol = 1e-10;
  std::uint64_t seed = 20240611;
  double box = 2.0;  // uniform sampling box when the system has no sampler
};

/// Sampled verification of the Hurwitz, zero-mean and periodicity assumptions.
inline AssumptionReport check_assumption_A(const OscillatorySystemSpec& spec, int sample_count,
                                           const AssumptionCheckOptions& opt = {}) {
  if (sample_count < 1) throw ConfigurationError("check_assumption_A: sample_count must be >= 1");
  spec.validate();
  AssumptionReport rep;

  rep.hurwitz.pass = is_hurwitz(spec.A);
  rep.hurwitz.value = spec.A.allFinite() ? spectral_abscissa(spec.A) : NAN;
  rep.hurwitz.detail = spec.A.rows() <= 4 ? "routh-hurwitz on characteristic polynomial"
                                          : "lyapunov equation A^T P + P A = -I";

  std::mt19937_64 rng(opt.seed);
  std::uniform_real_distribution<double> box(-opt.box, opt.box);
  std::uniform_real_distribution<double> phase(0.0, spec.T);
  auto draw = [&]() -> std::pair<Vector, Vector> {
    if (spec.sampler) return spec.sampler(rng);
    Vector x(spec.n), y(spec.m);
    for (auto& v : x) v = box(rng);
    for (auto& v : y) v = box(rng);
    return {x, y};
  };

  double worst_mean = 0.0;
  double worst_period = 0.0;
  for (int s = 0; s < sample_count; ++s) {
    const auto [x, y] = draw();
    const Vector mean = quad_periodic([&](double tau) { return spec.eval_f1(x, y, tau); }, spec.T,
                                      opt.panels);
    worst_mean = std::max(worst_mean, mean.norm());

    const double tau = phase(rng);
    auto gap = [&](const Vector& a, const Vector& b) {
      return (a - b).cwiseAbs().maxCoeff() / (1.0 + b.cwiseAbs().maxCoeff());
    };
    worst_period = std::max(
        {worst_period, gap(spec.eval_f1(x, y, tau + spec.T), spec.eval_f1(x, y, tau)),
         gap(spec.eval_f2(x, y, tau + spec.T), spec.eval_f2(x, y, tau)),
         gap(spec.eval_g1(x, y, tau + spec.T), spec.eval_g1(x, y, tau)),
         gap(spec.eval_g2(x, y, tau + spec.T), spec.eval_g2(x, y, tau))});
  }
  rep.zero_mean = {worst_mean < opt.zero_mean_tol, worst_mean, "max ||int_0^T f1 dtau||"};
  rep.periodicity = {worst_period < opt.periodicity_tol, worst_period,
                     "max relative gap between fields at tau and tau+T"};
  return rep;
}

// ---------------------------------------------------------------------------
// Near-identity shifted coordinates

struct ShiftedState {
  Vector x;
  Vector z;
  double tau = 0.0;
  double eps = 1.0;
};

/// Corrector evaluator (x, tau) -> R^m.
using CorrectorFn = std::function<Vector(const Vector& x, double tau)>;

/// z = y - phi0(x) - eps phi1(x, tau) - eps^2 phi2(x, tau), tau = w (t - t0),
/// eps = 1/sqrt(w). Unset correctors count as zero.
inline ShiftedState to_shifted(const OscillatorySystemSpec& spec, const CorrectorFn& phi1,
                               const CorrectorFn& phi2, const FullState& s, double omega,
                               double t0) {
  if (!(omega >= 1.0)) throw ConfigurationError("to_shifted: omega must be >= 1 so eps is in (0,1]");
  ShiftedState out;
  out.x = s.x;
  out.tau = omega * (s.t - t0);
  out.eps = 1.0 / std::sqrt(omega);
  out.z = s.y - spec.phi0(s.x);
  if (phi1) out.z -= out.eps * phi1(s.x, out.tau);
  if (phi2) out.z -= out.eps * out.eps * phi2(s.x, out.tau);
  return out;
}

inline FullState from_shifted(const OscillatorySystemSpec& spec, const CorrectorFn& phi1,
                              const CorrectorFn& phi2, const ShiftedState& s, double omega,
                              double t0) {
  if (!(omega >= 1.0)) {
    throw ConfigurationError("from_shifted: omega must be >= 1 so eps is in (0,1]");
  }
  FullState out;
  out.x = s.x;
  out.t = t0 + s.tau / omega;
  out.y = s.z + spec.phi0(s.x);
  if (phi1) out.y += s.eps * phi1(s.x, s.tau);
  if (phi2) out.y += s.eps * s.eps * phi2(s.x, s.tau);
  return out;
}

}  // namespace spavg
